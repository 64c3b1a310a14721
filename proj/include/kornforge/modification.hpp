#pragma once

#include <memory>
#include <vector>

#include "kornforge/field.hpp"
#include "kornforge/region_mask.hpp"

namespace kornforge {

// Axis-parallel rectangle in corner indices; zero thickness in either axis is
// allowed (the bounding box of a straight crack run is a segment).
struct LatticeRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    bool operator==(const LatticeRect&) const = default;
};

// A family of lattice-aligned rectangles with their summed diameters. After
// cover_cracks the family is pairwise separated (closures disjoint).
class RectangleSet {
  public:
    RectangleSet(const Grid& grid, std::vector<LatticeRect> rects);

    static RectangleSet empty_on(const Grid& grid) { return RectangleSet(grid, {}); }

    const Grid& grid() const { return *grid_; }
    const std::vector<LatticeRect>& rects() const { return rects_; }
    std::size_t size() const { return rects_.size(); }
    bool empty() const { return rects_.empty(); }

    RectF geometry(std::size_t idx) const;
    double diameter(std::size_t idx) const;
    double total_diameter() const { return total_diameter_; }
    bool pairwise_separated() const;

    // Cells strictly inside some rectangle (cell centers never sit on the
    // lattice, so open and closed membership agree).
    RegionMask covered_cells() const;

    // Interior lattice edges making up the union of the rectangle boundaries.
    std::vector<EdgeId> boundary_edges() const;

  private:
    std::shared_ptr<const Grid> grid_;
    std::vector<LatticeRect> rects_;
    double total_diameter_ = 0.0;
};

struct CoverDiagnostics {
    double sum_diameters = 0.0;
    double jump_length = 0.0;
    double bound_value = 0.0;  // (1 + lambda) * (jump length + energy / epsilon)
    bool bound_holds = true;
};

struct CrackCover {
    RectangleSet rects;
    CoverDiagnostics diagnostics;
};

// Covers the crack by the bounding boxes of its connected components, merged
// to a fixpoint while any two boxes overlap or touch. The diameter bound
// sum d(R_j) <= (1 + lambda)(jump length + energy / epsilon) is measured and
// reported, not enforced.
CrackCover cover_cracks(const CrackSet& crack, double strain_energy_sq, double epsilon,
                        double lambda);

// The proof's choice of the length-scale parameter: strain energy per unit
// jump length. Zero jump length is a parameter error.
double default_epsilon(double strain_energy_sq, double jump_length);

struct ModificationResult {
    DisplacementField modified;
    RectangleSet rects;
    double shrunk_mu = 0.0;
};

// Replaces the field inside each rectangle by the rigid motion fitted on the
// surrounding annulus (fit_margin cells wide, rectangles excluded; widened
// until it contains at least one cell). Corner values outside the rectangles
// are preserved bit for bit, so the output strain never exceeds the input
// strain and all jumps land on rectangle boundaries. Every input crack edge
// must lie inside a rectangle or on its boundary.
ModificationResult apply_modification(const DisplacementField& field, const RectangleSet& rects,
                                      int fit_margin = 2);

struct JumpControlReport {
    bool holds = false;
    double lhs_sq = 0.0;   // (total variation of E u over the mask)^2
    double rhs = 0.0;      // 2 |D| ||e||^2 + C eps * jump length * sum d^2
    double ratio = 0.0;    // lhs_sq / rhs, 0 when both sides vanish
    double mask_jump_length = 0.0;
    double sum_d_sq_near = 0.0;  // over rectangles whose closure meets the mask
};

// Measures the jump-height control inequality
//   (|E u|(D))^2 <= 2 |D| ||e||^2_{L2(D)} + C_probe * epsilon * H1(D ∩ J) * sum d(R)^2
// on the modified field, with the rectangle sum restricted to rectangles whose
// closure meets D. The mask must sit inside the shrunk square.
JumpControlReport jump_control_check(const ModificationResult& result, const RegionMask& mask,
                                     double epsilon, double c_probe);

}  // namespace kornforge
