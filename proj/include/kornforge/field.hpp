#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "kornforge/crack_set.hpp"
#include "kornforge/region_mask.hpp"

namespace kornforge {

// Pointwise displacement rule. The first argument is the evaluation point, the
// second is the center of the cell the value is stored for; samplers that jump
// across cracks pick their branch from the cell center, which is never on a
// lattice line.
using FieldSampler = std::function<Vec2(Vec2 point, Vec2 cell_center)>;

class StrainField;

// Piecewise-bilinear displacement with per-cell corner storage. Every cell
// keeps its own copy of its four corner values, so traces from the two sides
// of a crack edge can disagree while all other shared corners stay equal
// bit-for-bit (the continuity invariant).
//
// Local corner order: 0 = (0,0), 1 = (1,0), 2 = (0,1), 3 = (1,1).
class DisplacementField {
  public:
    DisplacementField(const Grid& grid, const CrackSet& crack);

    const Grid& grid() const { return *grid_; }
    const CrackSet& crack() const { return crack_; }

    Vec2 corner_value(int i, int j, int corner) const {
        const std::size_t base = value_base(i, j, corner);
        return {values_[base], values_[base + 1]};
    }
    void set_corner_value(int i, int j, int corner, const Vec2& v) {
        const std::size_t base = value_base(i, j, corner);
        values_[base] = v.x;
        values_[base + 1] = v.y;
    }

    // Bilinear value at the cell center: the average of the four corners.
    Vec2 center_value(int i, int j) const;
    // Gradient of the bilinear interpolant evaluated at the cell center.
    Mat2 cell_gradient(int i, int j) const;

    // Two-sided trace difference on a crack edge, plus side minus minus side
    // (plus = the cell on the positive normal side). Index 0/1 are the edge's
    // two endpoint corners, in increasing lattice order.
    std::array<Vec2, 2> edge_jump(const EdgeId& e) const;
    Vec2 edge_jump_midpoint(const EdgeId& e) const;

    // True when the two traces differ by more than `tol` (Euclidean norm) at
    // either endpoint of the crack edge.
    bool is_jump_edge(const EdgeId& e, double tol = 0.0) const;

    // Checks that all interior non-crack edges carry bit-equal shared corner
    // values; returns the first offending edge if any.
    bool continuity_holds(EdgeId* offending = nullptr) const;

    // Largest corner-value magnitude; 0 for the zero field.
    double sup_norm() const;

    // Replaces the crack set (used after modifications relocate the jump set).
    void reset_crack(const CrackSet& crack);

  private:
    std::size_t value_base(int i, int j, int corner) const {
        return (static_cast<std::size_t>(grid_->cell_index(i, j)) * 4 + corner) * 2;
    }

    std::shared_ptr<const Grid> grid_;
    CrackSet crack_;
    std::vector<double> values_;
};

// Symmetrized gradient samples, one symmetric tensor per cell.
class StrainField {
  public:
    explicit StrainField(const Grid& grid);

    const Grid& grid() const { return *grid_; }
    Sym2 at(int i, int j) const {
        const std::size_t k = static_cast<std::size_t>(grid_->cell_index(i, j));
        return {e11_[k], e22_[k], e12_[k]};
    }
    void set(int i, int j, const Sym2& e) {
        const std::size_t k = static_cast<std::size_t>(grid_->cell_index(i, j));
        e11_[k] = e.e11;
        e22_[k] = e.e22;
        e12_[k] = e.e12;
    }

  private:
    std::shared_ptr<const Grid> grid_;
    std::vector<double> e11_, e22_, e12_;
};

// Builds a field by evaluating the sampler at all cell corners. Off the crack
// the sampler must be single-valued; a mismatch across a non-crack edge is a
// geometry error.
DisplacementField build_field(const Grid& grid, const CrackSet& crack, const FieldSampler& sampler);

// Midpoint-quadrature strain of the bilinear interpolant, cell by cell.
StrainField strain(const DisplacementField& field);

// Midpoint-rule L^p norm over a mask, p in [1, inf):
//   ( sum_cells |magnitude(cell)|^p h^2 )^(1/p).
// Vector values use the Euclidean norm, tensors the Frobenius norm; the
// magnitude callback already returns that scalar. Empty masks give 0.
double lp_norm_cells(const Grid& grid, const RegionMask& mask, double p,
                     const std::function<double(int, int)>& magnitude);

double lp_norm(const StrainField& strains, const RegionMask& mask, double p);

// Total elastic-plus-jump variation of E u over a mask:
//   integral of |e(u)| over the mask (midpoint rule)
//   + sum over crack edges of h * |[u] (.) normal| * (adjacent member cells) / 2.
// Weighting each edge by half per adjacent member cell makes the measure
// exactly additive over disjoint masks.
double total_ed_variation(const DisplacementField& field, const StrainField& strains,
                          const RegionMask& mask);

}  // namespace kornforge
