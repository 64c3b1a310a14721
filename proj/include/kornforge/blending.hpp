#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "kornforge/field.hpp"
#include "kornforge/modification.hpp"
#include "kornforge/region_mask.hpp"
#include "kornforge/rigid.hpp"

namespace kornforge {

// Dyadic hierarchy of square tilings of the grid domain. Scale i has squares
// of half-side s_i = mu * theta^i arranged as a (1/theta)^i x (1/theta)^i
// tiling; theta must be a power of 1/2 so every usable tiling lands exactly on
// the cell lattice. The enlargements Q'' = (5/4)Q and Q' = (3/2)Q share Q's
// center.
class SquareHierarchy {
  public:
    SquareHierarchy(const Grid& grid, double theta);

    const Grid& grid() const { return *grid_; }
    double theta() const { return theta_; }
    int theta_log2() const { return k_; }

    double scale(int i) const;      // s_i, exact (dyadic rescaling)
    int tile_cells(int i) const;    // cells per tile side at scale i
    int tiles_per_axis(int i) const;
    // Largest scale index whose tiles still span at least 4 cells; finer
    // tilings cannot carry the enlarged squares meaningfully.
    int max_scale_index() const { return max_index_; }

    RectF tile(int i, int a, int b) const;
    static RectF enlarged54(const RectF& q) { return q.scaled_about_center(1.25); }
    static RectF enlarged32(const RectF& q) { return q.scaled_about_center(1.5); }

  private:
    std::shared_ptr<const Grid> grid_;
    double theta_;
    int k_;
    int max_index_;
};

struct SquareRef {
    int scale = 0;
    int a = 0;
    int b = 0;
};

struct ScaleEntry {
    std::vector<SquareRef> dense;    // squares over the crack-density threshold
    std::vector<SquareRef> active;   // dense, meeting the target, no dense ancestor
    RegionMask region_dense;         // cells under the dense squares
    RegionMask region_active;        // cells under the active squares
    RegionMask region_enlarged;      // cells under (3/2)Q for active squares
};

struct BadSquareLedger {
    SquareHierarchy hierarchy;
    double shrunk_mu = 0.0;
    double target_mu = 0.0;
    std::vector<ScaleEntry> scales;  // index i in 1..max_scale_index; [0] unused
    int terminal = 0;                // largest i with active squares, 0 if none
    RegionMask exceptional;          // union of the enlarged regions

    bool any_active() const { return terminal > 0; }
};

struct ClassifyOutcome {
    bool feasible = false;
    double gate_lhs = 0.0;  // sum of rectangle diameters
    double gate_rhs = 0.0;  // (theta / 24) * (shrunk_mu - target_mu)
    std::optional<BadSquareLedger> ledger;
};

// Scans every scale: a square is dense when its (5/4) enlargement sits inside
// the shrunk square and collects at least (1/8) theta s_i of rectangle
// boundary length; it is active when additionally it overlaps the target
// square and no coarser dense square contains it. Returns infeasible (not an
// error) when the diameter sum exceeds (theta/24) times the frame width.
ClassifyOutcome classify(const RectangleSet& rects, const SquareHierarchy& hierarchy,
                         double shrunk_mu, double target_mu);

struct StructureReport {
    bool diameters_ok = true;       // nearby-diameter sum <= s_i per active square
    double max_diameter_ratio = 0.0;
    bool tail_empty_ok = true;      // no active squares below the rectangle scale
    bool crack_covered_ok = true;   // jump edges in the target lie under active squares
    int uncovered_jump_edges = 0;
    double perimeter_constant = 0.0;  // perimeter(E) * theta / sum d
    double area_constant = 0.0;       // max_i |E_i| * theta / (s_i * sum d)

    bool all_ok() const { return diameters_ok && tail_empty_ok && crack_covered_ok; }
};

// Measures the structural properties of the classification against the
// rectangle family and the field's actual jump edges.
StructureReport structure_check(const BadSquareLedger& ledger, const RectangleSet& rects,
                                const DisplacementField& field);

struct SquareMotions {
    // motions[i][k] fits ledger.scales[i].active[k] on its enlarged square.
    std::vector<std::vector<RigidMotion>> motions;
    std::vector<double> residual_sum;  // per scale: sum of ||u - a_Q||^2 over Q''
    std::vector<double> normalized_residual;  // residual_sum / s_i^2
};

SquareMotions fit_square_motions(const DisplacementField& field, const BadSquareLedger& ledger);

// Partition of unity over one scale's active squares: tensor-product
// smoothstep bumps psi_Q that equal 1 on a neighborhood of Q and vanish
// outside Q'', a remainder psi_0 = max(0, 1 - sum psi_Q), and normalized
// weights phi = psi / (psi_0 + sum psi_Q). The normalizer is always >= 1, the
// weights sum to 1 pointwise, and phi_0 vanishes identically on every closed
// square (with margin), which is what lets the healing step erase jumps there
// bit-exactly.
class PartitionOfUnity {
  public:
    PartitionOfUnity(std::vector<RectF> squares, double scale);

    std::size_t count() const { return squares_.size(); }
    const std::vector<RectF>& squares() const { return squares_; }
    double scale() const { return scale_; }
    double ramp_width() const { return ramp_; }

    // out[0] = phi_0, out[1 + q] = phi for square q; out resized to count()+1.
    // Pure function of the point, independent of any cell context.
    void weights_at(Vec2 p, std::vector<double>& out) const;

    // Largest number of enlarged squares containing a single corner of the
    // given grid (at most 4 for a one-scale tiling family).
    int measured_multiplicity(const Grid& grid) const;

  private:
    std::vector<RectF> squares_;
    double scale_;
    double ramp_;
};

PartitionOfUnity build_pou(const std::vector<RectF>& squares, double scale);

// Blends the field toward the square motions: u <- u + sum phi_Q (a_Q - u) at
// every corner inside the support of some bump. Corners outside every support
// are left untouched (bit-exact). Evaluation order is fixed, so shared corner
// positions in closed squares receive identical values from both sides and
// the jumps there vanish exactly.
DisplacementField heal_step(const DisplacementField& field, const PartitionOfUnity& pou,
                            const std::vector<RigidMotion>& motions);

struct HealStepRecord {
    int step = 0;     // j, 0-based, healing scale I - j
    int scale = 0;    // i = I - j
    int squares = 0;  // active squares blended in this step
    // Induction diagnostics for the iterate AFTER this step: per scale index
    // i in 1..I, the square-sum residuals against the fixed motions, the
    // matching product factors, and the measured leading constants.
    std::vector<double> residual_sums;
    std::vector<double> product_factors;
    std::vector<double> measured_constants;  // residual / (s_i^2 * factor * E^2), -1 if E = 0
    double strain_p_norm = 0.0;              // ||e(u_j+1)||_Lp over the target square
    double strain_product_factor = 0.0;
    double strain_constant = -1.0;           // vs mu^(2-p) * factor * E^p, -1 if E = 0
    int jumps_left_in_band = 0;              // jump edges still meeting the healed region
};

struct HealOutcome {
    DisplacementField healed;
    RegionMask exceptional;
    BadSquareLedger ledger;
    std::vector<HealStepRecord> steps;
    double p = 0.0;
    double eta = 0.0;            // theta^(1/2 - p/4)
    double product_bound = 0.0;  // exp(1 / (1 - eta))
    bool products_ok = true;
    double strain_budget = 0.0;  // ||e(input)||_L2 over the whole grid
    bool crack_free_in_target = true;
    bool identity_off_exceptional = true;
};

struct HealResult {
    bool feasible = false;
    double gate_lhs = 0.0;
    double gate_rhs = 0.0;
    std::optional<HealOutcome> outcome;
};

// Runs the full finest-to-coarsest healing loop: classify, fit motions once,
// then blend scale I, I-1, ..., 1. Afterwards the field must have no jump
// edge meeting the open target square (a construction error otherwise, except
// when classification reported the uncovered edges up front) and must equal
// the input bit for bit on target cells outside the exceptional set.
HealResult heal(const DisplacementField& field, const RectangleSet& rects,
                const SquareHierarchy& hierarchy, double shrunk_mu, double target_mu, double p);

}  // namespace kornforge
