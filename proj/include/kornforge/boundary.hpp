#pragma once

#include <cstdint>
#include <vector>

#include "kornforge/blending.hpp"
#include "kornforge/field.hpp"
#include "kornforge/local.hpp"
#include "kornforge/region_mask.hpp"
#include "kornforge/rigid.hpp"

namespace kornforge {

// Epigraph-type domain bounded above by a Lipschitz profile. The grid covers
// the square (-2 mu, 2 mu)^2 centered at the origin; the profile psi is
// sampled at the n + 1 corner abscissas, takes values in [0, 2 mu], stays at
// or above mu over the inner core |x| <= mu, and is piecewise linear in
// between with certified slope bound cbar. Outside the core the profile may
// descend toward the window floor, which is what corner charts of polygonal
// domains need. The outer region U is everything below the graph; the inner
// region U' is the central half in x, cut off below at -mu.
struct LipschitzGraphDomain {
    Grid grid;
    double mu = 0.0;
    double cbar = 0.0;
    std::vector<double> psi;  // corner samples, size n + 1
    RegionMask outer;         // U
    RegionMask inner;         // U'

    double psi_at(double x) const;
    // True when the point lies in U (below or on the graph).
    bool in_outer(Vec2 p) const;
};

LipschitzGraphDomain make_graph_domain(const Grid& grid, std::vector<double> psi, double cbar);

// Convenience profiles. The sawtooth rises and falls with slope exactly cbar
// and touches mu at every tooth root (teeth must divide the cell count); the
// random profile is a slope-bounded reflected walk renormalized so its minimum
// is exactly mu.
std::vector<double> flat_profile(const Grid& grid);
std::vector<double> sawtooth_profile(const Grid& grid, double cbar, int teeth);
std::vector<double> random_profile(const Grid& grid, double cbar, std::uint64_t seed);

struct WhitneySquare {
    int scale = 0;  // dyadic level; tiles per axis = 2^scale
    int ix = 0;
    int iy = 0;
};

// Cell index window [x0, x1) x [y0, y1).
struct CellRange {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

// Whitney-type covering of U by maximal dyadic squares Q whose diameter obeys
// d(Q) <= dist(Q, dU) <= C d(Q). Selected squares are pairwise disjoint and
// tile U up to a collar of width O(h) along dU that the finest available
// squares cannot reach. All three cover properties are verified after
// construction against the exact boundary distance and recorded.
class WhitneyCover {
  public:
    const Grid& grid() const { return grid_; }
    double mu() const { return mu_; }
    int finest_scale() const { return finest_; }
    const std::vector<WhitneySquare>& squares() const { return squares_; }
    const std::vector<int>& per_scale_count() const { return per_scale_count_; }

    const RegionMask& covered() const { return covered_; }
    const RegionMask& collar() const { return collar_; }

    double cw_measured() const { return cw_; }        // max dist / d over squares
    int multiplicity() const { return multiplicity_; }  // max Q' overlap count
    double comparability() const { return comparability_; }  // max d ratio, touching Q'

    int tile_cells(int scale) const { return grid_.cells_per_side() >> scale; }
    double side(const WhitneySquare& s) const { return tile_cells(s.scale) * grid_.spacing(); }
    double diameter(const WhitneySquare& s) const;
    RectF tile_rect(const WhitneySquare& s) const;
    RectF qprime(const WhitneySquare& s) const { return tile_rect(s).scaled_about_center(1.5); }
    RectF qsecond(const WhitneySquare& s) const { return tile_rect(s).scaled_about_center(1.25); }

    // Index of the selected square whose tile contains the point, -1 when the
    // point lies in the collar or outside U.
    int square_at(Vec2 p) const;

    // Selected-square index of one tile, -1 when that tile is not selected.
    int selected_index(int scale, int tx, int ty) const;

    // Cells whose centers lie in the closed rectangle, clamped to the grid.
    CellRange cells_in(const RectF& rect) const;

  private:
    friend WhitneyCover whitney_cover(const LipschitzGraphDomain& dom);
    WhitneyCover(const Grid& grid, double mu);

    Grid grid_;
    double mu_ = 0.0;
    int finest_ = 0;
    std::vector<WhitneySquare> squares_;
    std::vector<int> per_scale_count_;
    std::vector<std::vector<std::uint8_t>> sat_;   // per scale, tile bitmaps
    std::vector<std::vector<std::int32_t>> selected_;  // per scale, square index or -1
    RegionMask covered_;
    RegionMask collar_;
    double cw_ = 0.0;
    int multiplicity_ = 0;
    double comparability_ = 0.0;
};

WhitneyCover whitney_cover(const LipschitzGraphDomain& dom);

// Tensor-product bump partition over a member subset of the cover: each bump
// is 1 on a neighborhood of its tile and vanishes outside the (5/4)
// enlargement; weights are normalized by the bump sum, which is at least 1
// wherever a member tile covers the point, so the weights sum to 1 there.
class WhitneyPartition {
  public:
    WhitneyPartition(const WhitneyCover& cover, std::vector<char> member);

    double raw(int idx, Vec2 p) const;
    double sum_raw(Vec2 p) const;
    double phi(int idx, Vec2 p) const;
    Vec2 grad_phi(int idx, Vec2 p) const;
    // Member squares whose enlargement contains the point.
    std::vector<int> support_at(Vec2 p) const;

  private:
    const WhitneyCover* cover_;
    std::vector<char> member_;
};

// Bad squares, vertical shadow strips, and the working region V.
struct ShadowResult {
    std::vector<int> bad;   // indices into cover.squares()
    RegionMask shadows;     // P: union of closed upward strips over bad Q'
    RegionMask working;     // V: (U' minus P) restricted to the covered union
    bool fallback = false;  // a strip reaches the center segment (-mu,mu) x {0}
    double jump_length = 0.0;
    double perimeter_ratio = 0.0;  // H^1(dP) / jump length, 0 without jumps
};

ShadowResult boundary_bad_squares(const DisplacementField& field, const LipschitzGraphDomain& dom,
                                  const WhitneyCover& cover, double c_hat);

struct JohnViolation {
    Vec2 point;     // sampled start point with no admissible curve
    int scale = 0;  // blocking square (scale 0: no square at the probe point)
    int ix = 0;
    int iy = 0;
};

// Curve-based certificate that V is a John domain with center 0: for sampled
// start points, a curve gamma from x to 0 is measured for the largest ratio of
// arclength to boundary distance. Each sample tries the straight segment and
// the vertical-then-horizontal midpoint chain; the better ratio counts.
struct JohnCertificate {
    double constant = 0.0;
    Vec2 worst_point{0.0, 0.0};
    int samples_checked = 0;
    std::vector<JohnViolation> violations;
};

JohnCertificate john_verify(const RegionMask& working, const WhitneyCover& cover, int sample_count,
                            std::uint64_t seed = 1234);

struct BoundaryConfig {
    double c_hat = 1.0 / 32.0;  // bad-square crack density threshold
    int john_samples = 200;
    std::uint64_t john_seed = 1234;
};

// Per good square: fitted motion and measured norms over Q'' minus the
// square's exceptional cells.
struct SquareEstimate {
    int square = -1;
    RigidMotion motion;
    double res_u = 0.0;
    double res_grad = 0.0;
    double elastic = 0.0;  // strain L^2 norm over Q'
    double const_u = 0.0;
    double const_grad = 0.0;
    bool fallback = false;  // sub-estimate degenerated; Q'' fully exceptional
};

struct BoundaryReport {
    RigidMotion rigid;
    RegionMask shadows;      // P
    RegionMask working;      // V
    RegionMask exceptional;  // E: union of per-square exceptional cells
    RegionMask removed;      // (E union P) restricted to U'
    double jump_length = 0.0;
    double elastic = 0.0;  // strain L^2 norm over U
    double residual_u_q = 0.0;
    double residual_grad_p = 0.0;
    double const_u = 0.0;
    double const_grad = 0.0;
    double excluded_area = 0.0;
    double perimeter_ratio = 0.0;
    double local_const_u = 0.0;    // max per-square normalized residual
    double local_const_grad = 0.0;
    double neighbor_constant = 0.0;  // aggregated motion-difference constant
    double ball_radius_ratio = 0.0;  // min shared-ball radius / d(Q)
    int ball_violations = 0;         // exceptional cells claim over half a ball
    int good_count = 0;
    int bad_count = 0;
    bool fallback = false;
    JohnCertificate john{};
    std::vector<SquareEstimate> locals{};  // one entry per good square
};

BoundaryReport boundary_estimate(const DisplacementField& field, const LipschitzGraphDomain& dom,
                                 double p, double q, const BoundaryConfig& config = {});

}  // namespace kornforge
