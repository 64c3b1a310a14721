#pragma once

#include <cstdint>

#include "kornforge/field.hpp"

namespace kornforge {

// Infinitesimal rigid motion a(x) = A x + b with skew A = [[0, -omega],
// [omega, 0]]; omega > 0 rotates counterclockwise. Under this convention the
// shear u = (gamma * x2, 0) projects to omega = -gamma / 2 (the skew part of
// its gradient).
struct RigidMotion {
    double omega = 0.0;
    Vec2 b{0.0, 0.0};

    Vec2 at(const Vec2& p) const { return {-omega * p.y + b.x, omega * p.x + b.y}; }
    Mat2 matrix() const { return {0.0, -omega, omega, 0.0}; }
};

// L^2(mask) projection of the field's cell-center values onto rigid motions.
// Closed form: with ybar the mask centroid and y = x - ybar,
//   omega = sum u . (-y2, y1) / sum |y|^2,   b = mean(u) - omega * J ybar.
// A mask with zero area is a domain error; a single-cell mask fixes omega = 0.
RigidMotion project_rigid(const DisplacementField& field, const RegionMask& mask);

// Same projection for explicit per-cell values (used on intermediate blends).
RigidMotion project_rigid_values(const Grid& grid, const RegionMask& mask,
                                 const std::function<Vec2(int, int)>& value);

// L^p(mask) distance between two rigid motions (their difference is affine and
// is integrated by the midpoint rule like any other field).
double rigid_distance(const RigidMotion& a, const RigidMotion& b, const RegionMask& mask, double p);

struct AffineCompareResult {
    double monte_carlo_ratio = 0.0;  // max over trials of |a|_Lp(square) / |a|_Lp(mask)
    double exact_ratio = -1.0;       // generalized-eigenvalue bound, p = 2 only
    int trials_used = 0;
    int trials_rejected = 0;
};

// Empirical comparability constant between the L^p norm of affine maps on an
// ambient square and on a sub-mask of prescribed minimal area fraction:
// requires |mask| >= cbar * R^2 where 2R is the square's side. Trial maps draw
// all six coefficients uniformly from [-1, 1] in square-normalized coordinates
// (making the ratio invariant under joint rescaling); trials whose denominator
// norm falls below 1e-12 are redrawn. For p = 2 the exact supremum over all
// affine maps is also computed from the 3x3 Gram matrices of {1, x1, x2} and
// the Monte Carlo value can never exceed it.
AffineCompareResult affine_compare_constant(const RegionMask& mask, const RectF& square, double p,
                                            int trials, std::uint64_t seed, double cbar);

}  // namespace kornforge
