#include "kornforge/rigid.hpp"

#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "kornforge/error.hpp"

namespace kornforge {

namespace {

RigidMotion project_from_samples(const Grid& grid, const RegionMask& mask,
                                 const std::function<Vec2(int, int)>& value) {
    if (mask.cell_count() == 0) {
        fail(ErrorKind::Domain, "project_rigid: mask has no cells");
    }
    const Vec2 centroid = mask.centroid();
    Vec2 mean{0.0, 0.0};
    double angular = 0.0;  // sum u . (-y2, y1)
    double inertia = 0.0;  // sum |y|^2
    std::size_t cells = 0;
    mask.for_each_cell([&](int ix, int iy) {
        const Vec2 u = value(ix, iy);
        const Vec2 y = grid.cell_center(ix, iy) - centroid;
        mean = mean + u;
        angular += u.x * (-y.y) + u.y * y.x;
        inertia += y.norm_sq();
        ++cells;
    });
    mean = mean * (1.0 / static_cast<double>(cells));
    RigidMotion motion;
    // A single cell (or any mask collapsed to its centroid) carries no angular
    // information; the projection is then the constant mean.
    motion.omega = (inertia > 0.0) ? angular / inertia : 0.0;
    // a(x) = omega J (x - centroid) + mean  =>  b = mean - omega J centroid.
    motion.b = {mean.x + motion.omega * centroid.y, mean.y - motion.omega * centroid.x};
    return motion;
}

}  // namespace

RigidMotion project_rigid(const DisplacementField& field, const RegionMask& mask) {
    if (!(field.grid() == mask.grid())) {
        fail(ErrorKind::Precondition, "project_rigid: field and mask live on different grids");
    }
    return project_from_samples(field.grid(), mask,
                                [&](int ix, int iy) { return field.center_value(ix, iy); });
}

RigidMotion project_rigid_values(const Grid& grid, const RegionMask& mask,
                                 const std::function<Vec2(int, int)>& value) {
    if (!(grid == mask.grid())) {
        fail(ErrorKind::Precondition, "project_rigid_values: mask lives on a different grid");
    }
    return project_from_samples(grid, mask, value);
}

double rigid_distance(const RigidMotion& a, const RigidMotion& b, const RegionMask& mask,
                      double p) {
    const Grid& grid = mask.grid();
    return lp_norm_cells(grid, mask, p, [&](int ix, int iy) {
        const Vec2 x = grid.cell_center(ix, iy);
        return (a.at(x) - b.at(x)).norm();
    });
}

namespace {

struct AffineMap {
    // u(x) = (c0 + c1 x1 + c2 x2, c3 + c4 x1 + c5 x2)
    double c[6];

    Vec2 at(const Vec2& x) const {
        return {c[0] + c[1] * x.x + c[2] * x.y, c[3] + c[4] * x.x + c[5] * x.y};
    }
};

double affine_lp_on_mask(const AffineMap& map, const Grid& grid, const RegionMask& mask,
                         double p) {
    return lp_norm_cells(grid, mask, p,
                         [&](int ix, int iy) { return map.at(grid.cell_center(ix, iy)).norm(); });
}

// Gram matrix of the basis {1, x1hat, x2hat} in L^2 of the masked cells, with
// coordinates normalized to the square (x = center + R * xhat). Both field
// components integrate against the same scalar Gram, so the generalized
// eigenproblem stays 3x3.
Eigen::Matrix3d scalar_gram(const Grid& grid, const RegionMask& mask, const Vec2& center,
                            double radius) {
    Eigen::Matrix3d gram = Eigen::Matrix3d::Zero();
    const double weight = grid.spacing() * grid.spacing();
    mask.for_each_cell([&](int ix, int iy) {
        const Vec2 x = grid.cell_center(ix, iy);
        const double b[3] = {1.0, (x.x - center.x) / radius, (x.y - center.y) / radius};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) {
                gram(r, c) += weight * b[r] * b[c];
            }
        }
    });
    return gram;
}

}  // namespace

AffineCompareResult affine_compare_constant(const RegionMask& mask, const RectF& square, double p,
                                            int trials, std::uint64_t seed, double cbar) {
    if (square.width() <= 0.0 || std::abs(square.width() - square.height()) > 1e-12 * square.width()) {
        fail(ErrorKind::Parameter, "affine_compare_constant: ambient region must be a square");
    }
    const double radius = square.width() / 2.0;
    if (mask.area() < cbar * radius * radius) {
        fail(ErrorKind::Precondition,
             "affine_compare_constant: mask area below the required fraction of the square");
    }
    const Grid& grid = mask.grid();
    RegionMask square_mask = RegionMask::from_rect(grid, square);
    if (!mask.is_subset_of(square_mask)) {
        fail(ErrorKind::Precondition, "affine_compare_constant: mask must lie inside the square");
    }

    const Vec2 center = square.center();
    AffineCompareResult result;
    for (int t = 0; t < trials;) {
        std::mt19937_64 rng(mix64(seed ^ static_cast<std::uint64_t>(t + result.trials_rejected)));
        std::uniform_real_distribution<double> coeff(-1.0, 1.0);
        AffineMap normalized;
        for (double& c : normalized.c) {
            c = coeff(rng);
        }
        // Rescale to physical coordinates: xhat = (x - center) / radius.
        AffineMap map;
        map.c[1] = normalized.c[1] / radius;
        map.c[2] = normalized.c[2] / radius;
        map.c[4] = normalized.c[4] / radius;
        map.c[5] = normalized.c[5] / radius;
        map.c[0] = normalized.c[0] - map.c[1] * center.x - map.c[2] * center.y;
        map.c[3] = normalized.c[3] - map.c[4] * center.x - map.c[5] * center.y;

        const double den = affine_lp_on_mask(map, grid, mask, p);
        if (den < 1e-12) {
            ++result.trials_rejected;
            continue;
        }
        const double num = affine_lp_on_mask(map, grid, square_mask, p);
        result.monte_carlo_ratio = std::max(result.monte_carlo_ratio, num / den);
        ++t;
        ++result.trials_used;
    }

    if (p == 2.0) {
        // sup |a|_L2(square) / |a|_L2(mask) over affine a equals the square
        // root of the largest generalized eigenvalue of G_square v = lambda
        // G_mask v on the shared scalar basis.
        const Eigen::Matrix3d g_square = scalar_gram(grid, square_mask, center, radius);
        const Eigen::Matrix3d g_mask = scalar_gram(grid, mask, center, radius);
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix3d> solver(g_square, g_mask);
        if (solver.info() != Eigen::Success) {
            fail(ErrorKind::Domain, "affine_compare_constant: generalized eigensolve failed");
        }
        result.exact_ratio = std::sqrt(solver.eigenvalues().maxCoeff());
    }
    return result;
}

}  // namespace kornforge
