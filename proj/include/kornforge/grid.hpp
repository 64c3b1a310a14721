#pragma once

#include <cstdint>

#include "kornforge/error.hpp"
#include "kornforge/geometry.hpp"

namespace kornforge {

// Uniform square grid over Q_mu(center) = center + (-mu, mu)^2 with n x n cells.
//
// The spacing satisfies 2 * mu == h * n exactly (verified bitwise), which makes
// every lattice coordinate an exact double and keeps all dyadic square tilings
// aligned with cell edges. In practice this means n is a power of two, or mu
// carries the matching factor (e.g. mu = 3, n = 3 * 2^k).
class Grid {
  public:
    Grid(Vec2 center, double mu, int n);

    const Vec2& center() const { return center_; }
    double mu() const { return mu_; }
    double spacing() const { return h_; }
    int cells_per_side() const { return n_; }
    std::int64_t cell_count() const { return static_cast<std::int64_t>(n_) * n_; }

    // Lattice coordinates: index 0..n for corners, 0..n-1 for cells.
    double corner_x(int i) const { return center_.x - mu_ + i * h_; }
    double corner_y(int j) const { return center_.y - mu_ + j * h_; }
    Vec2 corner_point(int i, int j) const { return {corner_x(i), corner_y(j)}; }
    Vec2 cell_center(int i, int j) const {
        return {corner_x(i) + 0.5 * h_, corner_y(j) + 0.5 * h_};
    }
    RectF cell_rect(int i, int j) const {
        return {corner_x(i), corner_y(j), corner_x(i + 1), corner_y(j + 1)};
    }
    RectF bounds() const {
        return {center_.x - mu_, center_.y - mu_, center_.x + mu_, center_.y + mu_};
    }

    std::int64_t cell_index(int i, int j) const { return static_cast<std::int64_t>(j) * n_ + i; }
    bool valid_cell(int i, int j) const { return i >= 0 && i < n_ && j >= 0 && j < n_; }

    // Index of the cell column/row containing coordinate x (clamped to range).
    int clamp_cell_x(double x) const;
    int clamp_cell_y(double y) const;

    bool operator==(const Grid& o) const {
        return center_.x == o.center_.x && center_.y == o.center_.y && mu_ == o.mu_ && n_ == o.n_;
    }

  private:
    Vec2 center_;
    double mu_;
    double h_;
    int n_;
};

}  // namespace kornforge
