#include "kornforge/region_mask.hpp"

#include <numeric>

namespace kornforge {

RegionMask::RegionMask(const Grid& grid, bool filled)
    : grid_(std::make_shared<Grid>(grid)),
      cells_(static_cast<std::size_t>(grid.cell_count()), filled ? 1 : 0) {}

void RegionMask::set(int i, int j, bool member) {
    if (!grid_->valid_cell(i, j)) {
        fail(ErrorKind::Precondition, "region mask: cell index out of range");
    }
    cells_[grid_->cell_index(i, j)] = member ? 1 : 0;
    invalidate();
}

std::int64_t RegionMask::cell_count() const {
    if (count_cache_ < 0) {
        count_cache_ = std::accumulate(cells_.begin(), cells_.end(), std::int64_t{0},
                                       [](std::int64_t acc, std::uint8_t v) { return acc + v; });
    }
    return count_cache_;
}

double RegionMask::area() const {
    const double h = grid_->spacing();
    return h * h * static_cast<double>(cell_count());
}

double RegionMask::perimeter(PerimeterConvention conv) const {
    const int n = grid_->cells_per_side();
    std::int64_t edges = 0;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            if (!cells_[grid_->cell_index(i, j)]) continue;
            // Interior edges count when the neighbor is absent; boundary edges
            // follow the ambient-domain convention.
            const bool left = i > 0 ? cells_[grid_->cell_index(i - 1, j)] != 0 : false;
            const bool right = i + 1 < n ? cells_[grid_->cell_index(i + 1, j)] != 0 : false;
            const bool down = j > 0 ? cells_[grid_->cell_index(i, j - 1)] != 0 : false;
            const bool up = j + 1 < n ? cells_[grid_->cell_index(i, j + 1)] != 0 : false;
            if (i > 0 && !left) ++edges;
            if (i + 1 < n && !right) ++edges;
            if (j > 0 && !down) ++edges;
            if (j + 1 < n && !up) ++edges;
            if (conv == PerimeterConvention::OpenDomain) {
                if (i == 0) ++edges;
                if (i + 1 == n) ++edges;
                if (j == 0) ++edges;
                if (j + 1 == n) ++edges;
            }
        }
    }
    return grid_->spacing() * static_cast<double>(edges);
}

Vec2 RegionMask::centroid() const {
    if (empty()) fail(ErrorKind::Domain, "region mask: centroid of an empty region");
    const int n = grid_->cells_per_side();
    double sx = 0.0, sy = 0.0;
    std::int64_t count = 0;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            if (!cells_[grid_->cell_index(i, j)]) continue;
            const Vec2 c = grid_->cell_center(i, j);
            sx += c.x;
            sy += c.y;
            ++count;
        }
    }
    return {sx / static_cast<double>(count), sy / static_cast<double>(count)};
}

void RegionMask::check_same_grid(const RegionMask& other) const {
    if (!(*grid_ == *other.grid_)) {
        fail(ErrorKind::Precondition, "region mask: set operation across different grids");
    }
}

RegionMask RegionMask::set_union(const RegionMask& other) const {
    check_same_grid(other);
    RegionMask out(*grid_);
    for (std::size_t k = 0; k < cells_.size(); ++k) out.cells_[k] = cells_[k] | other.cells_[k];
    return out;
}

RegionMask RegionMask::set_intersection(const RegionMask& other) const {
    check_same_grid(other);
    RegionMask out(*grid_);
    for (std::size_t k = 0; k < cells_.size(); ++k) out.cells_[k] = cells_[k] & other.cells_[k];
    return out;
}

RegionMask RegionMask::set_difference(const RegionMask& other) const {
    check_same_grid(other);
    RegionMask out(*grid_);
    for (std::size_t k = 0; k < cells_.size(); ++k) {
        out.cells_[k] = static_cast<std::uint8_t>(cells_[k] & ~other.cells_[k] & 1);
    }
    return out;
}

RegionMask RegionMask::complement() const {
    RegionMask out(*grid_);
    for (std::size_t k = 0; k < cells_.size(); ++k) out.cells_[k] = cells_[k] ? 0 : 1;
    return out;
}

bool RegionMask::is_subset_of(const RegionMask& other) const {
    check_same_grid(other);
    for (std::size_t k = 0; k < cells_.size(); ++k) {
        if (cells_[k] && !other.cells_[k]) return false;
    }
    return true;
}

RegionMask RegionMask::from_rect(const Grid& grid, const RectF& rect) {
    RegionMask out(grid);
    const int n = grid.cells_per_side();
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            if (rect.contains(grid.cell_center(i, j))) out.cells_[grid.cell_index(i, j)] = 1;
        }
    }
    out.invalidate();
    return out;
}

RegionMask RegionMask::from_predicate(const Grid& grid, const std::function<bool(Vec2)>& pred) {
    RegionMask out(grid);
    const int n = grid.cells_per_side();
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            if (pred(grid.cell_center(i, j))) out.cells_[grid.cell_index(i, j)] = 1;
        }
    }
    out.invalidate();
    return out;
}

void RegionMask::for_each_cell(const std::function<void(int, int)>& fn) const {
    const int n = grid_->cells_per_side();
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            if (cells_[grid_->cell_index(i, j)]) fn(i, j);
        }
    }
}

}  // namespace kornforge
