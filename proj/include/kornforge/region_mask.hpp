#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "kornforge/grid.hpp"

namespace kornforge {

// Whether edges on the outer grid boundary count toward the perimeter of a
// region that reaches the boundary. OpenDomain treats the ambient square as
// open (boundary edges count); ClosedDomain does not count them.
enum class PerimeterConvention { OpenDomain, ClosedDomain };

// Subset of grid cells, stored as a bitmap. Area and boundary length are
// derived measures: area = h^2 * |cells|, boundary length = h * #edges with
// exactly one member cell (see PerimeterConvention for the outer boundary).
class RegionMask {
  public:
    explicit RegionMask(const Grid& grid, bool filled = false);

    const Grid& grid() const { return *grid_; }

    bool contains(int i, int j) const {
        return grid_->valid_cell(i, j) && cells_[grid_->cell_index(i, j)] != 0;
    }
    void set(int i, int j, bool member = true);

    std::int64_t cell_count() const;
    bool empty() const { return cell_count() == 0; }
    double area() const;
    double perimeter(PerimeterConvention conv = PerimeterConvention::OpenDomain) const;

    // Area-weighted centroid of member cell centers. Domain error when empty.
    Vec2 centroid() const;

    // Set algebra; both operands must live on the same grid.
    RegionMask set_union(const RegionMask& other) const;
    RegionMask set_intersection(const RegionMask& other) const;
    RegionMask set_difference(const RegionMask& other) const;
    RegionMask complement() const;

    bool is_subset_of(const RegionMask& other) const;

    // All cells whose center lies in the closed rectangle.
    static RegionMask from_rect(const Grid& grid, const RectF& rect);
    // All cells whose center satisfies the predicate.
    static RegionMask from_predicate(const Grid& grid, const std::function<bool(Vec2)>& pred);

    void for_each_cell(const std::function<void(int, int)>& fn) const;

  private:
    void check_same_grid(const RegionMask& other) const;
    void invalidate() { count_cache_ = -1; }

    std::shared_ptr<const Grid> grid_;
    std::vector<std::uint8_t> cells_;
    mutable std::int64_t count_cache_ = -1;
};

}  // namespace kornforge
