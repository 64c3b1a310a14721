#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kornforge/grid.hpp"

namespace kornforge {

// Axis-parallel crack segment on the edge lattice, in integer lattice units.
// axis 0: runs along x at corner row `fixed` (y-index), spanning columns
// [from, to]. axis 1: runs along y at corner column `fixed` (x-index).
struct CrackSegment {
    int axis = 0;
    int fixed = 0;
    int from = 0;
    int to = 0;
};

// One unit lattice edge. For axis 0 the edge joins corners (a, b) and
// (a + 1, b) and separates cell (a, b - 1) below from (a, b) above; for axis 1
// it joins (a, b) and (a, b + 1) and separates cell (a - 1, b) from (a, b).
struct EdgeId {
    std::uint8_t axis = 0;
    int a = 0;
    int b = 0;

    bool operator==(const EdgeId& o) const { return axis == o.axis && a == o.a && b == o.b; }
};

struct EdgeIdHash {
    std::size_t operator()(const EdgeId& e) const {
        const std::uint64_t key = (static_cast<std::uint64_t>(e.axis) << 62) |
                                  (static_cast<std::uint64_t>(static_cast<std::uint32_t>(e.a)) << 31) |
                                  static_cast<std::uint64_t>(static_cast<std::uint32_t>(e.b));
        return static_cast<std::size_t>(mix64(key));
    }
};

// Set of crack edges on a grid's interior edge lattice, with connected
// components (edges are connected when they share a lattice corner).
class CrackSet {
  public:
    CrackSet(const Grid& grid, const std::vector<CrackSegment>& segments);

    static CrackSet empty_on(const Grid& grid) { return CrackSet(grid, {}); }
    // Rebuild a crack set directly from unit edges (already validated shape).
    static CrackSet from_edges(const Grid& grid, const std::vector<EdgeId>& edges);

    const Grid& grid() const { return *grid_; }
    const std::vector<CrackSegment>& segments() const { return segments_; }
    const std::vector<EdgeId>& edges() const { return edges_; }
    bool has_edge(const EdgeId& e) const { return edge_lookup_.count(e) != 0; }
    bool empty() const { return edges_.empty(); }

    // H^1 measure of the whole crack: h * (number of unit edges).
    double total_length() const;
    // H^1 measure of the part inside `box` (exact interval clipping).
    double length_in(const RectF& box) const;

    int component_count() const { return component_count_; }
    // Component id of each edge, parallel to edges().
    const std::vector<int>& component_ids() const { return component_ids_; }
    // Lattice-units bounding box [x0, y0, x1, y1] of one component, in corner
    // indices.
    std::array<int, 4> component_bounds(int component) const;

    // Geometry of one unit edge in real coordinates.
    RectF edge_rect(const EdgeId& e) const;
    Vec2 edge_midpoint(const EdgeId& e) const;
    // Unit normal: +x for vertical edges, +y for horizontal edges.
    Vec2 edge_normal(const EdgeId& e) const {
        return e.axis == 0 ? Vec2{0.0, 1.0} : Vec2{1.0, 0.0};
    }

  private:
    CrackSet() = default;
    void index_edges();
    void compute_components();

    std::shared_ptr<const Grid> grid_;
    std::vector<CrackSegment> segments_;
    std::vector<EdgeId> edges_;
    std::unordered_set<EdgeId, EdgeIdHash> edge_lookup_;
    std::vector<int> component_ids_;
    int component_count_ = 0;
};

}  // namespace kornforge
