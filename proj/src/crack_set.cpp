#include "kornforge/crack_set.hpp"

#include <algorithm>
#include <array>
#include <string>

namespace kornforge {

namespace {

// Disjoint-set union over lattice corner ids.
class UnionFind {
  public:
    int find(int x) {
        auto it = parent_.find(x);
        if (it == parent_.end()) {
            parent_[x] = x;
            return x;
        }
        int root = x;
        while (parent_[root] != root) root = parent_[root];
        while (parent_[x] != root) {
            const int next = parent_[x];
            parent_[x] = root;
            x = next;
        }
        return root;
    }

    void unite(int a, int b) { parent_[find(a)] = find(b); }

  private:
    std::unordered_map<int, int> parent_;
};

}  // namespace

CrackSet::CrackSet(const Grid& grid, const std::vector<CrackSegment>& segments)
    : grid_(std::make_shared<Grid>(grid)), segments_(segments) {
    const int n = grid.cells_per_side();
    for (std::size_t k = 0; k < segments_.size(); ++k) {
        const CrackSegment& s = segments_[k];
        const std::string where = "crack segment #" + std::to_string(k);
        if (s.axis != 0 && s.axis != 1) fail(ErrorKind::Geometry, where + ": axis must be 0 or 1");
        if (s.from >= s.to) fail(ErrorKind::Geometry, where + ": needs from < to");
        if (s.from < 0 || s.to > n) fail(ErrorKind::Geometry, where + ": span outside the lattice");
        // Edges on the outer grid boundary have only one adjacent cell, so a
        // crack there has no two-sided trace.
        if (s.fixed <= 0 || s.fixed >= n) {
            fail(ErrorKind::Geometry, where + ": must lie on an interior lattice line");
        }
        for (int t = s.from; t < s.to; ++t) {
            const EdgeId e = s.axis == 0 ? EdgeId{0, t, s.fixed} : EdgeId{1, s.fixed, t};
            if (edge_lookup_.insert(e).second) edges_.push_back(e);
        }
    }
    compute_components();
}

CrackSet CrackSet::from_edges(const Grid& grid, const std::vector<EdgeId>& edges) {
    CrackSet out;
    out.grid_ = std::make_shared<Grid>(grid);
    const int n = grid.cells_per_side();
    for (const EdgeId& e : edges) {
        const bool interior = e.axis == 0 ? (e.b > 0 && e.b < n && e.a >= 0 && e.a < n)
                                          : (e.a > 0 && e.a < n && e.b >= 0 && e.b < n);
        if (!interior) fail(ErrorKind::Geometry, "crack edge outside the interior edge lattice");
        if (out.edge_lookup_.insert(e).second) out.edges_.push_back(e);
    }
    out.compute_components();
    return out;
}

void CrackSet::compute_components() {
    const int stride = grid_->cells_per_side() + 1;
    UnionFind dsu;
    auto corner_id = [stride](int i, int j) { return j * stride + i; };
    for (const EdgeId& e : edges_) {
        if (e.axis == 0) {
            dsu.unite(corner_id(e.a, e.b), corner_id(e.a + 1, e.b));
        } else {
            dsu.unite(corner_id(e.a, e.b), corner_id(e.a, e.b + 1));
        }
    }
    component_ids_.assign(edges_.size(), -1);
    std::unordered_map<int, int> root_to_component;
    component_count_ = 0;
    for (std::size_t k = 0; k < edges_.size(); ++k) {
        const EdgeId& e = edges_[k];
        const int root = dsu.find(corner_id(e.a, e.b));
        auto [it, inserted] = root_to_component.emplace(root, component_count_);
        if (inserted) ++component_count_;
        component_ids_[k] = it->second;
    }
}

double CrackSet::total_length() const {
    return grid_->spacing() * static_cast<double>(edges_.size());
}

double CrackSet::length_in(const RectF& box) const {
    double total = 0.0;
    for (const EdgeId& e : edges_) {
        if (e.axis == 0) {
            total += clipped_segment_length(0, grid_->corner_y(e.b), grid_->corner_x(e.a),
                                            grid_->corner_x(e.a + 1), box);
        } else {
            total += clipped_segment_length(1, grid_->corner_x(e.a), grid_->corner_y(e.b),
                                            grid_->corner_y(e.b + 1), box);
        }
    }
    return total;
}

std::array<int, 4> CrackSet::component_bounds(int component) const {
    if (component < 0 || component >= component_count_) {
        fail(ErrorKind::Precondition, "crack set: component id out of range");
    }
    std::array<int, 4> box = {INT32_MAX, INT32_MAX, INT32_MIN, INT32_MIN};
    for (std::size_t k = 0; k < edges_.size(); ++k) {
        if (component_ids_[k] != component) continue;
        const EdgeId& e = edges_[k];
        const int x0 = e.a, y0 = e.b;
        const int x1 = e.axis == 0 ? e.a + 1 : e.a;
        const int y1 = e.axis == 0 ? e.b : e.b + 1;
        box[0] = std::min(box[0], x0);
        box[1] = std::min(box[1], y0);
        box[2] = std::max(box[2], x1);
        box[3] = std::max(box[3], y1);
    }
    return box;
}

RectF CrackSet::edge_rect(const EdgeId& e) const {
    if (e.axis == 0) {
        const double y = grid_->corner_y(e.b);
        return {grid_->corner_x(e.a), y, grid_->corner_x(e.a + 1), y};
    }
    const double x = grid_->corner_x(e.a);
    return {x, grid_->corner_y(e.b), x, grid_->corner_y(e.b + 1)};
}

Vec2 CrackSet::edge_midpoint(const EdgeId& e) const {
    const RectF r = edge_rect(e);
    return r.center();
}

}  // namespace kornforge
