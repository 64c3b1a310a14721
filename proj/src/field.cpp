#include "kornforge/field.hpp"

#include <cmath>
#include <string>

namespace kornforge {

DisplacementField::DisplacementField(const Grid& grid, const CrackSet& crack)
    : grid_(std::make_shared<Grid>(grid)),
      crack_(crack),
      values_(static_cast<std::size_t>(grid.cell_count()) * 8, 0.0) {
    if (!(crack.grid() == grid)) {
        fail(ErrorKind::Precondition, "displacement field: crack set lives on a different grid");
    }
}

Vec2 DisplacementField::center_value(int i, int j) const {
    const Vec2 c0 = corner_value(i, j, 0);
    const Vec2 c1 = corner_value(i, j, 1);
    const Vec2 c2 = corner_value(i, j, 2);
    const Vec2 c3 = corner_value(i, j, 3);
    return {(c0.x + c1.x + c2.x + c3.x) * 0.25, (c0.y + c1.y + c2.y + c3.y) * 0.25};
}

Mat2 DisplacementField::cell_gradient(int i, int j) const {
    // d/dx at the center: average of the two x-direction corner differences;
    // same for d/dy. This is the exact gradient of the bilinear interpolant at
    // the cell midpoint.
    const Vec2 c0 = corner_value(i, j, 0);
    const Vec2 c1 = corner_value(i, j, 1);
    const Vec2 c2 = corner_value(i, j, 2);
    const Vec2 c3 = corner_value(i, j, 3);
    const double inv = 1.0 / (2.0 * grid_->spacing());
    Mat2 g;
    g.a11 = (c1.x - c0.x + c3.x - c2.x) * inv;
    g.a21 = (c1.y - c0.y + c3.y - c2.y) * inv;
    g.a12 = (c2.x - c0.x + c3.x - c1.x) * inv;
    g.a22 = (c2.y - c0.y + c3.y - c1.y) * inv;
    return g;
}

std::array<Vec2, 2> DisplacementField::edge_jump(const EdgeId& e) const {
    if (!crack_.has_edge(e)) {
        fail(ErrorKind::Precondition, "edge jump requested on a non-crack edge");
    }
    if (e.axis == 0) {
        // Horizontal edge: plus side above (cell (a, b)), minus side below.
        const Vec2 plus0 = corner_value(e.a, e.b, 0);
        const Vec2 plus1 = corner_value(e.a, e.b, 1);
        const Vec2 minus0 = corner_value(e.a, e.b - 1, 2);
        const Vec2 minus1 = corner_value(e.a, e.b - 1, 3);
        return {Vec2{plus0.x - minus0.x, plus0.y - minus0.y},
                Vec2{plus1.x - minus1.x, plus1.y - minus1.y}};
    }
    // Vertical edge: plus side right (cell (a, b)), minus side left.
    const Vec2 plus0 = corner_value(e.a, e.b, 0);
    const Vec2 plus1 = corner_value(e.a, e.b, 2);
    const Vec2 minus0 = corner_value(e.a - 1, e.b, 1);
    const Vec2 minus1 = corner_value(e.a - 1, e.b, 3);
    return {Vec2{plus0.x - minus0.x, plus0.y - minus0.y},
            Vec2{plus1.x - minus1.x, plus1.y - minus1.y}};
}

Vec2 DisplacementField::edge_jump_midpoint(const EdgeId& e) const {
    const auto j = edge_jump(e);
    return {(j[0].x + j[1].x) * 0.5, (j[0].y + j[1].y) * 0.5};
}

bool DisplacementField::is_jump_edge(const EdgeId& e, double tol) const {
    const auto j = edge_jump(e);
    return j[0].norm() > tol || j[1].norm() > tol;
}

bool DisplacementField::continuity_holds(EdgeId* offending) const {
    const int n = grid_->cells_per_side();
    auto equal = [](const Vec2& a, const Vec2& b) { return a.x == b.x && a.y == b.y; };
    // Vertical interior edges: right cell corners {0, 2} vs left cell {1, 3}.
    for (int j = 0; j < n; ++j) {
        for (int i = 1; i < n; ++i) {
            const EdgeId e{1, i, j};
            if (crack_.has_edge(e)) continue;
            if (!equal(corner_value(i, j, 0), corner_value(i - 1, j, 1)) ||
                !equal(corner_value(i, j, 2), corner_value(i - 1, j, 3))) {
                if (offending) *offending = e;
                return false;
            }
        }
    }
    // Horizontal interior edges: upper cell corners {0, 1} vs lower cell {2, 3}.
    for (int j = 1; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const EdgeId e{0, i, j};
            if (crack_.has_edge(e)) continue;
            if (!equal(corner_value(i, j, 0), corner_value(i, j - 1, 2)) ||
                !equal(corner_value(i, j, 1), corner_value(i, j - 1, 3))) {
                if (offending) *offending = e;
                return false;
            }
        }
    }
    return true;
}

double DisplacementField::sup_norm() const {
    double best = 0.0;
    for (double v : values_) best = std::max(best, std::abs(v));
    return best;
}

void DisplacementField::reset_crack(const CrackSet& crack) {
    if (!(crack.grid() == *grid_)) {
        fail(ErrorKind::Precondition, "reset_crack: crack set lives on a different grid");
    }
    crack_ = crack;
}

StrainField::StrainField(const Grid& grid)
    : grid_(std::make_shared<Grid>(grid)),
      e11_(static_cast<std::size_t>(grid.cell_count()), 0.0),
      e22_(static_cast<std::size_t>(grid.cell_count()), 0.0),
      e12_(static_cast<std::size_t>(grid.cell_count()), 0.0) {}

DisplacementField build_field(const Grid& grid, const CrackSet& crack, const FieldSampler& sampler) {
    DisplacementField field(grid, crack);
    const int n = grid.cells_per_side();
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const Vec2 cc = grid.cell_center(i, j);
            field.set_corner_value(i, j, 0, sampler(grid.corner_point(i, j), cc));
            field.set_corner_value(i, j, 1, sampler(grid.corner_point(i + 1, j), cc));
            field.set_corner_value(i, j, 2, sampler(grid.corner_point(i, j + 1), cc));
            field.set_corner_value(i, j, 3, sampler(grid.corner_point(i + 1, j + 1), cc));
        }
    }
    EdgeId bad;
    if (!field.continuity_holds(&bad)) {
        fail(ErrorKind::Geometry,
             "build_field: sampler is discontinuous across the non-crack edge (axis " +
                 std::to_string(int(bad.axis)) + ", " + std::to_string(bad.a) + ", " +
                 std::to_string(bad.b) + ")");
    }
    return field;
}

StrainField strain(const DisplacementField& field) {
    const Grid& grid = field.grid();
    StrainField out(grid);
    const int n = grid.cells_per_side();
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const Mat2 g = field.cell_gradient(i, j);
            out.set(i, j, {g.a11, g.a22, 0.5 * (g.a12 + g.a21)});
        }
    }
    return out;
}

double lp_norm_cells(const Grid& grid, const RegionMask& mask, double p,
                     const std::function<double(int, int)>& magnitude) {
    if (!(p >= 1.0) || !std::isfinite(p)) {
        fail(ErrorKind::Parameter, "lp_norm: exponent must satisfy 1 <= p < inf");
    }
    if (!(mask.grid() == grid)) {
        fail(ErrorKind::Precondition, "lp_norm: mask lives on a different grid");
    }
    const double cell_area = grid.spacing() * grid.spacing();
    double sum = 0.0;
    mask.for_each_cell([&](int i, int j) {
        const double m = magnitude(i, j);
        sum += std::pow(m, p) * cell_area;
    });
    return std::pow(sum, 1.0 / p);
}

double lp_norm(const StrainField& strains, const RegionMask& mask, double p) {
    return lp_norm_cells(strains.grid(), mask, p,
                         [&](int i, int j) { return strains.at(i, j).frobenius(); });
}

double total_ed_variation(const DisplacementField& field, const StrainField& strains,
                          const RegionMask& mask) {
    const Grid& grid = field.grid();
    if (!(mask.grid() == grid)) {
        fail(ErrorKind::Precondition, "total_ed_variation: mask lives on a different grid");
    }
    const double h = grid.spacing();
    const double cell_area = h * h;
    double bulk = 0.0;
    mask.for_each_cell([&](int i, int j) { bulk += strains.at(i, j).frobenius() * cell_area; });

    double jump = 0.0;
    for (const EdgeId& e : field.crack().edges()) {
        int members = 0;
        if (e.axis == 0) {
            if (mask.contains(e.a, e.b - 1)) ++members;
            if (mask.contains(e.a, e.b)) ++members;
        } else {
            if (mask.contains(e.a - 1, e.b)) ++members;
            if (mask.contains(e.a, e.b)) ++members;
        }
        if (members == 0) continue;
        const Sym2 opening = sym_outer(field.edge_jump_midpoint(e), field.crack().edge_normal(e));
        jump += opening.frobenius() * h * (0.5 * members);
    }
    return bulk + jump;
}

}  // namespace kornforge
