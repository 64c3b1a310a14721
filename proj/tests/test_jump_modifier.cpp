#include <doctest.h>

#include <cmath>

#include "kornforge/error.hpp"
#include "kornforge/field.hpp"
#include "kornforge/modification.hpp"
#include "kornforge/region_mask.hpp"
#include "kornforge/rigid.hpp"

using namespace kornforge;

namespace {

// Crack tracing the boundary of the lattice rectangle [x0,x1] x [y0,y1].
std::vector<CrackSegment> rect_boundary_segments(int x0, int y0, int x1, int y1) {
    return {{0, y0, x0, x1}, {0, y1, x0, x1}, {1, x0, y0, y1}, {1, x1, y0, y1}};
}

}  // namespace

TEST_SUITE("jump_modifier") {

TEST_CASE("covering an empty crack yields an empty set") {
    const Grid g({0.0, 0.0}, 1.0, 32);
    const auto cover = cover_cracks(CrackSet::empty_on(g), 0.0, 1.0, 1.0);
    CHECK(cover.rects.empty());
    CHECK(cover.diagnostics.sum_diameters == 0.0);
    CHECK(cover.diagnostics.bound_holds);
}

TEST_CASE("a rectangle-boundary crack covers to that rectangle with the right diameter") {
    const Grid g({0.0, 0.0}, 1.0, 32);
    const CrackSet crack(g, rect_boundary_segments(8, 10, 20, 16));
    const auto cover = cover_cracks(crack, 0.0, 1.0, 1.0);
    REQUIRE(cover.rects.size() == 1);
    CHECK(cover.rects.rects()[0] == LatticeRect{8, 10, 20, 16});
    const double h = g.spacing();
    const double expected = std::hypot(12 * h, 6 * h);
    CHECK(cover.rects.total_diameter() == doctest::Approx(expected).epsilon(1e-14));
    // Boxes never out-span the crack: a connected component is at least as
    // long as its bounding-box diagonal, so the measured bound holds.
    CHECK(cover.diagnostics.bound_holds);
    CHECK(cover.diagnostics.jump_length == doctest::Approx((2 * 12 + 2 * 6) * h));
}

TEST_CASE("overlapping and touching component boxes merge to the union hull") {
    const Grid g({0.0, 0.0}, 1.0, 32);
    // An L-shaped run whose box swallows a separate short run inside it.
    const CrackSet crossing(g, {{0, 4, 4, 10}, {1, 4, 4, 10}, {0, 6, 6, 8}});
    REQUIRE(crossing.component_count() == 2);
    const auto merged = cover_cracks(crossing, 0.0, 1.0, 1.0);
    REQUIRE(merged.rects.size() == 1);
    CHECK(merged.rects.rects()[0] == LatticeRect{4, 4, 10, 10});
    CHECK(merged.rects.pairwise_separated());

    // Far-apart components stay separate and pairwise separated.
    const CrackSet apart(g, {{0, 5, 1, 4}, {0, 25, 20, 28}});
    const auto split = cover_cracks(apart, 0.0, 1.0, 1.0);
    CHECK(split.rects.size() == 2);
    CHECK(split.rects.pairwise_separated());

    // Boxes touching at a single point merge too: the L-shape's box has a
    // free corner at (6, 3) that the second run's box touches there. One row
    // lower the boxes no longer meet and the cover stays split.
    const CrackSet touch(g, {{0, 6, 2, 6}, {1, 2, 3, 6}, {0, 3, 6, 10}});
    REQUIRE(touch.component_count() == 2);
    const auto touch_cover = cover_cracks(touch, 0.0, 1.0, 1.0);
    REQUIRE(touch_cover.rects.size() == 1);
    CHECK(touch_cover.rects.rects()[0] == LatticeRect{2, 3, 10, 6});
    const CrackSet miss(g, {{0, 6, 2, 6}, {1, 2, 3, 6}, {0, 2, 6, 10}});
    REQUIRE(miss.component_count() == 2);
    const auto miss_cover = cover_cracks(miss, 0.0, 1.0, 1.0);
    CHECK(miss_cover.rects.size() == 2);
}

TEST_CASE("the diameter-bound flag reports honest failures") {
    const Grid g({0.0, 0.0}, 1.0, 32);
    const CrackSet crack(g, {{0, 16, 4, 28}});  // straight: diameter = length
    // A deflating weight drives the budget below the diameter sum.
    const auto bad = cover_cracks(crack, 0.0, 1.0, -0.5);
    CHECK_FALSE(bad.diagnostics.bound_holds);
    const auto good = cover_cracks(crack, 0.0, 1.0, 1.0);
    CHECK(good.diagnostics.bound_holds);
    CHECK_THROWS_AS(cover_cracks(crack, 1.0, 0.0, 1.0), Error);
}

TEST_CASE("rectangle sets validate their boxes") {
    const Grid g({0.0, 0.0}, 1.0, 16);
    CHECK_THROWS_AS(RectangleSet(g, {{4, 4, 2, 8}}), Error);
    CHECK_THROWS_AS(RectangleSet(g, {{0, 0, 17, 4}}), Error);
    const RectangleSet ok(g, {{3, 3, 3, 9}});  // degenerate is fine
    CHECK(ok.total_diameter() == doctest::Approx(6 * g.spacing()));
    CHECK(ok.covered_cells().empty());
}

TEST_CASE("modifying a crack-free field with no rectangles is the identity") {
    const Grid g({0.0, 0.0}, 1.0, 16);
    const auto field = build_field(g, CrackSet::empty_on(g),
                                   [](Vec2 p, Vec2) { return Vec2{p.x * p.y, -p.y}; });
    const auto result = apply_modification(field, RectangleSet::empty_on(g));
    CHECK(result.shrunk_mu == 1.0);
    for (int j = 0; j < 16; ++j) {
        for (int i = 0; i < 16; ++i) {
            for (int c = 0; c < 4; ++c) {
                REQUIRE(result.modified.corner_value(i, j, c).x == field.corner_value(i, j, c).x);
                REQUIRE(result.modified.corner_value(i, j, c).y == field.corner_value(i, j, c).y);
            }
        }
    }
    CHECK(result.modified.crack().empty());
}

TEST_CASE("a rigid inclusion inside a rigid background is absorbed") {
    const Grid g({0.0, 0.0}, 1.0, 32);
    const CrackSet crack(g, rect_boundary_segments(12, 12, 20, 20));
    const RectF hole{g.corner_x(12), g.corner_y(12), g.corner_x(20), g.corner_y(20)};
    const RigidMotion outer{0.15, {0.3, -0.1}};
    const RigidMotion inner{-0.4, {0.0, 0.5}};
    const auto field = build_field(g, crack, [&](Vec2 p, Vec2 center) {
        return hole.contains(center) ? inner.at(p) : outer.at(p);
    });

    const auto cover = cover_cracks(crack, 0.0, 1.0, 1.0);
    const auto result = apply_modification(field, cover.rects);

    // The annulus fit recovers the outer motion, so the inclusion disappears:
    // no surviving jumps anywhere, and the whole field matches the outer
    // motion to rounding.
    for (const EdgeId& e : result.modified.crack().edges()) {
        REQUIRE_FALSE(result.modified.is_jump_edge(e, 1e-12));
    }
    const RegionMask all(g, true);
    const RigidMotion refit = project_rigid(result.modified, all);
    CHECK(refit.omega == doctest::Approx(outer.omega).epsilon(1e-12));
    CHECK(rigid_distance(refit, outer, all, 2.0) <= 1e-10);

    // Corner values outside the rectangle are the original bits.
    result.modified.crack();
    for (int j = 0; j < 32; ++j) {
        for (int i = 0; i < 32; ++i) {
            if (i >= 12 && i < 20 && j >= 12 && j < 20) {
                continue;
            }
            for (int c = 0; c < 4; ++c) {
                REQUIRE(result.modified.corner_value(i, j, c).x == field.corner_value(i, j, c).x);
                REQUIRE(result.modified.corner_value(i, j, c).y == field.corner_value(i, j, c).y);
            }
        }
    }
    CHECK(result.shrunk_mu ==
          doctest::Approx(std::max(0.0, 1.0 - 3.0 * cover.rects.total_diameter())));
}

TEST_CASE("modification confines jumps to rectangle boundaries and never adds energy") {
    const Grid g({0.0, 0.0}, 1.0, 32);
    const CrackSet crack(g, rect_boundary_segments(10, 14, 18, 22));
    const RectF hole{g.corner_x(10), g.corner_y(14), g.corner_x(18), g.corner_y(22)};
    // Smooth non-rigid background plus a shifted interior.
    const auto field = build_field(g, crack, [&](Vec2 p, Vec2 center) {
        Vec2 u{0.2 * p.x * p.x, 0.1 * std::sin(2.0 * p.y)};
        if (hole.contains(center)) {
            u.x += 0.8;
            u.y -= 0.3;
        }
        return u;
    });
    const double energy_before = lp_norm(strain(field), RegionMask(g, true), 2.0);

    const auto cover = cover_cracks(crack, energy_before * energy_before,
                                    default_epsilon(energy_before * energy_before,
                                                    crack.total_length()),
                                    1.0);
    const auto result = apply_modification(field, cover.rects);
    const auto& u = result.modified;

    // All surviving jumps sit on the rectangle boundary, and this time the
    // fit really differs from the outer trace somewhere.
    int jump_edges = 0;
    for (const EdgeId& e : u.crack().edges()) {
        if (u.is_jump_edge(e, 1e-12)) {
            ++jump_edges;
        }
    }
    CHECK(jump_edges > 0);
    CHECK(u.continuity_holds());

    const double energy_after = lp_norm(strain(u), RegionMask(g, true), 2.0);
    CHECK(energy_after <= energy_before);

    // A strict interior cell of the rectangle is strain-free.
    CHECK(strain(u).at(14, 18).frobenius() <= 1e-12);
}

TEST_CASE("uncovered crack edges are a coverage error") {
    const Grid g({0.0, 0.0}, 1.0, 16);
    const CrackSet crack(g, {{0, 8, 0, 16}});
    const auto field = build_field(g, crack, [&](Vec2, Vec2 center) {
        return center.y > 0.0 ? Vec2{0.1, 0.0} : Vec2{0.0, 0.0};
    });
    // Rectangle misses the right end of the crack.
    CHECK_THROWS_AS(apply_modification(field, RectangleSet(g, {{0, 8, 12, 8}})), Error);
}

TEST_CASE("jump control: crack-free masks reduce to the quadratic mean inequality") {
    const Grid g({0.0, 0.0}, 1.0, 32);
    const auto field = build_field(g, CrackSet::empty_on(g), [](Vec2 p, Vec2) {
        return Vec2{0.25 * p.x * p.x - 0.1 * p.y, 0.3 * p.x * p.y};
    });
    const auto result = apply_modification(field, RectangleSet::empty_on(g));
    RegionMask disk = RegionMask::from_predicate(g, [](Vec2 p) { return p.norm() < 0.7; });
    const auto report = jump_control_check(result, disk, 1.0, 4.0);
    CHECK(report.holds);
    CHECK(report.mask_jump_length == 0.0);
    CHECK(report.sum_d_sq_near == 0.0);
    // With c = 2 the Cauchy-Schwarz case leaves at least a factor-2 margin.
    CHECK(report.ratio <= 0.5 + 1e-12);
    CHECK(report.ratio > 0.0);
}

TEST_CASE("jump control: empty strain and empty crack give the 0 <= 0 case") {
    const Grid g({0.0, 0.0}, 1.0, 16);
    const auto field = build_field(g, CrackSet::empty_on(g), [](Vec2, Vec2) {
        return Vec2{0.2, -0.7};
    });
    const auto result = apply_modification(field, RectangleSet::empty_on(g));
    RegionMask spot = RegionMask::from_rect(g, {-0.25, -0.25, 0.25, 0.25});
    const auto report = jump_control_check(result, spot, 1.0, 1.0);
    CHECK(report.holds);
    CHECK(report.lhs_sq == 0.0);
    CHECK(report.rhs == 0.0);
    CHECK(report.ratio == 0.0);
}

TEST_CASE("jump control on a modified two-body field matches a direct evaluation") {
    const Grid g({0.0, 0.0}, 1.0, 64);
    const CrackSet crack(g, rect_boundary_segments(30, 30, 34, 34));
    const RectF hole{g.corner_x(30), g.corner_y(30), g.corner_x(34), g.corner_y(34)};
    const auto field = build_field(g, crack, [&](Vec2 p, Vec2 center) {
        Vec2 u{0.05 * p.y * p.y, 0.04 * p.x * p.x};
        if (hole.contains(center)) {
            u.x -= 0.6;
        }
        return u;
    });
    const double energy = lp_norm(strain(field), RegionMask(g, true), 2.0);
    const double eps = default_epsilon(energy * energy, crack.total_length());
    const auto cover = cover_cracks(crack, energy * energy, eps, 1.0);
    const auto result = apply_modification(field, cover.rects);

    // Neighborhood mask around the rectangle, meeting its boundary.
    RegionMask annulus = RegionMask::from_predicate(
        g, [&](Vec2 p) { return hole.linf_distance(p) <= 0.2; });
    const auto report = jump_control_check(result, annulus, eps, 4.0);

    // Direct re-evaluation of every term with explicit loops.
    const auto& u = result.modified;
    const StrainField e = strain(u);
    const double h = g.spacing();
    double bulk = 0.0, l2_sq = 0.0;
    annulus.for_each_cell([&](int i, int j) {
        const double f = e.at(i, j).frobenius();
        bulk += f * h * h;
        l2_sq += f * f * h * h;
    });
    double jump_tv = 0.0, jump_len = 0.0;
    for (const EdgeId& edge : u.crack().edges()) {
        int members = 0;
        if (edge.axis == 0) {
            members += annulus.contains(edge.a, edge.b - 1) ? 1 : 0;
            members += annulus.contains(edge.a, edge.b) ? 1 : 0;
        } else {
            members += annulus.contains(edge.a - 1, edge.b) ? 1 : 0;
            members += annulus.contains(edge.a, edge.b) ? 1 : 0;
        }
        if (members == 0) {
            continue;
        }
        const Vec2 jump = u.edge_jump_midpoint(edge);
        const Sym2 opening = sym_outer(jump, u.crack().edge_normal(edge));
        jump_tv += opening.frobenius() * h * 0.5 * members;
        if (u.is_jump_edge(edge, 1e-12)) {
            jump_len += h * 0.5 * members;
        }
    }
    const double lhs_sq = (bulk + jump_tv) * (bulk + jump_tv);
    double d_sq = 0.0;
    for (std::size_t k = 0; k < cover.rects.size(); ++k) {
        d_sq += cover.rects.diameter(k) * cover.rects.diameter(k);  // single rect, meets mask
    }
    const double rhs = 2.0 * annulus.area() * l2_sq + 4.0 * eps * jump_len * d_sq;

    CHECK(report.lhs_sq == doctest::Approx(lhs_sq).epsilon(1e-12));
    CHECK(report.rhs == doctest::Approx(rhs).epsilon(1e-12));
    CHECK(report.mask_jump_length == doctest::Approx(jump_len).epsilon(1e-12));
    CHECK(report.sum_d_sq_near == doctest::Approx(d_sq).epsilon(1e-12));
    CHECK(report.holds == (lhs_sq <= rhs * (1 + 1e-12)));
}

TEST_CASE("jump control rejects masks outside the shrunk square") {
    const Grid g({0.0, 0.0}, 1.0, 32);
    const CrackSet crack(g, rect_boundary_segments(15, 15, 17, 17));
    const RectF hole{g.corner_x(15), g.corner_y(15), g.corner_x(17), g.corner_y(17)};
    const auto field = build_field(g, crack, [&](Vec2, Vec2 center) {
        return hole.contains(center) ? Vec2{0.3, 0.0} : Vec2{0.0, 0.0};
    });
    const auto cover = cover_cracks(crack, 0.0, 1.0, 1.0);
    const auto result = apply_modification(field, cover.rects);
    REQUIRE(result.shrunk_mu < 1.0);
    REQUIRE(result.shrunk_mu > 0.0);
    RegionMask everything(g, true);  // reaches cells outside the shrunk square
    CHECK_THROWS_AS(jump_control_check(result, everything, 1.0, 1.0), Error);
}

}  // TEST_SUITE
