#include <doctest.h>

#include <cmath>
#include <vector>

#include "kornforge/error.hpp"
#include "kornforge/field.hpp"
#include "kornforge/local.hpp"

using namespace kornforge;

namespace {

std::vector<CrackSegment> box_boundary(int x0, int y0, int x1, int y1) {
    return {{0, y0, x0, x1}, {0, y1, x0, x1}, {1, x0, y0, y1}, {1, x1, y0, y1}};
}

// Shear plus a translated square inclusion whose boundary is the crack.
DisplacementField shear_with_inclusion(const Grid& g, double gamma, Vec2 offset, int x0, int y0,
                                       int x1, int y1) {
    const CrackSet crack(g, box_boundary(x0, y0, x1, y1));
    const RectF hole{g.corner_x(x0), g.corner_y(y0), g.corner_x(x1), g.corner_y(y1)};
    return build_field(g, crack, [&](Vec2 p, Vec2 cc) {
        const Vec2 shear{gamma * p.y, 0.0};
        return hole.contains(cc) ? shear + offset : shear;
    });
}

}  // namespace

TEST_SUITE("local_korn") {

TEST_CASE("exponent rules and parameter validation") {
    CHECK(chaining_exponent(1.0, 4.0) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(chaining_exponent(1.9, 1.0) == 1.9);
    CHECK(chaining_exponent(1.5, 1e6) == 63.0 / 32.0);
    CHECK(chaining_exponent(1.0, 1.0) == 17.0 / 16.0);

    const Grid g({0.0, 0.0}, 1.0, 32);
    const DisplacementField f =
        build_field(g, CrackSet::empty_on(g), [](Vec2, Vec2) { return Vec2{0.25, 0.0}; });
    CHECK_THROWS_AS(local_estimate(f, 2.0, 2.0), Error);
    CHECK_THROWS_AS(local_estimate(f, 0.5, 2.0), Error);
    CHECK_THROWS_AS(local_estimate(f, 1.5, 0.5), Error);
    LocalKornConfig bad;
    bad.c_shrink = -1.0;
    CHECK_THROWS_AS(local_estimate(f, 1.5, 2.0, bad), Error);
}

TEST_CASE("a translation is reproduced exactly, with or without a silent crack") {
    const Grid g({0.0, 0.0}, 1.0, 128);
    const Vec2 v{0.25, -0.5};
    auto run = [&](const CrackSet& crack) {
        const DisplacementField f = build_field(g, crack, [&](Vec2, Vec2) { return v; });
        const LocalKornReport rep = local_estimate(f, 1.5, 2.0);
        CHECK(!rep.infeasible);
        CHECK(!rep.fallback);
        CHECK(rep.jump_length == 0.0);
        CHECK(rep.shrunk_mu == 1.0);
        CHECK(rep.modified_mu == 1.0);
        CHECK(rep.exceptional.empty());
        CHECK(rep.rigid.omega == 0.0);
        CHECK(rep.rigid.b.x == v.x);
        CHECK(rep.rigid.b.y == v.y);
        CHECK(rep.residual_u_q == 0.0);
        CHECK(rep.residual_grad_p == 0.0);
        CHECK(rep.elastic == 0.0);
        CHECK(rep.const_u == 0.0);
        CHECK(rep.const_grad == 0.0);
        CHECK(rep.excluded_area == 0.0);
        CHECK(rep.variation_proxy == 0.0);
        CHECK(rep.c_shrink == 100.0);
        CHECK(rep.p_internal == 1.5);
    };
    run(CrackSet::empty_on(g));
    // A crack with equal traces on both sides is not part of the jump set.
    run(CrackSet(g, box_boundary(40, 40, 44, 44)));
}

TEST_CASE("a two-body translation is resolved exactly outside the exceptional set") {
    const Grid g({0.0, 0.0}, 1.0, 1024);
    const double h = g.spacing();
    const CrackSet crack(g, box_boundary(511, 511, 512, 512));
    const RectF hole{g.corner_x(511), g.corner_y(511), g.corner_x(512), g.corner_y(512)};
    const Vec2 inner{0.375, -0.125};
    const Vec2 outer{-0.25, 0.5};
    const DisplacementField f = build_field(
        g, crack, [&](Vec2, Vec2 cc) { return hole.contains(cc) ? inner : outer; });

    LocalKornConfig cfg;
    cfg.theta = 0.5;
    const LocalKornReport rep = local_estimate(f, 1.5, 2.0, cfg);

    CHECK(!rep.infeasible);
    CHECK(!rep.fallback);
    CHECK(rep.c_shrink == 52.0);
    CHECK(rep.jump_length == 4.0 * h);
    CHECK(rep.shrunk_mu == 0.59375);
    CHECK(rep.modified_mu == doctest::Approx(1.0 - 3.0 * std::hypot(h, h)).epsilon(1e-15));

    // The active squares sit at the third scale; their enlargements tile the
    // central 320x320-cell block, which swallows the inclusion.
    CHECK(rep.exceptional.cell_count() == 320 * 320);
    CHECK(rep.exceptional.contains(511, 511));
    CHECK(rep.exceptional.contains(512, 512));

    // Outside E the field is exactly the outer translation, and the fitted
    // motion reproduces it bit for bit.
    CHECK(rep.rigid.omega == 0.0);
    CHECK(rep.rigid.b.x == outer.x);
    CHECK(rep.rigid.b.y == outer.y);
    CHECK(rep.residual_u_q == 0.0);
    CHECK(rep.residual_grad_p == 0.0);
    CHECK(rep.elastic == 0.0);
    CHECK(rep.const_u == 0.0);
    CHECK(rep.const_grad == 0.0);
    CHECK(rep.excluded_area == 0.0);

    // The variation proxy reduces to the cut along the boundary of E: 1280
    // boundary edges, each weighing h times the outer value's magnitude.
    CHECK(rep.variation_proxy ==
          doctest::Approx(1280.0 * h * std::sqrt(0.3125)).epsilon(1e-12));
}

TEST_CASE("measured constants are positive, recomputable, and stable under refinement") {
    LocalKornConfig cfg;
    cfg.theta = 0.5;
    const double gamma = 0.8;
    const Vec2 offset{0.5, -0.25};

    const Grid g1({0.0, 0.0}, 1.0, 512);
    const DisplacementField f1 = shear_with_inclusion(g1, gamma, offset, 345, 345, 346, 346);
    const LocalKornReport r1 = local_estimate(f1, 1.5, 2.0, cfg);

    CHECK(!r1.infeasible);
    CHECK(!r1.fallback);
    CHECK(r1.shrunk_mu == 0.1875);
    CHECK(r1.exceptional.cell_count() == 192 * 192);
    CHECK(r1.excluded_area == 0.0);
    CHECK(r1.const_u > 0.0);
    CHECK(r1.const_grad > 0.0);
    CHECK(r1.elastic == doctest::Approx(0.4 * std::sqrt(2.0) * 2.0).epsilon(1e-9));

    // The reported residual is a plain q-norm of the original field against
    // the reported motion over the measured region.
    const Grid& g = g1;
    double acc = 0.0;
    const RegionMask domain =
        RegionMask::from_rect(g, centered_square({0.0, 0.0}, r1.shrunk_mu))
            .set_difference(r1.exceptional);
    domain.for_each_cell([&](int i, int j) {
        const Vec2 d = f1.center_value(i, j) - r1.rigid.at(g.cell_center(i, j));
        acc += std::pow(d.norm(), 2.0) * g.spacing() * g.spacing();
    });
    CHECK(r1.residual_u_q == doctest::Approx(std::sqrt(acc)).epsilon(1e-12));

    // Same physical configuration at twice the resolution.
    const Grid g2({0.0, 0.0}, 1.0, 1024);
    const DisplacementField f2 = shear_with_inclusion(g2, gamma, offset, 690, 690, 692, 692);
    const LocalKornReport r2 = local_estimate(f2, 1.5, 2.0, cfg);
    CHECK(r2.shrunk_mu == 0.1875);
    CHECK(r2.jump_length == r1.jump_length);
    CHECK(r1.const_u == doctest::Approx(r2.const_u).epsilon(0.10));
    CHECK(r1.const_grad == doctest::Approx(r2.const_grad).epsilon(0.10));
}

TEST_CASE("constants are invariant under exact dyadic rescaling") {
    LocalKornConfig cfg;
    cfg.theta = 0.5;
    const double gamma = 0.8;

    const Grid g1({0.0, 0.0}, 1.0, 512);
    const DisplacementField f1 = shear_with_inclusion(g1, gamma, {0.5, -0.25}, 345, 345, 346, 346);
    const LocalKornReport r1 = local_estimate(f1, 1.5, 2.0, cfg);

    // x -> 2x, u -> 2u: same lattice, doubled grid and offsets.
    const Grid g2({0.0, 0.0}, 2.0, 512);
    const DisplacementField f2 = shear_with_inclusion(g2, gamma, {1.0, -0.5}, 345, 345, 346, 346);
    const LocalKornReport r2 = local_estimate(f2, 1.5, 2.0, cfg);

    CHECK(r2.shrunk_mu == 2.0 * r1.shrunk_mu);
    CHECK(r2.jump_length == 2.0 * r1.jump_length);
    CHECK(r2.const_u == doctest::Approx(r1.const_u).epsilon(1e-8));
    CHECK(r2.const_grad == doctest::Approx(r1.const_grad).epsilon(1e-8));
    CHECK(r2.residual_u_q ==
          doctest::Approx(std::pow(2.0, 1.0 + 2.0 / 2.0) * r1.residual_u_q).epsilon(1e-8));
    CHECK(r2.residual_grad_p ==
          doctest::Approx(std::pow(2.0, 2.0 / 1.5) * r1.residual_grad_p).epsilon(1e-8));
}

TEST_CASE("long jumps fall back to a full exceptional set with vacuous residuals") {
    const Grid g({0.0, 0.0}, 1.0, 256);
    const CrackSet split(g, {CrackSegment{0, 128, 0, 256}});
    const DisplacementField f = build_field(g, split, [](Vec2, Vec2 cc) {
        return cc.y > 0.0 ? Vec2{0.25, 0.0} : Vec2{0.0, 0.0};
    });
    LocalKornConfig cfg;
    cfg.theta = 0.5;
    const LocalKornReport rep = local_estimate(f, 1.5, 2.0, cfg);
    CHECK(rep.jump_length == 2.0);
    CHECK(rep.shrunk_mu == 0.0);
    CHECK(rep.fallback);
    CHECK(!rep.infeasible);
    CHECK(rep.exceptional.cell_count() == 256 * 256);
    CHECK(rep.residual_u_q == 0.0);
    CHECK(rep.residual_grad_p == 0.0);
    CHECK(rep.const_u == 0.0);
    CHECK(rep.const_grad == 0.0);
}

TEST_CASE("an undersized shrink factor trips the gate and is reported as infeasible") {
    const Grid g({0.0, 0.0}, 1.0, 256);
    const CrackSet crack(g, box_boundary(127, 127, 129, 129));
    const RectF hole{g.corner_x(127), g.corner_y(127), g.corner_x(129), g.corner_y(129)};
    const DisplacementField f = build_field(
        g, crack, [&](Vec2, Vec2 cc) { return hole.contains(cc) ? Vec2{0.25, 0.0} : Vec2{}; });
    LocalKornConfig cfg;
    cfg.theta = 0.5;
    cfg.c_shrink = 1.0;
    const LocalKornReport rep = local_estimate(f, 1.5, 2.0, cfg);
    CHECK(rep.infeasible);
    CHECK(rep.fallback);
    CHECK(rep.exceptional.cell_count() == 256 * 256);
    CHECK(rep.residual_u_q == 0.0);
    CHECK(rep.c_shrink == 1.0);
}

}  // TEST_SUITE
