#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <set>
#include <vector>

#include "kornforge/boundary.hpp"
#include "kornforge/error.hpp"
#include "kornforge/field.hpp"
#include "kornforge/local.hpp"
#include "kornforge/region_mask.hpp"
#include "kornforge/rigid.hpp"

using namespace kornforge;

namespace {

std::vector<CrackSegment> rect_boundary_crack(int x0, int y0, int x1, int y1) {
    return {{0, y0, x0, x1}, {0, y1, x0, x1}, {1, x0, y0, y1}, {1, x1, y0, y1}};
}

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::Geometry;  // sentinel for "did not throw"
}

DisplacementField shear_field(const Grid& g, double gamma) {
    const CrackSet none(g, {});
    return build_field(g, none,
                       [gamma](Vec2 p, Vec2) -> Vec2 { return {gamma * p.y, 0.0}; });
}

// Shear carrying a rectangular inclusion displaced rigidly by `offset`; the
// inclusion boundary is the crack.
DisplacementField shear_with_inclusion(const Grid& g, double gamma, Vec2 offset, int x0, int y0,
                                       int x1, int y1) {
    const CrackSet crack(g, rect_boundary_crack(x0, y0, x1, y1));
    const RectF hole{g.corner_x(x0), g.corner_y(y0), g.corner_x(x1), g.corner_y(y1)};
    return build_field(g, crack, [gamma, offset, hole](Vec2 p, Vec2 cc) -> Vec2 {
        const Vec2 base{gamma * p.y, 0.0};
        if (hole.contains(cc)) return {base.x + offset.x, base.y + offset.y};
        return base;
    });
}

}  // namespace

TEST_SUITE("boundary_korn") {

TEST_CASE("graph domains validate profiles and mark inner and outer regions") {
    const Grid g({0.0, 0.0}, 1.0, 256);

    const auto flat = make_graph_domain(g, flat_profile(g), 0.0);
    CHECK(flat.mu == 0.5);
    CHECK(flat.outer.cell_count() == 49152);  // 256 x 192 below the graph
    CHECK(flat.inner.cell_count() == 16384);  // central 128 x 128 block
    CHECK(flat.psi_at(0.13) == 0.5);
    CHECK(flat.psi_at(-0.77) == 0.5);
    CHECK(flat.in_outer({0.7, 0.3}));
    CHECK_FALSE(flat.in_outer({0.7, 0.51}));
    CHECK_FALSE(flat.in_outer({1.01, 0.0}));

    // Sawtooth roots sit exactly at the inner height, peaks one half tooth up.
    const auto saw = make_graph_domain(g, sawtooth_profile(g, 1.0, 4), 1.0);
    CHECK(saw.psi_at(0.5) == 0.5);
    CHECK(saw.psi_at(-0.25) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(saw.outer.cell_count() > flat.outer.cell_count());

    // The random walk profile stays inside the band with certified slope.
    const auto walk = random_profile(g, 0.8, 42);
    const double h = g.spacing();
    double lo = 1e300;
    for (double v : walk) {
        lo = std::min(lo, v);
        CHECK(v >= 0.5);
        CHECK(v <= 1.0);
    }
    CHECK(lo == 0.5);
    for (std::size_t k = 0; k + 1 < walk.size(); ++k)
        CHECK(std::abs(walk[k + 1] - walk[k]) <= 0.8 * h * (1.0 + 1e-9) + 1e-15);
    CHECK_NOTHROW(make_graph_domain(g, walk, 0.8));

    // Profiles may descend below the inner height outside the core, which is
    // how corner charts of polygonal domains look: a roof peaking at the top
    // of the window with unit slopes, or a flat core with descending flanks.
    std::vector<double> roof(257);
    for (int k = 0; k <= 256; ++k) roof[static_cast<std::size_t>(k)] = 1.0 - std::abs(g.corner_x(k));
    const auto cone = make_graph_domain(g, roof, 1.0);
    CHECK(cone.psi_at(0.0) == 1.0);
    CHECK(cone.psi_at(0.5) == 0.5);
    CHECK(cone.in_outer({0.0, 0.9}));
    CHECK_FALSE(cone.in_outer({0.9, 0.2}));
    std::vector<double> flanked(257);
    for (int k = 0; k <= 256; ++k)
        flanked[static_cast<std::size_t>(k)] =
            0.5 - 0.6 * std::max(0.0, std::abs(g.corner_x(k)) - 0.5);
    const auto dipped = make_graph_domain(g, flanked, 0.6);
    CHECK(dipped.outer.cell_count() < flat.outer.cell_count());
    CHECK(dipped.inner.cell_count() == flat.inner.cell_count());
    auto lifted = flat_profile(g);
    for (double& v : lifted) v += 0.01;
    const auto raised = make_graph_domain(g, lifted, 0.0);
    CHECK(raised.outer.cell_count() == 49408);
    CHECK(raised.inner.cell_count() == 16512);

    // Rejections: off-center grid, sample count, window band, core floor,
    // negative values, slope, negative slope bound.
    const Grid off({0.1, 0.0}, 1.0, 256);
    CHECK(kind_of([&] { make_graph_domain(off, flat_profile(off), 0.0); }) ==
          ErrorKind::Parameter);
    auto short_psi = flat_profile(g);
    short_psi.pop_back();
    CHECK(kind_of([&] { make_graph_domain(g, short_psi, 0.0); }) == ErrorKind::Parameter);
    auto tall = flat_profile(g);
    tall[10] = 1.5;
    CHECK(kind_of([&] { make_graph_domain(g, tall, 200.0); }) == ErrorKind::Parameter);
    auto core_dip = flat_profile(g);
    core_dip[128] = 0.5 - 0.01;
    CHECK(kind_of([&] { make_graph_domain(g, core_dip, 200.0); }) == ErrorKind::Parameter);
    std::vector<double> sunk(257);
    for (int k = 0; k <= 256; ++k)
        sunk[static_cast<std::size_t>(k)] =
            0.5 - 1.2 * std::max(0.0, std::abs(g.corner_x(k)) - 0.5);
    CHECK(kind_of([&] { make_graph_domain(g, sunk, 1.2); }) == ErrorKind::Parameter);
    auto bumped = flat_profile(g);
    bumped[100] = 0.5 + 1e-3;
    CHECK(kind_of([&] { make_graph_domain(g, bumped, 0.0); }) == ErrorKind::Parameter);
    CHECK(kind_of([&] { make_graph_domain(g, flat_profile(g), -1.0); }) == ErrorKind::Parameter);
    CHECK(kind_of([&] { sawtooth_profile(g, 1.0, 7); }) == ErrorKind::Parameter);
}

TEST_CASE("whitney cover tiles the flat domain with verified disjoint squares") {
    const Grid g({0.0, 0.0}, 1.0, 256);
    const auto dom = make_graph_domain(g, flat_profile(g), 0.0);
    const WhitneyCover cov = whitney_cover(dom);

    CHECK(cov.squares().size() == 3240);
    CHECK(cov.finest_scale() == 8);
    const auto& psc = cov.per_scale_count();
    REQUIRE(psc.size() == 9);
    CHECK(psc[0] == 0);
    CHECK(psc[1] == 0);
    CHECK(psc[2] == 0);
    CHECK(psc[3] == 8);
    CHECK(psc[4] == 64);
    CHECK(psc[5] == 176);
    CHECK(psc[6] == 400);
    CHECK(psc[7] == 848);
    CHECK(psc[8] == 1744);

    // The selected tiles partition U up to a thin collar along its boundary.
    CHECK(cov.covered().cell_count() == 47376);
    CHECK(cov.collar().cell_count() == 1776);
    for (int j = 0; j < g.cells_per_side(); ++j)
        for (int i = 0; i < g.cells_per_side(); ++i) {
            const bool in_u = dom.outer.contains(i, j);
            CHECK(cov.covered().contains(i, j) + cov.collar().contains(i, j) == (in_u ? 1 : 0));
        }

    // Measured cover health: distance comparability, overlap, neighbor scales.
    CHECK(cov.cw_measured() == doctest::Approx(1.5 * std::sqrt(2.0)).epsilon(1e-9));
    CHECK(cov.cw_measured() <= 4.0);
    CHECK(cov.multiplicity() == 4);
    CHECK(cov.multiplicity() <= 12);
    CHECK(cov.comparability() == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(cov.comparability() <= 8.0);

    // Flat geometry pins the coarsest squares: a 4 x 2 block of quarter tiles.
    std::set<std::pair<int, int>> coarse;
    for (const auto& s : cov.squares())
        if (s.scale == 3) coarse.insert({s.ix, s.iy});
    REQUIRE(coarse.size() == 8);
    for (int ix = 2; ix <= 5; ++ix)
        for (int iy = 2; iy <= 3; ++iy) CHECK(coarse.count({ix, iy}) == 1);

    // Pairwise disjoint tiles (positive-area overlaps only).
    const auto& sq = cov.squares();
    for (std::size_t a = 0; a < sq.size(); ++a) {
        const RectF ra = cov.tile_rect(sq[a]);
        for (std::size_t b = a + 1; b < sq.size(); ++b)
            CHECK_FALSE(ra.overlaps(cov.tile_rect(sq[b])));
    }

    // Point lookup agrees with the masks.
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> pick(0, g.cells_per_side() - 1);
    int looked = 0;
    while (looked < 200) {
        const int i = pick(rng), j = pick(rng);
        const Vec2 c = g.cell_center(i, j);
        const int idx = cov.square_at(c);
        if (cov.covered().contains(i, j)) {
            REQUIRE(idx >= 0);
            CHECK(cov.tile_rect(sq[(std::size_t)idx]).contains(c));
            CHECK(cov.selected_index(sq[(std::size_t)idx].scale, sq[(std::size_t)idx].ix,
                                     sq[(std::size_t)idx].iy) == idx);
            ++looked;
        } else {
            CHECK(idx == -1);
        }
    }

    // Too coarse a grid and non-dyadic cell counts are rejected.
    const Grid tiny({0.0, 0.0}, 1.0, 32);
    CHECK(kind_of([&] { whitney_cover(make_graph_domain(tiny, flat_profile(tiny), 0.0)); }) ==
          ErrorKind::Resolution);
    const Grid odd({0.0, 0.0}, 1.5, 96);
    CHECK(kind_of([&] { whitney_cover(make_graph_domain(odd, flat_profile(odd), 0.0)); }) ==
          ErrorKind::Parameter);
}

TEST_CASE("john certificate measures the unit square and rejects off-center regions") {
    const Grid g({0.0, 0.0}, 1.0, 256);
    const auto dom = make_graph_domain(g, flat_profile(g), 0.0);
    const WhitneyCover cov = whitney_cover(dom);

    // On the square every straight segment to the center works; the constant
    // is the diagonal ratio sqrt(2).
    const JohnCertificate jc = john_verify(dom.inner, cov, 200);
    CHECK(jc.constant == doctest::Approx(std::sqrt(2.0)).epsilon(0.05));
    CHECK(jc.violations.empty());
    CHECK(jc.samples_checked == 1208);

    const RegionMask shifted = RegionMask::from_rect(g, {0.1, 0.1, 0.4, 0.4});
    CHECK(kind_of([&] { john_verify(shifted, cov, 50); }) == ErrorKind::Domain);

    const Grid other({0.0, 0.0}, 1.0, 128);
    const RegionMask wrong = RegionMask::from_rect(other, {-0.5, -0.5, 0.5, 0.5});
    CHECK(kind_of([&] { john_verify(wrong, cov, 50); }) == ErrorKind::Precondition);
}

TEST_CASE("crack density sorts squares into bad sets with quadratically growing shadows") {
    const Grid g({0.0, 0.0}, 1.0, 256);
    const auto dom = make_graph_domain(g, flat_profile(g), 0.0);
    const WhitneyCover cov = whitney_cover(dom);
    const double c_hat = 1.0 / 32.0;

    // A displaced inclusion near the graph marks exactly the squares whose
    // enlargement meets enough crack length.
    const DisplacementField f = shear_with_inclusion(g, 0.4, {0.3, -0.2}, 100, 155, 140, 165);
    const ShadowResult sh = boundary_bad_squares(f, dom, cov, c_hat);
    CHECK(sh.bad.size() == 11);
    CHECK(sh.jump_length == doctest::Approx(0.78125).epsilon(1e-12));
    CHECK(sh.shadows.cell_count() == 4576);
    CHECK(sh.working.cell_count() == 11728);
    CHECK(sh.perimeter_ratio == doctest::Approx(2.8).epsilon(0.01));
    CHECK_FALSE(sh.fallback);

    // Recompute membership independently from the crack geometry.
    const CrackSet crack(g, rect_boundary_crack(100, 155, 140, 165));
    std::vector<char> flagged(cov.squares().size(), 0);
    for (int idx : sh.bad) flagged[(std::size_t)idx] = 1;
    for (std::size_t i = 0; i < cov.squares().size(); ++i) {
        const auto& s = cov.squares()[i];
        const bool expect = crack.length_in(cov.qprime(s)) >= c_hat * cov.diameter(s);
        CHECK((bool)flagged[i] == expect);
    }

    // Without jumps nothing is bad and V is the covered part of U'.
    const ShadowResult clean = boundary_bad_squares(shear_field(g, 0.4), dom, cov, c_hat);
    CHECK(clean.bad.empty());
    CHECK(clean.working.cell_count() == 16128);
    CHECK(clean.jump_length == 0.0);
    CHECK(clean.perimeter_ratio == 0.0);
    CHECK_FALSE(clean.fallback);

    // Shadow area scales like the square of the jump length across similar
    // inclusions anchored at the graph.
    double lx[3], ly[3];
    double prev = 0.0;
    int k = 0;
    for (int w : {8, 16, 32}) {
        const int cx = 128, top = 192 - w / 2, bot = 192 - w;
        const DisplacementField fw =
            shear_with_inclusion(g, 0.4, {0.3, -0.2}, cx - w / 2, bot, cx + w / 2, top);
        const ShadowResult sw = boundary_bad_squares(fw, dom, cov, c_hat);
        CHECK_FALSE(sw.fallback);
        if (k > 0) CHECK(sw.shadows.area() / prev == doctest::Approx(4.0).epsilon(0.15));
        prev = sw.shadows.area();
        lx[k] = std::log(sw.jump_length);
        ly[k] = std::log(sw.shadows.area());
        ++k;
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < 3; ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    const double slope = (3 * sxy - sx * sy) / (3 * sxx - sx * sx);
    CHECK(slope > 1.8);
    CHECK(slope < 2.2);
}

TEST_CASE("shadow strips reaching the center segment force the fallback path") {
    const Grid g({0.0, 0.0}, 1.0, 256);
    const auto dom = make_graph_domain(g, flat_profile(g), 0.0);
    const WhitneyCover cov = whitney_cover(dom);

    // A crack right at the center of U' shadows the chain corridor.
    const DisplacementField central =
        shear_with_inclusion(g, 0.4, {0.3, -0.2}, 124, 124, 132, 132);
    CHECK(boundary_bad_squares(central, dom, cov, 1.0 / 32.0).fallback);

    // So does one near the lower lip whose strip spans the whole height.
    const DisplacementField low = shear_with_inclusion(g, 0.4, {0.3, -0.2}, 120, 10, 136, 14);
    CHECK(boundary_bad_squares(low, dom, cov, 1.0 / 32.0).fallback);

    // The estimate then degenerates to a single projection over U'.
    const BoundaryReport rep = boundary_estimate(central, dom, 1.5, 2.0);
    CHECK(rep.fallback);
    CHECK(rep.working.cell_count() == 0);
    CHECK(rep.removed.cell_count() == dom.inner.cell_count());
    CHECK(rep.rigid.omega == doctest::Approx(-0.2).epsilon(0.02));
    CHECK(rep.elastic > 0.0);
}

TEST_CASE("exact rigid data is returned bitwise with zero residuals") {
    const Grid g({0.0, 0.0}, 1.0, 256);
    const auto dom = make_graph_domain(g, flat_profile(g), 0.0);
    const CrackSet none(g, {});
    const RigidMotion m{0.25, {0.5, -0.25}};
    const DisplacementField f =
        build_field(g, none, [&m](Vec2 p, Vec2) -> Vec2 { return m.at(p); });

    const BoundaryReport rep = boundary_estimate(f, dom, 1.5, 2.0);
    CHECK(rep.rigid.omega == 0.25);
    CHECK(rep.rigid.b.x == 0.5);
    CHECK(rep.rigid.b.y == -0.25);
    CHECK(rep.elastic == 0.0);
    CHECK(rep.residual_u_q == 0.0);
    CHECK(rep.residual_grad_p == 0.0);
    CHECK(rep.const_u == 0.0);
    CHECK(rep.const_grad == 0.0);
    CHECK(rep.jump_length == 0.0);
    CHECK(rep.excluded_area == 0.0);
    CHECK(rep.exceptional.empty());
    CHECK(rep.good_count == 3240);
    CHECK(rep.bad_count == 0);
    CHECK_FALSE(rep.fallback);
    CHECK(rep.john.violations.empty());
    REQUIRE(rep.locals.size() == 3240);
    for (const auto& loc : rep.locals) {
        CHECK(loc.motion.omega == 0.25);
        CHECK(loc.res_u == 0.0);
        CHECK(loc.res_grad == 0.0);
    }
}

TEST_CASE("partition weights sum to one with vanishing gradient sums") {
    const Grid g({0.0, 0.0}, 1.0, 256);
    const auto dom = make_graph_domain(g, flat_profile(g), 0.0);
    const WhitneyCover cov = whitney_cover(dom);
    const WhitneyPartition part(cov, std::vector<char>(cov.squares().size(), 1));

    std::vector<std::pair<int, int>> covered_cells;
    for (int j = 0; j < g.cells_per_side(); ++j)
        for (int i = 0; i < g.cells_per_side(); ++i)
            if (cov.covered().contains(i, j)) covered_cells.push_back({i, j});
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> pick(0, covered_cells.size() - 1);

    const RigidMotion m{0.3, {0.1, -0.2}};
    for (int t = 0; t < 60; ++t) {
        const auto [i, j] = covered_cells[pick(rng)];
        const Vec2 p = g.cell_center(i, j);
        const auto sup = part.support_at(p);
        REQUIRE_FALSE(sup.empty());
        double sum = 0.0;
        Vec2 gsum{0.0, 0.0};
        Vec2 blend{0.0, 0.0};
        for (int idx : sup) {
            const double w = part.phi(idx, p);
            CHECK(w > 0.0);
            CHECK(w <= 1.0 + 1e-12);
            sum += w;
            const Vec2 gw = part.grad_phi(idx, p);
            gsum.x += gw.x;
            gsum.y += gw.y;
            const Vec2 v = m.at(p);
            blend.x += w * v.x;
            blend.y += w * v.y;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(gsum.x) < 1e-8);
        CHECK(std::abs(gsum.y) < 1e-8);
        // A partition of unity reproduces any single blended motion.
        const Vec2 v = m.at(p);
        CHECK(blend.x == doctest::Approx(v.x).epsilon(1e-12));
        CHECK(blend.y == doctest::Approx(v.y).epsilon(1e-12));
    }

    // Analytic weight gradients match central differences on ramp regions.
    const double d = 1e-6;
    for (int t = 0; t < 12; ++t) {
        const auto [i, j] = covered_cells[pick(rng)];
        const Vec2 p = g.cell_center(i, j);
        for (int idx : part.support_at(p)) {
            const Vec2 a = part.grad_phi(idx, p);
            const double fx =
                (part.phi(idx, {p.x + d, p.y}) - part.phi(idx, {p.x - d, p.y})) / (2 * d);
            const double fy =
                (part.phi(idx, {p.x, p.y + d}) - part.phi(idx, {p.x, p.y - d})) / (2 * d);
            CHECK(a.x == doctest::Approx(fx).epsilon(1e-5));
            CHECK(a.y == doctest::Approx(fy).epsilon(1e-5));
        }
    }
}

TEST_CASE("boundary and interior shear constants agree within a factor of three") {
    const Grid g({0.0, 0.0}, 1.0, 256);
    const auto dom = make_graph_domain(g, flat_profile(g), 0.0);
    const BoundaryReport rep = boundary_estimate(shear_field(g, 0.4), dom, 1.5, 2.0);
    CHECK(rep.const_u == doctest::Approx(0.3335).epsilon(0.02));
    CHECK(rep.const_grad == doctest::Approx(0.7275).epsilon(0.02));
    CHECK(rep.rigid.omega == doctest::Approx(-0.1965).epsilon(0.05));
    CHECK(rep.good_count == 3240);
    CHECK(rep.john.violations.empty());

    // The same shear measured by the interior machinery on the inner square.
    const Grid gi({0.0, 0.0}, 0.5, 128);
    const DisplacementField fi = shear_field(gi, 0.4);
    LocalKornConfig cfg;
    cfg.theta = 0.5;
    const LocalKornReport inner = local_estimate(fi, 1.5, 2.0, cfg);
    CHECK(inner.const_u == doctest::Approx(0.5773).epsilon(0.02));
    CHECK(inner.const_grad == doctest::Approx(1.2599).epsilon(0.02));

    const double ru = rep.const_u / inner.const_u;
    const double rg = rep.const_grad / inner.const_grad;
    CHECK(ru > 1.0 / 3.0);
    CHECK(ru < 3.0);
    CHECK(rg > 1.0 / 3.0);
    CHECK(rg < 3.0);
}

TEST_CASE("rough profiles keep cover bounds and certificate health") {
    const Grid g({0.0, 0.0}, 1.0, 256);

    const auto saw = make_graph_domain(g, sawtooth_profile(g, 1.0, 4), 1.0);
    const WhitneyCover cov_s = whitney_cover(saw);
    CHECK(cov_s.squares().size() == 3942);
    CHECK(cov_s.collar().cell_count() == 2286);
    CHECK(cov_s.cw_measured() == doctest::Approx(3.606).epsilon(0.01));
    CHECK(cov_s.cw_measured() < 5.0);
    CHECK(cov_s.multiplicity() <= 12);
    CHECK(cov_s.comparability() <= 8.0);
    const BoundaryReport rep_s = boundary_estimate(shear_field(g, 0.4), saw, 1.5, 2.0);
    CHECK(rep_s.const_u == doctest::Approx(0.3606).epsilon(0.01));
    CHECK(rep_s.const_grad == doctest::Approx(0.7617).epsilon(0.01));
    CHECK(rep_s.john.constant == doctest::Approx(2.682).epsilon(0.02));
    CHECK(rep_s.john.violations.empty());

    const auto walk = make_graph_domain(g, random_profile(g, 0.8, 42), 0.8);
    const WhitneyCover cov_r = whitney_cover(walk);
    CHECK(cov_r.squares().size() == 3445);
    CHECK(cov_r.cw_measured() == doctest::Approx(3.307).epsilon(0.01));
    CHECK(cov_r.cw_measured() < 5.0);
    CHECK(cov_r.multiplicity() <= 12);
    CHECK(cov_r.comparability() <= 8.0);
    const BoundaryReport rep_r = boundary_estimate(shear_field(g, 0.4), walk, 1.5, 2.0);
    CHECK(rep_r.const_u == doctest::Approx(0.3489).epsilon(0.01));
    CHECK(rep_r.const_grad == doctest::Approx(0.7476).epsilon(0.01));
    CHECK(rep_r.john.constant == doctest::Approx(3.999).epsilon(0.02));
    CHECK(rep_r.john.violations.empty());
}

TEST_CASE("inclusion near the graph yields finite constants and sound removal") {
    const Grid g({0.0, 0.0}, 1.0, 256);
    const auto dom = make_graph_domain(g, flat_profile(g), 0.0);

    // Dense crack: every carrying square goes bad, the strips remove the
    // inclusion, and the estimate survives with moderate constants.
    const DisplacementField f = shear_with_inclusion(g, 0.4, {0.3, -0.2}, 100, 155, 140, 165);
    const BoundaryReport rep = boundary_estimate(f, dom, 1.5, 2.0);
    CHECK(rep.const_u == doctest::Approx(0.2716).epsilon(0.01));
    CHECK(rep.const_grad == doctest::Approx(0.6005).epsilon(0.01));
    CHECK(rep.good_count == 3229);
    CHECK(rep.bad_count == 11);
    CHECK(rep.exceptional.empty());
    CHECK(rep.removed.cell_count() == 4576);
    CHECK(rep.excluded_area == 0.0);
    CHECK(rep.perimeter_ratio == doctest::Approx(2.8).epsilon(0.01));
    CHECK_FALSE(rep.fallback);
    CHECK(std::isfinite(rep.john.constant));
    CHECK(rep.john.constant == doctest::Approx(119.657).epsilon(0.05));
    CHECK(rep.john.violations.empty());
    CHECK(rep.local_const_u == doctest::Approx(0.3019).epsilon(0.02));
    CHECK(rep.local_const_grad == doctest::Approx(1.0198).epsilon(0.02));
    CHECK(rep.neighbor_constant == doctest::Approx(15.038).epsilon(0.05));
    CHECK(rep.ball_radius_ratio == doctest::Approx(0.0663).epsilon(0.05));
    CHECK(rep.ball_radius_ratio >= 1.0 / 64.0);
    CHECK(rep.ball_violations == 0);

    // Sparse crack, permissive threshold: no square goes bad, and the cut
    // cells around the jump come out through the exceptional set instead.
    const DisplacementField tiny = shear_with_inclusion(g, 0.4, {0.3, -0.2}, 130, 150, 131, 151);
    BoundaryConfig cfg;
    cfg.c_hat = 1.0;
    const BoundaryReport rt = boundary_estimate(tiny, dom, 1.5, 2.0, cfg);
    CHECK(rt.bad_count == 0);
    CHECK(rt.shadows.empty());
    CHECK(rt.jump_length == doctest::Approx(0.03125).epsilon(1e-12));
    CHECK(rt.exceptional.cell_count() == 720);
    CHECK(rt.removed.cell_count() == 720);
    CHECK(rt.const_u == doctest::Approx(0.3313).epsilon(0.01));
    CHECK(rt.const_grad == doctest::Approx(0.7061).epsilon(0.01));
    CHECK(rt.john.constant == doctest::Approx(1.460).epsilon(0.02));
    CHECK(rt.john.violations.empty());
    // Every jump-adjacent inner cell is excluded from the residual domain.
    for (int j = 149; j <= 152; ++j)
        for (int i = 129; i <= 132; ++i)
            CHECK((!rt.working.contains(i, j) || rt.removed.contains(i, j)));
}

}  // TEST_SUITE
