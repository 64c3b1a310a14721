#include "kornforge/local.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "kornforge/error.hpp"

namespace kornforge {

namespace {

// The two cells meeting an interior lattice edge, in grid order.
std::pair<std::pair<int, int>, std::pair<int, int>> edge_cells(const EdgeId& e) {
    if (e.axis == 0) return {{e.a, e.b - 1}, {e.a, e.b}};
    return {{e.a - 1, e.b}, {e.a, e.b}};
}

}  // namespace

double chaining_exponent(double p, double q) {
    const double chained = 2.0 * q / (q + 2.0);
    return std::clamp(std::max(p, chained), 17.0 / 16.0, 63.0 / 32.0);
}

LocalKornReport local_estimate(const DisplacementField& field, double p, double q,
                               const LocalKornConfig& config) {
    if (!(p >= 1.0 && p < 2.0)) {
        fail(ErrorKind::Parameter, "local_estimate: p must lie in [1, 2)");
    }
    if (!(q >= 1.0)) {
        fail(ErrorKind::Parameter, "local_estimate: q must be at least 1");
    }
    if (config.c_shrink < 0.0) {
        fail(ErrorKind::Parameter, "local_estimate: c_shrink must be nonnegative");
    }
    const Grid& g = field.grid();
    const SquareHierarchy hier(g, config.theta);
    const double mu = g.mu();
    const double h = g.spacing();

    std::vector<EdgeId> jump_edges;
    for (const EdgeId& e : field.crack().edges()) {
        if (field.is_jump_edge(e, 0.0)) jump_edges.push_back(e);
    }
    const double jump_length = h * static_cast<double>(jump_edges.size());

    const StrainField strains = strain(field);
    const double elastic = lp_norm(strains, RegionMask(g, true), 2.0);

    const double c_shrink = config.c_shrink > 0.0 ? config.c_shrink : 4.0 + 24.0 / config.theta;
    const double mu_bar = std::max(mu - c_shrink * jump_length, 0.0);

    LocalKornReport rep{{},    RegionMask(g), mu_bar, mu, c_shrink, chaining_exponent(p, q),
                        0.0,   0.0,           elastic, jump_length, 0.0, 0.0, 0.0, 0.0,
                        false, false};

    const RegionMask target_mask = RegionMask::from_rect(g, centered_square(g.center(), mu_bar));
    if (mu_bar == 0.0 || target_mask.empty()) {
        rep.fallback = true;
        rep.exceptional = RegionMask(g, true);
        rep.rigid = project_rigid(field, RegionMask(g, true));
        return rep;
    }

    // The jump set is where the trace difference is nonzero; edges of the
    // crack with equal traces are continuity lines and stay out of the cover.
    DisplacementField working = field;
    working.reset_crack(CrackSet::from_edges(g, jump_edges));

    RectangleSet rects = RectangleSet::empty_on(g);
    if (!jump_edges.empty()) {
        const double energy_sq = elastic * elastic;
        const double eps = energy_sq > 0.0 ? default_epsilon(energy_sq, jump_length) : 1.0;
        rects = cover_cracks(working.crack(), energy_sq, eps, config.lambda).rects;
    }
    const ModificationResult mod = apply_modification(working, rects, config.fit_margin);
    rep.modified_mu = mod.shrunk_mu;

    const HealResult healed =
        heal(mod.modified, mod.rects, hier, mod.shrunk_mu, mu_bar, rep.p_internal);
    if (!healed.feasible) {
        rep.infeasible = true;
        rep.fallback = true;
        rep.exceptional = RegionMask(g, true);
        rep.rigid = project_rigid(field, RegionMask(g, true));
        return rep;
    }
    const HealOutcome& out = *healed.outcome;
    rep.exceptional = out.exceptional;

    const RegionMask domain = target_mask.set_difference(rep.exceptional);
    rep.rigid = project_rigid(out.healed, domain.empty() ? target_mask : domain);
    const RigidMotion a = rep.rigid;

    rep.residual_u_q = lp_norm_cells(g, domain, q, [&](int i, int j) {
        return (field.center_value(i, j) - a.at(g.cell_center(i, j))).norm();
    });

    const CrackSet& jumps = working.crack();
    auto cut = [&](int i, int j) {
        return jumps.has_edge({0, i, j}) || jumps.has_edge({0, i, j + 1}) ||
               jumps.has_edge({1, i, j}) || jumps.has_edge({1, i + 1, j});
    };
    RegionMask grad_domain(g);
    int excluded = 0;
    domain.for_each_cell([&](int i, int j) {
        if (cut(i, j)) {
            ++excluded;
        } else {
            grad_domain.set(i, j);
        }
    });
    rep.excluded_area = static_cast<double>(excluded) * h * h;

    const Mat2 skew = a.matrix();
    rep.residual_grad_p = lp_norm_cells(g, grad_domain, p, [&](int i, int j) {
        return (field.cell_gradient(i, j) - skew).frobenius();
    });

    const double denom_u = std::pow(mu, 2.0 / q) * elastic;
    rep.const_u = denom_u > 0.0 ? rep.residual_u_q / denom_u : 0.0;
    const double denom_grad = std::pow(mu, 2.0 / p - 1.0) * elastic;
    rep.const_grad = denom_grad > 0.0 ? rep.residual_grad_p / denom_grad : 0.0;

    double proxy = 0.0;
    grad_domain.for_each_cell(
        [&](int i, int j) { proxy += field.cell_gradient(i, j).frobenius() * h * h; });
    for (const EdgeId& e : jump_edges) {
        const auto [left, right] = edge_cells(e);
        int members = 0;
        if (g.valid_cell(left.first, left.second) && domain.contains(left.first, left.second)) {
            ++members;
        }
        if (g.valid_cell(right.first, right.second) && domain.contains(right.first, right.second)) {
            ++members;
        }
        if (members > 0) {
            proxy += 0.5 * members * field.edge_jump_midpoint(e).norm() * h;
        }
    }
    domain.for_each_cell([&](int i, int j) {
        const int nbr[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
        for (const auto& nb : nbr) {
            if (g.valid_cell(nb[0], nb[1]) && rep.exceptional.contains(nb[0], nb[1])) {
                proxy += field.center_value(i, j).norm() * h;
            }
        }
    });
    rep.variation_proxy = proxy;
    return rep;
}

}  // namespace kornforge
