#include "kornforge/blending.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>

#include "kornforge/error.hpp"

namespace kornforge {

namespace {

struct Segment {
    int axis;      // 0 = runs along x, 1 = runs along y
    double fixed;  // transverse coordinate
    double lo;
    double hi;
};

// Boundary of a lattice rectangle as axis-parallel segments. Degenerate
// rectangles are one-dimensional already, so their single segment is counted
// once rather than as two coincident sides.
void append_boundary_segments(const RectF& r, std::vector<Segment>& out) {
    const bool flat_y = r.y1 == r.y0;
    const bool flat_x = r.x1 == r.x0;
    if (flat_x && flat_y) return;
    if (flat_y) {
        out.push_back({0, r.y0, r.x0, r.x1});
        return;
    }
    if (flat_x) {
        out.push_back({1, r.x0, r.y0, r.y1});
        return;
    }
    out.push_back({0, r.y0, r.x0, r.x1});
    out.push_back({0, r.y1, r.x0, r.x1});
    out.push_back({1, r.x0, r.y0, r.y1});
    out.push_back({1, r.x1, r.y0, r.y1});
}

// Inclusive index range of the cells whose center lies in the closed
// rectangle; i0 > i1 (or j0 > j1) when no column (row) qualifies.
std::array<int, 4> cells_with_center_in(const Grid& g, const RectF& r) {
    const int n = g.cells_per_side();
    int i0 = g.clamp_cell_x(r.x0);
    while (i0 < n && g.cell_center(i0, 0).x < r.x0) ++i0;
    int i1 = g.clamp_cell_x(r.x1);
    while (i1 >= 0 && g.cell_center(i1, 0).x > r.x1) --i1;
    int j0 = g.clamp_cell_y(r.y0);
    while (j0 < n && g.cell_center(0, j0).y < r.y0) ++j0;
    int j1 = g.clamp_cell_y(r.y1);
    while (j1 >= 0 && g.cell_center(0, j1).y > r.y1) --j1;
    return {i0, i1, j0, j1};
}

// Whether a unit crack edge has positive length inside the open box.
bool edge_meets_open_box(const Grid& g, const EdgeId& e, const RectF& box) {
    if (e.axis == 0) {
        const double y = g.corner_y(e.b);
        if (!(y > box.y0 && y < box.y1)) return false;
        return std::min(g.corner_x(e.a + 1), box.x1) > std::max(g.corner_x(e.a), box.x0);
    }
    const double x = g.corner_x(e.a);
    if (!(x > box.x0 && x < box.x1)) return false;
    return std::min(g.corner_y(e.b + 1), box.y1) > std::max(g.corner_y(e.b), box.y0);
}

// Midpoint-rule squared L2 distance between the field and a rigid motion over
// the cells whose center lies in the closed rectangle.
double square_residual(const DisplacementField& field, const RectF& box, const RigidMotion& motion) {
    const Grid& g = field.grid();
    const auto [i0, i1, j0, j1] = cells_with_center_in(g, box);
    const double w = g.spacing() * g.spacing();
    double acc = 0.0;
    for (int j = j0; j <= j1; ++j) {
        for (int i = i0; i <= i1; ++i) {
            const Vec2 c = g.cell_center(i, j);
            const Vec2 d = field.center_value(i, j) - motion.at(c);
            acc += w * d.norm_sq();
        }
    }
    return acc;
}

void fill_cell_block(RegionMask& mask, int i0, int i1, int j0, int j1) {
    const int n = mask.grid().cells_per_side();
    for (int j = std::max(0, j0); j <= std::min(n - 1, j1); ++j) {
        for (int i = std::max(0, i0); i <= std::min(n - 1, i1); ++i) {
            mask.set(i, j);
        }
    }
}

}  // namespace

SquareHierarchy::SquareHierarchy(const Grid& grid, double theta)
    : grid_(std::make_shared<Grid>(grid)), theta_(theta) {
    if (!(theta > 0.0 && theta < 1.0)) {
        fail(ErrorKind::Parameter, "square hierarchy: theta must lie in (0, 1)");
    }
    k_ = static_cast<int>(std::lround(-std::log2(theta)));
    if (k_ < 1 || k_ > 30 || std::ldexp(1.0, -k_) != theta) {
        fail(ErrorKind::Parameter, "square hierarchy: theta must be a power of 1/2");
    }
    max_index_ = 0;
    const int n = grid.cells_per_side();
    for (int i = 1;; ++i) {
        const long long shift = static_cast<long long>(k_) * i;
        if (shift >= 31) break;
        const int denom = 1 << shift;
        if (n % denom != 0) break;
        if (n / denom < 4) break;
        max_index_ = i;
    }
}

double SquareHierarchy::scale(int i) const {
    if (i < 0) fail(ErrorKind::Parameter, "square hierarchy: negative scale index");
    return std::ldexp(grid_->mu(), -k_ * i);
}

int SquareHierarchy::tile_cells(int i) const {
    if (i < 1 || i > max_index_) {
        fail(ErrorKind::Parameter, "square hierarchy: scale index " + std::to_string(i) +
                                       " outside 1.." + std::to_string(max_index_));
    }
    return grid_->cells_per_side() >> (k_ * i);
}

int SquareHierarchy::tiles_per_axis(int i) const { return grid_->cells_per_side() / tile_cells(i); }

RectF SquareHierarchy::tile(int i, int a, int b) const {
    const int tc = tile_cells(i);
    const int tpa = grid_->cells_per_side() / tc;
    if (a < 0 || a >= tpa || b < 0 || b >= tpa) {
        fail(ErrorKind::Parameter, "square hierarchy: tile index out of range");
    }
    return {grid_->corner_x(a * tc), grid_->corner_y(b * tc), grid_->corner_x((a + 1) * tc),
            grid_->corner_y((b + 1) * tc)};
}

ClassifyOutcome classify(const RectangleSet& rects, const SquareHierarchy& hierarchy,
                         double shrunk_mu, double target_mu) {
    const Grid& g = hierarchy.grid();
    if (!(rects.grid() == g)) {
        fail(ErrorKind::Precondition, "classify: rectangle set and hierarchy use different grids");
    }
    ClassifyOutcome out;
    out.gate_lhs = rects.total_diameter();
    out.gate_rhs = hierarchy.theta() / 24.0 * (shrunk_mu - target_mu);
    out.feasible = out.gate_lhs <= out.gate_rhs;
    if (!out.feasible) return out;

    const int max_i = hierarchy.max_scale_index();
    const double theta = hierarchy.theta();
    const int k = hierarchy.theta_log2();
    const RectF frame = centered_square(g.center(), shrunk_mu);
    const RectF target = centered_square(g.center(), target_mu);
    const double origin_x = g.corner_x(0);
    const double origin_y = g.corner_y(0);

    std::vector<Segment> segments;
    for (std::size_t l = 0; l < rects.size(); ++l) {
        append_boundary_segments(rects.geometry(l), segments);
    }

    BadSquareLedger ledger{hierarchy, shrunk_mu, target_mu, {}, 0, RegionMask(g)};
    ledger.scales.reserve(max_i + 1);
    for (int i = 0; i <= max_i; ++i) {
        ledger.scales.push_back({{}, {}, RegionMask(g), RegionMask(g), RegionMask(g)});
    }
    std::vector<std::vector<std::uint8_t>> dense_flags(max_i + 1);

    for (int i = 1; i <= max_i; ++i) {
        const int tc = hierarchy.tile_cells(i);
        const int tpa = g.cells_per_side() / tc;
        const double s = hierarchy.scale(i);
        const double side = 2.0 * s;
        const double reach = 0.25 * s;  // overhang of (5/4)Q beyond the tile
        const double threshold = theta * s / 8.0;
        dense_flags[i].assign(static_cast<std::size_t>(tpa) * tpa, 0);

        std::vector<double> collected(static_cast<std::size_t>(tpa) * tpa, 0.0);
        for (const Segment& seg : segments) {
            const double bx0 = seg.axis == 0 ? seg.lo : seg.fixed;
            const double bx1 = seg.axis == 0 ? seg.hi : seg.fixed;
            const double by0 = seg.axis == 0 ? seg.fixed : seg.lo;
            const double by1 = seg.axis == 0 ? seg.fixed : seg.hi;
            const int a_lo = std::max(0, static_cast<int>(std::floor((bx0 - origin_x - reach) / side)) - 1);
            const int a_hi = std::min(tpa - 1, static_cast<int>(std::floor((bx1 - origin_x + reach) / side)) + 1);
            const int b_lo = std::max(0, static_cast<int>(std::floor((by0 - origin_y - reach) / side)) - 1);
            const int b_hi = std::min(tpa - 1, static_cast<int>(std::floor((by1 - origin_y + reach) / side)) + 1);
            for (int b = b_lo; b <= b_hi; ++b) {
                for (int a = a_lo; a <= a_hi; ++a) {
                    const RectF q2 = SquareHierarchy::enlarged54(hierarchy.tile(i, a, b));
                    collected[static_cast<std::size_t>(b) * tpa + a] +=
                        clipped_segment_length(seg.axis, seg.fixed, seg.lo, seg.hi, q2);
                }
            }
        }

        ScaleEntry& entry = ledger.scales[i];
        for (int b = 0; b < tpa; ++b) {
            for (int a = 0; a < tpa; ++a) {
                const RectF q = hierarchy.tile(i, a, b);
                const RectF q2 = SquareHierarchy::enlarged54(q);
                if (!frame.contains(q2)) continue;
                if (collected[static_cast<std::size_t>(b) * tpa + a] < threshold) continue;
                dense_flags[i][static_cast<std::size_t>(b) * tpa + a] = 1;
                entry.dense.push_back({i, a, b});
                fill_cell_block(entry.region_dense, a * tc, (a + 1) * tc - 1, b * tc, (b + 1) * tc - 1);

                if (!q.overlaps(target)) continue;
                bool ancestored = false;
                for (int j = 1; j < i && !ancestored; ++j) {
                    const int shift = k * (i - j);
                    const int tpa_j = tpa >> shift;
                    const int aj = a >> shift;
                    const int bj = b >> shift;
                    ancestored = dense_flags[j][static_cast<std::size_t>(bj) * tpa_j + aj] != 0;
                }
                if (ancestored) continue;
                entry.active.push_back({i, a, b});
                fill_cell_block(entry.region_active, a * tc, (a + 1) * tc - 1, b * tc, (b + 1) * tc - 1);
                const int ext = tc / 4;  // (3/2)Q adds a quarter tile on each side
                fill_cell_block(entry.region_enlarged, a * tc - ext, (a + 1) * tc - 1 + ext,
                                b * tc - ext, (b + 1) * tc - 1 + ext);
            }
        }
        if (!entry.active.empty()) ledger.terminal = i;
        ledger.exceptional = ledger.exceptional.set_union(entry.region_enlarged);
    }

    out.ledger = std::move(ledger);
    return out;
}

StructureReport structure_check(const BadSquareLedger& ledger, const RectangleSet& rects,
                                const DisplacementField& field) {
    const Grid& g = ledger.hierarchy.grid();
    if (!(rects.grid() == g) || !(field.grid() == g)) {
        fail(ErrorKind::Precondition, "structure check: inputs use different grids");
    }
    StructureReport rep;

    double min_diameter = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < rects.size(); ++l) {
        min_diameter = std::min(min_diameter, rects.diameter(l));
    }

    RegionMask active_union(g);
    for (std::size_t i = 1; i < ledger.scales.size(); ++i) {
        const ScaleEntry& entry = ledger.scales[i];
        const double s = ledger.hierarchy.scale(static_cast<int>(i));
        for (const SquareRef& ref : entry.active) {
            const RectF q2 = SquareHierarchy::enlarged54(ledger.hierarchy.tile(ref.scale, ref.a, ref.b));
            double nearby = 0.0;
            for (std::size_t l = 0; l < rects.size(); ++l) {
                if (rects.geometry(l).touches(q2)) nearby += rects.diameter(l);
            }
            rep.max_diameter_ratio = std::max(rep.max_diameter_ratio, nearby / s);
            if (nearby > s * (1.0 + 1e-12)) rep.diameters_ok = false;
        }
        if (!entry.active.empty() && rects.size() > 0 &&
            s <= ledger.hierarchy.theta() * min_diameter) {
            rep.tail_empty_ok = false;
        }
        active_union = active_union.set_union(entry.region_active);
    }

    const RectF target = centered_square(g.center(), ledger.target_mu);
    for (const EdgeId& e : field.crack().edges()) {
        if (!field.is_jump_edge(e, 1e-12)) continue;
        if (!edge_meets_open_box(g, e, target)) continue;
        bool covered = false;
        if (e.axis == 0) {
            covered = active_union.contains(e.a, e.b - 1) || active_union.contains(e.a, e.b);
        } else {
            covered = active_union.contains(e.a - 1, e.b) || active_union.contains(e.a, e.b);
        }
        if (!covered) ++rep.uncovered_jump_edges;
    }
    rep.crack_covered_ok = rep.uncovered_jump_edges == 0;

    const double sum_d = rects.total_diameter();
    if (sum_d > 0.0) {
        rep.perimeter_constant =
            ledger.exceptional.perimeter(PerimeterConvention::OpenDomain) * ledger.hierarchy.theta() / sum_d;
        for (std::size_t i = 1; i < ledger.scales.size(); ++i) {
            const double s = ledger.hierarchy.scale(static_cast<int>(i));
            rep.area_constant = std::max(
                rep.area_constant, ledger.scales[i].region_enlarged.area() * ledger.hierarchy.theta() / (s * sum_d));
        }
    }
    return rep;
}

SquareMotions fit_square_motions(const DisplacementField& field, const BadSquareLedger& ledger) {
    const Grid& g = ledger.hierarchy.grid();
    if (!(field.grid() == g)) {
        fail(ErrorKind::Precondition, "fit square motions: field and ledger use different grids");
    }
    SquareMotions out;
    out.motions.resize(ledger.scales.size());
    out.residual_sum.assign(ledger.scales.size(), 0.0);
    out.normalized_residual.assign(ledger.scales.size(), 0.0);
    for (std::size_t i = 1; i < ledger.scales.size(); ++i) {
        const double s = ledger.hierarchy.scale(static_cast<int>(i));
        for (const SquareRef& ref : ledger.scales[i].active) {
            const RectF q2 = SquareHierarchy::enlarged54(ledger.hierarchy.tile(ref.scale, ref.a, ref.b));
            const RigidMotion a = project_rigid(field, RegionMask::from_rect(g, q2));
            out.motions[i].push_back(a);
            out.residual_sum[i] += square_residual(field, q2, a);
        }
        out.normalized_residual[i] = out.residual_sum[i] / (s * s);
    }
    return out;
}

PartitionOfUnity::PartitionOfUnity(std::vector<RectF> squares, double scale)
    : squares_(std::move(squares)), scale_(scale), ramp_(scale / 5.0) {
    if (!(scale > 0.0)) fail(ErrorKind::Parameter, "partition of unity: scale must be positive");
    for (const RectF& q : squares_) {
        if (std::abs(q.width() - 2.0 * scale) > 1e-9 * scale ||
            std::abs(q.height() - 2.0 * scale) > 1e-9 * scale) {
            fail(ErrorKind::Parameter, "partition of unity: squares must have side 2 * scale");
        }
    }
}

PartitionOfUnity build_pou(const std::vector<RectF>& squares, double scale) {
    return PartitionOfUnity(squares, scale);
}

void PartitionOfUnity::weights_at(Vec2 p, std::vector<double>& out) const {
    out.assign(squares_.size() + 1, 0.0);
    double total = 0.0;
    for (std::size_t q = 0; q < squares_.size(); ++q) {
        const Vec2 c = squares_[q].center();
        double psi = 1.0;
        for (int axis = 0; axis < 2 && psi != 0.0; ++axis) {
            const double t = axis == 0 ? p.x : p.y;
            const double cc = axis == 0 ? c.x : c.y;
            const double d = 1.25 * scale_ - std::abs(t - cc);
            if (d <= 0.0) {
                psi = 0.0;
            } else if (d < ramp_) {
                psi *= smoothstep(d / ramp_);
            }
        }
        out[1 + q] = psi;
        total += psi;
    }
    // The normalizer psi_0 + sum psi equals max(1, sum psi) exactly, and using
    // that form keeps the weights bit-reproducible: below saturation the
    // divisor is exactly 1.
    const double norm = std::max(1.0, total);
    out[0] = std::max(0.0, 1.0 - total);
    if (norm != 1.0) {
        for (double& w : out) w /= norm;
    }
}

int PartitionOfUnity::measured_multiplicity(const Grid& grid) const {
    std::unordered_map<std::int64_t, int> counts;
    const int n = grid.cells_per_side();
    for (const RectF& q : squares_) {
        const RectF q2 = q.scaled_about_center(1.25);
        const int i_lo = std::max(0, grid.clamp_cell_x(q2.x0) - 1);
        const int i_hi = std::min(n, grid.clamp_cell_x(q2.x1) + 2);
        const int j_lo = std::max(0, grid.clamp_cell_y(q2.y0) - 1);
        const int j_hi = std::min(n, grid.clamp_cell_y(q2.y1) + 2);
        for (int j = j_lo; j <= j_hi; ++j) {
            const double y = grid.corner_y(j);
            if (!(y > q2.y0 && y < q2.y1)) continue;
            for (int i = i_lo; i <= i_hi; ++i) {
                const double x = grid.corner_x(i);
                if (!(x > q2.x0 && x < q2.x1)) continue;
                ++counts[static_cast<std::int64_t>(j) * (n + 1) + i];
            }
        }
    }
    int most = 0;
    for (const auto& [key, c] : counts) most = std::max(most, c);
    return most;
}

DisplacementField heal_step(const DisplacementField& field, const PartitionOfUnity& pou,
                            const std::vector<RigidMotion>& motions) {
    if (motions.size() != pou.count()) {
        fail(ErrorKind::Precondition, "heal step: one motion per square required");
    }
    DisplacementField result = field;
    if (pou.count() == 0) return result;
    const Grid& g = field.grid();

    RegionMask candidates(g);
    for (const RectF& q : pou.squares()) {
        const RectF q2 = q.scaled_about_center(1.25);
        fill_cell_block(candidates, g.clamp_cell_x(q2.x0), g.clamp_cell_x(q2.x1),
                        g.clamp_cell_y(q2.y0), g.clamp_cell_y(q2.y1));
    }

    std::vector<double> w;
    candidates.for_each_cell([&](int i, int j) {
        for (int c = 0; c < 4; ++c) {
            const Vec2 p = g.corner_point(i + (c & 1), j + (c >> 1));
            pou.weights_at(p, w);
            bool in_support = false;
            for (std::size_t q = 0; q < pou.count(); ++q) {
                if (w[1 + q] != 0.0) {
                    in_support = true;
                    break;
                }
            }
            // Corners outside every bump keep their stored value untouched, so
            // the field is preserved bit for bit there.
            if (!in_support) continue;
            Vec2 nv = field.corner_value(i, j, c) * w[0];
            for (std::size_t q = 0; q < pou.count(); ++q) {
                if (w[1 + q] == 0.0) continue;
                nv += motions[q].at(p) * w[1 + q];
            }
            result.set_corner_value(i, j, c, nv);
        }
    });
    return result;
}

HealResult heal(const DisplacementField& field, const RectangleSet& rects,
                const SquareHierarchy& hierarchy, double shrunk_mu, double target_mu, double p) {
    if (!(p > 1.0 && p < 2.0)) {
        fail(ErrorKind::Parameter, "heal: exponent p must lie in (1, 2)");
    }
    const Grid& g = hierarchy.grid();
    if (!(field.grid() == g)) {
        fail(ErrorKind::Precondition, "heal: field and hierarchy use different grids");
    }

    ClassifyOutcome cls = classify(rects, hierarchy, shrunk_mu, target_mu);
    HealResult result;
    result.feasible = cls.feasible;
    result.gate_lhs = cls.gate_lhs;
    result.gate_rhs = cls.gate_rhs;
    if (!cls.feasible) return result;

    BadSquareLedger ledger = std::move(*cls.ledger);
    const int terminal = ledger.terminal;
    const double theta = hierarchy.theta();
    const double eta = std::pow(theta, 0.5 - p / 4.0);
    const double product_bound = std::exp(1.0 / (1.0 - eta));

    const RegionMask everything(g, true);
    const double budget = lp_norm(strain(field), everything, 2.0);
    const RectF target = centered_square(g.center(), target_mu);
    const RegionMask target_mask = RegionMask::from_rect(g, target);
    const SquareMotions motions = fit_square_motions(field, ledger);

    HealOutcome outcome{field, ledger.exceptional, ledger, {}, p, eta, product_bound,
                        true, budget, true, true};
    DisplacementField iterate = field;

    for (int j = 0; j < terminal; ++j) {
        const int i = terminal - j;
        const ScaleEntry& entry = outcome.ledger.scales[i];
        const double s = hierarchy.scale(i);

        if (!entry.active.empty()) {
            std::vector<RectF> boxes;
            boxes.reserve(entry.active.size());
            for (const SquareRef& ref : entry.active) {
                boxes.push_back(hierarchy.tile(ref.scale, ref.a, ref.b));
            }
            iterate = heal_step(iterate, PartitionOfUnity(boxes, s), motions.motions[i]);
        }

        HealStepRecord rec;
        rec.step = j;
        rec.scale = i;
        rec.squares = static_cast<int>(entry.active.size());
        rec.residual_sums.assign(terminal + 1, 0.0);
        rec.product_factors.assign(terminal + 1, 0.0);
        rec.measured_constants.assign(terminal + 1, -1.0);
        const int m = j + 1;  // iterate index after this step
        for (int sc = 1; sc <= terminal; ++sc) {
            double rs = 0.0;
            const ScaleEntry& se = outcome.ledger.scales[sc];
            for (std::size_t q = 0; q < se.active.size(); ++q) {
                const RectF q2 = SquareHierarchy::enlarged54(
                    hierarchy.tile(se.active[q].scale, se.active[q].a, se.active[q].b));
                rs += square_residual(iterate, q2, motions.motions[sc][q]);
            }
            rec.residual_sums[sc] = rs;
            if (sc <= terminal - m) {
                double factor = 1.0;
                for (int kk = 0; kk <= m; ++kk) factor *= 1.0 + std::pow(eta, terminal - sc - kk);
                rec.product_factors[sc] = factor;
                if (factor > product_bound * (1.0 + 1e-12)) outcome.products_ok = false;
                if (budget > 0.0) {
                    const double ssc = hierarchy.scale(sc);
                    rec.measured_constants[sc] = rs / (ssc * ssc * factor * budget * budget);
                }
            }
        }

        rec.strain_p_norm = lp_norm(strain(iterate), target_mask, p);
        double factor = 1.0;
        for (int kk = 0; kk <= m; ++kk) factor *= 1.0 + std::pow(eta, terminal - kk);
        rec.strain_product_factor = factor;
        if (factor > product_bound * (1.0 + 1e-12)) outcome.products_ok = false;
        if (budget > 0.0) {
            rec.strain_constant = std::pow(rec.strain_p_norm, p) /
                                  (std::pow(g.mu(), 2.0 - p) * factor * std::pow(budget, p));
        }

        for (const EdgeId& e : iterate.crack().edges()) {
            if (!iterate.is_jump_edge(e, 0.0)) continue;
            const RectF er = iterate.crack().edge_rect(e);
            for (const SquareRef& ref : entry.active) {
                if (hierarchy.tile(ref.scale, ref.a, ref.b).touches(er)) {
                    ++rec.jumps_left_in_band;
                    break;
                }
            }
        }
        outcome.steps.push_back(std::move(rec));
    }

    int surviving = 0;
    for (const EdgeId& e : iterate.crack().edges()) {
        if (edge_meets_open_box(g, e, target) && iterate.is_jump_edge(e, 0.0)) ++surviving;
    }
    if (surviving > 0) {
        fail(ErrorKind::Construction, "heal: " + std::to_string(surviving) +
                                          " jump edges survived inside the target square");
    }

    bool identity_ok = true;
    target_mask.for_each_cell([&](int i, int j) {
        if (!identity_ok || outcome.exceptional.contains(i, j)) return;
        for (int c = 0; c < 4; ++c) {
            const Vec2 a = iterate.corner_value(i, j, c);
            const Vec2 b = field.corner_value(i, j, c);
            if (a.x != b.x || a.y != b.y) {
                identity_ok = false;
                return;
            }
        }
    });
    if (!identity_ok) {
        fail(ErrorKind::Construction,
             "heal: field changed on a target cell outside the exceptional set");
    }

    outcome.healed = std::move(iterate);
    result.outcome = std::move(outcome);
    return result;
}

}  // namespace kornforge
