#include "kornforge/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>

#include "kornforge/error.hpp"

namespace kornforge {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double point_seg_dist(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = ab.norm_sq();
    double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (a + ab * t)).norm();
}

double cross2(const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const double d1 = cross2(c, d, a);
    const double d2 = cross2(c, d, b);
    const double d3 = cross2(a, b, c);
    const double d4 = cross2(a, b, d);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
        return true;
    auto on = [](const Vec2& p, const Vec2& q, const Vec2& r) {
        return std::min(p.x, r.x) <= q.x && q.x <= std::max(p.x, r.x) &&
               std::min(p.y, r.y) <= q.y && q.y <= std::max(p.y, r.y);
    };
    if (d1 == 0 && on(c, a, d)) return true;
    if (d2 == 0 && on(c, b, d)) return true;
    if (d3 == 0 && on(a, c, b)) return true;
    if (d4 == 0 && on(a, d, b)) return true;
    return false;
}

double seg_seg_dist(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    if (segments_intersect(a, b, c, d)) return 0.0;
    return std::min(std::min(point_seg_dist(a, c, d), point_seg_dist(b, c, d)),
                    std::min(point_seg_dist(c, a, b), point_seg_dist(d, a, b)));
}

double seg_rect_dist(const Vec2& a, const Vec2& b, const RectF& r) {
    if (r.contains(a) || r.contains(b)) return 0.0;
    const Vec2 p00{r.x0, r.y0}, p10{r.x1, r.y0}, p01{r.x0, r.y1}, p11{r.x1, r.y1};
    double best = seg_seg_dist(a, b, p00, p10);
    best = std::min(best, seg_seg_dist(a, b, p10, p11));
    best = std::min(best, seg_seg_dist(a, b, p11, p01));
    best = std::min(best, seg_seg_dist(a, b, p01, p00));
    return best;
}

// Cells whose centers lie in the closed rectangle, clamped to the grid.
// Rectangle edges land on quarter-spacing lattice lines, so the arithmetic is
// exact; the tiny slack only matters for non-dyadic geometry.
CellRange cells_in_rect(const Grid& g, const RectF& rect) {
    const double h = g.spacing();
    const double ox = g.corner_x(0);
    const double oy = g.corner_y(0);
    const double eps = 1e-9;
    CellRange r;
    r.x0 = std::max(0, static_cast<int>(std::ceil((rect.x0 - ox) / h - 0.5 - eps)));
    r.y0 = std::max(0, static_cast<int>(std::ceil((rect.y0 - oy) / h - 0.5 - eps)));
    r.x1 = std::min(g.cells_per_side(),
                    static_cast<int>(std::floor((rect.x1 - ox) / h - 0.5 + eps)) + 1);
    r.y1 = std::min(g.cells_per_side(),
                    static_cast<int>(std::floor((rect.y1 - oy) / h - 0.5 + eps)) + 1);
    return r;
}

// Jump edges of the field whose midpoint lies in the graph domain.
std::vector<EdgeId> jump_edges_in(const DisplacementField& field, const LipschitzGraphDomain& dom) {
    std::vector<EdgeId> out;
    for (const EdgeId& e : field.crack().edges()) {
        if (!field.is_jump_edge(e)) continue;
        if (dom.in_outer(field.crack().edge_midpoint(e))) out.push_back(e);
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph domains

double LipschitzGraphDomain::psi_at(double x) const {
    const int n = grid.cells_per_side();
    const double h = grid.spacing();
    int k = static_cast<int>(std::floor((x - grid.corner_x(0)) / h));
    k = std::clamp(k, 0, n - 1);
    const double t = (x - grid.corner_x(k)) / h;
    return psi[static_cast<std::size_t>(k)] +
           t * (psi[static_cast<std::size_t>(k) + 1] - psi[static_cast<std::size_t>(k)]);
}

bool LipschitzGraphDomain::in_outer(Vec2 p) const {
    const double half = grid.mu();
    return std::abs(p.x) <= half && p.y >= -half && p.y <= psi_at(p.x);
}

LipschitzGraphDomain make_graph_domain(const Grid& grid, std::vector<double> psi, double cbar) {
    if (grid.center().x != 0.0 || grid.center().y != 0.0)
        fail(ErrorKind::Parameter, "graph domain grid must be centered at the origin");
    const int n = grid.cells_per_side();
    if (static_cast<int>(psi.size()) != n + 1)
        fail(ErrorKind::Parameter, "profile needs one sample per grid corner");
    if (cbar < 0.0) fail(ErrorKind::Parameter, "profile slope bound must be nonnegative");
    const double mu = 0.5 * grid.mu();
    for (int k = 0; k <= n; ++k) {
        const double v = psi[static_cast<std::size_t>(k)];
        if (v > grid.mu()) fail(ErrorKind::Parameter, "profile exceeds the grid top");
        if (v < 0.0) fail(ErrorKind::Parameter, "profile drops below the window floor");
        if (std::abs(grid.corner_x(k)) <= mu && v < mu)
            fail(ErrorKind::Parameter, "profile dips below the inner height over the core");
    }
    const double h = grid.spacing();
    const double slope_tol = cbar * h * (1.0 + 1e-9) + 1e-15;
    for (int k = 0; k < n; ++k) {
        if (std::abs(psi[static_cast<std::size_t>(k) + 1] - psi[static_cast<std::size_t>(k)]) >
            slope_tol)
            fail(ErrorKind::Parameter, "profile slope exceeds the stated bound");
    }
    LipschitzGraphDomain dom{grid, mu, cbar, std::move(psi), RegionMask(grid), RegionMask(grid)};
    dom.outer = RegionMask::from_predicate(
        grid, [&dom](Vec2 c) { return c.y <= dom.psi_at(c.x); });
    dom.inner = RegionMask::from_predicate(grid, [&dom, mu](Vec2 c) {
        return std::abs(c.x) < mu && c.y >= -mu && c.y <= dom.psi_at(c.x);
    });
    return dom;
}

std::vector<double> flat_profile(const Grid& grid) {
    return std::vector<double>(static_cast<std::size_t>(grid.cells_per_side()) + 1,
                               0.5 * grid.mu());
}

std::vector<double> sawtooth_profile(const Grid& grid, double cbar, int teeth) {
    const int n = grid.cells_per_side();
    if (teeth <= 0 || n % teeth != 0)
        fail(ErrorKind::Parameter, "tooth count must divide the cell count");
    if (cbar <= 0.0) fail(ErrorKind::Parameter, "sawtooth slope must be positive");
    const int m = n / teeth;
    const double h = grid.spacing();
    std::vector<double> psi(static_cast<std::size_t>(n) + 1);
    for (int k = 0; k <= n; ++k) {
        const int r = k % m;
        const double tri = std::min(r, m - r) * h;
        psi[static_cast<std::size_t>(k)] = std::min(0.5 * grid.mu() + cbar * tri, grid.mu());
    }
    return psi;
}

std::vector<double> random_profile(const Grid& grid, double cbar, std::uint64_t seed) {
    const int n = grid.cells_per_side();
    const double h = grid.spacing();
    const double lo = 0.5 * grid.mu();
    const double hi = grid.mu();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> step(-0.9 * cbar * h, 0.9 * cbar * h);
    std::vector<double> psi(static_cast<std::size_t>(n) + 1);
    double v = 0.5 * (lo + hi);
    psi[0] = v;
    for (int k = 1; k <= n; ++k) {
        v += step(rng);
        if (v < lo) v = lo + (lo - v);
        if (v > hi) v = hi - (v - hi);
        psi[static_cast<std::size_t>(k)] = v;
    }
    std::size_t argmin = 0;
    for (std::size_t k = 1; k < psi.size(); ++k)
        if (psi[k] < psi[argmin]) argmin = k;
    const double shift = psi[argmin] - lo;
    for (double& x : psi) x = std::max(x - shift, lo);
    psi[argmin] = lo;
    return psi;
}

// ---------------------------------------------------------------------------
// Whitney cover

WhitneyCover::WhitneyCover(const Grid& grid, double mu)
    : grid_(grid), mu_(mu), covered_(grid), collar_(grid) {}

double WhitneyCover::diameter(const WhitneySquare& s) const {
    return side(s) * std::sqrt(2.0);
}

RectF WhitneyCover::tile_rect(const WhitneySquare& s) const {
    const int w = tile_cells(s.scale);
    return {grid_.corner_x(s.ix * w), grid_.corner_y(s.iy * w), grid_.corner_x((s.ix + 1) * w),
            grid_.corner_y((s.iy + 1) * w)};
}

CellRange WhitneyCover::cells_in(const RectF& rect) const { return cells_in_rect(grid_, rect); }

int WhitneyCover::selected_index(int scale, int tx, int ty) const {
    if (scale < 1 || scale > finest_) return -1;
    const int t = 1 << scale;
    if (tx < 0 || tx >= t || ty < 0 || ty >= t) return -1;
    return selected_[static_cast<std::size_t>(scale)]
                    [static_cast<std::size_t>(ty) * static_cast<std::size_t>(t) +
                     static_cast<std::size_t>(tx)];
}

int WhitneyCover::square_at(Vec2 p) const {
    if (!grid_.bounds().contains(p)) return -1;
    const int ci = grid_.clamp_cell_x(p.x);
    const int cj = grid_.clamp_cell_y(p.y);
    for (int i = 1; i <= finest_; ++i) {
        const int shift = finest_ - i;
        const int tx = ci >> shift;
        const int ty = cj >> shift;
        const std::size_t idx = (static_cast<std::size_t>(ty) << i) + static_cast<std::size_t>(tx);
        if (sat_[static_cast<std::size_t>(i)][idx]) {
            const int sel = selected_[static_cast<std::size_t>(i)][idx];
            return sel;
        }
    }
    return -1;
}

namespace {

// Exact distance from a tile to the graph, scanned over the profile segments
// within a window certified by the vertical-gap upper bound.
double exact_graph_dist(const LipschitzGraphDomain& dom, const RectF& rect, double upper) {
    const Grid& g = dom.grid;
    const int n = g.cells_per_side();
    const double h = g.spacing();
    const double ox = g.corner_x(0);
    int k0 = static_cast<int>(std::floor((rect.x0 - upper - ox) / h));
    int k1 = static_cast<int>(std::ceil((rect.x1 + upper - ox) / h));
    k0 = std::clamp(k0, 0, n - 1);
    k1 = std::clamp(k1, 1, n);
    double best = upper;
    for (int k = k0; k < k1; ++k) {
        const Vec2 a{g.corner_x(k), dom.psi[static_cast<std::size_t>(k)]};
        const Vec2 b{g.corner_x(k + 1), dom.psi[static_cast<std::size_t>(k) + 1]};
        best = std::min(best, seg_rect_dist(a, b, rect));
    }
    return best;
}

}  // namespace

WhitneyCover whitney_cover(const LipschitzGraphDomain& dom) {
    const Grid& g = dom.grid;
    const int n = g.cells_per_side();
    if ((n & (n - 1)) != 0)
        fail(ErrorKind::Parameter, "whitney cover needs a power-of-two cell count");
    if (n < 64)
        fail(ErrorKind::Resolution,
             "grid too coarse to separate the cover from the boundary collar");
    int logn = 0;
    while ((1 << logn) < n) ++logn;

    WhitneyCover cov(g, dom.mu);
    cov.finest_ = logn;
    const double h = g.spacing();
    const double root2 = std::sqrt(2.0);
    const double slope_norm = std::sqrt(1.0 + dom.cbar * dom.cbar);
    const double half = g.mu();

    // Per-scale minima of the profile over tile corner ranges.
    std::vector<std::vector<double>> minpsi(static_cast<std::size_t>(logn) + 1);
    minpsi[static_cast<std::size_t>(logn)].resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k)
        minpsi[static_cast<std::size_t>(logn)][static_cast<std::size_t>(k)] =
            std::min(dom.psi[static_cast<std::size_t>(k)], dom.psi[static_cast<std::size_t>(k) + 1]);
    for (int i = logn - 1; i >= 1; --i) {
        const int t = 1 << i;
        minpsi[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(t));
        for (int a = 0; a < t; ++a)
            minpsi[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] =
                std::min(minpsi[static_cast<std::size_t>(i) + 1][static_cast<std::size_t>(2 * a)],
                         minpsi[static_cast<std::size_t>(i) + 1][static_cast<std::size_t>(2 * a) + 1]);
    }

    cov.sat_.assign(static_cast<std::size_t>(logn) + 1, {});
    cov.selected_.assign(static_cast<std::size_t>(logn) + 1, {});
    cov.per_scale_count_.assign(static_cast<std::size_t>(logn) + 1, 0);

    // Saturation: a certified lower bound on the boundary distance must reach
    // the tile diameter, and the tile center must lie under the graph. The
    // bound is monotone down the tree, so a saturated tile's children are
    // saturated too and maximal saturated tiles are disjoint.
    for (int i = 1; i <= logn; ++i) {
        const int t = 1 << i;
        const int w = n >> i;
        const double d = (w * h) * root2;
        auto& sat = cov.sat_[static_cast<std::size_t>(i)];
        sat.assign(static_cast<std::size_t>(t) * static_cast<std::size_t>(t), 0);
        cov.selected_[static_cast<std::size_t>(i)].assign(
            static_cast<std::size_t>(t) * static_cast<std::size_t>(t), -1);
        for (int ty = 0; ty < t; ++ty) {
            for (int tx = 0; tx < t; ++tx) {
                const double x0 = g.corner_x(tx * w);
                const double x1 = g.corner_x((tx + 1) * w);
                const double y0 = g.corner_y(ty * w);
                const double y1 = g.corner_y((ty + 1) * w);
                double lb = std::min({y0 + half, x0 + half, half - x1});
                const double gap = minpsi[static_cast<std::size_t>(i)][static_cast<std::size_t>(tx)] - y1;
                lb = std::min(lb, gap <= 0.0 ? 0.0 : gap / slope_norm);
                if (lb < d) continue;
                const Vec2 c{0.5 * (x0 + x1), 0.5 * (y0 + y1)};
                if (!(c.y <= dom.psi_at(c.x))) continue;
                sat[static_cast<std::size_t>(ty) * static_cast<std::size_t>(t) +
                    static_cast<std::size_t>(tx)] = 1;
            }
        }
    }

    // Selection: keep a saturated tile whose parent is not saturated.
    for (int i = 1; i <= logn; ++i) {
        const int t = 1 << i;
        const int w = n >> i;
        for (int ty = 0; ty < t; ++ty) {
            for (int tx = 0; tx < t; ++tx) {
                const std::size_t idx =
                    static_cast<std::size_t>(ty) * static_cast<std::size_t>(t) +
                    static_cast<std::size_t>(tx);
                if (!cov.sat_[static_cast<std::size_t>(i)][idx]) continue;
                if (i > 1) {
                    const std::size_t pidx =
                        static_cast<std::size_t>(ty >> 1) * static_cast<std::size_t>(t >> 1) +
                        static_cast<std::size_t>(tx >> 1);
                    if (cov.sat_[static_cast<std::size_t>(i) - 1][pidx]) continue;
                }
                cov.selected_[static_cast<std::size_t>(i)][idx] =
                    static_cast<int>(cov.squares_.size());
                cov.squares_.push_back({i, tx, ty});
                ++cov.per_scale_count_[static_cast<std::size_t>(i)];
                for (int j = ty * w; j < (ty + 1) * w; ++j)
                    for (int k = tx * w; k < (tx + 1) * w; ++k) cov.covered_.set(k, j);
            }
        }
    }
    cov.collar_ = dom.outer.set_difference(cov.covered_);

    // Verify the two-sided distance comparison with exact boundary distances.
    double cw = 0.0;
    for (const WhitneySquare& s : cov.squares_) {
        const RectF rect = cov.tile_rect(s);
        const double d = cov.diameter(s);
        double dist = std::min({rect.y0 + half, rect.x0 + half, half - rect.x1});
        const int w = cov.tile_cells(s.scale);
        const double gap =
            minpsi[static_cast<std::size_t>(s.scale)][static_cast<std::size_t>(s.ix)] - rect.y1;
        (void)w;
        dist = std::min(dist, exact_graph_dist(dom, rect, std::max(gap, 0.0)));
        if (dist < d * (1.0 - 1e-9))
            fail(ErrorKind::Construction, "whitney square sits closer to the boundary than its size");
        cw = std::max(cw, dist / d);
    }
    cov.cw_ = cw;

    // Overlap multiplicity of the enlarged squares, counted per cell.
    std::vector<std::uint16_t> count(static_cast<std::size_t>(g.cell_count()), 0);
    for (const WhitneySquare& s : cov.squares_) {
        const CellRange r = cov.cells_in(cov.qprime(s));
        for (int j = r.y0; j < r.y1; ++j)
            for (int i = r.x0; i < r.x1; ++i)
                ++count[static_cast<std::size_t>(g.cell_index(i, j))];
    }
    int multiplicity = 0;
    for (std::uint16_t c : count) multiplicity = std::max(multiplicity, static_cast<int>(c));
    cov.multiplicity_ = multiplicity;

    // Size comparability of touching enlarged squares.
    std::vector<RectF> qprimes(cov.squares_.size());
    for (std::size_t k = 0; k < cov.squares_.size(); ++k)
        qprimes[k] = cov.qprime(cov.squares_[k]);
    double comp = cov.squares_.empty() ? 0.0 : 1.0;
    for (std::size_t a = 0; a < cov.squares_.size(); ++a) {
        for (std::size_t b = a + 1; b < cov.squares_.size(); ++b) {
            if (!qprimes[a].touches(qprimes[b])) continue;
            const int ds = std::abs(cov.squares_[a].scale - cov.squares_[b].scale);
            comp = std::max(comp, static_cast<double>(1 << ds));
        }
    }
    cov.comparability_ = comp;
    return cov;
}

// ---------------------------------------------------------------------------
// Partition of unity over the cover

WhitneyPartition::WhitneyPartition(const WhitneyCover& cover, std::vector<char> member)
    : cover_(&cover), member_(std::move(member)) {
    if (member_.size() != cover.squares().size())
        fail(ErrorKind::Precondition, "partition member flags must match the cover squares");
}

namespace {

// One-axis bump profile: 1 on [0, 1.05 s], smoothstep down to 0 at 1.25 s.
double bump1(double t, double s) {
    const double hi = 1.25 * s;
    const double lo = 1.05 * s;
    if (t >= hi) return 0.0;
    if (t <= lo) return 1.0;
    return smoothstep((hi - t) / (0.2 * s));
}

double bump1_deriv(double t, double s) {
    const double hi = 1.25 * s;
    const double lo = 1.05 * s;
    if (t >= hi || t <= lo) return 0.0;
    const double u = (hi - t) / (0.2 * s);
    return -6.0 * u * (1.0 - u) / (0.2 * s);
}

}  // namespace

double WhitneyPartition::raw(int idx, Vec2 p) const {
    const WhitneySquare& sq = cover_->squares()[static_cast<std::size_t>(idx)];
    const Vec2 c = cover_->tile_rect(sq).center();
    const double s = 0.5 * cover_->side(sq);
    return bump1(std::abs(p.x - c.x), s) * bump1(std::abs(p.y - c.y), s);
}

std::vector<int> WhitneyPartition::support_at(Vec2 p) const {
    std::vector<int> out;
    const Grid& g = cover_->grid();
    if (!g.bounds().contains(p)) return out;
    const int ci = g.clamp_cell_x(p.x);
    const int cj = g.clamp_cell_y(p.y);
    for (int i = 1; i <= cover_->finest_scale(); ++i) {
        const int shift = cover_->finest_scale() - i;
        const int bx = ci >> shift;
        const int by = cj >> shift;
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int sel = cover_->selected_index(i, bx + dx, by + dy);
                if (sel < 0 || !member_[static_cast<std::size_t>(sel)]) continue;
                if (raw(sel, p) > 0.0) out.push_back(sel);
            }
        }
    }
    return out;
}

double WhitneyPartition::sum_raw(Vec2 p) const {
    double s = 0.0;
    for (int idx : support_at(p)) s += raw(idx, p);
    return s;
}

double WhitneyPartition::phi(int idx, Vec2 p) const {
    const double r = raw(idx, p);
    if (r == 0.0) return 0.0;
    const double s = sum_raw(p);
    return r / std::max(1.0, s);
}

Vec2 WhitneyPartition::grad_phi(int idx, Vec2 p) const {
    const WhitneySquare& sq = cover_->squares()[static_cast<std::size_t>(idx)];
    const Vec2 c = cover_->tile_rect(sq).center();
    const double s = 0.5 * cover_->side(sq);
    const double tx = std::abs(p.x - c.x);
    const double ty = std::abs(p.y - c.y);
    const double bx = bump1(tx, s);
    const double by = bump1(ty, s);
    const double sx = p.x >= c.x ? 1.0 : -1.0;
    const double sy = p.y >= c.y ? 1.0 : -1.0;
    const Vec2 graw{bump1_deriv(tx, s) * sx * by, bx * bump1_deriv(ty, s) * sy};
    const double rawv = bx * by;

    double total = 0.0;
    Vec2 gtotal{0.0, 0.0};
    for (int k : support_at(p)) {
        const WhitneySquare& so = cover_->squares()[static_cast<std::size_t>(k)];
        const Vec2 co = cover_->tile_rect(so).center();
        const double ss = 0.5 * cover_->side(so);
        const double ox = std::abs(p.x - co.x);
        const double oy = std::abs(p.y - co.y);
        const double obx = bump1(ox, ss);
        const double oby = bump1(oy, ss);
        total += obx * oby;
        gtotal += Vec2{bump1_deriv(ox, ss) * (p.x >= co.x ? 1.0 : -1.0) * oby,
                       obx * bump1_deriv(oy, ss) * (p.y >= co.y ? 1.0 : -1.0)};
    }
    if (total < 1.0) return graw;
    const double inv = 1.0 / total;
    return {graw.x * inv - rawv * gtotal.x * inv * inv,
            graw.y * inv - rawv * gtotal.y * inv * inv};
}

// ---------------------------------------------------------------------------
// Bad squares and shadows

ShadowResult boundary_bad_squares(const DisplacementField& field, const LipschitzGraphDomain& dom,
                                  const WhitneyCover& cover, double c_hat) {
    if (!(c_hat > 0.0)) fail(ErrorKind::Parameter, "bad-square threshold must be positive");
    if (!(field.grid() == dom.grid))
        fail(ErrorKind::Precondition, "field and graph domain live on different grids");
    if (!(cover.grid() == dom.grid))
        fail(ErrorKind::Precondition, "cover and graph domain live on different grids");
    const Grid& g = dom.grid;

    const std::vector<EdgeId> edges = jump_edges_in(field, dom);
    const CrackSet jumps = CrackSet::from_edges(g, edges);
    ShadowResult out{{}, RegionMask(g), RegionMask(g), false, jumps.total_length(), 0.0};

    for (std::size_t k = 0; k < cover.squares().size(); ++k) {
        const WhitneySquare& sq = cover.squares()[k];
        if (jumps.length_in(cover.qprime(sq)) >= c_hat * cover.diameter(sq))
            out.bad.push_back(static_cast<int>(k));
    }

    const double h = g.spacing();
    const double top = g.bounds().y1;
    for (int k : out.bad) {
        const RectF qp = cover.qprime(cover.squares()[static_cast<std::size_t>(k)]);
        const CellRange r = cells_in_rect(g, {qp.x0, qp.y0, qp.x1, top});
        for (int j = r.y0; j < r.y1; ++j)
            for (int i = r.x0; i < r.x1; ++i)
                if (dom.outer.contains(i, j)) out.shadows.set(i, j);
        // A strip whose cells reach the central row would sever the chain
        // corridor along the segment (-mu, mu) x {0}; give up on the cover.
        if (qp.y0 <= 0.5 * h && qp.x1 >= -dom.mu && qp.x0 <= dom.mu) out.fallback = true;
    }

    out.working = dom.inner.set_difference(out.shadows).set_intersection(cover.covered());
    if (out.jump_length > 0.0)
        out.perimeter_ratio =
            out.shadows.perimeter(PerimeterConvention::OpenDomain) / out.jump_length;
    return out;
}

// ---------------------------------------------------------------------------
// John certificate

namespace {

// 1D squared distance transform (lower envelope of parabolas).
void dt1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
          std::vector<double>& z, int n) {
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s = ((f[static_cast<std::size_t>(q)] + q * q) -
                    (f[static_cast<std::size_t>(v[static_cast<std::size_t>(k)])] +
                     v[static_cast<std::size_t>(k)] * v[static_cast<std::size_t>(k)])) /
                   (2.0 * q - 2.0 * v[static_cast<std::size_t>(k)]);
        while (s <= z[static_cast<std::size_t>(k)]) {
            --k;
            s = ((f[static_cast<std::size_t>(q)] + q * q) -
                 (f[static_cast<std::size_t>(v[static_cast<std::size_t>(k)])] +
                  v[static_cast<std::size_t>(k)] * v[static_cast<std::size_t>(k)])) /
                (2.0 * q - 2.0 * v[static_cast<std::size_t>(k)]);
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = s;
        z[static_cast<std::size_t>(k) + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[static_cast<std::size_t>(k) + 1] < q) ++k;
        const int vq = v[static_cast<std::size_t>(k)];
        d[static_cast<std::size_t>(q)] = (q - vq) * (q - vq) + f[static_cast<std::size_t>(vq)];
    }
}

// Squared distance (in cell units) from each cell to the nearest cell outside
// the mask.
std::vector<double> edt_sq(const RegionMask& mask) {
    const Grid& g = mask.grid();
    const int n = g.cells_per_side();
    const double big = 1e18;
    std::vector<double> grid_f(static_cast<std::size_t>(g.cell_count()));
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            grid_f[static_cast<std::size_t>(g.cell_index(i, j))] = mask.contains(i, j) ? big : 0.0;

    std::vector<double> f(static_cast<std::size_t>(n)), d(static_cast<std::size_t>(n));
    std::vector<int> v(static_cast<std::size_t>(n));
    std::vector<double> z(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) f[static_cast<std::size_t>(j)] =
            grid_f[static_cast<std::size_t>(g.cell_index(i, j))];
        dt1d(f, d, v, z, n);
        for (int j = 0; j < n; ++j)
            grid_f[static_cast<std::size_t>(g.cell_index(i, j))] = d[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) f[static_cast<std::size_t>(i)] =
            grid_f[static_cast<std::size_t>(g.cell_index(i, j))];
        dt1d(f, d, v, z, n);
        for (int i = 0; i < n; ++i)
            grid_f[static_cast<std::size_t>(g.cell_index(i, j))] = d[static_cast<std::size_t>(i)];
    }
    return grid_f;
}

struct PathMeasure {
    bool ok = false;
    double ratio = 0.0;
    Vec2 bad_point{0.0, 0.0};
};

// Walks the polyline from its start, checking membership in the mask and
// accumulating the worst arclength / boundary-distance ratio.
PathMeasure measure_path(const std::vector<Vec2>& verts, const RegionMask& mask,
                         const std::vector<double>& edt) {
    const Grid& g = mask.grid();
    const double h = g.spacing();
    PathMeasure m;
    double arc = 0.0;
    double worst = 0.0;
    auto probe = [&](const Vec2& p, double t) -> bool {
        const int ci = g.clamp_cell_x(p.x);
        const int cj = g.clamp_cell_y(p.y);
        if (!mask.contains(ci, cj)) {
            m.bad_point = p;
            return false;
        }
        const double dist = std::max(
            0.25 * h, std::sqrt(edt[static_cast<std::size_t>(g.cell_index(ci, cj))]) * h - 0.5 * h);
        worst = std::max(worst, t / dist);
        return true;
    };
    if (!probe(verts[0], 0.0)) return m;
    for (std::size_t k = 0; k + 1 < verts.size(); ++k) {
        const Vec2 a = verts[k];
        const Vec2 b = verts[k + 1];
        const double len = (b - a).norm();
        if (len == 0.0) continue;
        const int steps = std::max(1, static_cast<int>(std::ceil(len / (h / 3.0))));
        for (int s = 1; s <= steps; ++s) {
            const double t = static_cast<double>(s) / steps;
            if (!probe(a + (b - a) * t, arc + len * t)) return m;
        }
        arc += len;
    }
    m.ok = true;
    m.ratio = worst;
    return m;
}

struct ChainOutcome {
    bool ok = false;
    std::vector<Vec2> verts;
    JohnViolation vio;
};

// Vertical-then-horizontal chain of cover squares from x to the origin,
// routed through square midpoints where those stay in the mask and through
// the on-corridor points otherwise.
ChainOutcome build_chain(Vec2 x, const RegionMask& mask, const WhitneyCover& cover) {
    const Grid& g = cover.grid();
    const double h = g.spacing();
    ChainOutcome out;
    out.verts.push_back(x);
    const double qy = x.y >= 0.0 ? 0.25 * h : -0.25 * h;
    auto blocked_at = [&](Vec2 p, int square) {
        out.vio.point = p;
        if (square >= 0) {
            const WhitneySquare& s = cover.squares()[static_cast<std::size_t>(square)];
            out.vio.scale = s.scale;
            out.vio.ix = s.ix;
            out.vio.iy = s.iy;
        }
    };
    auto in_mask = [&](Vec2 p) { return mask.contains(g.clamp_cell_x(p.x), g.clamp_cell_y(p.y)); };

    int cur = cover.square_at(x);
    if (cur < 0) {
        blocked_at(x, -1);
        return out;
    }
    // Vertical leg along the column of x toward the junction level qy.
    const double vlo = std::min(x.y, qy);
    const double vhi = std::max(x.y, qy);
    const double dir = x.y > qy ? -1.0 : 1.0;
    const int max_steps = 8 * g.cells_per_side();
    int steps = 0;
    while (true) {
        const RectF rect = cover.tile_rect(cover.squares()[static_cast<std::size_t>(cur)]);
        const Vec2 mid = rect.center();
        if (in_mask(mid)) {
            out.verts.push_back(mid);
        } else {
            const Vec2 onl{x.x, std::clamp(mid.y, vlo, vhi)};
            if (!in_mask(onl)) {
                blocked_at(onl, cur);
                return out;
            }
            out.verts.push_back(onl);
        }
        if (rect.y0 <= qy && qy <= rect.y1) break;
        const double yb = dir < 0.0 ? rect.y0 : rect.y1;
        out.verts.push_back({x.x, yb});
        const Vec2 next_probe{x.x, yb + dir * 0.25 * h};
        const int next = cover.square_at(next_probe);
        if (next < 0 || ++steps > max_steps) {
            blocked_at(next_probe, -1);
            return out;
        }
        cur = next;
    }
    // Horizontal leg along the junction level toward the origin column.
    const double hdir = x.x > 0.0 ? -1.0 : 1.0;
    while (true) {
        const RectF rect = cover.tile_rect(cover.squares()[static_cast<std::size_t>(cur)]);
        if (rect.x0 <= 0.0 && 0.0 <= rect.x1) break;
        const double xb = hdir < 0.0 ? rect.x0 : rect.x1;
        out.verts.push_back({xb, qy});
        const Vec2 next_probe{xb + hdir * 0.25 * h, qy};
        const int next = cover.square_at(next_probe);
        if (next < 0 || ++steps > max_steps) {
            blocked_at(next_probe, -1);
            return out;
        }
        cur = next;
        const RectF nrect = cover.tile_rect(cover.squares()[static_cast<std::size_t>(cur)]);
        const Vec2 mid = nrect.center();
        if (in_mask(mid)) {
            out.verts.push_back(mid);
        } else {
            const double hlo = std::min(0.0, x.x);
            const double hhi = std::max(0.0, x.x);
            const Vec2 onl{std::clamp(mid.x, hlo, hhi), qy};
            if (!in_mask(onl)) {
                blocked_at(onl, cur);
                return out;
            }
            out.verts.push_back(onl);
        }
    }
    out.verts.push_back({0.0, 0.0});
    out.ok = true;
    return out;
}

}  // namespace

JohnCertificate john_verify(const RegionMask& working, const WhitneyCover& cover, int sample_count,
                            std::uint64_t seed) {
    if (!(working.grid() == cover.grid()))
        fail(ErrorKind::Precondition, "working region and cover live on different grids");
    const Grid& g = cover.grid();
    const int n = g.cells_per_side();
    const int c0 = n / 2;
    if (!working.contains(c0, c0))
        fail(ErrorKind::Domain, "john center cell lies outside the working region");
    const std::vector<double> edt = edt_sq(working);
    const double h = g.spacing();

    std::vector<std::pair<int, int>> vcells;
    std::vector<Vec2> samples;
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            if (!working.contains(i, j)) continue;
            vcells.emplace_back(i, j);
            if (edt[static_cast<std::size_t>(g.cell_index(i, j))] <= 6.25)
                samples.push_back(g.cell_center(i, j));
        }
    }
    std::mt19937_64 rng(seed);
    if (!vcells.empty() && sample_count > 0) {
        std::uniform_int_distribution<std::size_t> pick(0, vcells.size() - 1);
        for (int k = 0; k < sample_count; ++k) {
            const auto [i, j] = vcells[pick(rng)];
            samples.push_back(g.cell_center(i, j));
        }
    }

    JohnCertificate cert;
    for (const Vec2& x : samples) {
        ++cert.samples_checked;
        double best = kInf;
        // Straight segment to the center.
        {
            std::vector<Vec2> verts{x, {0.0, 0.0}};
            const PathMeasure m = measure_path(verts, working, edt);
            if (m.ok) best = std::min(best, m.ratio);
        }
        // Square chain to the center.
        JohnViolation vio{x, 0, 0, 0};
        {
            ChainOutcome chain = build_chain(x, working, cover);
            if (chain.ok) {
                const PathMeasure m = measure_path(chain.verts, working, edt);
                if (m.ok) {
                    best = std::min(best, m.ratio);
                } else {
                    vio.point = m.bad_point;
                }
            } else {
                vio = chain.vio;
            }
        }
        if (best == kInf) {
            cert.violations.push_back(vio);
            continue;
        }
        if (best > cert.constant) {
            cert.constant = best;
            cert.worst_point = x;
        }
    }
    (void)h;
    return cert;
}

// ---------------------------------------------------------------------------
// Boundary estimate

namespace {

RigidMotion fit_rigid_centers(const Grid& g, const std::vector<std::pair<int, int>>& cells,
                              const std::function<Vec2(int, int)>& value) {
    if (cells.empty()) fail(ErrorKind::Domain, "rigid fit over an empty cell set");
    Vec2 cbar{0.0, 0.0}, ubar{0.0, 0.0};
    for (const auto& [i, j] : cells) {
        cbar += g.cell_center(i, j);
        ubar += value(i, j);
    }
    const double inv = 1.0 / static_cast<double>(cells.size());
    cbar = cbar * inv;
    ubar = ubar * inv;
    double num = 0.0, den = 0.0;
    for (const auto& [i, j] : cells) {
        const Vec2 y = g.cell_center(i, j) - cbar;
        const Vec2 u = value(i, j);
        num += u.x * (-y.y) + u.y * y.x;
        den += y.norm_sq();
    }
    RigidMotion a;
    a.omega = den > 0.0 ? num / den : 0.0;
    a.b = {ubar.x + a.omega * cbar.y, ubar.y - a.omega * cbar.x};
    return a;
}

struct JumpAdjacency {
    std::vector<char> cut;  // one flag per cell: an incident edge jumps
};

JumpAdjacency jump_adjacency(const Grid& g, const std::vector<EdgeId>& edges) {
    JumpAdjacency adj;
    adj.cut.assign(static_cast<std::size_t>(g.cell_count()), 0);
    auto mark = [&](int i, int j) {
        if (g.valid_cell(i, j)) adj.cut[static_cast<std::size_t>(g.cell_index(i, j))] = 1;
    };
    for (const EdgeId& e : edges) {
        if (e.axis == 0) {
            mark(e.a, e.b - 1);
            mark(e.a, e.b);
        } else {
            mark(e.a - 1, e.b);
            mark(e.a, e.b);
        }
    }
    return adj;
}

struct SquareContext {
    const DisplacementField& field;
    const StrainField& strains;
    const WhitneyCover& cover;
    const JumpAdjacency& adjacency;
    double p;
    double q;
};

// Norms of the field against a fitted motion over the cells of the inner
// enlargement that stay measured, plus the strain energy over the enlarged
// square; fills the per-square constants.
void finish_square(SquareEstimate& se, const SquareContext& ctx, const CellRange& r2,
                   const std::vector<char>& exceptional_local, const CellRange& rp) {
    const Grid& g = ctx.field.grid();
    const double h = g.spacing();
    const double cell_area = h * h;
    const Mat2 A = se.motion.matrix();
    double sum_u = 0.0, sum_g = 0.0;
    const int wx = r2.x1 - r2.x0;
    for (int j = r2.y0; j < r2.y1; ++j) {
        for (int i = r2.x0; i < r2.x1; ++i) {
            const std::size_t lk =
                static_cast<std::size_t>(j - r2.y0) * static_cast<std::size_t>(wx) +
                static_cast<std::size_t>(i - r2.x0);
            if (exceptional_local[lk]) continue;
            const Vec2 c = g.cell_center(i, j);
            const Vec2 du = ctx.field.center_value(i, j) - se.motion.at(c);
            sum_u += std::pow(du.norm(), ctx.q) * cell_area;
            if (!ctx.adjacency.cut[static_cast<std::size_t>(g.cell_index(i, j))]) {
                const Mat2 dg = ctx.field.cell_gradient(i, j) - A;
                sum_g += std::pow(dg.frobenius(), ctx.p) * cell_area;
            }
        }
    }
    se.res_u = std::pow(sum_u, 1.0 / ctx.q);
    se.res_grad = std::pow(sum_g, 1.0 / ctx.p);
    double sum_e = 0.0;
    for (int j = rp.y0; j < rp.y1; ++j)
        for (int i = rp.x0; i < rp.x1; ++i) {
            const double m = ctx.strains.at(i, j).frobenius();
            sum_e += m * m * cell_area;
        }
    se.elastic = std::sqrt(sum_e);
    const double d = ctx.cover.diameter(ctx.cover.squares()[static_cast<std::size_t>(se.square)]);
    const double den_u = std::pow(d, 2.0 / ctx.q) * se.elastic;
    const double den_g = std::pow(d, 2.0 / ctx.p - 1.0) * se.elastic;
    se.const_u = den_u > 0.0 ? se.res_u / den_u : 0.0;
    se.const_grad = den_g > 0.0 ? se.res_grad / den_g : 0.0;
}

// Larger squares get the full interior pipeline on a cropped copy of the
// field; the exceptional cells are whatever that run left unmeasured inside
// the inner enlargement.
SquareEstimate estimate_square_full(const SquareContext& ctx, int sqidx,
                                    const std::vector<EdgeId>& jump_edges, RegionMask& exceptional) {
    const Grid& g = ctx.field.grid();
    const double h = g.spacing();
    const WhitneySquare& sq = ctx.cover.squares()[static_cast<std::size_t>(sqidx)];
    const CellRange rp = ctx.cover.cells_in(ctx.cover.qprime(sq));
    const int m = rp.x1 - rp.x0;
    if (m != rp.y1 - rp.y0 || m <= 0)
        fail(ErrorKind::Construction, "enlarged square window clipped by the grid");
    const Vec2 sub_center{0.5 * (g.corner_x(rp.x0) + g.corner_x(rp.x1)),
                          0.5 * (g.corner_y(rp.y0) + g.corner_y(rp.y1))};
    const Grid sub_grid(sub_center, 0.5 * (m * h), m);

    std::vector<EdgeId> sub_edges;
    for (const EdgeId& e : jump_edges) {
        if (e.axis == 0) {
            if (e.a >= rp.x0 && e.a < rp.x1 && e.b - 1 >= rp.y0 && e.b < rp.y1)
                sub_edges.push_back({0, e.a - rp.x0, e.b - rp.y0});
        } else {
            if (e.a - 1 >= rp.x0 && e.a < rp.x1 && e.b >= rp.y0 && e.b < rp.y1)
                sub_edges.push_back({1, e.a - rp.x0, e.b - rp.y0});
        }
    }
    const CrackSet sub_crack = CrackSet::from_edges(sub_grid, sub_edges);
    const DisplacementField sub_field =
        build_field(sub_grid, sub_crack, [&](Vec2 pt, Vec2 cc) -> Vec2 {
            const int pi = g.clamp_cell_x(cc.x);
            const int pj = g.clamp_cell_y(cc.y);
            const int corner = (pt.x > cc.x ? 1 : 0) + (pt.y > cc.y ? 2 : 0);
            return ctx.field.corner_value(pi, pj, corner);
        });

    LocalKornConfig cfg;
    cfg.theta = 0.5;
    const LocalKornReport rep = local_estimate(sub_field, ctx.p, ctx.q, cfg);

    SquareEstimate se;
    se.square = sqidx;
    se.motion = rep.rigid;
    se.fallback = rep.fallback || rep.infeasible;

    const CellRange r2 = ctx.cover.cells_in(ctx.cover.qsecond(sq));
    const int wx = r2.x1 - r2.x0;
    std::vector<char> exc_local(static_cast<std::size_t>(wx) * static_cast<std::size_t>(r2.y1 - r2.y0),
                                0);
    const RectF target = centered_square(sub_center, rep.shrunk_mu);
    for (int j = r2.y0; j < r2.y1; ++j) {
        for (int i = r2.x0; i < r2.x1; ++i) {
            bool measured = false;
            if (!se.fallback) {
                const Vec2 c = g.cell_center(i, j);
                measured = target.contains(c) && !rep.exceptional.contains(i - rp.x0, j - rp.y0);
            }
            if (!measured) {
                exc_local[static_cast<std::size_t>(j - r2.y0) * static_cast<std::size_t>(wx) +
                          static_cast<std::size_t>(i - r2.x0)] = 1;
                exceptional.set(i, j);
            }
        }
    }
    finish_square(se, ctx, r2, exc_local, rp);
    return se;
}

// The smallest squares skip the cropped pipeline: the motion is fitted
// directly away from a one-ring dilation of the jump-adjacent cells.
SquareEstimate estimate_square_small(const SquareContext& ctx, int sqidx, RegionMask& exceptional) {
    const Grid& g = ctx.field.grid();
    const WhitneySquare& sq = ctx.cover.squares()[static_cast<std::size_t>(sqidx)];
    const CellRange rp = ctx.cover.cells_in(ctx.cover.qprime(sq));
    const CellRange r2 = ctx.cover.cells_in(ctx.cover.qsecond(sq));
    const int wx = r2.x1 - r2.x0;
    const int wy = r2.y1 - r2.y0;
    std::vector<char> exc_local(static_cast<std::size_t>(wx) * static_cast<std::size_t>(wy), 0);

    auto cell_cut = [&](int i, int j) {
        return g.valid_cell(i, j) && ctx.adjacency.cut[static_cast<std::size_t>(g.cell_index(i, j))];
    };
    std::vector<std::pair<int, int>> kept;
    for (int j = r2.y0; j < r2.y1; ++j) {
        for (int i = r2.x0; i < r2.x1; ++i) {
            bool exc = false;
            for (int dj = -1; dj <= 1 && !exc; ++dj)
                for (int di = -1; di <= 1 && !exc; ++di)
                    if (cell_cut(i + di, j + dj)) exc = true;
            if (exc) {
                exc_local[static_cast<std::size_t>(j - r2.y0) * static_cast<std::size_t>(wx) +
                          static_cast<std::size_t>(i - r2.x0)] = 1;
                exceptional.set(i, j);
            } else {
                kept.emplace_back(i, j);
            }
        }
    }

    SquareEstimate se;
    se.square = sqidx;
    // First-order fit at a lone uncut cell: center values alone cannot see
    // rotation, so take it from the antisymmetric part of the cell gradient.
    auto first_order_at = [&](int i, int j) {
        const Mat2 grad = ctx.field.cell_gradient(i, j);
        const Vec2 c = g.cell_center(i, j);
        const Vec2 u = ctx.field.center_value(i, j);
        RigidMotion a;
        a.omega = 0.5 * (grad.a21 - grad.a12);
        a.b = {u.x + a.omega * c.y, u.y - a.omega * c.x};
        return a;
    };
    if (kept.empty()) {
        se.fallback = true;
        std::vector<std::pair<int, int>> all;
        for (int j = r2.y0; j < r2.y1; ++j)
            for (int i = r2.x0; i < r2.x1; ++i) all.emplace_back(i, j);
        se.motion = fit_rigid_centers(g, all,
                                      [&](int i, int j) { return ctx.field.center_value(i, j); });
    } else if (kept.size() == 1) {
        se.motion = first_order_at(kept[0].first, kept[0].second);
    } else {
        se.motion = fit_rigid_centers(g, kept,
                                      [&](int i, int j) { return ctx.field.center_value(i, j); });
    }
    finish_square(se, ctx, r2, exc_local, rp);
    return se;
}

}  // namespace

BoundaryReport boundary_estimate(const DisplacementField& field, const LipschitzGraphDomain& dom,
                                 double p, double q, const BoundaryConfig& config) {
    if (!(p >= 1.0 && p < 2.0)) fail(ErrorKind::Parameter, "exponent p must lie in [1, 2)");
    if (!(q >= 1.0)) fail(ErrorKind::Parameter, "exponent q must be at least 1");
    if (!(config.c_hat > 0.0)) fail(ErrorKind::Parameter, "bad-square threshold must be positive");
    if (!(field.grid() == dom.grid))
        fail(ErrorKind::Precondition, "field and graph domain live on different grids");

    const Grid& g = dom.grid;
    const double h = g.spacing();
    const double mu = dom.mu;
    const StrainField strains = strain(field);
    const double elastic_outer = lp_norm(strains, dom.outer, 2.0);

    const WhitneyCover cover = whitney_cover(dom);
    const ShadowResult shadow = boundary_bad_squares(field, dom, cover, config.c_hat);

    BoundaryReport rep{.rigid = RigidMotion{},
                       .shadows = shadow.shadows,
                       .working = shadow.working,
                       .exceptional = RegionMask(g),
                       .removed = RegionMask(g)};
    rep.jump_length = shadow.jump_length;
    rep.elastic = elastic_outer;
    rep.perimeter_ratio = shadow.perimeter_ratio;
    rep.bad_count = static_cast<int>(shadow.bad.size());
    rep.good_count = static_cast<int>(cover.squares().size()) - rep.bad_count;
    rep.fallback = shadow.fallback || rep.good_count == 0;

    if (rep.fallback) {
        rep.working = RegionMask(g);
        rep.removed = dom.inner;
        rep.rigid = project_rigid(field, dom.inner);
        return rep;
    }

    const JohnCertificate john = john_verify(rep.working, cover, config.john_samples,
                                             config.john_seed);
    rep.john = john;
    if (!john.violations.empty())
        fail(ErrorKind::Construction, "john chain blocked inside the working region");

    const std::vector<EdgeId> jump_edges = jump_edges_in(field, dom);
    const JumpAdjacency adjacency = jump_adjacency(g, jump_edges);
    const SquareContext ctx{field, strains, cover, adjacency, p, q};

    std::vector<char> bad_flag(cover.squares().size(), 0);
    for (int k : shadow.bad) bad_flag[static_cast<std::size_t>(k)] = 1;

    const int full_call_min_cells = 8;
    std::vector<char> member(cover.squares().size(), 0);
    for (std::size_t k = 0; k < cover.squares().size(); ++k) {
        if (bad_flag[k]) continue;
        member[k] = 1;
        const int w = cover.tile_cells(cover.squares()[k].scale);
        SquareEstimate se = w >= full_call_min_cells
                                ? estimate_square_full(ctx, static_cast<int>(k), jump_edges,
                                                       rep.exceptional)
                                : estimate_square_small(ctx, static_cast<int>(k), rep.exceptional);
        rep.local_const_u = std::max(rep.local_const_u, se.const_u);
        rep.local_const_grad = std::max(rep.local_const_grad, se.const_grad);
        rep.locals.push_back(std::move(se));
    }

    // Neighbor comparison: touching inner enlargements share a ball; the
    // motions of the two squares are integrated against each other over both
    // enlarged squares.
    std::vector<RectF> qseconds(cover.squares().size());
    std::vector<RectF> qprimes(cover.squares().size());
    for (std::size_t k = 0; k < cover.squares().size(); ++k) {
        qseconds[k] = cover.qsecond(cover.squares()[k]);
        qprimes[k] = cover.qprime(cover.squares()[k]);
    }
    std::vector<int> motion_index(cover.squares().size(), -1);
    for (std::size_t k = 0; k < rep.locals.size(); ++k)
        motion_index[static_cast<std::size_t>(rep.locals[k].square)] = static_cast<int>(k);

    double ball_ratio = kInf;
    double neighbor_sum = 0.0;
    const double cell_area = h * h;
    for (std::size_t a = 0; a < cover.squares().size(); ++a) {
        if (!member[a]) continue;
        for (std::size_t b = a + 1; b < cover.squares().size(); ++b) {
            if (!member[b]) continue;
            if (!qseconds[a].touches(qseconds[b])) continue;
            const double da = cover.diameter(cover.squares()[a]);
            const double db = cover.diameter(cover.squares()[b]);
            const RectF inter{std::max(qseconds[a].x0, qseconds[b].x0),
                              std::max(qseconds[a].y0, qseconds[b].y0),
                              std::min(qseconds[a].x1, qseconds[b].x1),
                              std::min(qseconds[a].y1, qseconds[b].y1)};
            const double radius = 0.5 * std::min(inter.width(), inter.height());
            ball_ratio = std::min(ball_ratio, radius / std::max(da, db));
            const Vec2 bc = inter.center();
            const CellRange br = cells_in_rect(
                g, {bc.x - radius, bc.y - radius, bc.x + radius, bc.y + radius});
            std::int64_t total = 0, exc = 0;
            for (int j = br.y0; j < br.y1; ++j) {
                for (int i = br.x0; i < br.x1; ++i) {
                    const Vec2 c = g.cell_center(i, j);
                    if ((c - bc).norm() > radius) continue;
                    ++total;
                    if (rep.exceptional.contains(i, j)) ++exc;
                }
            }
            if (total > 0 && 2 * exc > total) ++rep.ball_violations;

            const RigidMotion& ma = rep.locals[static_cast<std::size_t>(motion_index[a])].motion;
            const RigidMotion& mb = rep.locals[static_cast<std::size_t>(motion_index[b])].motion;
            for (int side = 0; side < 2; ++side) {
                const std::size_t k = side == 0 ? a : b;
                const double d = side == 0 ? da : db;
                const CellRange r = cells_in_rect(g, qprimes[k]);
                double sum = 0.0;
                for (int j = r.y0; j < r.y1; ++j) {
                    for (int i = r.x0; i < r.x1; ++i) {
                        const Vec2 c = g.cell_center(i, j);
                        sum += std::pow((ma.at(c) - mb.at(c)).norm(), p) * cell_area;
                    }
                }
                neighbor_sum += sum / std::pow(d, p);
            }
        }
    }
    rep.ball_radius_ratio = ball_ratio == kInf ? 0.0 : ball_ratio;
    const double neighbor_den = std::pow(mu, 2.0 - p) * std::pow(elastic_outer, p);
    rep.neighbor_constant = neighbor_den > 0.0 ? neighbor_sum / neighbor_den : 0.0;

    // Blend the square motions with the partition of unity and project the
    // blend onto one global rigid motion over the working region.
    const WhitneyPartition pou(cover, member);
    std::vector<RigidMotion> motions(cover.squares().size());
    for (const SquareEstimate& se : rep.locals)
        motions[static_cast<std::size_t>(se.square)] = se.motion;
    if (rep.working.empty()) {
        rep.fallback = true;
        rep.removed = dom.inner;
        rep.rigid = project_rigid(field, dom.inner);
        return rep;
    }
    rep.rigid = project_rigid_values(g, rep.working, [&](int i, int j) -> Vec2 {
        const Vec2 c = g.cell_center(i, j);
        Vec2 v{0.0, 0.0};
        double total = 0.0;
        std::vector<int> sup = pou.support_at(c);
        for (int idx : sup) total += pou.raw(idx, c);
        const double inv = 1.0 / std::max(1.0, total);
        for (int idx : sup)
            v += motions[static_cast<std::size_t>(idx)].at(c) * (pou.raw(idx, c) * inv);
        return v;
    });

    // Final residuals of the original field against the global motion over
    // the inner region minus the removed set.
    rep.removed = rep.exceptional.set_union(rep.shadows).set_intersection(dom.inner);
    const RegionMask res_mask = dom.inner.set_difference(rep.removed);
    rep.residual_u_q = lp_norm_cells(g, res_mask, q, [&](int i, int j) {
        return (field.center_value(i, j) - rep.rigid.at(g.cell_center(i, j))).norm();
    });
    RegionMask grad_mask = res_mask;
    for (int j = 0; j < g.cells_per_side(); ++j)
        for (int i = 0; i < g.cells_per_side(); ++i)
            if (grad_mask.contains(i, j) &&
                adjacency.cut[static_cast<std::size_t>(g.cell_index(i, j))])
                grad_mask.set(i, j, false);
    const Mat2 A = rep.rigid.matrix();
    rep.residual_grad_p = lp_norm_cells(g, grad_mask, p, [&](int i, int j) {
        return (field.cell_gradient(i, j) - A).frobenius();
    });
    rep.excluded_area =
        static_cast<double>(res_mask.cell_count() - grad_mask.cell_count()) * h * h;

    const double den_u = std::pow(mu, 2.0 / q) * elastic_outer;
    const double den_g = std::pow(mu, 2.0 / p - 1.0) * elastic_outer;
    rep.const_u = den_u > 0.0 ? rep.residual_u_q / den_u : 0.0;
    rep.const_grad = den_g > 0.0 ? rep.residual_grad_p / den_g : 0.0;
    return rep;
}

}  // namespace kornforge
