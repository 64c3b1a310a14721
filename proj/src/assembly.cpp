#include "kornforge/assembly.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "kornforge/error.hpp"
#include "kornforge/modification.hpp"

namespace kornforge {

namespace {

constexpr double kPi = std::numbers::pi;

double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }

// Distance from p to the closed segment [a, b], any orientation.
double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 d = b - a;
    const double len2 = d.norm_sq();
    if (len2 == 0.0) return (p - a).norm();
    const double t = std::clamp((p - a).dot(d) / len2, 0.0, 1.0);
    return (p - (a + d * t)).norm();
}

// Closed segment intersection: touching endpoints and collinear overlap count.
bool segments_meet(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
    const auto orient = [](const Vec2& a, const Vec2& b, const Vec2& c) {
        const double v = cross(b - a, c - a);
        const double scale = (b - a).norm() * (c - a).norm();
        if (std::abs(v) <= 1e-14 * std::max(scale, 1e-300)) return 0;
        return v > 0.0 ? 1 : -1;
    };
    const int o1 = orient(p1, p2, q1);
    const int o2 = orient(p1, p2, q2);
    const int o3 = orient(q1, q2, p1);
    const int o4 = orient(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    const auto on_segment = [&](const Vec2& a, const Vec2& b, const Vec2& c) {
        return orient(a, b, c) == 0 && c.x >= std::min(a.x, b.x) - 1e-12 &&
               c.x <= std::max(a.x, b.x) + 1e-12 && c.y >= std::min(a.y, b.y) - 1e-12 &&
               c.y <= std::max(a.y, b.y) + 1e-12;
    };
    return on_segment(p1, p2, q1) || on_segment(p1, p2, q2) || on_segment(q1, q2, p1) ||
           on_segment(q1, q2, p2);
}

// Liang-Barsky parametric clip of the segment a + t (b - a), t in [0, 1], to a
// closed rectangle. Returns false when the segment misses the rectangle.
bool clip_segment(const Vec2& a, const Vec2& b, const RectF& r, double& t0, double& t1) {
    t0 = 0.0;
    t1 = 1.0;
    const double start[2] = {a.x, a.y};
    const double delta[2] = {b.x - a.x, b.y - a.y};
    const double lo[2] = {r.x0, r.y0};
    const double hi[2] = {r.x1, r.y1};
    for (int axis = 0; axis < 2; ++axis) {
        if (delta[axis] == 0.0) {
            if (start[axis] < lo[axis] || start[axis] > hi[axis]) return false;
            continue;
        }
        double ta = (lo[axis] - start[axis]) / delta[axis];
        double tb = (hi[axis] - start[axis]) / delta[axis];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// Polygon geometry
// ---------------------------------------------------------------------------

Vec2 PolygonDomain::vertex(int k) const {
    const int n = edge_count();
    int m = k % n;
    if (m < 0) m += n;
    return vertices[static_cast<std::size_t>(m)];
}

double PolygonDomain::signed_area() const {
    double s = 0.0;
    for (int k = 0; k < edge_count(); ++k) s += cross(vertex(k), vertex(k + 1));
    return 0.5 * s;
}

double PolygonDomain::perimeter() const {
    double s = 0.0;
    for (int k = 0; k < edge_count(); ++k) s += (vertex(k + 1) - vertex(k)).norm();
    return s;
}

RectF PolygonDomain::bounding_box() const {
    RectF r{vertices[0].x, vertices[0].y, vertices[0].x, vertices[0].y};
    for (const Vec2& v : vertices) {
        r.x0 = std::min(r.x0, v.x);
        r.y0 = std::min(r.y0, v.y);
        r.x1 = std::max(r.x1, v.x);
        r.y1 = std::max(r.y1, v.y);
    }
    return r;
}

bool PolygonDomain::contains(const Vec2& p) const {
    bool inside = false;
    for (int k = 0; k < edge_count(); ++k) {
        const Vec2 a = vertex(k);
        const Vec2 b = vertex(k + 1);
        if ((a.y > p.y) != (b.y > p.y)) {
            const double xi = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if (p.x < xi) inside = !inside;
        }
    }
    return inside;
}

double PolygonDomain::boundary_distance(const Vec2& p) const {
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < edge_count(); ++k)
        best = std::min(best, segment_distance(p, vertex(k), vertex(k + 1)));
    return best;
}

bool PolygonDomain::rect_inside(const RectF& r) const {
    const Vec2 corners[4] = {{r.x0, r.y0}, {r.x1, r.y0}, {r.x1, r.y1}, {r.x0, r.y1}};
    for (const Vec2& c : corners)
        if (!contains(c) && boundary_distance(c) > 1e-12) return false;
    // No boundary edge may intrude into the open rectangle. A clipped straight
    // segment with endpoints in the closed rectangle either lies entirely on
    // the frame or has a strictly interior midpoint.
    const double margin = 1e-12 * (1.0 + r.width() + r.height());
    for (int k = 0; k < edge_count(); ++k) {
        const Vec2 a = vertex(k);
        const Vec2 b = vertex(k + 1);
        double t0 = 0.0;
        double t1 = 1.0;
        if (!clip_segment(a, b, r, t0, t1)) continue;
        if (t1 - t0 <= 1e-12) continue;
        const Vec2 m = a + (b - a) * (0.5 * (t0 + t1));
        if (m.x > r.x0 + margin && m.x < r.x1 - margin && m.y > r.y0 + margin &&
            m.y < r.y1 - margin)
            return false;
    }
    return true;
}

PolygonDomain make_polygon(std::vector<Vec2> vertices) {
    const int n = static_cast<int>(vertices.size());
    if (n < 3) fail(ErrorKind::Parameter, "polygon needs at least 3 vertices");
    PolygonDomain poly{std::move(vertices)};
    const RectF bb = poly.bounding_box();
    const double scale = std::max({bb.width(), bb.height(), 1e-12});
    for (int k = 0; k < n; ++k)
        if ((poly.vertex(k + 1) - poly.vertex(k)).norm() <= 1e-12 * scale)
            fail(ErrorKind::Parameter, "polygon has a repeated vertex");
    for (int k = 0; k < n; ++k) {
        const Vec2 ein = poly.vertex(k) - poly.vertex(k - 1);
        const Vec2 eout = poly.vertex(k + 1) - poly.vertex(k);
        if (std::abs(cross(ein, eout)) <= 1e-12 * ein.norm() * eout.norm())
            fail(ErrorKind::Parameter, "polygon has a collinear vertex");
    }
    if (poly.signed_area() <= 0.0)
        fail(ErrorKind::Parameter, "polygon must wind counterclockwise");
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (j == i + 1 || (i == 0 && j == n - 1)) continue;  // adjacent edges share a vertex
            if (segments_meet(poly.vertex(i), poly.vertex(i + 1), poly.vertex(j),
                              poly.vertex(j + 1)))
                fail(ErrorKind::Parameter, "polygon edges cross");
        }
    }
    return poly;
}

PolygonDomain polygon_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parameter, std::string("polygon JSON is malformed: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("vertices") || !doc["vertices"].is_array())
        fail(ErrorKind::Parameter, "polygon JSON needs a vertices array");
    std::vector<Vec2> verts;
    for (const auto& item : doc["vertices"]) {
        if (!item.is_array() || item.size() != 2 || !item[0].is_number() || !item[1].is_number())
            fail(ErrorKind::Parameter, "polygon vertex must be a pair of numbers");
        verts.push_back({item[0].get<double>(), item[1].get<double>()});
    }
    return make_polygon(std::move(verts));
}

// ---------------------------------------------------------------------------
// Frames and charts
// ---------------------------------------------------------------------------

RigidMotion FrameMap::motion_to_global(const RigidMotion& m) const {
    // R (omega J f + b) with f = R^T (x - shift) gives omega J x + R b - omega J shift.
    RigidMotion g;
    g.omega = m.omega;
    g.b.x = cos_a * m.b.x - sin_a * m.b.y + m.omega * shift.y;
    g.b.y = sin_a * m.b.x + cos_a * m.b.y - m.omega * shift.x;
    return g;
}

FrameMap FrameMap::with_up_direction(const Vec2& up, const Vec2& shift) {
    const double len = up.norm();
    if (!(len > 0.0)) fail(ErrorKind::Parameter, "frame direction must be nonzero");
    FrameMap f;
    f.cos_a = up.y / len;
    f.sin_a = -up.x / len;
    f.shift = shift;
    return f;
}

double BoundaryChart::psi(double x) const {
    switch (shape) {
        case ChartShape::Edge:
            return mu_core;
        case ChartShape::ConvexCorner:
            return 2.0 * mu_core - cbar * std::abs(x);
        case ChartShape::ReflexCorner:
            return std::min(mu_core + cbar * std::abs(x), 2.0 * mu_core);
    }
    return mu_core;
}

bool BoundaryChart::in_core(const Vec2& global_point, double tol) const {
    const Vec2 f = frame.to_frame(global_point);
    if (std::abs(f.x) > mu_core + tol || f.y < -mu_core - tol) return false;
    return f.y <= psi(f.x) + tol;
}

bool BoundaryChart::in_outer(const Vec2& global_point, double tol) const {
    const double w = 2.0 * mu_core;
    const Vec2 f = frame.to_frame(global_point);
    if (std::abs(f.x) > w + tol || f.y < -w - tol) return false;
    return f.y <= psi(f.x) + tol;
}

RectF BoundaryChart::window_hull() const {
    const double w = 2.0 * mu_core;
    const Vec2 c0 = frame.to_global({-w, -w});
    RectF r{c0.x, c0.y, c0.x, c0.y};
    for (const Vec2& f : {Vec2{w, -w}, Vec2{-w, w}, Vec2{w, w}}) {
        const Vec2 c = frame.to_global(f);
        r.x0 = std::min(r.x0, c.x);
        r.y0 = std::min(r.y0, c.y);
        r.x1 = std::max(r.x1, c.x);
        r.y1 = std::max(r.y1, c.y);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Atlas construction
// ---------------------------------------------------------------------------

namespace {

// Interior charts live on a half-pitch lattice so that neighboring cores
// overlap on a quarter-chart-width band; a partition would leave the minimal
// overlap area at zero and the gluing step with nothing to chain through.
constexpr double kTilePitchFactor = 0.5;    // lattice pitch / mu_chart
constexpr double kTileCoreFactor = 0.375;   // core half-side / mu_chart
constexpr double kTileMarginFactor = 0.875; // contained half-side / mu_chart

struct VertexGeometry {
    double turn = 0.0;  // exterior turning angle, positive at convex corners
    Vec2 dout;          // outgoing edge direction, unit length
};

VertexGeometry vertex_geometry(const PolygonDomain& domain, int k) {
    const Vec2 ein = domain.vertex(k) - domain.vertex(k - 1);
    const Vec2 eout = domain.vertex(k + 1) - domain.vertex(k);
    VertexGeometry vg;
    vg.turn = std::atan2(cross(ein, eout), ein.dot(eout));
    vg.dout = eout * (1.0 / eout.norm());
    return vg;
}

BoundaryChart corner_chart(const PolygonDomain& domain, int k, double mu_chart) {
    const VertexGeometry vg = vertex_geometry(domain, k);
    if (std::abs(vg.turn) > 0.5 * kPi + 1e-9) {
        std::ostringstream os;
        os << "corner at (" << domain.vertex(k).x << ", " << domain.vertex(k).y
           << ") is too sharp for a Lipschitz chart";
        fail(ErrorKind::Atlas, os.str());
    }
    const bool convex = vg.turn > 0.0;
    const double theta = kPi - vg.turn;  // interior angle
    // Interior bisector: rotate the outgoing direction counterclockwise by
    // half the interior angle.
    const double ch = std::cos(0.5 * theta);
    const double sh = std::sin(0.5 * theta);
    const Vec2 dbis{ch * vg.dout.x - sh * vg.dout.y, sh * vg.dout.x + ch * vg.dout.y};
    BoundaryChart chart;
    // A reflex chart's core must reach past the adjacent edge charts' first
    // anchors (which keep a full window half-width clear of the vertex), so
    // its half-width is doubled; the census below still verifies the larger
    // window stays inside the domain.
    chart.mu_core = convex ? mu_chart : 2.0 * mu_chart;
    chart.cbar = std::min(std::tan(0.5 * std::abs(vg.turn)), 1.0);
    chart.shape = convex ? ChartShape::ConvexCorner : ChartShape::ReflexCorner;
    chart.anchor_vertex = k;
    const double depth = convex ? 2.0 * chart.mu_core : chart.mu_core;
    chart.frame = FrameMap::with_up_direction(dbis * -1.0, domain.vertex(k) + dbis * depth);
    return chart;
}

}  // namespace

bool DomainAtlas::overlap_graph_connected() const {
    const int m = chart_count();
    if (m <= 1) return true;
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(m));
    for (const auto& pr : overlap_pairs) {
        adj[static_cast<std::size_t>(pr[0])].push_back(pr[1]);
        adj[static_cast<std::size_t>(pr[1])].push_back(pr[0]);
    }
    std::vector<char> seen(static_cast<std::size_t>(m), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int reached = 1;
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int w : adj[static_cast<std::size_t>(v)]) {
            if (!seen[static_cast<std::size_t>(w)]) {
                seen[static_cast<std::size_t>(w)] = 1;
                ++reached;
                stack.push_back(w);
            }
        }
    }
    return reached == m;
}

DomainAtlas build_atlas(const PolygonDomain& domain, double mu_chart, const AtlasConfig& config) {
    if (domain.edge_count() < 3) fail(ErrorKind::Parameter, "atlas needs a valid polygon");
    if (!(mu_chart > 0.0)) fail(ErrorKind::Parameter, "chart half-width must be positive");
    if (config.census_n < 64 || (config.census_n & (config.census_n - 1)) != 0)
        fail(ErrorKind::Parameter, "census resolution must be a power of two, at least 64");

    const int nv = domain.edge_count();
    double min_edge = std::numeric_limits<double>::infinity();
    for (int k = 0; k < nv; ++k)
        min_edge = std::min(min_edge, (domain.vertex(k + 1) - domain.vertex(k)).norm());
    if (mu_chart > 0.25 * min_edge * (1.0 + 1e-12))
        fail(ErrorKind::Parameter,
             "chart half-width must not exceed a quarter of the shortest edge");

    DomainAtlas atlas{domain, mu_chart, {}, {}, 0.0, 0.0, config.census_n, 0.0, {}};

    // Corner charts first (they gate the geometry), then edge charts with
    // anchors kept a full window half-width short of each endpoint so the
    // window cannot poke past a convex corner.
    for (int k = 0; k < nv; ++k) atlas.boundary.push_back(corner_chart(domain, k, mu_chart));
    for (int k = 0; k < nv; ++k) {
        const Vec2 a = domain.vertex(k);
        const Vec2 b = domain.vertex(k + 1);
        const double len = (b - a).norm();
        const Vec2 dir = (b - a) * (1.0 / len);
        const Vec2 inward{-dir.y, dir.x};
        const double lo = 2.0 * mu_chart;
        const double hi = len - 2.0 * mu_chart;
        const int count = (hi - lo < 1e-12 * len)
                              ? 1
                              : static_cast<int>(std::ceil((hi - lo) / mu_chart - 1e-9)) + 1;
        for (int s = 0; s < count; ++s) {
            const double t = (count == 1) ? 0.5 * (lo + hi)
                                          : lo + (hi - lo) * static_cast<double>(s) / (count - 1);
            const Vec2 anchor = a + dir * t;
            BoundaryChart chart;
            chart.mu_core = mu_chart;
            chart.cbar = 0.0;
            chart.shape = ChartShape::Edge;
            chart.anchor_edge = k;
            chart.frame =
                FrameMap::with_up_direction({dir.y, -dir.x}, anchor + inward * mu_chart);
            atlas.boundary.push_back(chart);
        }
    }
    const int nb = static_cast<int>(atlas.boundary.size());

    // Census raster over the bounding box.
    const RectF bb = domain.bounding_box();
    const double span = std::max(bb.width(), bb.height());
    const Grid census(bb.center(), 0.5 * span, config.census_n);
    atlas.census_h = census.spacing();

    // Interior charts: overlapping half-pitch lattice owning every census cell
    // that no boundary core claims.
    const double pitch = kTilePitchFactor * mu_chart;
    const int tnx = static_cast<int>(std::ceil(bb.width() / pitch)) + 1;
    const int tny = static_cast<int>(std::ceil(bb.height() / pitch)) + 1;
    std::vector<char> tile_used(static_cast<std::size_t>(tnx) * tny, 0);
    const auto tile_of = [&](const Vec2& c, int& ti, int& tj) {
        ti = std::clamp(static_cast<int>(std::floor((c.x - bb.x0) / pitch)), 0, tnx - 1);
        tj = std::clamp(static_cast<int>(std::floor((c.y - bb.y0) / pitch)), 0, tny - 1);
    };
    for (int j = 0; j < config.census_n; ++j) {
        for (int i = 0; i < config.census_n; ++i) {
            const Vec2 c = census.cell_center(i, j);
            if (!domain.contains(c)) continue;
            bool claimed = false;
            for (const BoundaryChart& chart : atlas.boundary)
                // The tolerance absorbs census centers that land on a chart's
                // core rim to within rounding (a 45 degree edge over a sqrt(2)
                // bounding box puts centers exactly on the rim lines).
                if (chart.in_core(c, 1e-9 * mu_chart)) {
                    claimed = true;
                    break;
                }
            if (claimed) continue;
            int ti = 0;
            int tj = 0;
            tile_of(c, ti, tj);
            tile_used[static_cast<std::size_t>(tj) * tnx + ti] = 1;
        }
    }
    std::unordered_map<std::int64_t, int> tile_chart;
    for (int tj = 0; tj < tny; ++tj) {
        for (int ti = 0; ti < tnx; ++ti) {
            if (!tile_used[static_cast<std::size_t>(tj) * tnx + ti]) continue;
            InteriorChart chart;
            chart.center = {bb.x0 + pitch * (ti + 0.5), bb.y0 + pitch * (tj + 0.5)};
            chart.core_half = kTileCoreFactor * mu_chart;
            if (!domain.rect_inside(centered_square(chart.center, kTileMarginFactor * mu_chart)))
                fail(ErrorKind::Atlas,
                     "interior chart escapes the domain; choose a smaller chart half-width");
            tile_chart[static_cast<std::int64_t>(tj) * tnx + ti] =
                nb + static_cast<int>(atlas.interior.size());
            atlas.interior.push_back(chart);
        }
    }

    // Invariant (one-sided): every census center a boundary chart safely
    // claims must lie in the domain. The converse fails legitimately where a
    // reflex window reaches into the domain past its own graph.
    for (const BoundaryChart& chart : atlas.boundary) {
        const double band = 1.5 * census.spacing() * (1.0 + chart.cbar);
        for (int j = 0; j < config.census_n; ++j) {
            for (int i = 0; i < config.census_n; ++i) {
                const Vec2 c = census.cell_center(i, j);
                if (!chart.in_outer(c, -band)) continue;
                if (!domain.contains(c)) {
                    std::ostringstream os;
                    os << "chart window escapes the domain near (" << c.x << ", " << c.y << ")";
                    fail(ErrorKind::Atlas, os.str());
                }
            }
        }
    }

    // Invariant: the polygon boundary is covered by the boundary cores.
    const double step = 0.5 * census.spacing();
    for (int k = 0; k < nv; ++k) {
        const Vec2 a = domain.vertex(k);
        const Vec2 b = domain.vertex(k + 1);
        const int m = std::max(1, static_cast<int>(std::ceil((b - a).norm() / step)));
        for (int s = 0; s <= m; ++s) {
            const Vec2 pt = a + (b - a) * (static_cast<double>(s) / m);
            bool covered = false;
            for (const BoundaryChart& chart : atlas.boundary)
                if (chart.in_core(pt, 1e-9 * mu_chart)) {
                    covered = true;
                    break;
                }
            if (!covered) {
                std::ostringstream os;
                os << "boundary point (" << pt.x << ", " << pt.y
                   << ") is not covered by any chart core";
                fail(ErrorKind::Atlas, os.str());
            }
        }
    }

    // Pairwise core overlaps measured on the census raster.
    std::map<std::pair<int, int>, std::int64_t> pair_counts;
    std::vector<int> members;
    for (int j = 0; j < config.census_n; ++j) {
        for (int i = 0; i < config.census_n; ++i) {
            const Vec2 c = census.cell_center(i, j);
            members.clear();
            for (int kb = 0; kb < nb; ++kb)
                if (atlas.boundary[static_cast<std::size_t>(kb)].in_core(c))
                    members.push_back(kb);
            int ti = 0;
            int tj = 0;
            tile_of(c, ti, tj);
            for (int dj = -1; dj <= 1; ++dj) {
                for (int di = -1; di <= 1; ++di) {
                    const int ui = ti + di;
                    const int uj = tj + dj;
                    if (ui < 0 || ui >= tnx || uj < 0 || uj >= tny) continue;
                    const auto it = tile_chart.find(static_cast<std::int64_t>(uj) * tnx + ui);
                    if (it == tile_chart.end()) continue;
                    const InteriorChart& chart =
                        atlas.interior[static_cast<std::size_t>(it->second - nb)];
                    if (chart.core().contains(c)) members.push_back(it->second);
                }
            }
            for (std::size_t u = 0; u < members.size(); ++u)
                for (std::size_t v = u + 1; v < members.size(); ++v)
                    ++pair_counts[{std::min(members[u], members[v]),
                                   std::max(members[u], members[v])}];
        }
    }
    if (pair_counts.empty()) fail(ErrorKind::Atlas, "chart cores do not overlap anywhere");
    // Tangent cores can share a sliver of a few census cells; such pairs are
    // useless for gluing and would make the overlap floor meaningless, so
    // only substantive overlaps enter the pair list and the floor.
    const double sliver_area = mu_chart * mu_chart / 64.0;
    std::int64_t min_count = std::numeric_limits<std::int64_t>::max();
    const double cell_area = census.spacing() * census.spacing();
    for (const auto& [key, count] : pair_counts) {
        if (static_cast<double>(count) * cell_area < sliver_area) continue;
        atlas.overlap_pairs.push_back({key.first, key.second, static_cast<int>(count)});
        min_count = std::min(min_count, count);
    }
    if (atlas.overlap_pairs.empty())
        fail(ErrorKind::Atlas, "no chart pair overlaps substantively");
    atlas.eta_overlap = static_cast<double>(min_count) * cell_area;

    // Default small-jump gate: the gate must keep the exceptional area within
    // half the minimal overlap, and the exceptional area scales like the
    // square of the jump length with an empirical prior of 16.
    atlas.c_hat_glob = (config.c_hat_glob > 0.0) ? config.c_hat_glob
                                                 : 0.25 * std::sqrt(0.5 * atlas.eta_overlap);
    return atlas;
}

// ---------------------------------------------------------------------------
// Field pullback
// ---------------------------------------------------------------------------

namespace {

// Bilinear evaluation of the stored field at q, reading the corner values of
// the grid cell containing q. Ties on lattice lines resolve toward the side
// of `hint` (the querying cell's center mapped into global coordinates), so
// per-cell branches survive the pullback bit for bit; queries outside the
// grid extrapolate from the clamped boundary cell.
Vec2 eval_global(const DisplacementField& field, const Vec2& q, const Vec2& hint) {
    const Grid& g = field.grid();
    int i = g.clamp_cell_x(q.x);
    int j = g.clamp_cell_y(q.y);
    if (i > 0 && q.x == g.corner_x(i) && hint.x < q.x) --i;
    if (j > 0 && q.y == g.corner_y(j) && hint.y < q.y) --j;
    const double wx = (q.x - g.corner_x(i)) / g.spacing();
    const double wy = (q.y - g.corner_y(j)) / g.spacing();
    const Vec2 v00 = field.corner_value(i, j, 0);
    const Vec2 v10 = field.corner_value(i, j, 1);
    const Vec2 v01 = field.corner_value(i, j, 2);
    const Vec2 v11 = field.corner_value(i, j, 3);
    Vec2 b0;  // value on the bottom corner row
    Vec2 b1;
    if (wx == 0.0) {
        b0 = v00;
        b1 = v01;
    } else if (wx == 1.0) {
        b0 = v10;
        b1 = v11;
    } else {
        b0 = v00 * (1.0 - wx) + v10 * wx;
        b1 = v01 * (1.0 - wx) + v11 * wx;
    }
    if (wy == 0.0) return b0;
    if (wy == 1.0) return b1;
    return b0 * (1.0 - wy) + b1 * wy;
}

FieldSampler pullback_sampler(const DisplacementField& field, const FrameMap& fr) {
    return [&field, fr](Vec2 p, Vec2 cc) -> Vec2 {
        const Vec2 u = eval_global(field, fr.to_global(p), fr.to_global(cc));
        return {fr.cos_a * u.x + fr.sin_a * u.y, -fr.sin_a * u.x + fr.cos_a * u.y};
    };
}

// Real-coordinate endpoints of the crack's maximal straight runs, coalesced
// from the unit edges (a crack set built edge by edge carries no segment
// list).
std::vector<std::array<Vec2, 2>> crack_run_segments(const CrackSet& crack) {
    std::vector<std::array<Vec2, 2>> runs;
    const Grid& g = crack.grid();
    std::map<std::pair<int, int>, std::vector<int>> lines;  // (axis, fixed) -> offsets
    for (const EdgeId& e : crack.edges()) {
        if (e.axis == 0)
            lines[{0, e.b}].push_back(e.a);
        else
            lines[{1, e.a}].push_back(e.b);
    }
    for (auto& [key, offs] : lines) {
        std::sort(offs.begin(), offs.end());
        std::size_t s = 0;
        while (s < offs.size()) {
            std::size_t t = s;
            while (t + 1 < offs.size() && offs[t + 1] == offs[t] + 1) ++t;
            const int from = offs[s];
            const int to = offs[t] + 1;
            if (key.first == 0)
                runs.push_back({Vec2{g.corner_x(from), g.corner_y(key.second)},
                                Vec2{g.corner_x(to), g.corner_y(key.second)}});
            else
                runs.push_back({Vec2{g.corner_x(key.second), g.corner_y(from)},
                                Vec2{g.corner_x(key.second), g.corner_y(to)}});
            s = t + 1;
        }
    }
    return runs;
}

struct AlignedInfo {
    bool aligned = false;
    int n_cells = 0;
};

// A chart window embeds into the global lattice when its rotation is a
// quarter turn, its width is a power-of-two number of field cells, and its
// corner lands on a field lattice point. Embedded windows reproduce the
// stored field and its crack exactly.
AlignedInfo detect_aligned(const Grid& g, const BoundaryChart& chart) {
    AlignedInfo info;
    const double ca = chart.frame.cos_a;
    const double sa = chart.frame.sin_a;
    const bool quarter = (std::abs(ca) < 1e-12 && std::abs(std::abs(sa) - 1.0) < 1e-12) ||
                         (std::abs(sa) < 1e-12 && std::abs(std::abs(ca) - 1.0) < 1e-12);
    if (!quarter) return info;
    const double cells = 4.0 * chart.mu_core / g.spacing();
    const double rounded = std::round(cells);
    if (std::abs(cells - rounded) > 1e-9 || rounded < 64.0 || rounded > 8192.0) return info;
    const int n = static_cast<int>(rounded);
    if ((n & (n - 1)) != 0) return info;
    const Vec2 w0 = chart.frame.to_global({-2.0 * chart.mu_core, -2.0 * chart.mu_core});
    const double fx = (w0.x - g.corner_x(0)) / g.spacing();
    const double fy = (w0.y - g.corner_y(0)) / g.spacing();
    if (std::abs(fx - std::round(fx)) > 1e-9 || std::abs(fy - std::round(fy)) > 1e-9)
        return info;
    info.aligned = true;
    info.n_cells = n;
    return info;
}

bool quad_meets_segment(const std::array<Vec2, 4>& quad, const Vec2& a, const Vec2& b) {
    for (int k = 0; k < 4; ++k)
        if (segments_meet(quad[static_cast<std::size_t>(k)],
                          quad[static_cast<std::size_t>((k + 1) % 4)], a, b))
            return true;
    // No side met: the segment is either fully inside or fully outside, and
    // one endpoint decides which (the quad is convex with CCW corners).
    for (int k = 0; k < 4; ++k) {
        const Vec2& p = quad[static_cast<std::size_t>(k)];
        const Vec2& r = quad[static_cast<std::size_t>((k + 1) % 4)];
        if (cross(r - p, a - p) < 0.0) return false;
    }
    return true;
}

// Chart-frame crack edges. An interior chart edge is marked when the segment
// joining its two adjacent cell centers crosses a crack run in global
// coordinates; this reproduces the crack exactly on lattice-embedded charts.
// Rotated charts additionally ring every cell whose mapped closed quad meets
// a run: the smeared cells are excluded from the gradient norms by their
// marked edges, and any pullback value mismatch happens only at mapped
// corners lying on a crack run, whose cells the ring rule always covers.
std::vector<EdgeId> pullback_crack_edges(const Grid& cg, const FrameMap& fr,
                                         const std::vector<std::array<Vec2, 2>>& runs,
                                         bool aligned) {
    std::vector<EdgeId> out;
    if (runs.empty()) return out;
    const int n = cg.cells_per_side();
    std::unordered_set<EdgeId, EdgeIdHash> marked;
    const auto crosses = [&](const Vec2& g1, const Vec2& g2) {
        for (const auto& r : runs)
            if (segments_meet(g1, g2, r[0], r[1])) return true;
        return false;
    };
    std::vector<Vec2> centers(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            centers[static_cast<std::size_t>(j) * n + i] = fr.to_global(cg.cell_center(i, j));
    const auto center_at = [&](int i, int j) -> const Vec2& {
        return centers[static_cast<std::size_t>(j) * n + i];
    };
    for (int b = 1; b < n; ++b)
        for (int a = 0; a < n; ++a)
            if (crosses(center_at(a, b - 1), center_at(a, b))) marked.insert({0, a, b});
    for (int a = 1; a < n; ++a)
        for (int b = 0; b < n; ++b)
            if (crosses(center_at(a - 1, b), center_at(a, b))) marked.insert({1, a, b});
    if (!aligned) {
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) {
                const std::array<Vec2, 4> quad{
                    fr.to_global(cg.corner_point(i, j)), fr.to_global(cg.corner_point(i + 1, j)),
                    fr.to_global(cg.corner_point(i + 1, j + 1)),
                    fr.to_global(cg.corner_point(i, j + 1))};
                bool hit = false;
                for (const auto& r : runs)
                    if (quad_meets_segment(quad, r[0], r[1])) {
                        hit = true;
                        break;
                    }
                if (!hit) continue;
                if (j >= 1) marked.insert({0, i, j});
                if (j + 1 <= n - 1) marked.insert({0, i, j + 1});
                if (i >= 1) marked.insert({1, i, j});
                if (i + 1 <= n - 1) marked.insert({1, i + 1, j});
            }
        }
    }
    out.assign(marked.begin(), marked.end());
    return out;
}

// ---------------------------------------------------------------------------
// Per-chart runs
// ---------------------------------------------------------------------------

struct ChartRun {
    ChartEstimate est;
    RegionMask kept;  // on the field grid
};

ChartRun run_boundary_chart(const DisplacementField& field, const RegionMask& omega,
                            const BoundaryChart& chart, int chart_id, double p, double q,
                            const GlobalConfig& config,
                            const std::vector<std::array<Vec2, 2>>& runs) {
    const Grid& g = field.grid();
    const AlignedInfo al = detect_aligned(g, chart);
    const int n_c = al.aligned ? al.n_cells : config.chart_n;
    const Grid cg({0.0, 0.0}, 2.0 * chart.mu_core, n_c);
    std::vector<double> psi(static_cast<std::size_t>(n_c) + 1);
    for (int k = 0; k <= n_c; ++k)
        psi[static_cast<std::size_t>(k)] =
            std::min(chart.psi(cg.corner_x(k)), 2.0 * chart.mu_core);
    const LipschitzGraphDomain dom = make_graph_domain(cg, std::move(psi), chart.cbar);

    const std::vector<EdgeId> edges = pullback_crack_edges(cg, chart.frame, runs, al.aligned);
    const CrackSet crack = CrackSet::from_edges(cg, edges);
    const DisplacementField cf = build_field(cg, crack, pullback_sampler(field, chart.frame));
    const BoundaryReport br = boundary_estimate(cf, dom, p, q, config.boundary);

    ChartRun run{ChartEstimate{}, RegionMask(g)};
    run.est.is_boundary = true;
    run.est.index = chart_id;
    run.est.motion = chart.frame.motion_to_global(br.rigid);
    run.est.resid_u = br.residual_u_q;
    run.est.resid_grad = br.residual_grad_p;
    run.est.elastic = br.elastic;
    run.est.jump_length = br.jump_length;
    run.est.fallback = br.fallback;
    if (!br.fallback) {
        const RegionMask kept_frame = dom.inner.set_difference(br.removed);
        const RectF hull = chart.window_hull();
        const int i0 = g.clamp_cell_x(hull.x0);
        const int i1 = g.clamp_cell_x(hull.x1);
        const int j0 = g.clamp_cell_y(hull.y0);
        const int j1 = g.clamp_cell_y(hull.y1);
        for (int j = j0; j <= j1; ++j) {
            for (int i = i0; i <= i1; ++i) {
                if (!omega.contains(i, j)) continue;
                const Vec2 c = g.cell_center(i, j);
                if (!chart.in_core(c)) continue;
                const Vec2 f = chart.frame.to_frame(c);
                if (kept_frame.contains(cg.clamp_cell_x(f.x), cg.clamp_cell_y(f.y)))
                    run.kept.set(i, j);
            }
        }
        run.est.kept_area = run.kept.area();
        run.est.usable = !run.kept.empty();
    }
    return run;
}

ChartRun run_interior_chart(const DisplacementField& field, const RegionMask& omega,
                            const InteriorChart& chart, int chart_id, double p, double q,
                            const GlobalConfig& config) {
    const Grid& g = field.grid();
    const double h = g.spacing();
    const double dh = 2.0 * chart.core_half;
    // Outward snap of the doubled square to the field lattice plus a one-cell
    // pad: the snapped square then contains the ideal doubled square with
    // room to spare, and the half-shrunk measured square still contains the
    // chart core whenever the run keeps its full half-side.
    int ia0 = static_cast<int>(std::floor((chart.center.x - dh - g.corner_x(0)) / h)) - 1;
    int ia1 = static_cast<int>(std::ceil((chart.center.x + dh - g.corner_x(0)) / h)) + 1;
    int jb0 = static_cast<int>(std::floor((chart.center.y - dh - g.corner_y(0)) / h)) - 1;
    int jb1 = static_cast<int>(std::ceil((chart.center.y + dh - g.corner_y(0)) / h)) + 1;
    int w = std::max(ia1 - ia0, jb1 - jb0);
    // An odd cell count would leave the dyadic hierarchy without a single
    // usable scale, so round up to even.
    if (w % 2 != 0) ++w;
    ia1 = ia0 + w;
    jb1 = jb0 + w;
    if (ia0 < 0 || jb0 < 0 || ia1 > g.cells_per_side() || jb1 > g.cells_per_side())
        fail(ErrorKind::Precondition, "field grid does not contain an interior chart window");
    const double mu_sub = 0.5 * w * h;
    const Grid sub({g.corner_x(ia0) + mu_sub, g.corner_y(jb0) + mu_sub}, mu_sub, w);

    std::vector<EdgeId> sub_edges;
    for (const EdgeId& e : field.crack().edges()) {
        if (e.axis == 0) {
            if (e.a >= ia0 && e.a < ia1 && e.b > jb0 && e.b < jb1)
                sub_edges.push_back({0, e.a - ia0, e.b - jb0});
        } else {
            if (e.a > ia0 && e.a < ia1 && e.b >= jb0 && e.b < jb1)
                sub_edges.push_back({1, e.a - ia0, e.b - jb0});
        }
    }
    const CrackSet sub_crack = CrackSet::from_edges(sub, sub_edges);
    const DisplacementField sf = build_field(sub, sub_crack, pullback_sampler(field, FrameMap{}));
    LocalKornConfig lc;
    lc.theta = config.theta_interior;
    const LocalKornReport lr = local_estimate(sf, p, q, lc);

    ChartRun run{ChartEstimate{}, RegionMask(g)};
    run.est.is_boundary = false;
    run.est.index = chart_id;
    run.est.motion = lr.rigid;  // the sub-window shares global coordinates
    run.est.resid_u = lr.residual_u_q;
    run.est.resid_grad = lr.residual_grad_p;
    run.est.elastic = lr.elastic;
    run.est.jump_length = lr.jump_length;
    run.est.fallback = lr.fallback;
    if (!lr.fallback) {
        const RegionMask kept_sub =
            RegionMask::from_rect(sub, centered_square(sub.center(), lr.shrunk_mu))
                .set_difference(lr.exceptional);
        kept_sub.for_each_cell([&](int i, int j) {
            if (omega.contains(ia0 + i, jb0 + j)) run.kept.set(ia0 + i, jb0 + j);
        });
        run.est.kept_area = run.kept.area();
        run.est.usable = !run.kept.empty();
    }
    return run;
}

RegionMask boundary_core_mask(const Grid& g, const RegionMask& omega,
                              const BoundaryChart& chart) {
    RegionMask mask(g);
    const RectF hull = chart.window_hull();
    const int i0 = g.clamp_cell_x(hull.x0);
    const int i1 = g.clamp_cell_x(hull.x1);
    const int j0 = g.clamp_cell_y(hull.y0);
    const int j1 = g.clamp_cell_y(hull.y1);
    for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i)
            if (omega.contains(i, j) && chart.in_core(g.cell_center(i, j))) mask.set(i, j);
    return mask;
}

}  // namespace

// ---------------------------------------------------------------------------
// Global estimate
// ---------------------------------------------------------------------------

GlobalKornReport global_estimate(const DisplacementField& field, const DomainAtlas& atlas,
                                 double p, double q, const GlobalConfig& config) {
    const Grid& g = field.grid();
    if (!(p >= 1.0) || !(q >= 1.0)) fail(ErrorKind::Parameter, "exponents must be at least 1");
    if (atlas.chart_count() == 0) fail(ErrorKind::Parameter, "atlas has no charts");
    if (config.chart_n < 64 || (config.chart_n & (config.chart_n - 1)) != 0)
        fail(ErrorKind::Parameter, "chart resolution must be a power of two, at least 64");
    const RectF bb = atlas.domain.bounding_box();
    const RectF gb = g.bounds();
    if (bb.x0 < gb.x0 - 1e-12 || bb.y0 < gb.y0 - 1e-12 || bb.x1 > gb.x1 + 1e-12 ||
        bb.y1 > gb.y1 + 1e-12)
        fail(ErrorKind::Precondition, "field grid does not cover the domain");
    if (g.spacing() > atlas.mu_chart / 16.0 * (1.0 + 1e-12))
        fail(ErrorKind::Resolution, "field spacing is too coarse for the chart half-width");
    if (!atlas.overlap_graph_connected())
        fail(ErrorKind::Atlas, "chart overlap graph is disconnected");

    GlobalKornReport rep{RigidMotion{}, -1, RegionMask(g), RegionMask(g)};
    rep.eta_overlap = atlas.eta_overlap;
    rep.c_hat_glob = (config.c_hat_glob > 0.0) ? config.c_hat_glob : atlas.c_hat_glob;
    rep.domain_cells =
        RegionMask::from_predicate(g, [&](Vec2 c) { return atlas.domain.contains(c); });
    rep.jump_length = field.crack().total_length();
    const StrainField strains = strain(field);
    rep.elastic = lp_norm(strains, rep.domain_cells, 2.0);

    if (rep.jump_length > rep.c_hat_glob) {
        rep.gate_failed = true;
        rep.exceptional = rep.domain_cells;
        rep.exceptional_area = rep.exceptional.area();
        return rep;
    }

    const std::vector<std::array<Vec2, 2>> runs = crack_run_segments(field.crack());
    const int nb = static_cast<int>(atlas.boundary.size());
    std::vector<ChartRun> chart_runs;
    chart_runs.reserve(static_cast<std::size_t>(atlas.chart_count()));
    for (int k = 0; k < nb; ++k)
        chart_runs.push_back(run_boundary_chart(field, rep.domain_cells,
                                                atlas.boundary[static_cast<std::size_t>(k)], k,
                                                p, q, config, runs));
    for (int k = 0; k < static_cast<int>(atlas.interior.size()); ++k)
        chart_runs.push_back(run_interior_chart(field, rep.domain_cells,
                                                atlas.interior[static_cast<std::size_t>(k)],
                                                nb + k, p, q, config));

    RegionMask kept_all(g);
    for (const ChartRun& run : chart_runs) {
        rep.charts.push_back(run.est);
        if (run.est.usable) kept_all = kept_all.set_union(run.kept);
    }
    rep.exceptional = rep.domain_cells.set_difference(kept_all);
    rep.exceptional_area = rep.exceptional.area();
    if (rep.exceptional_area > 0.5 * atlas.eta_overlap) {
        rep.budget_failed = true;
        rep.exceptional = rep.domain_cells;
        rep.exceptional_area = rep.exceptional.area();
        return rep;
    }

    int ref = -1;
    for (int k = 0; k < static_cast<int>(chart_runs.size()); ++k)
        if (chart_runs[static_cast<std::size_t>(k)].est.usable) {
            ref = k;
            break;
        }
    if (ref < 0) {
        rep.budget_failed = true;
        rep.exceptional = rep.domain_cells;
        rep.exceptional_area = rep.exceptional.area();
        return rep;
    }
    rep.reference_chart = ref;
    rep.motion = chart_runs[static_cast<std::size_t>(ref)].est.motion;
    const RegionMask keep = rep.domain_cells.set_difference(rep.exceptional);

    // Core masks on the field raster, for the gluing diagnostics.
    std::vector<RegionMask> cores;
    cores.reserve(static_cast<std::size_t>(atlas.chart_count()));
    for (int k = 0; k < nb; ++k)
        cores.push_back(
            boundary_core_mask(g, rep.domain_cells, atlas.boundary[static_cast<std::size_t>(k)]));
    for (const InteriorChart& chart : atlas.interior)
        cores.push_back(
            RegionMask::from_rect(g, chart.core()).set_intersection(rep.domain_cells));

    for (const auto& pr : atlas.overlap_pairs) {
        OverlapCheck oc;
        oc.i = pr[0];
        oc.j = pr[1];
        const RegionMask overlap = cores[static_cast<std::size_t>(oc.i)].set_intersection(
            cores[static_cast<std::size_t>(oc.j)]);
        oc.area = overlap.area();
        const RegionMask off = overlap.set_difference(rep.exceptional);
        oc.area_off_e = off.area();
        const ChartEstimate& ei = rep.charts[static_cast<std::size_t>(oc.i)];
        const ChartEstimate& ej = rep.charts[static_cast<std::size_t>(oc.j)];
        if (ei.usable && ej.usable && !off.empty()) {
            oc.rigid_dist = rigid_distance(ei.motion, ej.motion, off, q);
            oc.tri_lhs = oc.rigid_dist;
            const auto dev = [&](const RigidMotion& a) {
                return lp_norm_cells(g, off, q, [&](int i, int j) {
                    return (field.center_value(i, j) - a.at(g.cell_center(i, j))).norm();
                });
            };
            oc.tri_rhs = dev(ei.motion) + dev(ej.motion);
        }
        rep.overlaps.push_back(oc);
    }

    const RigidMotion aref = rep.motion;
    const auto resid_against = [&](const RigidMotion& a) {
        return lp_norm_cells(g, keep, q, [&](int i, int j) {
            return (field.center_value(i, j) - a.at(g.cell_center(i, j))).norm();
        });
    };
    rep.resid_u_q = resid_against(aref);

    RegionMask jump_adjacent(g);
    for (const EdgeId& e : field.crack().edges()) {
        if (e.axis == 0) {
            if (g.valid_cell(e.a, e.b - 1)) jump_adjacent.set(e.a, e.b - 1);
            if (g.valid_cell(e.a, e.b)) jump_adjacent.set(e.a, e.b);
        } else {
            if (g.valid_cell(e.a - 1, e.b)) jump_adjacent.set(e.a - 1, e.b);
            if (g.valid_cell(e.a, e.b)) jump_adjacent.set(e.a, e.b);
        }
    }
    const RegionMask grad_mask = keep.set_difference(jump_adjacent);
    rep.excluded_area = keep.set_intersection(jump_adjacent).area();
    const Mat2 skew = aref.matrix();
    rep.resid_grad_p = lp_norm_cells(g, grad_mask, p, [&](int i, int j) {
        return (field.cell_gradient(i, j) - skew).frobenius();
    });
    rep.const_u = (rep.elastic > 0.0) ? rep.resid_u_q / rep.elastic : 0.0;
    rep.const_grad = (rep.elastic > 0.0) ? rep.resid_grad_p / rep.elastic : 0.0;

    // Chart-choice stability: any usable chart's motion serves as the global
    // one up to a triangle-inequality factor.
    double max_rigid = 0.0;
    double worst_ratio = 1.0;
    double worst_bound = 1.0;
    for (int k = 0; k < static_cast<int>(chart_runs.size()); ++k) {
        if (k == ref || !chart_runs[static_cast<std::size_t>(k)].est.usable) continue;
        const RigidMotion& ak = chart_runs[static_cast<std::size_t>(k)].est.motion;
        const double dist = rigid_distance(aref, ak, keep, q);
        max_rigid = std::max(max_rigid, dist);
        if (rep.resid_u_q > 1e-300) {
            worst_ratio = std::max(worst_ratio, resid_against(ak) / rep.resid_u_q);
            worst_bound = std::max(worst_bound, 1.0 + dist / rep.resid_u_q);
        }
    }
    rep.max_pairwise_rigid = max_rigid;
    rep.chart_choice_ratio = worst_ratio;
    rep.chart_choice_bound = worst_bound;
    return rep;
}

// ---------------------------------------------------------------------------
// Piecewise-rigid recovery
// ---------------------------------------------------------------------------

SbvRecoveryReport sbv_recovery(const DisplacementField& field, const PolygonDomain& domain,
                               double epsilon_area, const RecoveryConfig& config) {
    if (!(epsilon_area > 0.0)) fail(ErrorKind::Parameter, "target area must be positive");
    if (config.coarsest_tiles < 1)
        fail(ErrorKind::Parameter, "coarsest tiling must have at least one tile per side");
    if (!(config.c_bar > 0.0))
        fail(ErrorKind::Parameter, "crack-density threshold must be positive");
    const Grid& g = field.grid();
    const int n = g.cells_per_side();
    if (n % config.coarsest_tiles != 0)
        fail(ErrorKind::Parameter, "coarsest tiling must divide the grid");
    const RegionMask omega =
        RegionMask::from_predicate(g, [&](Vec2 c) { return domain.contains(c); });
    const CrackSet& crack = field.crack();

    for (int tiles = config.coarsest_tiles; tiles <= n; tiles *= 2) {
        const int tc = n / tiles;
        if (tc < 4) break;  // tiles this small cannot hold the enlarged square test
        const double s = tc * g.spacing();
        RegionMask excep(g);
        int bad = 0;
        for (int tj = 0; tj < tiles; ++tj) {
            for (int ti = 0; ti < tiles; ++ti) {
                const RectF tile{g.corner_x(ti * tc), g.corner_y(tj * tc),
                                 g.corner_x((ti + 1) * tc), g.corner_y((tj + 1) * tc)};
                const RectF enlarged = tile.scaled_about_center(1.5);
                const bool escapes = !domain.rect_inside(enlarged);
                const bool jumpy = crack.length_in(enlarged) >= config.c_bar * s - 1e-12;
                if (escapes || jumpy) {
                    ++bad;
                    for (int j = tj * tc; j < (tj + 1) * tc; ++j)
                        for (int i = ti * tc; i < (ti + 1) * tc; ++i)
                            if (omega.contains(i, j)) excep.set(i, j);
                    continue;
                }
                if (crack.empty()) continue;
                // Good tile with jump nearby: cover the local crack by its
                // merged component boxes and ring its adjacent cells, so the
                // recovered displacement is jump-free off the exceptional set.
                std::vector<EdgeId> local;
                for (const EdgeId& e : crack.edges())
                    if (crack.edge_rect(e).touches(enlarged)) local.push_back(e);
                if (local.empty()) continue;
                const CrackSet piece = CrackSet::from_edges(g, local);
                const CrackCover cover = cover_cracks(piece, 0.0, 1.0, 0.5);
                cover.rects.covered_cells().for_each_cell([&](int i, int j) {
                    if (omega.contains(i, j)) excep.set(i, j);
                });
                for (const EdgeId& e : local) {
                    const int i0 = (e.axis == 0) ? e.a : e.a - 1;
                    const int j0 = (e.axis == 0) ? e.b - 1 : e.b;
                    const int i1 = e.a;
                    const int j1 = e.b;
                    if (g.valid_cell(i0, j0) && omega.contains(i0, j0)) excep.set(i0, j0);
                    if (g.valid_cell(i1, j1) && omega.contains(i1, j1)) excep.set(i1, j1);
                }
            }
        }
        if (excep.area() <= epsilon_area) {
            SbvRecoveryReport rep{excep};
            rep.area = excep.area();
            rep.perimeter = excep.perimeter(PerimeterConvention::ClosedDomain);
            rep.tile_scale = s;
            rep.tiles_per_side = tiles;
            rep.bad_tiles = bad;
            rep.jump_length = crack.total_length();
            rep.boundary_length = domain.perimeter();
            return rep;
        }
    }
    fail(ErrorKind::Resolution, "target exceptional area needs a finer grid");
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

std::string report_to_json(const GlobalKornReport& report) {
    nlohmann::json j;
    j["motion"] = {{"omega", report.motion.omega}, {"b", {report.motion.b.x, report.motion.b.y}}};
    j["reference_chart"] = report.reference_chart;
    j["exceptional_area"] = report.exceptional_area;
    j["resid_u_q"] = report.resid_u_q;
    j["resid_grad_p"] = report.resid_grad_p;
    j["excluded_area"] = report.excluded_area;
    j["elastic"] = report.elastic;
    j["jump_length"] = report.jump_length;
    j["const_u"] = report.const_u;
    j["const_grad"] = report.const_grad;
    j["eta_overlap"] = report.eta_overlap;
    j["c_hat_glob"] = report.c_hat_glob;
    j["max_pairwise_rigid"] = report.max_pairwise_rigid;
    j["chart_choice_ratio"] = report.chart_choice_ratio;
    j["chart_choice_bound"] = report.chart_choice_bound;
    j["gate_failed"] = report.gate_failed;
    j["budget_failed"] = report.budget_failed;
    j["charts"] = nlohmann::json::array();
    for (const ChartEstimate& ce : report.charts) {
        j["charts"].push_back({{"index", ce.index},
                               {"boundary", ce.is_boundary},
                               {"omega", ce.motion.omega},
                               {"b", {ce.motion.b.x, ce.motion.b.y}},
                               {"resid_u", ce.resid_u},
                               {"resid_grad", ce.resid_grad},
                               {"elastic", ce.elastic},
                               {"jump_length", ce.jump_length},
                               {"kept_area", ce.kept_area},
                               {"fallback", ce.fallback},
                               {"usable", ce.usable}});
    }
    j["overlaps"] = nlohmann::json::array();
    for (const OverlapCheck& oc : report.overlaps) {
        j["overlaps"].push_back({{"i", oc.i},
                                 {"j", oc.j},
                                 {"area", oc.area},
                                 {"area_off_e", oc.area_off_e},
                                 {"rigid_dist", oc.rigid_dist},
                                 {"tri_lhs", oc.tri_lhs},
                                 {"tri_rhs", oc.tri_rhs}});
    }
    return j.dump(2);
}

std::string report_csv_row(const std::string& scenario_id, const GlobalKornReport& report) {
    std::ostringstream os;
    os << std::setprecision(12);
    const char* flags = report.gate_failed ? "gate" : (report.budget_failed ? "budget" : "ok");
    os << scenario_id << ',' << report.jump_length << ',' << report.elastic << ','
       << report.exceptional_area << ','
       << report.exceptional.perimeter(PerimeterConvention::ClosedDomain) << ','
       << report.resid_u_q << ',' << report.resid_grad_p << ',' << report.const_u << ','
       << report.const_grad << ',' << flags;
    return os.str();
}

}  // namespace kornforge
