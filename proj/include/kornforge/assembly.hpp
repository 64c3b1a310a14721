#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "kornforge/boundary.hpp"
#include "kornforge/local.hpp"

namespace kornforge {

// Simple closed polygon with vertices in counterclockwise order (the interior
// lies on the left of every directed edge). Consecutive duplicate or collinear
// vertices are rejected at construction.
struct PolygonDomain {
    std::vector<Vec2> vertices;

    int edge_count() const { return static_cast<int>(vertices.size()); }
    Vec2 vertex(int k) const;  // cyclic indexing
    double signed_area() const;
    double perimeter() const;
    RectF bounding_box() const;

    // Strict interior test by crossing parity; points on the boundary are not
    // guaranteed members and should be classified via boundary_distance.
    bool contains(const Vec2& p) const;
    double boundary_distance(const Vec2& p) const;

    // True when the closed rectangle lies in the closure of the polygon: all
    // corners inside (or on the boundary) and no edge intrudes into the
    // rectangle's interior.
    bool rect_inside(const RectF& r) const;
};

PolygonDomain make_polygon(std::vector<Vec2> vertices);
// Parses {"vertices": [[x, y], ...]} and validates like make_polygon.
PolygonDomain polygon_from_json(const std::string& text);

// Direct isometry x_global = R x_frame + shift with R the rotation by alpha;
// cos_a/sin_a store cos(alpha)/sin(alpha).
struct FrameMap {
    double cos_a = 1.0;
    double sin_a = 0.0;
    Vec2 shift{0.0, 0.0};

    Vec2 to_global(const Vec2& f) const {
        return {cos_a * f.x - sin_a * f.y + shift.x, sin_a * f.x + cos_a * f.y + shift.y};
    }
    Vec2 to_frame(const Vec2& g) const {
        const double dx = g.x - shift.x;
        const double dy = g.y - shift.y;
        return {cos_a * dx + sin_a * dy, -sin_a * dx + cos_a * dy};
    }
    // Rotates a frame-coordinates rigid motion into global coordinates.
    RigidMotion motion_to_global(const RigidMotion& m) const;
    // Builds the frame whose +y axis maps to the global unit direction `up`.
    static FrameMap with_up_direction(const Vec2& up, const Vec2& shift);
};

enum class ChartShape { Edge, ConvexCorner, ReflexCorner };

// One boundary chart: a graph-domain window of half-width 2 * mu_core in its
// own frame, with the analytic profile determined by the shape. Edge charts
// use the constant profile mu_core; corner charts use the roof or clipped
// vee profile with slope |cot(theta / 2)|.
struct BoundaryChart {
    FrameMap frame;
    double mu_core = 0.0;
    double cbar = 0.0;
    ChartShape shape = ChartShape::Edge;
    int anchor_vertex = -1;  // polygon vertex index for corner charts
    int anchor_edge = -1;    // polygon edge index for edge charts

    double psi(double x) const;
    bool in_core(const Vec2& global_point, double tol = 0.0) const;  // U'
    bool in_outer(const Vec2& global_point, double tol = 0.0) const; // U
    RectF window_hull() const;  // global bounding box of the frame window
};

// One interior chart: an axis-aligned square core whose doubled parent (and a
// safety margin of mu_chart / 8 on each side) is contained in the domain.
struct InteriorChart {
    Vec2 center;
    double core_half = 0.0;

    RectF core() const { return centered_square(center, core_half); }
    RectF doubled() const { return centered_square(center, 2.0 * core_half); }
};

struct AtlasConfig {
    int census_n = 512;        // rasterization resolution of the invariant census
    double c_hat_glob = 0.0;   // > 0 overrides the stored small-jump gate
};

// Chart cover of a polygonal domain: boundary charts whose cores cover the
// boundary, interior squares whose cores cover the rest, every pairwise core
// overlap measured on the census raster, and the stored small-jump gate.
struct DomainAtlas {
    PolygonDomain domain;
    double mu_chart = 0.0;
    std::vector<BoundaryChart> boundary;
    std::vector<InteriorChart> interior;
    double eta_overlap = 0.0;  // min positive pairwise core overlap area
    double c_hat_glob = 0.0;   // default small-jump gate for this atlas
    int census_n = 0;
    double census_h = 0.0;
    // Chart id pairs (boundary charts first, then interior) with the census
    // cell count of their core overlap.
    std::vector<std::array<int, 3>> overlap_pairs;

    int chart_count() const {
        return static_cast<int>(boundary.size() + interior.size());
    }
    bool overlap_graph_connected() const;
};

DomainAtlas build_atlas(const PolygonDomain& domain, double mu_chart,
                        const AtlasConfig& config = {});

struct GlobalConfig {
    double theta_interior = 0.5;   // shrink exponent for interior chart runs
    BoundaryConfig boundary{};     // per-chart boundary estimate settings
    int chart_n = 128;             // grid resolution of resampled chart windows
    double c_hat_glob = 0.0;       // > 0 overrides the atlas gate
};

// Outcome of one chart's sub-estimate, with the fitted motion already rotated
// into global coordinates.
struct ChartEstimate {
    bool is_boundary = false;
    int index = -1;  // chart id: boundary charts first, then interior
    RigidMotion motion;
    double resid_u = 0.0;
    double resid_grad = 0.0;
    double elastic = 0.0;
    double jump_length = 0.0;
    double kept_area = 0.0;
    bool fallback = false;
    bool usable = false;  // nonempty kept region with a fitted motion
};

// Gluing diagnostics for one overlapping chart pair, measured on the field
// raster with the exceptional set removed.
struct OverlapCheck {
    int i = -1;
    int j = -1;
    double area = 0.0;
    double area_off_e = 0.0;
    double rigid_dist = 0.0;  // L^q distance of the two motions off E
    double tri_lhs = 0.0;     // the same distance
    double tri_rhs = 0.0;     // ||u - a_i|| + ||u - a_j|| over the region
};

struct GlobalKornReport {
    RigidMotion motion;       // (A, b) of the reference chart
    int reference_chart = -1;
    RegionMask exceptional;   // E on the field grid
    RegionMask domain_cells;  // rasterized domain on the field grid
    double exceptional_area = 0.0;
    double resid_u_q = 0.0;
    double resid_grad_p = 0.0;
    double excluded_area = 0.0;  // jump-adjacent cells left out of the gradient norm
    double elastic = 0.0;
    double jump_length = 0.0;
    double const_u = 0.0;
    double const_grad = 0.0;
    double eta_overlap = 0.0;
    double c_hat_glob = 0.0;
    double max_pairwise_rigid = 0.0;   // L^q distance over the kept region
    double chart_choice_ratio = 0.0;   // worst resid(a_k) / resid(a_ref)
    double chart_choice_bound = 0.0;   // triangle-inequality cap on that ratio
    bool gate_failed = false;    // jump gate tripped: E is the whole domain
    bool budget_failed = false;  // |E| exceeded eta / 2: E is the whole domain
    std::vector<ChartEstimate> charts{};
    std::vector<OverlapCheck> overlaps{};
};

// Runs every chart's sub-estimate on the field, glues the motions, and
// measures the global residuals against the reference chart's motion on the
// domain minus the union of the per-chart exceptional sets.
GlobalKornReport global_estimate(const DisplacementField& field, const DomainAtlas& atlas,
                                 double p, double q, const GlobalConfig& config = {});

struct RecoveryConfig {
    double c_bar = 1.0 / 32.0;  // tile crack-density threshold
    int coarsest_tiles = 8;     // first refinement level tiles the grid this many per side
};

struct SbvRecoveryReport {
    RegionMask exceptional;
    double area = 0.0;
    double perimeter = 0.0;
    double tile_scale = 0.0;  // side length of the accepted tiling level
    int tiles_per_side = 0;
    int bad_tiles = 0;
    double jump_length = 0.0;
    double boundary_length = 0.0;
};

// Tiles the grid dyadically, marks tiles whose enlarged square leaves the
// domain or carries too much jump, covers the leftover jumps inside good
// tiles, and refines until the exceptional area drops to epsilon_area.
SbvRecoveryReport sbv_recovery(const DisplacementField& field, const PolygonDomain& domain,
                               double epsilon_area, const RecoveryConfig& config = {});

// Serialization surfaces: report as a JSON document, and one CSV row under
// the header scenario_id,jump_len,elastic_l2,area_E,perim_E,resid_u_q,
// resid_grad_p,const_u,const_grad,flags.
std::string report_to_json(const GlobalKornReport& report);
std::string report_csv_row(const std::string& scenario_id, const GlobalKornReport& report);

}  // namespace kornforge
