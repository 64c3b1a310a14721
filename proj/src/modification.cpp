#include "kornforge/modification.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

#include "kornforge/error.hpp"
#include "kornforge/rigid.hpp"

namespace kornforge {

namespace {

bool closures_intersect(const LatticeRect& a, const LatticeRect& b) {
    return a.x0 <= b.x1 && b.x0 <= a.x1 && a.y0 <= b.y1 && b.y0 <= a.y1;
}

LatticeRect hull_of(const LatticeRect& a, const LatticeRect& b) {
    return {std::min(a.x0, b.x0), std::min(a.y0, b.y0), std::max(a.x1, b.x1),
            std::max(a.y1, b.y1)};
}

bool edge_inside_closed(const LatticeRect& r, const EdgeId& e) {
    if (e.axis == 0) {
        return r.x0 <= e.a && e.a + 1 <= r.x1 && r.y0 <= e.b && e.b <= r.y1;
    }
    return r.x0 <= e.a && e.a <= r.x1 && r.y0 <= e.b && e.b + 1 <= r.y1;
}

}  // namespace

RectangleSet::RectangleSet(const Grid& grid, std::vector<LatticeRect> rects)
    : grid_(std::make_shared<Grid>(grid)), rects_(std::move(rects)) {
    const int n = grid.cells_per_side();
    for (std::size_t k = 0; k < rects_.size(); ++k) {
        const LatticeRect& r = rects_[k];
        if (r.x0 > r.x1 || r.y0 > r.y1 || r.x0 < 0 || r.y0 < 0 || r.x1 > n || r.y1 > n) {
            fail(ErrorKind::Geometry,
                 "rectangle set: rectangle " + std::to_string(k) + " is malformed or off-grid");
        }
        total_diameter_ += diameter(k);
    }
}

RectF RectangleSet::geometry(std::size_t idx) const {
    const LatticeRect& r = rects_.at(idx);
    return {grid_->corner_x(r.x0), grid_->corner_y(r.y0), grid_->corner_x(r.x1),
            grid_->corner_y(r.y1)};
}

double RectangleSet::diameter(std::size_t idx) const {
    const LatticeRect& r = rects_.at(idx);
    const double w = (r.x1 - r.x0) * grid_->spacing();
    const double h = (r.y1 - r.y0) * grid_->spacing();
    return std::sqrt(w * w + h * h);
}

bool RectangleSet::pairwise_separated() const {
    for (std::size_t i = 0; i < rects_.size(); ++i) {
        for (std::size_t j = i + 1; j < rects_.size(); ++j) {
            if (closures_intersect(rects_[i], rects_[j])) {
                return false;
            }
        }
    }
    return true;
}

RegionMask RectangleSet::covered_cells() const {
    RegionMask mask(*grid_);
    for (const LatticeRect& r : rects_) {
        for (int j = std::max(r.y0, 0); j + 1 <= r.y1; ++j) {
            for (int i = std::max(r.x0, 0); i + 1 <= r.x1; ++i) {
                mask.set(i, j);
            }
        }
    }
    return mask;
}

std::vector<EdgeId> RectangleSet::boundary_edges() const {
    const int n = grid_->cells_per_side();
    std::unordered_set<EdgeId, EdgeIdHash> seen;
    std::vector<EdgeId> edges;
    const auto push = [&](EdgeId e) {
        const int fixed = e.axis == 0 ? e.b : e.a;
        if (fixed < 1 || fixed > n - 1) {
            return;  // the outer grid boundary carries no jumps
        }
        if (seen.insert(e).second) {
            edges.push_back(e);
        }
    };
    for (const LatticeRect& r : rects_) {
        for (int i = r.x0; i < r.x1; ++i) {
            push({0, i, r.y0});
            if (r.y1 != r.y0) {
                push({0, i, r.y1});
            }
        }
        for (int j = r.y0; j < r.y1; ++j) {
            push({1, r.x0, j});
            if (r.x1 != r.x0) {
                push({1, r.x1, j});
            }
        }
    }
    return edges;
}

CrackCover cover_cracks(const CrackSet& crack, double strain_energy_sq, double epsilon,
                        double lambda) {
    if (epsilon <= 0.0) {
        fail(ErrorKind::Parameter, "cover_cracks: epsilon must be positive");
    }
    std::vector<LatticeRect> boxes;
    for (int c = 0; c < crack.component_count(); ++c) {
        const auto b = crack.component_bounds(c);
        boxes.push_back({b[0], b[1], b[2], b[3]});
    }
    // Merge to a fixpoint: any two boxes that overlap or touch collapse to
    // their hull, which can trigger further merges.
    bool merged = true;
    while (merged) {
        merged = false;
        for (std::size_t i = 0; i < boxes.size() && !merged; ++i) {
            for (std::size_t j = i + 1; j < boxes.size() && !merged; ++j) {
                if (closures_intersect(boxes[i], boxes[j])) {
                    boxes[i] = hull_of(boxes[i], boxes[j]);
                    boxes.erase(boxes.begin() + static_cast<std::ptrdiff_t>(j));
                    merged = true;
                }
            }
        }
    }
    RectangleSet set(crack.grid(), std::move(boxes));
    CoverDiagnostics diag;
    diag.sum_diameters = set.total_diameter();
    diag.jump_length = crack.total_length();
    diag.bound_value = (1.0 + lambda) * (diag.jump_length + strain_energy_sq / epsilon);
    diag.bound_holds = diag.sum_diameters <= diag.bound_value * (1.0 + 1e-12);
    return {std::move(set), diag};
}

double default_epsilon(double strain_energy_sq, double jump_length) {
    if (jump_length <= 0.0) {
        fail(ErrorKind::Parameter, "default_epsilon: jump length must be positive");
    }
    return strain_energy_sq / jump_length;
}

ModificationResult apply_modification(const DisplacementField& field, const RectangleSet& rects,
                                      int fit_margin) {
    const Grid& g = field.grid();
    if (!(rects.grid() == g)) {
        fail(ErrorKind::Precondition, "apply_modification: rectangles live on a different grid");
    }
    if (fit_margin < 1) {
        fail(ErrorKind::Parameter, "apply_modification: fit margin must be at least one cell");
    }
    for (const EdgeId& e : field.crack().edges()) {
        const bool covered = std::any_of(rects.rects().begin(), rects.rects().end(),
                                         [&](const LatticeRect& r) { return edge_inside_closed(r, e); });
        if (!covered) {
            fail(ErrorKind::Coverage,
                 "apply_modification: crack edge (axis " + std::to_string(int(e.axis)) + ", " +
                     std::to_string(e.a) + ", " + std::to_string(e.b) +
                     ") is outside every rectangle");
        }
    }

    const RegionMask covered = rects.covered_cells();
    const int n = g.cells_per_side();
    DisplacementField modified = field;

    for (std::size_t k = 0; k < rects.size(); ++k) {
        const LatticeRect& r = rects.rects()[k];
        if (r.x0 == r.x1 || r.y0 == r.y1) {
            continue;  // a degenerate rectangle holds no cells to replace
        }

        // Fit annulus: cells around the rectangle, rectangles excluded,
        // widened until it holds at least one cell.
        RegionMask annulus(g);
        for (int margin = fit_margin; annulus.empty(); ++margin) {
            if (margin > n) {
                fail(ErrorKind::Construction,
                     "apply_modification: no cells left to fit a rigid motion around rectangle " +
                         std::to_string(k));
            }
            RegionMask ring(g);
            for (int j = std::max(r.y0 - margin, 0); j < std::min(r.y1 + margin, n); ++j) {
                for (int i = std::max(r.x0 - margin, 0); i < std::min(r.x1 + margin, n); ++i) {
                    if (!covered.contains(i, j)) {
                        ring.set(i, j);
                    }
                }
            }
            annulus = ring;
        }
        const RigidMotion fit = project_rigid(field, annulus);

        for (int j = r.y0; j + 1 <= r.y1; ++j) {
            for (int i = r.x0; i + 1 <= r.x1; ++i) {
                for (int corner = 0; corner < 4; ++corner) {
                    const Vec2 p = g.corner_point(i + (corner & 1), j + (corner >> 1));
                    modified.set_corner_value(i, j, corner, fit.at(p));
                }
            }
        }
    }

    modified.reset_crack(CrackSet::from_edges(g, rects.boundary_edges()));
    EdgeId bad;
    if (!modified.continuity_holds(&bad)) {
        fail(ErrorKind::Construction,
             "apply_modification: replacement broke continuity off the rectangle boundaries");
    }

    ModificationResult result{std::move(modified), rects,
                              std::max(g.mu() - 3.0 * rects.total_diameter(), 0.0)};
    return result;
}

JumpControlReport jump_control_check(const ModificationResult& result, const RegionMask& mask,
                                     double epsilon, double c_probe) {
    const DisplacementField& u = result.modified;
    const Grid& g = u.grid();
    if (!(mask.grid() == g)) {
        fail(ErrorKind::Precondition, "jump_control_check: mask lives on a different grid");
    }
    const RectF shrunk = centered_square(g.center(), result.shrunk_mu);
    bool inside = true;
    mask.for_each_cell([&](int i, int j) {
        if (!shrunk.contains(g.cell_center(i, j))) {
            inside = false;
        }
    });
    if (!inside) {
        fail(ErrorKind::Precondition, "jump_control_check: mask leaves the shrunk square");
    }

    const StrainField strains = strain(u);
    JumpControlReport report;
    const double lhs = total_ed_variation(u, strains, mask);
    report.lhs_sq = lhs * lhs;

    const double l2 = lp_norm(strains, mask, 2.0);
    const double h = g.spacing();
    for (const EdgeId& e : u.crack().edges()) {
        if (!u.is_jump_edge(e, 1e-12)) {
            continue;
        }
        int members = 0;
        if (e.axis == 0) {
            members += mask.contains(e.a, e.b - 1) ? 1 : 0;
            members += mask.contains(e.a, e.b) ? 1 : 0;
        } else {
            members += mask.contains(e.a - 1, e.b) ? 1 : 0;
            members += mask.contains(e.a, e.b) ? 1 : 0;
        }
        report.mask_jump_length += h * 0.5 * members;
    }

    const RectangleSet& rects = result.rects;
    for (std::size_t k = 0; k < rects.size(); ++k) {
        const LatticeRect& r = rects.rects()[k];
        bool meets = false;
        for (int j = std::max(r.y0 - 1, 0); j <= std::min(r.y1, g.cells_per_side() - 1) && !meets;
             ++j) {
            for (int i = std::max(r.x0 - 1, 0); i <= std::min(r.x1, g.cells_per_side() - 1);
                 ++i) {
                if (mask.contains(i, j)) {
                    meets = true;
                    break;
                }
            }
        }
        if (meets) {
            const double d = rects.diameter(k);
            report.sum_d_sq_near += d * d;
        }
    }

    report.rhs = 2.0 * mask.area() * l2 * l2 +
                 c_probe * epsilon * report.mask_jump_length * report.sum_d_sq_near;
    report.holds = report.lhs_sq <= report.rhs * (1.0 + 1e-12) + 1e-300;
    report.ratio = report.rhs > 0.0 ? report.lhs_sq / report.rhs : 0.0;
    if (report.rhs == 0.0 && report.lhs_sq > 0.0) {
        report.holds = false;
        report.ratio = std::numeric_limits<double>::infinity();
    }
    return report;
}

}  // namespace kornforge
