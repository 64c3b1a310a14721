#include "kornforge/grid.hpp"

#include <cmath>
#include <string>

namespace kornforge {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Geometry: return "geometry";
        case ErrorKind::Parameter: return "parameter";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::Precondition: return "precondition";
        case ErrorKind::Coverage: return "coverage";
        case ErrorKind::Resolution: return "resolution";
        case ErrorKind::Spec: return "spec";
        case ErrorKind::Atlas: return "atlas";
        case ErrorKind::Construction: return "construction";
    }
    return "unknown";
}

Grid::Grid(Vec2 center, double mu, int n) : center_(center), mu_(mu), n_(n) {
    if (n <= 0) fail(ErrorKind::Parameter, "grid: cells_per_side must be positive, got " + std::to_string(n));
    if (!(mu > 0.0) || !std::isfinite(mu)) {
        fail(ErrorKind::Parameter, "grid: mu must be positive and finite");
    }
    h_ = 2.0 * mu / n;
    // Exactness gate: every corner coordinate center - mu + i * h must be an
    // exact double, which requires the division above to be exact.
    if (h_ * n != 2.0 * mu) {
        fail(ErrorKind::Parameter,
             "grid: 2 * mu must equal h * n exactly; choose n as a power of two "
             "(times a base that divides mu exactly)");
    }
}

int Grid::clamp_cell_x(double x) const {
    const int i = static_cast<int>(std::floor((x - (center_.x - mu_)) / h_));
    return std::max(0, std::min(n_ - 1, i));
}

int Grid::clamp_cell_y(double y) const {
    const int j = static_cast<int>(std::floor((y - (center_.y - mu_)) / h_));
    return std::max(0, std::min(n_ - 1, j));
}

}  // namespace kornforge
