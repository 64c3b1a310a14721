#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace kornforge {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }

    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
    double norm_sq() const { return x * x + y * y; }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

// 2x2 matrix, row-major.
struct Mat2 {
    double a11 = 0.0, a12 = 0.0, a21 = 0.0, a22 = 0.0;

    Vec2 apply(const Vec2& v) const { return {a11 * v.x + a12 * v.y, a21 * v.x + a22 * v.y}; }
    Mat2 operator-(const Mat2& o) const { return {a11 - o.a11, a12 - o.a12, a21 - o.a21, a22 - o.a22}; }
    double frobenius() const { return std::sqrt(a11 * a11 + a12 * a12 + a21 * a21 + a22 * a22); }
};

// Symmetric 2x2 tensor (strain values live here).
struct Sym2 {
    double e11 = 0.0, e22 = 0.0, e12 = 0.0;

    double frobenius() const { return std::sqrt(e11 * e11 + e22 * e22 + 2.0 * e12 * e12); }
    Sym2 operator-(const Sym2& o) const { return {e11 - o.e11, e22 - o.e22, e12 - o.e12}; }
};

// Symmetrized tensor product a (.) b = (a b^T + b a^T) / 2.
inline Sym2 sym_outer(const Vec2& a, const Vec2& b) {
    return {a.x * b.x, a.y * b.y, 0.5 * (a.x * b.y + a.y * b.x)};
}

// Closed axis-aligned rectangle in real coordinates.
struct RectF {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
    double diagonal() const { return std::hypot(width(), height()); }
    double perimeter_length() const { return 2.0 * (width() + height()); }
    Vec2 center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }

    bool contains(const Vec2& p) const {
        return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;
    }
    bool contains(const RectF& o) const {
        return o.x0 >= x0 && o.x1 <= x1 && o.y0 >= y0 && o.y1 <= y1;
    }
    // Positive-area overlap; boundary contact does not count.
    bool overlaps(const RectF& o) const {
        return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
    }
    // Closed intersection nonempty; boundary contact counts.
    bool touches(const RectF& o) const {
        return x0 <= o.x1 && o.x0 <= x1 && y0 <= o.y1 && o.y0 <= y1;
    }
    RectF hull(const RectF& o) const {
        return {std::min(x0, o.x0), std::min(y0, o.y0), std::max(x1, o.x1), std::max(y1, o.y1)};
    }
    RectF scaled_about_center(double factor) const {
        const Vec2 c = center();
        const double hw = 0.5 * width() * factor;
        const double hh = 0.5 * height() * factor;
        return {c.x - hw, c.y - hh, c.x + hw, c.y + hh};
    }
    // L-infinity distance from a point to this closed rectangle (0 inside).
    double linf_distance(const Vec2& p) const {
        const double dx = std::max({x0 - p.x, 0.0, p.x - x1});
        const double dy = std::max({y0 - p.y, 0.0, p.y - y1});
        return std::max(dx, dy);
    }
    double euclid_distance(const Vec2& p) const {
        const double dx = std::max({x0 - p.x, 0.0, p.x - x1});
        const double dy = std::max({y0 - p.y, 0.0, p.y - y1});
        return std::hypot(dx, dy);
    }
};

// Centered square q + s * (-1, 1)^2 as a rectangle.
inline RectF centered_square(const Vec2& q, double half_side) {
    return {q.x - half_side, q.y - half_side, q.x + half_side, q.y + half_side};
}

// Length of the overlap of [a0, a1] with [b0, b1].
inline double interval_overlap(double a0, double a1, double b0, double b1) {
    return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

// Length of an axis-parallel segment clipped to a rectangle.
// The segment runs along `axis` (0 = parallel to x, 1 = parallel to y) at the
// fixed transverse coordinate `fixed`, spanning [lo, hi].
inline double clipped_segment_length(int axis, double fixed, double lo, double hi, const RectF& box) {
    if (axis == 0) {
        if (fixed < box.y0 || fixed > box.y1) return 0.0;
        return interval_overlap(lo, hi, box.x0, box.x1);
    }
    if (fixed < box.x0 || fixed > box.x1) return 0.0;
    return interval_overlap(lo, hi, box.y0, box.y1);
}

// Distance from a point to an axis-parallel segment.
inline double point_segment_distance(int axis, double fixed, double lo, double hi, const Vec2& p) {
    if (axis == 0) {
        const double dx = std::max({lo - p.x, 0.0, p.x - hi});
        return std::hypot(dx, p.y - fixed);
    }
    const double dy = std::max({lo - p.y, 0.0, p.y - hi});
    return std::hypot(p.x - fixed, dy);
}

// Smoothstep ramp: 0 for t <= 0, 1 for t >= 1, 3t^2 - 2t^3 between.
// Satisfies smoothstep(t) + smoothstep(1 - t) == 1 exactly in reals.
inline double smoothstep(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    return t * t * (3.0 - 2.0 * t);
}

// Deterministic 64-bit mix (splitmix64); used to derive per-trial seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace kornforge
