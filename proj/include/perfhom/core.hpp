#pragma once

// Small shared vocabulary: 2-vectors, symmetric 2x2 matrices, error types,
// deterministic number formatting and a seeded RNG wrapper.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace perfhom {

struct Vec2 {
    double x = 0.0, y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2 operator/(double s) const { return {x / s, y / s}; }
    Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
    Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }

    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double norm2() const { return x * x + y * y; }
    double norm() const { return std::sqrt(norm2()); }
};

inline Vec2 operator*(double s, Vec2 v) { return v * s; }

// z-component of the cross product (twice the signed area of (0,a,b)).
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

inline double dist(Vec2 a, Vec2 b) { return (a - b).norm(); }

// Symmetric 2x2 matrix.
struct Mat2 {
    double a11 = 0.0, a12 = 0.0, a22 = 0.0;

    static Mat2 identity() { return {1.0, 0.0, 1.0}; }
    static Mat2 scaled_identity(double s) { return {s, 0.0, s}; }

    Vec2 apply(Vec2 v) const { return {a11 * v.x + a12 * v.y, a12 * v.x + a22 * v.y}; }

    // Quadratic form u . (A v), written symmetrically so that
    // quad(u,v) == quad(v,u) holds bit-for-bit.
    double quad(Vec2 u, Vec2 v) const {
        return a11 * u.x * v.x + a12 * (u.x * v.y + u.y * v.x) + a22 * u.y * v.y;
    }

    Mat2 operator*(double s) const { return {a11 * s, a12 * s, a22 * s}; }
    Mat2 operator+(Mat2 o) const { return {a11 + o.a11, a12 + o.a12, a22 + o.a22}; }

    // Eigenvalues of the symmetric matrix, ascending.
    std::array<double, 2> eigenvalues() const {
        double tr = a11 + a22;
        double disc = std::sqrt(std::max(0.0, 0.25 * (a11 - a22) * (a11 - a22) + a12 * a12));
        return {0.5 * tr - disc, 0.5 * tr + disc};
    }
};

// General (possibly nonsymmetric) 2x2, used for measured tensors before the
// symmetry check collapses them to Mat2.
struct Mat2Full {
    double m[2][2] = {{0.0, 0.0}, {0.0, 0.0}};

    double asymmetry() const { return std::fabs(m[0][1] - m[1][0]); }
    double frobenius() const {
        return std::sqrt(m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] + m[1][1] * m[1][1]);
    }
    Mat2 symmetric_part() const {
        return {m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]};
    }
    Mat2Full operator-(const Mat2Full& o) const {
        Mat2Full r;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) r.m[i][j] = m[i][j] - o.m[i][j];
        return r;
    }
};

// ---------------------------------------------------------------------------
// Errors. Each carries a human-readable diagnostic; callers that can recover
// catch the specific type.

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct SeparationViolation : Error { using Error::Error; };
struct ClearanceViolation : Error { using Error::Error; };
struct MeshFailure : Error { using Error::Error; };
struct AssemblyError : Error { using Error::Error; };
struct NoConvergence : Error { using Error::Error; };
struct SingularSystem : Error { using Error::Error; };
struct EmptyRegion : Error { using Error::Error; };
struct MeshMismatch : Error { using Error::Error; };
struct MissingCorrector : Error { using Error::Error; };
struct NonZeroMean : Error { using Error::Error; };
struct GeometryMismatch : Error { using Error::Error; };
struct NonCompatibleData : Error { using Error::Error; };
struct SourceTooClose : Error { using Error::Error; };
struct DegenerateBoundaryNorm : Error { using Error::Error; };
struct DegenerateCell : Error { using Error::Error; };
struct NonPositiveValue : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct IOError : Error { using Error::Error; };

// ---------------------------------------------------------------------------

// Reduce x into [0,1) per coordinate.  mod1(1.0) == 0.
inline double mod1(double t) {
    double r = t - std::floor(t);
    return (r >= 1.0) ? r - 1.0 : r;
}
inline Vec2 mod1(Vec2 p) { return {mod1(p.x), mod1(p.y)}; }

// Deterministic textual form of a double used in every emitted file, so that
// identical runs produce byte-identical output.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

// FNV-1a over bytes; used for config/cache fingerprints.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}
inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ull) {
    return fnv1a(s.data(), s.size(), h);
}

// xorshift-based splitmix; small, seedable, stable across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }
    // Uniform in [0,1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

private:
    std::uint64_t state_;
};

}  // namespace perfhom
