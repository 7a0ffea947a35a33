#pragma once

// Periodic coefficient fields, hole layouts on the unit cell, the contrast
// mask, and perforated macroscopic domains.  All queries use exact geometry
// (distances to disks / half-plane tests), never mesh lookups, so coefficient
// evaluation is mesh-independent.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "perfhom/core.hpp"

namespace perfhom {

// ---------------------------------------------------------------------------
// Holes

struct Hole {
    enum class Kind { disk, polygon };
    Kind kind = Kind::disk;
    Vec2 center{0.5, 0.5};   // disk
    double radius = 0.25;    // disk
    std::vector<Vec2> vertices;  // polygon, CCW

    bool contains(Vec2 p) const {  // strict interior
        if (kind == Kind::disk) return dist(p, center) < radius;
        return winding_inside(p);
    }

    // Signed distance to the hole boundary (negative inside).
    double signed_distance(Vec2 p) const {
        if (kind == Kind::disk) return dist(p, center) - radius;
        double d = boundary_distance(p);
        return winding_inside(p) ? -d : d;
    }

    double diameter() const {
        if (kind == Kind::disk) return 2.0 * radius;
        double d = 0.0;
        for (std::size_t i = 0; i < vertices.size(); ++i)
            for (std::size_t j = i + 1; j < vertices.size(); ++j)
                d = std::max(d, dist(vertices[i], vertices[j]));
        return d;
    }

    double area() const {
        if (kind == Kind::disk) return M_PI * radius * radius;
        double s = 0.0;
        for (std::size_t i = 0; i < vertices.size(); ++i) {
            Vec2 a = vertices[i], b = vertices[(i + 1) % vertices.size()];
            s += cross(a, b);
        }
        return 0.5 * std::fabs(s);
    }

    Vec2 bbox_min() const {
        if (kind == Kind::disk) return {center.x - radius, center.y - radius};
        Vec2 m = vertices.front();
        for (Vec2 v : vertices) { m.x = std::min(m.x, v.x); m.y = std::min(m.y, v.y); }
        return m;
    }
    Vec2 bbox_max() const {
        if (kind == Kind::disk) return {center.x + radius, center.y + radius};
        Vec2 m = vertices.front();
        for (Vec2 v : vertices) { m.x = std::max(m.x, v.x); m.y = std::max(m.y, v.y); }
        return m;
    }

    double boundary_distance(Vec2 p) const {
        if (kind == Kind::disk) return std::fabs(dist(p, center) - radius);
        double d = std::numeric_limits<double>::max();
        for (std::size_t i = 0; i < vertices.size(); ++i)
            d = std::min(d, segment_distance(p, vertices[i], vertices[(i + 1) % vertices.size()]));
        return d;
    }

    static double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
        Vec2 ab = b - a;
        double t = ab.norm2() > 0 ? std::clamp((p - a).dot(ab) / ab.norm2(), 0.0, 1.0) : 0.0;
        return dist(p, a + ab * t);
    }

private:
    bool winding_inside(Vec2 p) const {
        bool in = false;
        for (std::size_t i = 0, j = vertices.size() - 1; i < vertices.size(); j = i++) {
            Vec2 a = vertices[i], b = vertices[j];
            if ((a.y > p.y) != (b.y > p.y)) {
                double xi = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if (p.x < xi) in = !in;
            }
        }
        return in;
    }
};

// Distance between two holes (0 if they overlap), optionally with the second
// hole shifted by an integer lattice vector.
inline double hole_distance(const Hole& a, const Hole& b, Vec2 shift = {0, 0}) {
    auto shifted = [&](Vec2 v) { return v + shift; };
    if (a.kind == Hole::Kind::disk && b.kind == Hole::Kind::disk)
        return std::max(0.0, dist(a.center, shifted(b.center)) - a.radius - b.radius);

    // Sample-based for polygon cases: min over segment pairs / disk-segment.
    auto segments = [](const Hole& h, Vec2 sh) {
        std::vector<std::pair<Vec2, Vec2>> segs;
        if (h.kind == Hole::Kind::polygon) {
            for (std::size_t i = 0; i < h.vertices.size(); ++i)
                segs.push_back({h.vertices[i] + sh,
                                h.vertices[(i + 1) % h.vertices.size()] + sh});
        }
        return segs;
    };
    double best = std::numeric_limits<double>::max();
    if (a.kind == Hole::Kind::disk) {
        for (auto& [p, q] : segments(b, shift))
            best = std::min(best, Hole::segment_distance(a.center, p, q) - a.radius);
    } else if (b.kind == Hole::Kind::disk) {
        Vec2 c = shifted(b.center);
        for (auto& [p, q] : segments(a, {0, 0}))
            best = std::min(best, Hole::segment_distance(c, p, q) - b.radius);
    } else {
        for (auto& [p, q] : segments(a, {0, 0}))
            for (auto& [r, s] : segments(b, shift)) {
                best = std::min(best, Hole::segment_distance(p, r, s));
                best = std::min(best, Hole::segment_distance(q, r, s));
                best = std::min(best, Hole::segment_distance(r, p, q));
                best = std::min(best, Hole::segment_distance(s, p, q));
            }
    }
    return std::max(0.0, best);
}

// Distance from a hole to the boundary of the unit cell Y = [0,1]^2.
inline double hole_cell_boundary_distance(const Hole& h) {
    Vec2 lo = h.bbox_min(), hi = h.bbox_max();
    if (h.kind == Hole::Kind::disk)
        return std::min({lo.x, lo.y, 1.0 - hi.x, 1.0 - hi.y});
    double d = std::numeric_limits<double>::max();
    for (Vec2 v : h.vertices)
        d = std::min({d, v.x, v.y, 1.0 - v.x, 1.0 - v.y});
    return d;
}

// ---------------------------------------------------------------------------
// Cell geometry

struct CellGeometry {
    std::vector<Hole> holes;
    double kappa = 0.2;
    double enlarged_margin = 0.002;  // kappa / 100

    bool in_hole(Vec2 y) const { return hole_index(y) >= 0; }

    // Index of the hole strictly containing y (unit-cell coordinates), or -1.
    int hole_index(Vec2 y) const {
        for (std::size_t k = 0; k < holes.size(); ++k)
            if (holes[k].contains(y)) return static_cast<int>(k);
        return -1;
    }

    // Minimum clearance between holes and the cell boundary; +inf when empty.
    double boundary_clearance() const {
        double d = std::numeric_limits<double>::max();
        for (const Hole& h : holes) d = std::min(d, hole_cell_boundary_distance(h));
        return d;
    }

    double hole_area() const {
        double s = 0.0;
        for (const Hole& h : holes) s += h.area();
        return s;
    }

    std::string fingerprint() const {
        std::ostringstream os;
        os << "kappa=" << format_double(kappa);
        for (const Hole& h : holes) {
            if (h.kind == Hole::Kind::disk)
                os << ";d:" << format_double(h.center.x) << "," << format_double(h.center.y)
                   << "," << format_double(h.radius);
            else {
                os << ";p:";
                for (Vec2 v : h.vertices) os << format_double(v.x) << "," << format_double(v.y) << ",";
            }
        }
        return os.str();
    }
};

// Validates the separation conditions and returns the cell.  Pairwise
// distances are checked across the nine lattice shifts so the periodic tiling
// is covered; holes must keep a positive margin to the cell boundary so the
// enlarged holes stay disjoint from it.
inline CellGeometry build_cell_geometry(std::vector<Hole> holes, double kappa) {
    if (!(kappa > 0.0 && kappa < 1.0)) throw SeparationViolation("kappa must lie in (0,1)");
    CellGeometry cell;
    cell.kappa = kappa;
    cell.enlarged_margin = kappa / 100.0;
    cell.holes = std::move(holes);

    for (std::size_t k = 0; k < cell.holes.size(); ++k) {
        const Hole& h = cell.holes[k];
        if (h.kind == Hole::Kind::disk && h.radius <= 0.0)
            throw SeparationViolation("hole " + std::to_string(k) + ": radius must be positive");
        if (h.kind == Hole::Kind::polygon && h.vertices.size() < 3)
            throw SeparationViolation("hole " + std::to_string(k) + ": polygon needs >= 3 vertices");
    }

    for (std::size_t i = 0; i < cell.holes.size(); ++i)
        for (std::size_t j = 0; j < cell.holes.size(); ++j)
            for (int sx = -1; sx <= 1; ++sx)
                for (int sy = -1; sy <= 1; ++sy) {
                    if (i == j && sx == 0 && sy == 0) continue;
                    if (j < i && sx == 0 && sy == 0) continue;  // symmetric
                    double gap = hole_distance(cell.holes[i], cell.holes[j],
                                               {double(sx), double(sy)});
                    // report the raw (possibly negative) gap for overlaps
                    if (cell.holes[i].kind == Hole::Kind::disk &&
                        cell.holes[j].kind == Hole::Kind::disk) {
                        Vec2 c2 = cell.holes[j].center + Vec2{double(sx), double(sy)};
                        gap = dist(cell.holes[i].center, c2) - cell.holes[i].radius -
                              cell.holes[j].radius;
                    }
                    if (gap < kappa) {
                        std::ostringstream os;
                        os << "holes " << i << " and " << j << " (shift " << sx << "," << sy
                           << "): gap " << gap << " < kappa " << kappa;
                        throw SeparationViolation(os.str());
                    }
                }
    return cell;
}

// ---------------------------------------------------------------------------
// Contrast mask  Lambda_delta

struct ContrastMask {
    const CellGeometry* cell = nullptr;
    double delta = 1.0;

    // Value at unit-cell coordinates (reduced mod 1 by the caller or here).
    double value(Vec2 y) const {
        if (delta == 1.0) return 1.0;
        return cell->in_hole(mod1(y)) ? delta : 1.0;
    }
};

inline double contrast_at(Vec2 x, double epsilon, double delta, const CellGeometry& cell) {
    ContrastMask mask{&cell, delta};
    return mask.value(mod1(x / epsilon));
}

// ---------------------------------------------------------------------------
// Material tensor A(y)

struct HolderRecord {
    double M = 1.0;
    double sigma = 0.5;
};

struct MaterialTensor {
    enum class Kind { constant, laminate, piecewise_by_region, grid_sampled };
    Kind kind = Kind::constant;
    double mu = 1.0;  // ellipticity constant
    bool symmetric = true;
    std::optional<HolderRecord> holder_data;

    // constant
    Mat2 matrix = Mat2::identity();

    // laminate: scalar factor a(y_dir) * I, piecewise constant
    int direction = 0;                   // 0: varies in y1, 1: varies in y2
    std::vector<double> values;          // k values
    std::vector<double> breakpoints;     // k-1 strictly increasing in (0,1)

    // piecewise by region (omega vs holes)
    Mat2 omega_matrix = Mat2::identity();
    Mat2 hole_matrix = Mat2::identity();
    const CellGeometry* cell = nullptr;

    // grid sampled (bilinear, periodic)
    int grid_n = 0;
    std::vector<Mat2> grid;  // grid_n * grid_n, row-major, sample at ((i+0.5)/n,(j+0.5)/n)

    static MaterialTensor identity() {
        MaterialTensor a;
        a.kind = Kind::constant;
        a.matrix = Mat2::identity();
        a.mu = 1.0;
        return a;
    }

    static MaterialTensor constant(Mat2 m) {
        MaterialTensor a;
        a.kind = Kind::constant;
        a.matrix = m;
        auto ev = m.eigenvalues();
        a.mu = std::min(ev[0], 1.0 / std::max({std::fabs(m.a11), std::fabs(m.a12), std::fabs(m.a22)}));
        return a;
    }

    static MaterialTensor laminate(int dir, std::vector<double> vals, std::vector<double> brks) {
        MaterialTensor a;
        a.kind = Kind::laminate;
        a.direction = dir;
        a.values = std::move(vals);
        a.breakpoints = std::move(brks);
        double lo = a.values[0], hi = a.values[0];
        for (double v : a.values) { lo = std::min(lo, v); hi = std::max(hi, v); }
        a.mu = std::min(lo, 1.0 / hi);
        return a;
    }

    // Smooth Hoelder-continuous preset sampled on an s x s grid.
    static MaterialTensor smooth_grid(int s) {
        MaterialTensor a;
        a.kind = Kind::grid_sampled;
        a.grid_n = s;
        a.grid.resize(static_cast<std::size_t>(s) * s);
        for (int j = 0; j < s; ++j)
            for (int i = 0; i < s; ++i) {
                double y1 = (i + 0.5) / s, y2 = (j + 0.5) / s;
                double v = 1.5 + 0.5 * std::sin(2 * M_PI * y1) * std::sin(2 * M_PI * y2);
                a.grid[static_cast<std::size_t>(j) * s + i] = Mat2::scaled_identity(v);
            }
        a.mu = 0.5;  // values in [1,2]
        a.holder_data = HolderRecord{2 * M_PI, 1.0};
        return a;
    }

    Mat2 eval(Vec2 y) const {
        y = mod1(y);
        switch (kind) {
            case Kind::constant:
                return matrix;
            case Kind::laminate: {
                double t = (direction == 0) ? y.x : y.y;
                std::size_t i = 0;
                while (i < breakpoints.size() && t >= breakpoints[i]) ++i;
                return Mat2::scaled_identity(values[i]);
            }
            case Kind::piecewise_by_region:
                return (cell && cell->in_hole(y)) ? hole_matrix : omega_matrix;
            case Kind::grid_sampled: {
                double gx = y.x * grid_n - 0.5, gy = y.y * grid_n - 0.5;
                int i0 = static_cast<int>(std::floor(gx)), j0 = static_cast<int>(std::floor(gy));
                double fx = gx - i0, fy = gy - j0;
                auto at = [&](int i, int j) -> const Mat2& {
                    i = ((i % grid_n) + grid_n) % grid_n;
                    j = ((j % grid_n) + grid_n) % grid_n;
                    return grid[static_cast<std::size_t>(j) * grid_n + i];
                };
                const Mat2 &m00 = at(i0, j0), &m10 = at(i0 + 1, j0), &m01 = at(i0, j0 + 1),
                           &m11 = at(i0 + 1, j0 + 1);
                auto lerp = [&](double a00, double a10, double a01, double a11) {
                    return (1 - fx) * (1 - fy) * a00 + fx * (1 - fy) * a10 +
                           (1 - fx) * fy * a01 + fx * fy * a11;
                };
                return {lerp(m00.a11, m10.a11, m01.a11, m11.a11),
                        lerp(m00.a12, m10.a12, m01.a12, m11.a12),
                        lerp(m00.a22, m10.a22, m01.a22, m11.a22)};
            }
        }
        return Mat2::identity();
    }

    std::string fingerprint() const {
        std::ostringstream os;
        os << int(kind) << ":" << format_double(mu);
        if (kind == Kind::constant)
            os << ":" << format_double(matrix.a11) << "," << format_double(matrix.a12) << ","
               << format_double(matrix.a22);
        if (kind == Kind::laminate) {
            os << ":" << direction;
            for (double v : values) os << "," << format_double(v);
            os << ";";
            for (double b : breakpoints) os << "," << format_double(b);
        }
        if (kind == Kind::grid_sampled) os << ":g" << grid_n;
        return os.str();
    }
};

// Sampled verification of the ellipticity / periodicity / symmetry
// invariants; throws on violation.
inline void validate_material(const MaterialTensor& a, Rng& rng, int samples = 200) {
    for (int s = 0; s < samples; ++s) {
        Vec2 y{rng.uniform(), rng.uniform()};
        Mat2 m = a.eval(y);
        double bound = 1.0 / a.mu + 1e-12;
        if (std::fabs(m.a11) > bound || std::fabs(m.a12) > bound || std::fabs(m.a22) > bound)
            throw Error("material entry exceeds 1/mu");
        Vec2 xi{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        if (m.quad(xi, xi) < a.mu * xi.norm2() - 1e-12)
            throw Error("material violates ellipticity lower bound");
        Vec2 shift{double(int(rng.uniform(-2.0, 3.0))), double(int(rng.uniform(-2.0, 3.0)))};
        Mat2 m2 = a.eval(y + shift);
        if (std::fabs(m.a11 - m2.a11) + std::fabs(m.a12 - m2.a12) + std::fabs(m.a22 - m2.a22) > 1e-12)
            throw Error("material not 1-periodic");
    }
}

inline Mat2 coefficient_at(Vec2 x, double epsilon, double delta, const MaterialTensor& a,
                           const CellGeometry& cell) {
    Vec2 y = mod1(x / epsilon);
    double lam = contrast_at(x, epsilon, delta, cell);
    return a.eval(y) * (lam * lam);
}

// ---------------------------------------------------------------------------
// Perforated macroscopic domain

struct HoleInstance {
    Vec2 offset;   // lower-left corner of the carrying cell, macro coordinates
    int cell_hole; // index into cell.holes
};

// Omega = [0,1]^2 tiled by n x n cells of side epsilon = 1/n, each carrying
// the scaled hole layout.
struct PerforatedDomain {
    CellGeometry cell;
    int n = 2;
    double epsilon = 0.5;
    double kappa = 0.2;  // verified dist(dOmega, eps F) >= kappa * eps
    std::vector<HoleInstance> hole_instances;

    double diameter() const { return std::sqrt(2.0); }

    double dist_to_boundary(Vec2 x) const {
        return std::min(std::min(x.x, 1.0 - x.x), std::min(x.y, 1.0 - x.y));
    }

    bool in_hole(Vec2 x) const { return cell.in_hole(mod1(x * static_cast<double>(n))); }

    // Index of the containing hole instance, or -1.
    int hole_instance_index(Vec2 x) const {
        if (x.x <= 0 || x.x >= 1 || x.y <= 0 || x.y >= 1) return -1;
        Vec2 scaled = x * static_cast<double>(n);
        int ci = std::min(n - 1, static_cast<int>(scaled.x));
        int cj = std::min(n - 1, static_cast<int>(scaled.y));
        Vec2 local{scaled.x - ci, scaled.y - cj};
        int k = cell.hole_index(local);
        if (k < 0) return -1;
        return (cj * n + ci) * static_cast<int>(cell.holes.size()) + k;
    }

    double perforated_area() const { return 1.0 - cell.hole_area(); }
};

inline PerforatedDomain build_perforated_domain(int n, const CellGeometry& cell) {
    if (n < 2) throw ClearanceViolation("n must be >= 2");
    double clr = cell.boundary_clearance();
    if (!cell.holes.empty() && clr < cell.kappa / 2.0) {
        std::ostringstream os;
        os << "scaled holes come within " << clr << " * eps of the outer boundary; need >= kappa/2 = "
           << cell.kappa / 2.0;
        throw ClearanceViolation(os.str());
    }
    PerforatedDomain dom;
    dom.cell = cell;
    dom.n = n;
    dom.epsilon = 1.0 / n;
    dom.kappa = cell.holes.empty() ? cell.kappa : std::min(cell.kappa, clr);
    for (int cj = 0; cj < n; ++cj)
        for (int ci = 0; ci < n; ++ci)
            for (std::size_t k = 0; k < cell.holes.size(); ++k)
                dom.hole_instances.push_back(
                    {Vec2{ci * dom.epsilon, cj * dom.epsilon}, static_cast<int>(k)});
    return dom;
}

// ---------------------------------------------------------------------------
// Regions

struct Region {
    std::function<bool(Vec2)> contains;
    std::string name;
};

inline Region whole_domain() {
    return {[](Vec2) { return true; }, "all"};
}

// Sigma_t = { x in Omega : dist(x, dOmega) < t } for Omega = [0,1]^2.
inline Region boundary_strip(const PerforatedDomain& dom, double t) {
    if (!(t > 0.0 && t < dom.diameter()))
        throw Error("boundary_strip: t must lie in (0, diam)");
    auto d = [dom](Vec2 x) { return dom.dist_to_boundary(x); };
    return {[d, t](Vec2 x) { return d(x) < t; }, "strip"};
}

inline Region ball_region(Vec2 c, double r) {
    return {[c, r](Vec2 x) { return dist(x, c) < r; }, "ball"};
}

}  // namespace perfhom
