#pragma once

// Conforming P1 triangulations.
//
// Cell meshes are built by constrained Delaunay triangulation: structured
// grid points plus hole-boundary polygons inserted incrementally (walking
// point location, on-edge splits, Lawson flips), followed by segment
// recovery so every hole polygon edge is a mesh edge.  Domain meshes tile a
// cell mesh n x n; shared cell-edge vertices are bitwise identical by
// construction and merged exactly.  Coefficient interfaces (hole boundaries,
// laminate breakpoints) are therefore always unions of mesh edges.

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "perfhom/core.hpp"
#include "perfhom/geometry.hpp"

namespace perfhom {

enum VertexMark : std::uint8_t {
    MARK_OUTER = 1,      // on the outer boundary (cell edge or dOmega)
    MARK_HOLE_BDRY = 2,  // on a hole-boundary loop Gamma
};

struct TriMesh {
    std::vector<Vec2> verts;
    std::vector<std::array<int, 3>> tris;  // CCW
    std::vector<int> tri_region;           // 0 = omega, k >= 1 = hole loop k-1
    std::vector<double> tri_area;
    std::vector<std::array<int, 3>> adj;   // neighbor across edge opposite vertex i; -1 = boundary
    std::vector<std::uint8_t> vmark;
    std::vector<std::vector<int>> hole_loops;        // CCW vertex loops, one per hole instance
    std::vector<std::array<int, 2>> periodic_pairs;  // (slave, master); periodic cell meshes only
    double h = 0.0;
    double domain_eps = 0.0;  // 0 for cell meshes, epsilon for tiled domain meshes

    int num_verts() const { return static_cast<int>(verts.size()); }
    int num_tris() const { return static_cast<int>(tris.size()); }

    Vec2 centroid(int t) const {
        const auto& tr = tris[t];
        return (verts[tr[0]] + verts[tr[1]] + verts[tr[2]]) / 3.0;
    }

    // Gradients of the three P1 basis functions on triangle t.
    std::array<Vec2, 3> basis_gradients(int t) const {
        const auto& tr = tris[t];
        Vec2 p0 = verts[tr[0]], p1 = verts[tr[1]], p2 = verts[tr[2]];
        double inv2a = 1.0 / (2.0 * tri_area[t]);
        return {Vec2{(p1.y - p2.y) * inv2a, (p2.x - p1.x) * inv2a},
                Vec2{(p2.y - p0.y) * inv2a, (p0.x - p2.x) * inv2a},
                Vec2{(p0.y - p1.y) * inv2a, (p1.x - p0.x) * inv2a}};
    }

    std::array<Vec2, 3> edge_midpoints(int t) const {
        const auto& tr = tris[t];
        Vec2 p0 = verts[tr[0]], p1 = verts[tr[1]], p2 = verts[tr[2]];
        return {(p1 + p2) * 0.5, (p2 + p0) * 0.5, (p0 + p1) * 0.5};
    }

    double total_area() const {
        double s = 0.0;
        for (double a : tri_area) s += a;
        return s;
    }

    double region_area(int region) const {
        double s = 0.0;
        for (int t = 0; t < num_tris(); ++t)
            if (tri_region[t] == region) s += tri_area[t];
        return s;
    }

    double omega_area() const { return region_area(0); }
    double hole_area_total() const { return total_area() - omega_area(); }

    // Ordered CCW loop of the outer boundary (edges with no neighbor).
    std::vector<int> outer_loop() const {
        std::unordered_map<int, int> next;
        for (int t = 0; t < num_tris(); ++t)
            for (int i = 0; i < 3; ++i)
                if (adj[t][i] < 0) next[tris[t][(i + 1) % 3]] = tris[t][(i + 2) % 3];
        if (next.empty()) return {};
        int start = next.begin()->first;
        for (auto& [v, _] : next) {
            if (verts[v].y < verts[start].y ||
                (verts[v].y == verts[start].y && verts[v].x < verts[start].x))
                start = v;
        }
        std::vector<int> loop;
        int v = start;
        do {
            loop.push_back(v);
            auto it = next.find(v);
            if (it == next.end()) throw MeshFailure("outer boundary is not a closed loop");
            v = it->second;
        } while (v != start && loop.size() <= next.size());
        if (v != start) throw MeshFailure("outer boundary walk did not close");
        return loop;
    }

    // --- point location ------------------------------------------------
    struct Bins {
        int n = 0;
        std::vector<std::vector<int>> cells;
    } bins;

    void build_bins() {
        int n = std::clamp(static_cast<int>(std::ceil(std::sqrt(double(num_tris()) / 4.0))), 4, 2048);
        bins.n = n;
        bins.cells.assign(static_cast<std::size_t>(n) * n, {});
        for (int t = 0; t < num_tris(); ++t) {
            double x0 = 1e30, y0 = 1e30, x1 = -1e30, y1 = -1e30;
            for (int v : tris[t]) {
                x0 = std::min(x0, verts[v].x); x1 = std::max(x1, verts[v].x);
                y0 = std::min(y0, verts[v].y); y1 = std::max(y1, verts[v].y);
            }
            int i0 = std::clamp(int(x0 * n), 0, n - 1), i1 = std::clamp(int(x1 * n), 0, n - 1);
            int j0 = std::clamp(int(y0 * n), 0, n - 1), j1 = std::clamp(int(y1 * n), 0, n - 1);
            for (int j = j0; j <= j1; ++j)
                for (int i = i0; i <= i1; ++i)
                    bins.cells[static_cast<std::size_t>(j) * n + i].push_back(t);
        }
    }

    // Containing triangle and barycentric coordinates, or -1.
    int locate(Vec2 p, std::array<double, 3>* bary = nullptr, double tol = 1e-10) const {
        if (bins.n == 0) return -1;
        int n = bins.n;
        int ci = std::clamp(int(p.x * n), 0, n - 1), cj = std::clamp(int(p.y * n), 0, n - 1);
        for (int ring = 0; ring <= 1; ++ring)
            for (int dj = -ring; dj <= ring; ++dj)
                for (int di = -ring; di <= ring; ++di) {
                    if (ring > 0 && std::abs(di) != ring && std::abs(dj) != ring) continue;
                    int i = ci + di, j = cj + dj;
                    if (i < 0 || j < 0 || i >= n || j >= n) continue;
                    for (int t : bins.cells[static_cast<std::size_t>(j) * n + i]) {
                        const auto& tr = tris[t];
                        Vec2 a = verts[tr[0]], b = verts[tr[1]], c = verts[tr[2]];
                        double den = 2.0 * tri_area[t];
                        double l0 = cross(b - p, c - p) / den;
                        double l1 = cross(c - p, a - p) / den;
                        double l2 = 1.0 - l0 - l1;
                        if (l0 >= -tol && l1 >= -tol && l2 >= -tol) {
                            if (bary) *bary = {l0, l1, l2};
                            return t;
                        }
                    }
                }
        return -1;
    }
};

// ---------------------------------------------------------------------------
// Incremental Delaunay triangulation with segment recovery.

namespace detail {

inline double orient(Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); }

// Sign with a deterministic dead zone: exact ties (collinear grid points)
// land in the zero band regardless of rounding noise.
inline int orient_sign(Vec2 a, Vec2 b, Vec2 c) {
    double det = orient(a, b, c);
    double scale = std::max({std::fabs(b.x - a.x), std::fabs(b.y - a.y), std::fabs(c.x - a.x),
                             std::fabs(c.y - a.y)});
    double tol = 1e-13 * scale * scale + 1e-300;
    if (det > tol) return 1;
    if (det < -tol) return -1;
    return 0;
}

// True when d is strictly inside the circumcircle of CCW triangle (a,b,c).
// Cocircular quadruples (structured grid) fall in the dead zone: no flip.
inline bool in_circle(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
    double adx = a.x - d.x, ady = a.y - d.y;
    double bdx = b.x - d.x, bdy = b.y - d.y;
    double cdx = c.x - d.x, cdy = c.y - d.y;
    double ad2 = adx * adx + ady * ady;
    double bd2 = bdx * bdx + bdy * bdy;
    double cd2 = cdx * cdx + cdy * cdy;
    double det = adx * (bdy * cd2 - cdy * bd2) - ady * (bdx * cd2 - cdx * bd2) +
                 ad2 * (bdx * cdy - cdx * bdy);
    double scale = std::max({std::fabs(adx), std::fabs(ady), std::fabs(bdx), std::fabs(bdy),
                             std::fabs(cdx), std::fabs(cdy)});
    double s2 = scale * scale;
    return det > 1e-11 * s2 * s2 + 1e-300;
}

class Delaunay {
public:
    std::vector<Vec2> pts;
    std::vector<std::array<int, 3>> tri;  // CCW
    std::vector<std::array<int, 3>> nbr;  // neighbor opposite vertex i

    Delaunay() {
        // Super-triangle containing [0,1]^2 with margin; its edges are not
        // collinear with any point of the unit square.
        pts = {{-4.0, -3.0}, {5.0, -3.0}, {0.5, 6.0}};
        tri.push_back({0, 1, 2});
        nbr.push_back({-1, -1, -1});
    }

    // Insert a point; coincident points collapse onto the existing id.
    int insert(Vec2 p) {
        auto [t, code, idx] = locate(p);
        if (code == 2) return tri[t][idx];
        int v = static_cast<int>(pts.size());
        pts.push_back(p);
        if (code == 0)
            split_interior(t, v);
        else
            split_edge(t, idx, v);
        return v;
    }

    std::unordered_set<std::uint64_t> edge_set() const {
        std::unordered_set<std::uint64_t> edges;
        edges.reserve(tri.size() * 2);
        for (const auto& t : tri)
            for (int i = 0; i < 3; ++i) edges.insert(edge_key(t[(i + 1) % 3], t[(i + 2) % 3]));
        return edges;
    }

    static std::uint64_t edge_key(int u, int v) {
        if (u > v) std::swap(u, v);
        return (std::uint64_t(static_cast<std::uint32_t>(u)) << 32) |
               std::uint64_t(static_cast<std::uint32_t>(v));
    }

    // Flip away edges crossing segment (a,b) until (a,b) is an edge.
    void recover_segment(int a, int b, std::unordered_set<std::uint64_t>& edges) {
        int guard = 0;
        while (!edges.count(edge_key(a, b))) {
            if (++guard > 20000) throw MeshFailure("segment recovery did not terminate");
            bool flipped = false;
            for (int t = 0; t < static_cast<int>(tri.size()) && !flipped; ++t)
                for (int i = 0; i < 3; ++i) {
                    int p = tri[t][(i + 1) % 3], q = tri[t][(i + 2) % 3];
                    if (p == a || p == b || q == a || q == b) continue;
                    if (!proper_cross(pts[a], pts[b], pts[p], pts[q])) continue;
                    int u = nbr[t][i];
                    if (u < 0) continue;
                    int j = opposite_index(u, t);
                    int r = tri[t][i], s = tri[u][j];
                    int o1 = orient_sign(pts[r], pts[s], pts[p]);
                    int o2 = orient_sign(pts[r], pts[s], pts[q]);
                    if (o1 == 0 || o2 == 0 || o1 == o2) continue;  // quad not strictly convex
                    edges.erase(edge_key(p, q));
                    flip(t, i);
                    edges.insert(edge_key(r, s));
                    flipped = true;
                    break;
                }
            if (!flipped) throw MeshFailure("segment recovery: no flippable crossing edge");
        }
    }

private:
    int last_tri_ = 0;

    static bool proper_cross(Vec2 a, Vec2 b, Vec2 p, Vec2 q) {
        int o1 = orient_sign(a, b, p), o2 = orient_sign(a, b, q);
        int o3 = orient_sign(p, q, a), o4 = orient_sign(p, q, b);
        return o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0 && o1 != o2 && o3 != o4;
    }

    int opposite_index(int u, int t) const {
        for (int j = 0; j < 3; ++j)
            if (nbr[u][j] == t) return j;
        throw MeshFailure("adjacency inconsistency");
    }

    void set_nbr(int t, int from, int to) {
        if (t < 0) return;
        for (int i = 0; i < 3; ++i)
            if (nbr[t][i] == from) { nbr[t][i] = to; return; }
    }

    // (triangle, code, index): code 0 interior, 1 on edge `index`,
    // 2 coincides with vertex `index`.
    std::tuple<int, int, int> locate(Vec2 p) {
        int t = last_tri_ >= static_cast<int>(tri.size()) ? 0 : last_tri_;
        int steps = 0, cap = static_cast<int>(tri.size()) + 64;
        while (true) {
            if (steps++ > cap) { t = linear_scan(p); break; }
            int s0 = orient_sign(pts[tri[t][1]], pts[tri[t][2]], p);
            if (s0 < 0) { if (nbr[t][0] < 0) { t = linear_scan(p); break; } t = nbr[t][0]; continue; }
            int s1 = orient_sign(pts[tri[t][2]], pts[tri[t][0]], p);
            if (s1 < 0) { if (nbr[t][1] < 0) { t = linear_scan(p); break; } t = nbr[t][1]; continue; }
            int s2 = orient_sign(pts[tri[t][0]], pts[tri[t][1]], p);
            if (s2 < 0) { if (nbr[t][2] < 0) { t = linear_scan(p); break; } t = nbr[t][2]; continue; }
            break;
        }
        last_tri_ = t;
        for (int i = 0; i < 3; ++i)
            if (dist(pts[tri[t][i]], p) < 1e-12) return {t, 2, i};
        if (orient_sign(pts[tri[t][1]], pts[tri[t][2]], p) == 0) return {t, 1, 0};
        if (orient_sign(pts[tri[t][2]], pts[tri[t][0]], p) == 0) return {t, 1, 1};
        if (orient_sign(pts[tri[t][0]], pts[tri[t][1]], p) == 0) return {t, 1, 2};
        return {t, 0, 0};
    }

    int linear_scan(Vec2 p) const {
        for (int t = 0; t < static_cast<int>(tri.size()); ++t) {
            int s0 = orient_sign(pts[tri[t][1]], pts[tri[t][2]], p);
            int s1 = orient_sign(pts[tri[t][2]], pts[tri[t][0]], p);
            int s2 = orient_sign(pts[tri[t][0]], pts[tri[t][1]], p);
            if (s0 >= 0 && s1 >= 0 && s2 >= 0) return t;
        }
        throw MeshFailure("point location failed");
    }

    void split_interior(int t, int v) {
        auto [a, b, c] = tri[t];
        int n0 = nbr[t][0], n1 = nbr[t][1], n2 = nbr[t][2];
        int t1 = static_cast<int>(tri.size()), t2 = t1 + 1;
        // t  = (a,b,v), t1 = (b,c,v), t2 = (c,a,v)
        tri[t] = {a, b, v};
        nbr[t] = {t1, t2, n2};
        tri.push_back({b, c, v});
        nbr.push_back({t2, t, n0});
        tri.push_back({c, a, v});
        nbr.push_back({t, t1, n1});
        set_nbr(n0, t, t1);
        set_nbr(n1, t, t2);
        legalize(t, 2, v);
        legalize(t1, 2, v);
        legalize(t2, 2, v);
    }

    // v lies on the edge opposite vertex index i of triangle t.
    void split_edge(int t, int i, int v) {
        int u = nbr[t][i];
        if (u < 0) throw MeshFailure("point on hull edge of the super-triangle");
        int j = opposite_index(u, t);
        int A = tri[t][i], B = tri[t][(i + 1) % 3], C = tri[t][(i + 2) % 3];
        int D = tri[u][j];  // u = (D, C, B) in CCW order starting at D
        int nCA = nbr[t][(i + 1) % 3];
        int nAB = nbr[t][(i + 2) % 3];
        int nBD = nbr[u][(j + 1) % 3];
        int nDC = nbr[u][(j + 2) % 3];
        int t1 = static_cast<int>(tri.size()), u1 = t1 + 1;
        // t  = (A,B,v)   t1 = (A,v,C)   u = (D,v,B)   u1 = (D,C,v)
        tri[t] = {A, B, v};
        nbr[t] = {u, t1, nAB};
        tri.push_back({A, v, C});
        nbr.push_back({u1, nCA, t});
        tri[u] = {D, v, B};
        nbr[u] = {t, nBD, u1};
        tri.push_back({D, C, v});
        nbr.push_back({t1, u, nDC});
        set_nbr(nCA, t, t1);
        set_nbr(nDC, u, u1);
        legalize(t, 2, v);    // edge (A,B)
        legalize(t1, 1, v);   // edge (C,A)
        legalize(u, 1, v);    // edge (B,D)
        legalize(u1, 2, v);   // edge (D,C)
    }

    void legalize(int t0, int i0, int v) {
        std::vector<std::pair<int, int>> stack{{t0, i0}};
        while (!stack.empty()) {
            auto [t, i] = stack.back();
            stack.pop_back();
            if (tri[t][i] != v) {  // slot may have rotated; find v
                bool found = false;
                for (int k = 0; k < 3; ++k)
                    if (tri[t][k] == v) { i = k; found = true; break; }
                if (!found) continue;
            }
            int u = nbr[t][i];
            if (u < 0) continue;
            int j = opposite_index(u, t);
            int d = tri[u][j];
            if (in_circle(pts[tri[t][0]], pts[tri[t][1]], pts[tri[t][2]], pts[d])) {
                flip(t, i);
                for (int w : {t, u})
                    for (int k = 0; k < 3; ++k)
                        if (tri[w][k] == v) stack.push_back({w, k});
            }
        }
    }

    // Flip the edge opposite vertex index i of triangle t.
    void flip(int t, int i) {
        int u = nbr[t][i];
        int j = opposite_index(u, t);
        int P = tri[t][i], B = tri[t][(i + 1) % 3], C = tri[t][(i + 2) % 3];
        int Q = tri[u][j];  // u = (Q, C, B) CCW
        int nCP = nbr[t][(i + 1) % 3];
        int nPB = nbr[t][(i + 2) % 3];
        int nBQ = nbr[u][(j + 1) % 3];
        int nQC = nbr[u][(j + 2) % 3];
        // t -> (P,B,Q), u -> (P,Q,C)
        tri[t] = {P, B, Q};
        nbr[t] = {nBQ, u, nPB};
        tri[u] = {P, Q, C};
        nbr[u] = {nQC, nCP, t};
        set_nbr(nBQ, u, t);
        set_nbr(nCP, t, u);
    }
};

// Hole boundary discretized as a closed CCW polygon with segment length <= 1/m.
inline std::vector<Vec2> discretize_hole(const Hole& h, int m) {
    std::vector<Vec2> poly;
    if (h.kind == Hole::Kind::disk) {
        int nseg = std::max(8, 4 * static_cast<int>(std::ceil(M_PI * h.radius * m / 2.0)));
        poly.reserve(nseg);
        for (int k = 0; k < nseg; ++k) {
            double a = 2.0 * M_PI * k / nseg;
            poly.push_back({h.center.x + h.radius * std::cos(a),
                            h.center.y + h.radius * std::sin(a)});
        }
    } else {
        // ensure CCW
        std::vector<Vec2> vs = h.vertices;
        double s = 0.0;
        for (std::size_t i = 0; i < vs.size(); ++i)
            s += cross(vs[i], vs[(i + 1) % vs.size()]);
        if (s < 0) std::reverse(vs.begin(), vs.end());
        for (std::size_t i = 0; i < vs.size(); ++i) {
            Vec2 a = vs[i], b = vs[(i + 1) % vs.size()];
            int k = std::max(1, static_cast<int>(std::ceil(dist(a, b) * m)));
            for (int q = 0; q < k; ++q) poly.push_back(a + (b - a) * (double(q) / k));
        }
    }
    return poly;
}

inline double poly_distance(Vec2 p, const std::vector<Vec2>& poly) {
    double d = std::numeric_limits<double>::max();
    for (std::size_t i = 0; i < poly.size(); ++i)
        d = std::min(d, Hole::segment_distance(p, poly[i], poly[(i + 1) % poly.size()]));
    return d;
}

inline bool poly_inside(Vec2 p, const std::vector<Vec2>& poly) {
    bool in = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        Vec2 a = poly[i], b = poly[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            double xi = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if (p.x < xi) in = !in;
        }
    }
    return in;
}

// Core cell triangulation shared by mesh_unit_cell and mesh_domain.
// `interface_fractions` lists coordinates (per axis) that must coincide with
// grid lines so that coefficient jumps are mesh-aligned.
inline TriMesh triangulate_cell(const CellGeometry& cell, int m, bool periodic,
                                const std::vector<double>& interface_fractions) {
    if (m < 4) throw MeshFailure("grid resolution too coarse (m < 4)");
    // grid must hit interface fractions exactly
    {
        int m0 = m;
        bool ok = false;
        for (; m <= 8 * m0 + 8; ++m) {
            ok = true;
            for (double f : interface_fractions) {
                double g = f * m;
                if (std::fabs(g - std::round(g)) > 1e-9) { ok = false; break; }
            }
            if (ok && m % 2 == 0) break;
            ok = false;
        }
        if (!ok) throw MeshFailure("grid cannot align with coefficient interfaces");
    }

    std::vector<std::vector<Vec2>> polys;
    for (const Hole& h : cell.holes) {
        if (hole_cell_boundary_distance(h) * m < 1.0)
            throw MeshFailure("hole too close to the cell boundary for this resolution");
        polys.push_back(discretize_hole(h, m));
    }

    detail::Delaunay dt;
    const double drop_radius = 0.45 / m;
    std::vector<std::vector<int>> grid_id(m + 1, std::vector<int>(m + 1, -1));
    for (int j = 0; j <= m; ++j)
        for (int i = 0; i <= m; ++i) {
            Vec2 p{double(i) / m, double(j) / m};
            bool near_poly = false;
            if (i > 0 && i < m && j > 0 && j < m) {
                for (std::size_t k = 0; k < polys.size() && !near_poly; ++k) {
                    // cheap prefilter on the exact hole distance
                    if (std::fabs(cell.holes[k].signed_distance(p)) > 2.0 / m) continue;
                    if (poly_distance(p, polys[k]) < drop_radius) near_poly = true;
                }
            }
            if (!near_poly) grid_id[j][i] = dt.insert(p);
        }
    std::vector<std::vector<int>> poly_ids;
    for (const auto& poly : polys) {
        std::vector<int> ids;
        ids.reserve(poly.size());
        for (Vec2 p : poly) ids.push_back(dt.insert(p));
        poly_ids.push_back(std::move(ids));
    }

    // recover hole boundary segments
    auto edges = dt.edge_set();
    for (const auto& ids : poly_ids)
        for (std::size_t q = 0; q < ids.size(); ++q)
            dt.recover_segment(ids[q], ids[(q + 1) % ids.size()], edges);

    // strip super-triangle, build the mesh
    TriMesh mesh;
    mesh.h = 1.0 / m;
    mesh.verts.assign(dt.pts.begin() + 3, dt.pts.end());
    for (const auto& t : dt.tri) {
        if (t[0] < 3 || t[1] < 3 || t[2] < 3) continue;
        mesh.tris.push_back({t[0] - 3, t[1] - 3, t[2] - 3});
    }
    mesh.tri_area.resize(mesh.num_tris());
    for (int t = 0; t < mesh.num_tris(); ++t) {
        const auto& tr = mesh.tris[t];
        double a2 = detail::orient(mesh.verts[tr[0]], mesh.verts[tr[1]], mesh.verts[tr[2]]);
        if (a2 <= 0) throw MeshFailure("non-positive triangle area after triangulation");
        mesh.tri_area[t] = 0.5 * a2;
    }

    // regions by centroid-in-polygon (conforming: no straddling triangles)
    mesh.tri_region.assign(mesh.num_tris(), 0);
    for (int t = 0; t < mesh.num_tris(); ++t) {
        Vec2 c = mesh.centroid(t);
        for (std::size_t k = 0; k < polys.size(); ++k) {
            Vec2 lo = cell.holes[k].bbox_min(), hi = cell.holes[k].bbox_max();
            if (c.x < lo.x || c.x > hi.x || c.y < lo.y || c.y > hi.y) continue;
            if (poly_inside(c, polys[k])) { mesh.tri_region[t] = static_cast<int>(k) + 1; break; }
        }
    }

    // adjacency
    mesh.adj.assign(mesh.num_tris(), {-1, -1, -1});
    {
        std::unordered_map<std::uint64_t, std::pair<int, int>> half;
        half.reserve(mesh.tris.size() * 2);
        for (int t = 0; t < mesh.num_tris(); ++t)
            for (int i = 0; i < 3; ++i) {
                std::uint64_t k = detail::Delaunay::edge_key(mesh.tris[t][(i + 1) % 3],
                                                             mesh.tris[t][(i + 2) % 3]);
                auto it = half.find(k);
                if (it == half.end())
                    half[k] = {t, i};
                else {
                    mesh.adj[t][i] = it->second.first;
                    mesh.adj[it->second.first][it->second.second] = t;
                }
            }
    }

    // verify every hole segment is a mesh edge
    {
        auto final_edges = std::unordered_set<std::uint64_t>();
        for (const auto& t : mesh.tris)
            for (int i = 0; i < 3; ++i)
                final_edges.insert(detail::Delaunay::edge_key(t[(i + 1) % 3], t[(i + 2) % 3]));
        for (const auto& ids : poly_ids)
            for (std::size_t q = 0; q < ids.size(); ++q)
                if (!final_edges.count(detail::Delaunay::edge_key(ids[q] - 3,
                                                                  ids[(q + 1) % ids.size()] - 3)))
                    throw MeshFailure("hole boundary is not conforming");
    }

    // markers and loops
    mesh.vmark.assign(mesh.num_verts(), 0);
    for (int v = 0; v < mesh.num_verts(); ++v) {
        Vec2 p = mesh.verts[v];
        if (p.x <= 1e-12 || p.x >= 1.0 - 1e-12 || p.y <= 1e-12 || p.y >= 1.0 - 1e-12)
            mesh.vmark[v] |= MARK_OUTER;
    }
    for (const auto& ids : poly_ids) {
        std::vector<int> loop;
        loop.reserve(ids.size());
        for (int id : ids) {
            loop.push_back(id - 3);
            mesh.vmark[id - 3] |= MARK_HOLE_BDRY;
        }
        mesh.hole_loops.push_back(std::move(loop));
    }

    if (periodic) {
        for (int j = 0; j <= m; ++j) {
            int a = grid_id[j][m], b = grid_id[j][0];
            if (a < 0 || b < 0) throw MeshFailure("periodic pairing lost a boundary vertex");
            if (j == m) b = grid_id[0][0];
            mesh.periodic_pairs.push_back({a - 3, b - 3});
        }
        for (int i = 1; i < m; ++i) {
            int a = grid_id[m][i], b = grid_id[0][i];
            if (a < 0 || b < 0) throw MeshFailure("periodic pairing lost a boundary vertex");
            mesh.periodic_pairs.push_back({a - 3, b - 3});
        }
        // top-left corner pairs with the origin
        mesh.periodic_pairs.push_back({grid_id[m][0] - 3, grid_id[0][0] - 3});
    }

    if (std::fabs(mesh.total_area() - 1.0) > 1e-9)
        throw MeshFailure("triangulation does not partition the cell");

    mesh.build_bins();
    return mesh;
}

}  // namespace detail

// Conforming triangulation of the unit cell.  Holes are kept in the mesh with
// their interior triangles region-marked; boundary vertices are
// periodic-paired when requested.
inline TriMesh mesh_unit_cell(const CellGeometry& cell, double h, bool periodic,
                              const std::vector<double>& interface_fractions = {}) {
    if (!(h > 0)) throw MeshFailure("h must be positive");
    if (!cell.holes.empty()) {
        double min_gap = cell.boundary_clearance();
        double min_r = std::numeric_limits<double>::max();
        for (const Hole& hl : cell.holes) {
            min_r = std::min(min_r, hl.kind == Hole::Kind::disk ? hl.radius
                                                                : std::sqrt(hl.area() / M_PI));
            for (const Hole& hl2 : cell.holes)
                if (&hl != &hl2) min_gap = std::min(min_gap, hole_distance(hl, hl2));
        }
        if (h >= std::min(min_gap, min_r) / 2.0)
            throw MeshFailure("h too coarse to resolve the holes: need h < " +
                              format_double(std::min(min_gap, min_r) / 2.0));
    }
    int m = std::max(4, static_cast<int>(std::lround(1.0 / h)));
    return detail::triangulate_cell(cell, m, periodic, interface_fractions);
}

// Conforming mesh of Omega = [0,1]^2: the cell mesh scaled by epsilon and
// tiled n x n.  Shared cell-boundary vertices are bitwise equal across copies
// and merged exactly.
inline TriMesh mesh_domain(const PerforatedDomain& dom, double h,
                           const std::vector<double>& interface_fractions = {}) {
    int n = dom.n;
    double eps = dom.epsilon;
    if (h > eps / 4.0 + 1e-12)
        throw MeshFailure("h must satisfy h <= eps/4 to resolve the microstructure");
    int m = std::max(4, static_cast<int>(std::lround(eps / h)));
    TriMesh cm = detail::triangulate_cell(dom.cell, m, false, interface_fractions);

    TriMesh mesh;
    mesh.h = cm.h * eps;
    mesh.domain_eps = eps;

    struct KeyHash {
        std::size_t operator()(const std::pair<std::uint64_t, std::uint64_t>& k) const {
            return std::hash<std::uint64_t>()(k.first * 1000003u ^ k.second);
        }
    };
    std::unordered_map<std::pair<std::uint64_t, std::uint64_t>, int, KeyHash> vid;
    vid.reserve(static_cast<std::size_t>(cm.num_verts()) * n * n);
    auto bits = [](double d) {
        std::uint64_t u;
        std::memcpy(&u, &d, 8);
        return u;
    };

    int holes_per_cell = static_cast<int>(dom.cell.holes.size());
    mesh.hole_loops.resize(static_cast<std::size_t>(holes_per_cell) * n * n);
    for (int cj = 0; cj < n; ++cj)
        for (int ci = 0; ci < n; ++ci) {
            std::vector<int> map(cm.num_verts());
            for (int v = 0; v < cm.num_verts(); ++v) {
                double gx = (ci + cm.verts[v].x) / n;
                double gy = (cj + cm.verts[v].y) / n;
                auto key = std::make_pair(bits(gx), bits(gy));
                auto it = vid.find(key);
                if (it == vid.end()) {
                    int id = mesh.num_verts();
                    vid.emplace(key, id);
                    mesh.verts.push_back({gx, gy});
                    map[v] = id;
                } else {
                    map[v] = it->second;
                }
            }
            int cell_index = cj * n + ci;
            for (int t = 0; t < cm.num_tris(); ++t) {
                mesh.tris.push_back({map[cm.tris[t][0]], map[cm.tris[t][1]], map[cm.tris[t][2]]});
                int r = cm.tri_region[t];
                mesh.tri_region.push_back(r == 0 ? 0 : cell_index * holes_per_cell + r);
            }
            for (int k = 0; k < holes_per_cell; ++k) {
                std::vector<int> loop;
                loop.reserve(cm.hole_loops[k].size());
                for (int v : cm.hole_loops[k]) loop.push_back(map[v]);
                mesh.hole_loops[static_cast<std::size_t>(cell_index) * holes_per_cell + k] =
                    std::move(loop);
            }
        }

    mesh.tri_area.resize(mesh.num_tris());
    for (int t = 0; t < mesh.num_tris(); ++t) {
        const auto& tr = mesh.tris[t];
        double a2 = detail::orient(mesh.verts[tr[0]], mesh.verts[tr[1]], mesh.verts[tr[2]]);
        if (a2 <= 0) throw MeshFailure("tiling produced a degenerate triangle");
        mesh.tri_area[t] = 0.5 * a2;
    }

    mesh.adj.assign(mesh.num_tris(), {-1, -1, -1});
    {
        std::unordered_map<std::uint64_t, std::pair<int, int>> half;
        half.reserve(mesh.tris.size() * 2);
        for (int t = 0; t < mesh.num_tris(); ++t)
            for (int i = 0; i < 3; ++i) {
                std::uint64_t k = detail::Delaunay::edge_key(mesh.tris[t][(i + 1) % 3],
                                                             mesh.tris[t][(i + 2) % 3]);
                auto it = half.find(k);
                if (it == half.end())
                    half[k] = {t, i};
                else {
                    mesh.adj[t][i] = it->second.first;
                    mesh.adj[it->second.first][it->second.second] = t;
                }
            }
    }

    mesh.vmark.assign(mesh.num_verts(), 0);
    for (int v = 0; v < mesh.num_verts(); ++v) {
        Vec2 p = mesh.verts[v];
        if (p.x <= 1e-12 || p.x >= 1.0 - 1e-12 || p.y <= 1e-12 || p.y >= 1.0 - 1e-12)
            mesh.vmark[v] |= MARK_OUTER;
    }
    for (const auto& loop : mesh.hole_loops)
        for (int v : loop) mesh.vmark[v] |= MARK_HOLE_BDRY;

    if (std::fabs(mesh.total_area() - 1.0) > 1e-9)
        throw MeshFailure("tiled mesh does not partition the domain");

    mesh.build_bins();
    return mesh;
}

// ---------------------------------------------------------------------------
// Plain-text mesh format:
//   v <x> <y>            vertex (printed with %.17g, round-trips exactly)
//   t <i> <j> <k> <reg>  triangle with region id
//   m <v> <mark>         nonzero vertex marker
//   p <slave> <master>   periodic pair
//   l <v0> <v1> ...      hole boundary loop
//   h <h> <eps>          mesh sizes

inline void save_mesh(const TriMesh& mesh, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IOError("cannot open for writing: " + path);
    char buf[96];
    os << "# perfhom mesh\n";
    std::snprintf(buf, sizeof buf, "h %.17g %.17g\n", mesh.h, mesh.domain_eps);
    os << buf;
    for (const Vec2& p : mesh.verts) {
        std::snprintf(buf, sizeof buf, "v %.17g %.17g\n", p.x, p.y);
        os << buf;
    }
    for (int t = 0; t < mesh.num_tris(); ++t) {
        const auto& tr = mesh.tris[t];
        os << "t " << tr[0] << ' ' << tr[1] << ' ' << tr[2] << ' ' << mesh.tri_region[t] << '\n';
    }
    for (int v = 0; v < mesh.num_verts(); ++v)
        if (mesh.vmark[v]) os << "m " << v << ' ' << int(mesh.vmark[v]) << '\n';
    for (const auto& pr : mesh.periodic_pairs) os << "p " << pr[0] << ' ' << pr[1] << '\n';
    for (const auto& loop : mesh.hole_loops) {
        os << "l";
        for (int v : loop) os << ' ' << v;
        os << '\n';
    }
    if (!os) throw IOError("write failed: " + path);
}

inline TriMesh load_mesh(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IOError("cannot open for reading: " + path);
    TriMesh mesh;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        char tag;
        ls >> tag;
        if (tag == 'h') {
            ls >> mesh.h >> mesh.domain_eps;
        } else if (tag == 'v') {
            Vec2 p;
            ls >> p.x >> p.y;
            mesh.verts.push_back(p);
        } else if (tag == 't') {
            std::array<int, 3> tr;
            int reg;
            ls >> tr[0] >> tr[1] >> tr[2] >> reg;
            mesh.tris.push_back(tr);
            mesh.tri_region.push_back(reg);
        } else if (tag == 'm') {
            int v, mk;
            ls >> v >> mk;
            if (mesh.vmark.size() < mesh.verts.size()) mesh.vmark.resize(mesh.verts.size(), 0);
            mesh.vmark[v] = static_cast<std::uint8_t>(mk);
        } else if (tag == 'p') {
            std::array<int, 2> pr;
            ls >> pr[0] >> pr[1];
            mesh.periodic_pairs.push_back(pr);
        } else if (tag == 'l') {
            std::vector<int> loop;
            int v;
            while (ls >> v) loop.push_back(v);
            mesh.hole_loops.push_back(std::move(loop));
        }
    }
    if (mesh.vmark.size() < mesh.verts.size()) mesh.vmark.resize(mesh.verts.size(), 0);
    mesh.tri_area.resize(mesh.num_tris());
    for (int t = 0; t < mesh.num_tris(); ++t) {
        const auto& tr = mesh.tris[t];
        mesh.tri_area[t] =
            0.5 * detail::orient(mesh.verts[tr[0]], mesh.verts[tr[1]], mesh.verts[tr[2]]);
        if (mesh.tri_area[t] <= 0) throw IOError("loaded mesh has a non-positive triangle");
    }
    mesh.adj.assign(mesh.num_tris(), {-1, -1, -1});
    std::unordered_map<std::uint64_t, std::pair<int, int>> half;
    for (int t = 0; t < mesh.num_tris(); ++t)
        for (int i = 0; i < 3; ++i) {
            std::uint64_t k = detail::Delaunay::edge_key(mesh.tris[t][(i + 1) % 3],
                                                         mesh.tris[t][(i + 2) % 3]);
            auto it = half.find(k);
            if (it == half.end())
                half[k] = {t, i};
            else {
                mesh.adj[t][i] = it->second.first;
                mesh.adj[it->second.first][it->second.second] = t;
            }
        }
    mesh.build_bins();
    return mesh;
}

}  // namespace perfhom
