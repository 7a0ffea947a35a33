#pragma once

// P1 finite elements on TriMesh: weighted stiffness assembly with
// Dirichlet / periodic / mean-zero constraints, Jacobi-preconditioned
// conjugate gradients, region norms, PDE-based extension into holes,
// variational conormal flux recovery and tangential boundary gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <unordered_map>
#include <vector>

#include "perfhom/core.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/mesh.hpp"

namespace perfhom {

// ---------------------------------------------------------------------------
// Fields

struct FemField {
    const TriMesh* mesh = nullptr;
    std::vector<double> values;

    FemField() = default;
    explicit FemField(const TriMesh& m, double fill = 0.0)
        : mesh(&m), values(m.num_verts(), fill) {}

    double& operator[](int v) { return values[v]; }
    double operator[](int v) const { return values[v]; }

    Vec2 gradient(int t) const {
        auto g = mesh->basis_gradients(t);
        const auto& tr = mesh->tris[t];
        return g[0] * values[tr[0]] + g[1] * values[tr[1]] + g[2] * values[tr[2]];
    }

    std::optional<double> eval(Vec2 p) const {
        std::array<double, 3> l;
        int t = mesh->locate(p, &l);
        if (t < 0) return std::nullopt;
        const auto& tr = mesh->tris[t];
        return l[0] * values[tr[0]] + l[1] * values[tr[1]] + l[2] * values[tr[2]];
    }

    static FemField interpolate(const TriMesh& m, const std::function<double(Vec2)>& f) {
        FemField u(m);
        for (int v = 0; v < m.num_verts(); ++v) u.values[v] = f(m.verts[v]);
        return u;
    }
};

// Area-weighted integral of a nodal field over a triangle subset.
inline double integrate(const FemField& u, const std::vector<int>& tris_subset) {
    double s = 0.0;
    for (int t : tris_subset) {
        const auto& tr = u.mesh->tris[t];
        s += u.mesh->tri_area[t] * (u.values[tr[0]] + u.values[tr[1]] + u.values[tr[2]]) / 3.0;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Sparse matrices

struct Csr {
    int n = 0;
    std::vector<int> ptr, col;
    std::vector<double> val;

    void mul(const std::vector<double>& x, std::vector<double>& y) const {
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int k = ptr[i]; k < ptr[i + 1]; ++k) s += val[k] * x[col[k]];
            y[i] = s;
        }
    }

    double entry(int i, int j) const {
        for (int k = ptr[i]; k < ptr[i + 1]; ++k)
            if (col[k] == j) return val[k];
        return 0.0;
    }

    std::vector<double> diagonal() const {
        std::vector<double> d(n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int k = ptr[i]; k < ptr[i + 1]; ++k)
                if (col[k] == i) d[i] = val[k];
        return d;
    }

    // max |K_ij - K_ji| over stored entries
    double symmetry_error() const {
        double e = 0.0;
        for (int i = 0; i < n; ++i)
            for (int k = ptr[i]; k < ptr[i + 1]; ++k)
                e = std::max(e, std::fabs(val[k] - entry(col[k], i)));
        return e;
    }

    struct Triplet {
        int i, j;
        double v;
    };

    static Csr from_triplets(int n, std::vector<Triplet>& ts) {
        Csr m;
        m.n = n;
        std::sort(ts.begin(), ts.end(), [](const Triplet& a, const Triplet& b) {
            return a.i != b.i ? a.i < b.i : a.j < b.j;
        });
        m.ptr.assign(n + 1, 0);
        for (std::size_t k = 0; k < ts.size();) {
            std::size_t k2 = k;
            double s = 0.0;
            while (k2 < ts.size() && ts[k2].i == ts[k].i && ts[k2].j == ts[k].j) s += ts[k2++].v;
            m.col.push_back(ts[k].j);
            m.val.push_back(s);
            ++m.ptr[ts[k].i + 1];
            k = k2;
        }
        for (int i = 0; i < n; ++i) m.ptr[i + 1] += m.ptr[i];
        return m;
    }
};

// ---------------------------------------------------------------------------
// Assembly

using Coefficient = std::function<Mat2(int tri, Vec2 x)>;

inline Coefficient constant_coefficient(Mat2 a) {
    return [a](int, Vec2) { return a; };
}

// [Lambda_delta(x/eps)]^2 A(x/eps) with the mask taken from the mesh's
// triangle regions (interfaces are mesh-aligned, so the mask is constant per
// triangle); A is evaluated pointwise.  Use eps = 1 on cell meshes.
inline Coefficient micro_coefficient(const TriMesh& mesh, const MaterialTensor& a, double delta,
                                     double eps) {
    const TriMesh* mp = &mesh;
    return [mp, &a, delta, eps](int tri, Vec2 x) {
        double lam = (mp->tri_region[tri] > 0) ? delta : 1.0;
        return a.eval(mod1(x / eps)) * (lam * lam);
    };
}

// A(x/eps) without the contrast mask (hole extensions, conormal direction).
inline Coefficient unmasked_coefficient(const MaterialTensor& a, double eps) {
    return [&a, eps](int, Vec2 x) { return a.eval(mod1(x / eps)); };
}

struct Loads {
    std::function<double(Vec2)> volume;          // rhs += int f phi
    std::function<Vec2(int, Vec2)> div_form;     // rhs += -int G . grad phi   (for f = div G)
    std::function<double(Vec2)> neumann;         // rhs += boundary int g phi  (outer boundary)
};

struct Constraints {
    std::vector<std::pair<int, double>> dirichlet;  // (vertex, value)
    bool periodic = false;
    bool mean_zero = false;
    bool omega_only = false;  // assemble over region-0 triangles; hole interiors eliminated
};

struct SolveInfo {
    int iterations = 0;
    double relative_residual = 0.0;
};

struct LinearSystem {
    const TriMesh* mesh = nullptr;
    Csr K;                     // reduced SPD system
    std::vector<double> rhs;
    std::vector<int> dof_of_vert;   // -1: not a dof (dirichlet / slave / eliminated)
    std::vector<int> vert_of_dof;
    std::vector<int> master_of_vert;  // periodic resolution (identity when not periodic)
    std::vector<double> fixed_value;  // per vertex, Dirichlet values (NaN elsewhere)
    std::vector<char> vert_active;    // belongs to an assembled triangle
    bool mean_zero = false;
    std::vector<double> mz_weight;  // per dof, lumped areas for normalization

    // unconstrained operator at vertex level (flux recovery, residuals)
    Csr K_raw;
    std::vector<double> rhs_raw;

    // Scatter reduced dof values back to all mesh vertices.
    FemField expand(const std::vector<double>& x) const {
        FemField u(*mesh);
        for (int v = 0; v < mesh->num_verts(); ++v) {
            int mv = master_of_vert[v];
            if (dof_of_vert[mv] >= 0)
                u.values[v] = x[dof_of_vert[mv]];
            else if (!std::isnan(fixed_value[mv]))
                u.values[v] = fixed_value[mv];
        }
        return u;
    }
};

// Element-wise stiffness with 3-point edge-midpoint quadrature.  Quadrature
// points are pulled slightly toward the centroid so piecewise coefficients
// are never sampled exactly on a jump interface.
inline LinearSystem assemble(const TriMesh& mesh, const Coefficient& coeff, const Loads& loads,
                             const Constraints& cons) {
    LinearSystem sys;
    sys.mesh = &mesh;
    int nv = mesh.num_verts();

    sys.master_of_vert.resize(nv);
    std::iota(sys.master_of_vert.begin(), sys.master_of_vert.end(), 0);
    if (cons.periodic)
        for (auto [slave, master] : mesh.periodic_pairs) sys.master_of_vert[slave] = master;

    sys.vert_active.assign(nv, 0);
    std::vector<Csr::Triplet> raw;
    raw.reserve(static_cast<std::size_t>(mesh.num_tris()) * 9);
    sys.rhs_raw.assign(nv, 0.0);

    const double pull = 1e-3;
    for (int t = 0; t < mesh.num_tris(); ++t) {
        if (cons.omega_only && mesh.tri_region[t] != 0) continue;
        const auto& tr = mesh.tris[t];
        double area = mesh.tri_area[t];
        Vec2 c = mesh.centroid(t);
        auto mids = mesh.edge_midpoints(t);
        Mat2 abar{0, 0, 0};
        for (Vec2 q : mids) {
            Vec2 qp = q + (c - q) * pull;
            Mat2 aq = coeff(t, qp);
            if (!std::isfinite(aq.a11) || !std::isfinite(aq.a12) || !std::isfinite(aq.a22))
                throw AssemblyError("non-finite coefficient value");
            abar = abar + aq * (1.0 / 3.0);
        }
        auto g = mesh.basis_gradients(t);
        for (int i = 0; i < 3; ++i) {
            sys.vert_active[tr[i]] = 1;
            for (int j = i; j < 3; ++j) {
                double k = area * abar.quad(g[i], g[j]);
                raw.push_back({tr[i], tr[j], k});
                if (j != i) raw.push_back({tr[j], tr[i], k});
            }
        }
        if (loads.volume) {
            // phi_i vanishes at the midpoint of the opposite edge and is 1/2
            // at the other two midpoints
            double f0 = loads.volume(mids[0] + (c - mids[0]) * pull);
            double f1 = loads.volume(mids[1] + (c - mids[1]) * pull);
            double f2 = loads.volume(mids[2] + (c - mids[2]) * pull);
            sys.rhs_raw[tr[0]] += area / 3.0 * 0.5 * (f1 + f2);
            sys.rhs_raw[tr[1]] += area / 3.0 * 0.5 * (f0 + f2);
            sys.rhs_raw[tr[2]] += area / 3.0 * 0.5 * (f0 + f1);
        }
        if (loads.div_form) {
            Vec2 gm{0, 0};
            for (Vec2 q : mids) gm += loads.div_form(t, q + (c - q) * pull) * (1.0 / 3.0);
            for (int i = 0; i < 3; ++i) sys.rhs_raw[tr[i]] -= area * gm.dot(g[i]);
        }
    }

    if (loads.neumann) {
        for (int t = 0; t < mesh.num_tris(); ++t) {
            if (cons.omega_only && mesh.tri_region[t] != 0) continue;
            for (int i = 0; i < 3; ++i) {
                if (mesh.adj[t][i] >= 0) continue;
                int a = mesh.tris[t][(i + 1) % 3], b = mesh.tris[t][(i + 2) % 3];
                Vec2 pa = mesh.verts[a], pb = mesh.verts[b];
                double len = dist(pa, pb);
                double ga = loads.neumann(pa), gb = loads.neumann(pb);
                double gm = loads.neumann((pa + pb) * 0.5);
                // Simpson: int_e g phi_a ds, phi_a linear 1 -> 0 along e
                sys.rhs_raw[a] += len * (ga + 2.0 * gm) / 6.0;
                sys.rhs_raw[b] += len * (gb + 2.0 * gm) / 6.0;
            }
        }
    }

    sys.K_raw = Csr::from_triplets(nv, raw);

    // constraint resolution: periodic slaves fold into masters, Dirichlet
    // vertices are eliminated
    sys.fixed_value.assign(nv, std::numeric_limits<double>::quiet_NaN());
    for (auto [v, g] : cons.dirichlet) sys.fixed_value[sys.master_of_vert[v]] = g;

    sys.dof_of_vert.assign(nv, -1);
    for (int v = 0; v < nv; ++v) {
        if (!sys.vert_active[v]) continue;
        int mv = sys.master_of_vert[v];
        if (!std::isnan(sys.fixed_value[mv])) continue;
        if (sys.dof_of_vert[mv] < 0) {
            sys.dof_of_vert[mv] = static_cast<int>(sys.vert_of_dof.size());
            sys.vert_of_dof.push_back(mv);
        }
    }
    int nd = static_cast<int>(sys.vert_of_dof.size());
    if (nd == 0) throw AssemblyError("no unknowns after applying constraints");

    sys.rhs.assign(nd, 0.0);
    std::vector<Csr::Triplet> red;
    red.reserve(raw.size());
    for (int i = 0; i < nv; ++i) {
        int mi = sys.master_of_vert[i];
        int di = sys.dof_of_vert[mi];
        if (di < 0) continue;
        sys.rhs[di] += sys.rhs_raw[i];
        for (int k = sys.K_raw.ptr[i]; k < sys.K_raw.ptr[i + 1]; ++k) {
            int j = sys.K_raw.col[k];
            int mj = sys.master_of_vert[j];
            double v = sys.K_raw.val[k];
            if (!std::isnan(sys.fixed_value[mj]))
                sys.rhs[di] -= v * sys.fixed_value[mj];
            else
                red.push_back({di, sys.dof_of_vert[mj], v});
        }
    }
    sys.K = Csr::from_triplets(nd, red);

    sys.mean_zero = cons.mean_zero;
    if (cons.mean_zero) {
        sys.mz_weight.assign(nd, 0.0);
        for (int t = 0; t < mesh.num_tris(); ++t) {
            if (cons.omega_only && mesh.tri_region[t] != 0) continue;
            for (int vv : mesh.tris[t]) {
                int d = sys.dof_of_vert[sys.master_of_vert[vv]];
                if (d >= 0) sys.mz_weight[d] += mesh.tri_area[t] / 3.0;
            }
        }
    }
    return sys;
}

// Jacobi-preconditioned conjugate gradients.  Relative residual <= tol
// against ||rhs||; iteration cap 50 sqrt(N) + 1000.  Mean-zero systems are
// solved in the complement of constants and renormalized with the stored
// lumped-area weights.
inline FemField solve(const LinearSystem& sys, double tol = 1e-10,
                      const FemField* initial_guess = nullptr, SolveInfo* info = nullptr) {
    int n = sys.K.n;
    std::vector<double> diag = sys.K.diagonal();
    for (int i = 0; i < n; ++i)
        if (!(diag[i] > 0.0))
            throw SingularSystem("zero diagonal at reduced dof " + std::to_string(i));

    std::vector<double> b = sys.rhs;
    auto project = [&](std::vector<double>& v) {
        double s = std::accumulate(v.begin(), v.end(), 0.0) / n;
        for (double& t : v) t -= s;
    };
    if (sys.mean_zero) project(b);

    std::vector<double> x(n, 0.0);
    if (initial_guess && initial_guess->mesh == sys.mesh) {
        for (int d = 0; d < n; ++d) x[d] = initial_guess->values[sys.vert_of_dof[d]];
        if (sys.mean_zero) project(x);
    }

    double bnorm = std::sqrt(std::inner_product(b.begin(), b.end(), b.begin(), 0.0));
    SolveInfo local;
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        if (info) *info = local;
        FemField u = sys.expand(x);
        return u;
    }

    std::vector<double> r(n), z(n), p(n), q(n);
    sys.K.mul(x, r);
    for (int i = 0; i < n; ++i) r[i] = b[i] - r[i];
    if (sys.mean_zero) project(r);
    for (int i = 0; i < n; ++i) z[i] = r[i] / diag[i];
    p = z;
    double rz = std::inner_product(r.begin(), r.end(), z.begin(), 0.0);
    int cap = static_cast<int>(50.0 * std::sqrt(double(n))) + 1000;
    double rn = std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
    int it = 0;
    while (rn > tol * bnorm) {
        if (it >= cap)
            throw NoConvergence("CG hit the iteration cap (" + std::to_string(cap) +
                                "); relative residual " + format_double(rn / bnorm));
        sys.K.mul(p, q);
        if (sys.mean_zero) project(q);
        double pq = std::inner_product(p.begin(), p.end(), q.begin(), 0.0);
        if (!(pq > 0.0)) throw SingularSystem("CG met a non-positive curvature direction");
        double alpha = rz / pq;
        for (int i = 0; i < n; ++i) { x[i] += alpha * p[i]; r[i] -= alpha * q[i]; }
        for (int i = 0; i < n; ++i) z[i] = r[i] / diag[i];
        double rz2 = std::inner_product(r.begin(), r.end(), z.begin(), 0.0);
        double beta = rz2 / rz;
        rz = rz2;
        for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
        rn = std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
        ++it;
    }
    local.iterations = it;
    local.relative_residual = rn / bnorm;
    if (info) *info = local;

    if (sys.mean_zero && !sys.mz_weight.empty()) {
        double wsum = 0.0, wx = 0.0;
        for (int i = 0; i < n; ++i) { wsum += sys.mz_weight[i]; wx += sys.mz_weight[i] * x[i]; }
        double shift = wx / wsum;
        for (double& t : x) t -= shift;
    }
    return sys.expand(x);
}

// ---------------------------------------------------------------------------
// Norms

enum class NormKind { L2, H1_semi };
enum class NormWeight { none, mask, mask_squared };

// Quadrature of |u|^2 or |grad u|^2 times the squared weight over triangles
// whose centroid lies in the region; returns the square root.
inline double region_norm(const FemField& u, const Region& region, NormKind kind,
                          NormWeight w = NormWeight::none, double delta = 1.0) {
    const TriMesh& mesh = *u.mesh;
    double acc = 0.0;
    bool any = false;
    for (int t = 0; t < mesh.num_tris(); ++t) {
        if (!region.contains(mesh.centroid(t))) continue;
        any = true;
        double lam = (mesh.tri_region[t] > 0) ? delta : 1.0;
        double weight = 1.0;
        if (w == NormWeight::mask) weight = lam * lam;
        if (w == NormWeight::mask_squared) weight = lam * lam * lam * lam;
        if (weight == 0.0) continue;
        if (kind == NormKind::H1_semi) {
            acc += weight * mesh.tri_area[t] * u.gradient(t).norm2();
        } else {
            const auto& tr = mesh.tris[t];
            double s = u.values[tr[0]] + u.values[tr[1]] + u.values[tr[2]];
            double s2 = u.values[tr[0]] * u.values[tr[0]] + u.values[tr[1]] * u.values[tr[1]] +
                        u.values[tr[2]] * u.values[tr[2]];
            acc += weight * mesh.tri_area[t] / 12.0 * (s * s + s2);
        }
    }
    if (!any) throw EmptyRegion("region_norm: no triangle centroid in region");
    return std::sqrt(acc);
}

// Norm restricted to the unperforated part (region 0 triangles).
inline double omega_norm(const FemField& u, NormKind kind) {
    const TriMesh& mesh = *u.mesh;
    double acc = 0.0;
    for (int t = 0; t < mesh.num_tris(); ++t) {
        if (mesh.tri_region[t] != 0) continue;
        if (kind == NormKind::H1_semi) {
            acc += mesh.tri_area[t] * u.gradient(t).norm2();
        } else {
            const auto& tr = mesh.tris[t];
            double s = u.values[tr[0]] + u.values[tr[1]] + u.values[tr[2]];
            double s2 = u.values[tr[0]] * u.values[tr[0]] + u.values[tr[1]] * u.values[tr[1]] +
                        u.values[tr[2]] * u.values[tr[2]];
            acc += mesh.tri_area[t] / 12.0 * (s * s + s2);
        }
    }
    return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// Local Dirichlet solves inside the holes

// For each hole loop, replace the interior values of `u` by the solution of
// div(coeff grad w) = div G with trace data taken from the loop.  The
// exterior is untouched.
inline void extend_into_holes(FemField& u, const Coefficient& coeff,
                              const std::function<Vec2(int, Vec2)>& div_form = nullptr) {
    const TriMesh& mesh = *u.mesh;
    int nloops = static_cast<int>(mesh.hole_loops.size());
    if (nloops == 0) return;

    std::vector<std::vector<int>> region_tris(nloops);
    for (int t = 0; t < mesh.num_tris(); ++t)
        if (mesh.tri_region[t] > 0) region_tris[mesh.tri_region[t] - 1].push_back(t);

    const double pull = 1e-3;
    for (int k = 0; k < nloops; ++k) {
        const auto& tris = region_tris[k];
        if (tris.empty()) continue;
        std::unordered_map<int, int> local;  // vertex -> local dof (-1 boundary)
        std::vector<int> inner;
        for (int t : tris)
            for (int v : mesh.tris[t])
                if (!local.count(v)) {
                    if (mesh.vmark[v] & MARK_HOLE_BDRY) {
                        local[v] = -1;
                    } else {
                        local[v] = static_cast<int>(inner.size());
                        inner.push_back(v);
                    }
                }
        if (inner.empty()) continue;

        int n = static_cast<int>(inner.size());
        std::vector<Csr::Triplet> ts;
        std::vector<double> rhs(n, 0.0);
        for (int t : tris) {
            const auto& tr = mesh.tris[t];
            double area = mesh.tri_area[t];
            Vec2 c = mesh.centroid(t);
            auto mids = mesh.edge_midpoints(t);
            Mat2 abar{0, 0, 0};
            Vec2 gm{0, 0};
            for (Vec2 q : mids) {
                Vec2 qp = q + (c - q) * pull;
                abar = abar + coeff(t, qp) * (1.0 / 3.0);
                if (div_form) gm += div_form(t, qp) * (1.0 / 3.0);
            }
            auto g = mesh.basis_gradients(t);
            for (int i = 0; i < 3; ++i) {
                int di = local[tr[i]];
                if (di < 0) continue;
                if (div_form) rhs[di] -= area * gm.dot(g[i]);
                for (int j = 0; j < 3; ++j) {
                    double kij = area * abar.quad(g[i], g[j]);
                    int dj = local[tr[j]];
                    if (dj < 0)
                        rhs[di] -= kij * u.values[tr[j]];
                    else
                        ts.push_back({di, dj, kij});
                }
            }
        }
        Csr K = Csr::from_triplets(n, ts);
        std::vector<double> diag = K.diagonal(), x(n, 0.0), r(rhs), z(n), p(n), q(n);
        double bnorm = std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
        if (bnorm > 0) {
            for (int i = 0; i < n; ++i) z[i] = r[i] / diag[i];
            p = z;
            double rz = std::inner_product(r.begin(), r.end(), z.begin(), 0.0);
            int cap = 20 * n + 200;
            for (int it = 0; it < cap; ++it) {
                double rn = std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
                if (rn <= 1e-12 * bnorm) break;
                K.mul(p, q);
                double alpha = rz / std::inner_product(p.begin(), p.end(), q.begin(), 0.0);
                for (int i = 0; i < n; ++i) { x[i] += alpha * p[i]; r[i] -= alpha * q[i]; }
                for (int i = 0; i < n; ++i) z[i] = r[i] / diag[i];
                double rz2 = std::inner_product(r.begin(), r.end(), z.begin(), 0.0);
                double beta = rz2 / rz;
                rz = rz2;
                for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
            }
        }
        for (int i = 0; i < n; ++i) u.values[inner[i]] = x[i];
    }
}

// ---------------------------------------------------------------------------
// Boundary machinery

struct BoundaryLoop {
    std::vector<int> verts;       // CCW
    std::vector<double> edge_len; // edge i connects verts[i] -> verts[i+1]
    double total_len = 0.0;
};

inline BoundaryLoop outer_boundary_loop(const TriMesh& mesh) {
    BoundaryLoop bl;
    bl.verts = mesh.outer_loop();
    int n = static_cast<int>(bl.verts.size());
    bl.edge_len.resize(n);
    for (int i = 0; i < n; ++i) {
        bl.edge_len[i] = dist(mesh.verts[bl.verts[i]], mesh.verts[bl.verts[(i + 1) % n]]);
        bl.total_len += bl.edge_len[i];
    }
    return bl;
}

// L2(dOmega) norm of a nodal boundary function (edge-midpoint quadrature).
inline double boundary_l2_nodal(const BoundaryLoop& bl, const std::vector<double>& nodal) {
    double s = 0.0;
    int n = static_cast<int>(bl.verts.size());
    for (int i = 0; i < n; ++i) {
        double v = 0.5 * (nodal[i] + nodal[(i + 1) % n]);
        s += bl.edge_len[i] * v * v;
    }
    return std::sqrt(s);
}

// L2(dOmega) norm of per-edge values.
inline double boundary_l2_edge(const BoundaryLoop& bl, const std::vector<double>& edge_vals) {
    double s = 0.0;
    for (std::size_t i = 0; i < bl.edge_len.size(); ++i)
        s += bl.edge_len[i] * edge_vals[i] * edge_vals[i];
    return std::sqrt(s);
}

// Arclength derivative of the trace, one value per boundary edge.
struct TangentialGradient {
    BoundaryLoop loop;
    std::vector<double> edge_slope;
    double l2_norm = 0.0;
};

inline TangentialGradient tangential_gradient(const FemField& u) {
    TangentialGradient tg;
    tg.loop = outer_boundary_loop(*u.mesh);
    int n = static_cast<int>(tg.loop.verts.size());
    tg.edge_slope.resize(n);
    for (int i = 0; i < n; ++i) {
        int a = tg.loop.verts[i], b = tg.loop.verts[(i + 1) % n];
        tg.edge_slope[i] = (u.values[b] - u.values[a]) / tg.loop.edge_len[i];
    }
    tg.l2_norm = boundary_l2_edge(tg.loop, tg.edge_slope);
    return tg;
}

// Variational conormal flux on the outer boundary: for each boundary hat
// function, weight = a(u, phi) - l(phi) evaluated with the assembled raw
// operator.  Nodal density divides by the lumped boundary measure.  This
// recovery is superconvergent relative to direct gradient sampling.
struct ConormalFlux {
    BoundaryLoop loop;
    std::vector<double> weights;   // per loop vertex: a(u,phi_i) - l(phi_i)
    std::vector<double> density;   // per loop vertex: weights / lumped measure
    double total = 0.0;            // sum of weights ~ net outflow
    double l2_norm = 0.0;
    bool solution_like = true;     // interior residual below threshold
    double interior_residual = 0.0;
};

inline ConormalFlux conormal_flux(const LinearSystem& sys, const FemField& u) {
    const TriMesh& mesh = *sys.mesh;
    ConormalFlux cf;
    cf.loop = outer_boundary_loop(mesh);
    int n = static_cast<int>(cf.loop.verts.size());

    std::vector<double> Ku(mesh.num_verts());
    sys.K_raw.mul(u.values, Ku);

    std::vector<char> on_loop(mesh.num_verts(), 0);
    for (int v : cf.loop.verts) on_loop[v] = 1;
    double scale = 0.0;
    for (int v = 0; v < mesh.num_verts(); ++v) scale = std::max(scale, std::fabs(Ku[v]));
    for (int v = 0; v < mesh.num_verts(); ++v) {
        if (on_loop[v] || !sys.vert_active[v]) continue;
        cf.interior_residual = std::max(cf.interior_residual,
                                        std::fabs(Ku[v] - sys.rhs_raw[v]));
    }
    cf.solution_like = cf.interior_residual <= 1e-6 * std::max(1.0, scale);

    cf.weights.resize(n);
    cf.density.resize(n);
    for (int i = 0; i < n; ++i) {
        int v = cf.loop.verts[i];
        cf.weights[i] = Ku[v] - sys.rhs_raw[v];
        cf.total += cf.weights[i];
        double lump = 0.5 * (cf.loop.edge_len[i] + cf.loop.edge_len[(i + n - 1) % n]);
        cf.density[i] = cf.weights[i] / lump;
    }
    cf.l2_norm = boundary_l2_nodal(cf.loop, cf.density);
    return cf;
}

// ---------------------------------------------------------------------------
// Field CSV I/O: "index,value" per vertex.

inline void save_field_csv(const FemField& u, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IOError("cannot open for writing: " + path);
    os << "vertex,value\n";
    char buf[64];
    for (std::size_t i = 0; i < u.values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, u.values[i]);
        os << buf;
    }
}

inline std::vector<double> load_field_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IOError("cannot open for reading: " + path);
    std::string line;
    std::getline(is, line);  // header
    std::vector<double> vals;
    while (std::getline(is, line)) {
        auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        vals.push_back(std::stod(line.substr(comma + 1)));
    }
    return vals;
}

}  // namespace perfhom
