#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <set>

#include "perfhom/mesh.hpp"

using namespace perfhom;

static CellGeometry disk_cell(double r = 0.25, double kappa = 0.2) {
    return build_cell_geometry({Hole{Hole::Kind::disk, {0.5, 0.5}, r, {}}}, kappa);
}

TEST_CASE("mesh_unit_cell: empty cell structured grid") {
    CellGeometry cell = build_cell_geometry({}, 0.2);
    TriMesh mesh = mesh_unit_cell(cell, 0.25, true);
    CHECK(mesh.num_verts() == 25);
    CHECK(mesh.total_area() == Catch::Approx(1.0).margin(1e-12));
    // opposite edges paired: 2m+1 pairs for m=4
    CHECK(mesh.periodic_pairs.size() == 9 + 3);
    for (auto [slave, master] : mesh.periodic_pairs) {
        Vec2 ds = mesh.verts[slave] - mesh.verts[master];
        double dx = std::fabs(std::fabs(ds.x) - 1.0), dy = std::fabs(std::fabs(ds.y) - 1.0);
        bool unit_shift = (dx < 1e-12 && std::fabs(ds.y) < 1e-12) ||
                          (dy < 1e-12 && std::fabs(ds.x) < 1e-12) ||
                          (dx < 1e-12 && dy < 1e-12);
        CHECK(unit_shift);
    }
}

TEST_CASE("mesh_unit_cell: disk hole is resolved and marked") {
    CellGeometry cell = disk_cell();
    TriMesh mesh = mesh_unit_cell(cell, 0.05, false);
    CHECK(mesh.total_area() == Catch::Approx(1.0).margin(1e-12));
    CHECK(mesh.hole_loops.size() == 1);

    double hole_area = mesh.hole_area_total();
    double exact = M_PI * 0.0625;
    CHECK(std::fabs(hole_area - exact) < 2 * 0.05);
    CHECK(std::fabs(mesh.omega_area() - (1.0 - exact)) < 2 * 0.05);

    // all loop vertices sit on the circle
    for (int v : mesh.hole_loops[0])
        CHECK(dist(mesh.verts[v], {0.5, 0.5}) == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("mesh_unit_cell: too coarse h fails") {
    CellGeometry cell = disk_cell();
    CHECK_THROWS_AS(mesh_unit_cell(cell, 0.3, false), MeshFailure);
}

TEST_CASE("mesh_unit_cell: square hole (polygon) conforms") {
    Hole sq;
    sq.kind = Hole::Kind::polygon;
    sq.vertices = {{0.35, 0.35}, {0.65, 0.35}, {0.65, 0.65}, {0.35, 0.65}};
    CellGeometry cell = build_cell_geometry({sq}, 0.2);
    TriMesh mesh = mesh_unit_cell(cell, 0.05, true);
    CHECK(mesh.total_area() == Catch::Approx(1.0).margin(1e-12));
    CHECK(mesh.hole_area_total() == Catch::Approx(0.09).margin(1e-12));
}

TEST_CASE("mesh quality: positive areas and valid adjacency") {
    CellGeometry cell = disk_cell();
    TriMesh mesh = mesh_unit_cell(cell, 1.0 / 16, false);
    for (int t = 0; t < mesh.num_tris(); ++t) {
        CHECK(mesh.tri_area[t] > 0.0);
        for (int i = 0; i < 3; ++i) {
            int u = mesh.adj[t][i];
            if (u >= 0) {
                bool back = false;
                for (int j = 0; j < 3; ++j)
                    if (mesh.adj[u][j] == t) back = true;
                CHECK(back);
            }
        }
    }
}

TEST_CASE("mesh_domain: empty cell n=2") {
    CellGeometry cell = build_cell_geometry({}, 0.2);
    PerforatedDomain dom = build_perforated_domain(2, cell);
    TriMesh mesh = mesh_domain(dom, 0.125);
    CHECK(mesh.total_area() == Catch::Approx(1.0).margin(1e-12));
    CHECK(mesh.hole_loops.empty());
    int outer = 0;
    for (int v = 0; v < mesh.num_verts(); ++v)
        if (mesh.vmark[v] & MARK_OUTER) ++outer;
    CHECK(outer == 4 * 8);  // 8 intervals per side
}

TEST_CASE("mesh_domain: n=4 disk cell carries 16 hole loops") {
    CellGeometry cell = disk_cell();
    PerforatedDomain dom = build_perforated_domain(4, cell);
    TriMesh mesh = mesh_domain(dom, 1.0 / 32);
    CHECK(mesh.hole_loops.size() == 16);
    CHECK(mesh.total_area() == Catch::Approx(1.0).margin(1e-12));

    // region ids match the domain's instance numbering
    for (int t = 0; t < mesh.num_tris(); ++t) {
        if (mesh.tri_region[t] > 0) {
            Vec2 c = mesh.centroid(t);
            CHECK(dom.hole_instance_index(c) == mesh.tri_region[t] - 1);
        }
    }
}

TEST_CASE("mesh_domain rejects h > eps/4") {
    CellGeometry cell = disk_cell();
    PerforatedDomain dom = build_perforated_domain(4, cell);
    CHECK_THROWS_AS(mesh_domain(dom, 0.1), MeshFailure);
}

TEST_CASE("outer boundary loop is closed and CCW") {
    CellGeometry cell = disk_cell();
    PerforatedDomain dom = build_perforated_domain(2, cell);
    TriMesh mesh = mesh_domain(dom, 0.125);
    auto loop = mesh.outer_loop();
    REQUIRE(loop.size() >= 8);
    double signed_area = 0.0;
    for (std::size_t i = 0; i < loop.size(); ++i) {
        Vec2 a = mesh.verts[loop[i]], b = mesh.verts[loop[(i + 1) % loop.size()]];
        signed_area += cross(a, b);
    }
    CHECK(signed_area == Catch::Approx(2.0));  // twice the area of the unit square
}

TEST_CASE("laminate interface fractions are honored") {
    CellGeometry cell = build_cell_geometry({}, 0.2);
    TriMesh mesh = mesh_unit_cell(cell, 1.0 / 10, true, {0.5});
    // grid line at x = 0.5 must exist: every triangle lies entirely on one side
    for (int t = 0; t < mesh.num_tris(); ++t) {
        int side = 0;
        for (int v : mesh.tris[t]) {
            double x = mesh.verts[v].x;
            if (x < 0.5 - 1e-12) side |= 1;
            if (x > 0.5 + 1e-12) side |= 2;
        }
        CHECK(side != 3);
    }
}

TEST_CASE("mesh save/load round-trips") {
    CellGeometry cell = disk_cell();
    TriMesh mesh = mesh_unit_cell(cell, 1.0 / 12, true);
    std::string path = "roundtrip_mesh.txt";
    save_mesh(mesh, path);
    TriMesh back = load_mesh(path);
    std::remove(path.c_str());

    REQUIRE(back.num_verts() == mesh.num_verts());
    REQUIRE(back.num_tris() == mesh.num_tris());
    for (int v = 0; v < mesh.num_verts(); ++v) {
        CHECK(back.verts[v].x == mesh.verts[v].x);
        CHECK(back.verts[v].y == mesh.verts[v].y);
        CHECK(back.vmark[v] == mesh.vmark[v]);
    }
    CHECK(back.tris == mesh.tris);
    CHECK(back.tri_region == mesh.tri_region);
    CHECK(back.periodic_pairs == mesh.periodic_pairs);
    CHECK(back.hole_loops == mesh.hole_loops);
}

TEST_CASE("meshing is deterministic") {
    CellGeometry cell = disk_cell();
    TriMesh a = mesh_unit_cell(cell, 1.0 / 16, false);
    TriMesh b = mesh_unit_cell(cell, 1.0 / 16, false);
    CHECK(a.tris == b.tris);
    REQUIRE(a.num_verts() == b.num_verts());
    for (int v = 0; v < a.num_verts(); ++v) {
        CHECK(a.verts[v].x == b.verts[v].x);
        CHECK(a.verts[v].y == b.verts[v].y);
    }
}
