#include <catch2/catch_amalgamated.hpp>

#include "perfhom/geometry.hpp"

using namespace perfhom;

static CellGeometry centered_disk_cell(double r = 0.25, double kappa = 0.2) {
    return build_cell_geometry({Hole{Hole::Kind::disk, {0.5, 0.5}, r, {}}}, kappa);
}

TEST_CASE("build_cell_geometry accepts a centered disk") {
    CellGeometry cell = centered_disk_cell();
    REQUIRE(cell.holes.size() == 1);
    CHECK(cell.enlarged_margin == Catch::Approx(0.002));
    CHECK(cell.boundary_clearance() == Catch::Approx(0.25));
    CHECK(cell.boundary_clearance() >= cell.kappa / 100.0);
}

TEST_CASE("build_cell_geometry rejects overlapping disks") {
    std::vector<Hole> holes = {Hole{Hole::Kind::disk, {0.3, 0.5}, 0.3, {}},
                               Hole{Hole::Kind::disk, {0.7, 0.5}, 0.3, {}}};
    try {
        build_cell_geometry(holes, 0.2);
        FAIL("expected SeparationViolation");
    } catch (const SeparationViolation& e) {
        // reports the offending pair and the measured (negative) gap
        std::string msg = e.what();
        CHECK(msg.find("0 and 1") != std::string::npos);
        CHECK(msg.find("-0.2") != std::string::npos);
    }
}

TEST_CASE("build_cell_geometry accepts an empty hole list") {
    CellGeometry cell = build_cell_geometry({}, 0.2);
    CHECK(cell.holes.empty());
    CHECK(cell.hole_area() == 0.0);
    CHECK_FALSE(cell.in_hole({0.5, 0.5}));
}

TEST_CASE("contrast_at evaluates the mask") {
    CellGeometry cell = centered_disk_cell();
    double eps = 0.125;
    CHECK(contrast_at({0.5 * eps, 0.5 * eps}, eps, 0.1, cell) == Catch::Approx(0.1));
    CHECK(contrast_at({0.01 * eps, 0.01 * eps}, eps, 0.1, cell) == 1.0);
    CHECK(contrast_at({0.5 * eps, 0.5 * eps}, eps, 1.0, cell) == 1.0);
}

TEST_CASE("contrast_at is 1-periodic in x/eps") {
    CellGeometry cell = centered_disk_cell();
    double eps = 0.25;
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        Vec2 x{rng.uniform(), rng.uniform()};
        int zx = int(rng.uniform(-3.0, 4.0)), zy = int(rng.uniform(-3.0, 4.0));
        Vec2 shifted = x + Vec2{zx * eps, zy * eps};
        CHECK(contrast_at(x, eps, 0.3, cell) == contrast_at(shifted, eps, 0.3, cell));
    }
}

TEST_CASE("coefficient_at applies the squared mask") {
    CellGeometry cell = centered_disk_cell();
    MaterialTensor a = MaterialTensor::identity();
    double eps = 0.125;
    Vec2 inside{0.5 * eps, 0.5 * eps};

    Mat2 half = coefficient_at(inside, eps, 0.5, a, cell);
    CHECK(half.a11 == Catch::Approx(0.25));
    CHECK(half.a22 == Catch::Approx(0.25));
    CHECK(half.a12 == 0.0);

    Mat2 zero = coefficient_at(inside, eps, 0.0, a, cell);
    CHECK(zero.a11 == 0.0);
    CHECK(zero.a22 == 0.0);
}

TEST_CASE("coefficient_at picks up laminate values") {
    CellGeometry empty = build_cell_geometry({}, 0.2);
    MaterialTensor a = MaterialTensor::laminate(0, {1.0, 4.0}, {0.5});
    double eps = 0.125;
    Vec2 x{0.75 * eps, 0.3 * eps};  // x1/eps mod 1 = 0.75
    Mat2 m = coefficient_at(x, eps, 0.7, a, empty);
    CHECK(m.a11 == Catch::Approx(4.0));
    CHECK(m.a22 == Catch::Approx(4.0));
}

TEST_CASE("coefficient_at with delta=1 equals A(x/eps) everywhere") {
    CellGeometry cell = centered_disk_cell();
    MaterialTensor a = MaterialTensor::laminate(0, {1.0, 4.0}, {0.5});
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        Vec2 x{rng.uniform(), rng.uniform()};
        Mat2 m = coefficient_at(x, 0.25, 1.0, a, cell);
        Mat2 ref = a.eval(mod1(x / 0.25));
        CHECK(m.a11 == ref.a11);
        CHECK(m.a22 == ref.a22);
    }
}

TEST_CASE("material invariants hold for the shipped kinds") {
    Rng rng(11);
    validate_material(MaterialTensor::identity(), rng);
    validate_material(MaterialTensor::laminate(0, {1.0, 4.0}, {0.5}), rng);
    validate_material(MaterialTensor::smooth_grid(32), rng);
}

TEST_CASE("build_perforated_domain tiles the unit square") {
    CellGeometry cell = centered_disk_cell();
    PerforatedDomain dom = build_perforated_domain(4, cell);
    CHECK(dom.hole_instances.size() == 16);
    CHECK(dom.epsilon == Catch::Approx(0.25));
    // cell-aligned construction: dist(dOmega, eps F) = eps * clearance >= kappa*eps
    CHECK(dom.kappa >= 0.2);
    CHECK(dom.perforated_area() == Catch::Approx(1.0 - M_PI / 16.0));
}

TEST_CASE("perforated area matches a seeded Monte-Carlo estimate") {
    CellGeometry cell = centered_disk_cell();
    PerforatedDomain dom = build_perforated_domain(4, cell);
    Rng rng(123);
    int hits = 0;
    const int n = 2000000;
    for (int i = 0; i < n; ++i) {
        Vec2 x{rng.uniform(), rng.uniform()};
        if (!dom.in_hole(x)) ++hits;
    }
    CHECK(std::fabs(double(hits) / n - dom.perforated_area()) < 1e-3);
}

TEST_CASE("build_perforated_domain with an empty cell has no holes") {
    CellGeometry cell = build_cell_geometry({}, 0.2);
    PerforatedDomain dom = build_perforated_domain(2, cell);
    CHECK(dom.hole_instances.empty());
    CHECK(dom.perforated_area() == 1.0);
}

TEST_CASE("hole_instance_index is consistent with in_hole") {
    CellGeometry cell = centered_disk_cell();
    PerforatedDomain dom = build_perforated_domain(4, cell);
    Rng rng(5);
    for (int i = 0; i < 2000; ++i) {
        Vec2 x{rng.uniform(), rng.uniform()};
        CHECK((dom.hole_instance_index(x) >= 0) == dom.in_hole(x));
    }
}

TEST_CASE("boundary_strip measures the square frame") {
    CellGeometry cell = build_cell_geometry({}, 0.2);
    PerforatedDomain dom = build_perforated_domain(2, cell);
    Region strip = boundary_strip(dom, 0.1);

    Rng rng(17);
    int hits = 0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
        Vec2 x{rng.uniform(), rng.uniform()};
        if (strip.contains(x)) ++hits;
    }
    CHECK(std::fabs(double(hits) / n - 0.36) < 2e-3);
}

TEST_CASE("boundary_strip of width kappa*eps avoids the holes") {
    CellGeometry cell = centered_disk_cell();
    PerforatedDomain dom = build_perforated_domain(4, cell);
    Region strip = boundary_strip(dom, dom.kappa * dom.epsilon);
    Rng rng(29);
    for (int i = 0; i < 50000; ++i) {
        Vec2 x{rng.uniform(), rng.uniform()};
        if (strip.contains(x)) CHECK_FALSE(dom.in_hole(x));
    }
}

TEST_CASE("boundary_strip with t >= diam/2 covers the domain") {
    CellGeometry cell = build_cell_geometry({}, 0.2);
    PerforatedDomain dom = build_perforated_domain(2, cell);
    Region strip = boundary_strip(dom, dom.diameter() / 2.0);
    Rng rng(31);
    for (int i = 0; i < 10000; ++i)
        CHECK(strip.contains({rng.uniform(), rng.uniform()}));
}
