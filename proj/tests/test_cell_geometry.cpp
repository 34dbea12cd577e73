#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "twoscale/mesh.hpp"

using namespace twoscale;

TEST_CASE("periodic cell counts and spacing") {
    const StructuredMesh m = StructuredMesh::periodic_cell(1, 4, 1);
    CHECK(m.node_count() == 4);
    CHECK(m.element_count() == 4);
    CHECK(m.dof_count() == 4);
    CHECK(m.h(0) == doctest::Approx(0.25));

    const StructuredMesh m2 = StructuredMesh::periodic_cell(2, 4, 3);
    CHECK(m2.node_count() == 16);
    CHECK(m2.element_count() == 16);
    CHECK(m2.dof_count() == 48);
}

TEST_CASE("quadrature weights sum to the cell volume") {
    const StructuredMesh m = StructuredMesh::periodic_cell(2, 8, 1);
    double sum = 0.0;
    for (int q = 0; q < m.quad_count(); ++q) sum += m.qweight(q);
    CHECK(sum == doctest::Approx(m.cell_volume()).epsilon(1e-14));
    CHECK(m.cell_volume() == doctest::Approx(1.0 / 64.0));
}

TEST_CASE("Q1 Laplace element matrix on the unit square") {
    // Reference oracle in lexicographic corner order (0,0),(1,0),(0,1),(1,1):
    // diagonal 2/3, edge-adjacent -1/6, diagonally opposite -1/3.
    Box box = Box::unit(2);
    box.hi = {2.0, 2.0}; // 2x2 cells of unit size
    const StructuredMesh m =
        StructuredMesh::dirichlet_box(2, {2, 2}, 1, box);
    Eigen::Matrix4d K = Eigen::Matrix4d::Zero();
    for (int q = 0; q < m.quad_count(); ++q)
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                K(a, b) += m.qweight(q) * (m.dshape(a, q, 0) * m.dshape(b, q, 0) +
                                           m.dshape(a, q, 1) * m.dshape(b, q, 1));
    Eigen::Matrix4d ref;
    ref << 4, -1, -1, -2, -1, 4, -2, -1, -1, -2, 4, -1, -2, -1, -1, 4;
    ref /= 6.0;
    CHECK((K - ref).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("multilinear interpolation reproduces linear fields exactly") {
    const StructuredMesh m = StructuredMesh::periodic_cell(2, 5, 2);
    Eigen::VectorXd nodal(m.dof_count());
    for (int node = 0; node < m.node_count(); ++node) {
        const Eigen::VectorXd x = m.node_coord(node);
        nodal[m.dof(node, 0)] = 2.0 * x[0] - 0.5 * x[1];
        nodal[m.dof(node, 1)] = 1.0 + x[1];
    }
    Eigen::VectorXd p(2);
    p << 0.37, 0.61; // interior of a cell, away from the periodic seam
    const Eigen::VectorXd v = interpolate(m, nodal, p);
    CHECK(v[0] == doctest::Approx(2.0 * 0.37 - 0.5 * 0.61).epsilon(1e-13));
    CHECK(v[1] == doctest::Approx(1.61).epsilon(1e-13));

    const Eigen::MatrixXd g = interpolate_gradient(m, nodal, p);
    CHECK(g(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(g(0, 1) == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(g(1, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(g(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("periodic meshes wrap evaluation points") {
    const StructuredMesh m = StructuredMesh::periodic_cell(1, 8, 1);
    Eigen::VectorXd nodal(m.dof_count());
    for (int node = 0; node < m.node_count(); ++node)
        nodal[node] = std::sin(2.0 * std::numbers::pi * m.node_coord(node)[0]);
    Eigen::VectorXd p(1), p_shift(1);
    p << 0.3;
    p_shift << 2.3;
    CHECK(interpolate(m, nodal, p)[0] ==
          doctest::Approx(interpolate(m, nodal, p_shift)[0]).epsilon(1e-14));
}

TEST_CASE("Dirichlet boundary detection") {
    Box box = Box::unit(2);
    const StructuredMesh m = StructuredMesh::dirichlet_box(2, {4, 4}, 1, box);
    CHECK(m.node_count() == 25);
    int interior = 0;
    for (int node = 0; node < m.node_count(); ++node)
        if (!m.node_on_boundary(node)) ++interior;
    CHECK(interior == 9);

    const StructuredMesh m1 = StructuredMesh::dirichlet_box(1, {4, 1}, 1,
                                                            Box::unit(1));
    CHECK(m1.node_count() == 5);
    CHECK(m1.node_on_boundary(0));
    CHECK(m1.node_on_boundary(4));
    CHECK(!m1.node_on_boundary(2));
}

TEST_CASE("quadrature of a smooth field converges at second order") {
    const double pi = std::numbers::pi;
    auto value = [&](int N) {
        const StructuredMesh m =
            StructuredMesh::dirichlet_box(1, {N, 1}, 1, Box::unit(1));
        double sum = 0.0;
        for (int e = 0; e < m.element_count(); ++e)
            for (int q = 0; q < m.quad_count(); ++q) {
                const double s = std::sin(pi * m.quad_point(e, q)[0]);
                sum += m.qweight(q) * s * s;
            }
        return sum;
    };
    const double err16 = std::abs(value(16) - 0.5);
    const double err32 = std::abs(value(32) - 0.5);
    CHECK(err32 < err16);
    CHECK(err32 < 1e-4);
}

TEST_CASE("degenerate boxes are rejected") {
    Box bad = Box::unit(2);
    bad.hi[1] = bad.lo[1];
    CHECK_THROWS_AS(StructuredMesh::dirichlet_box(2, {2, 2}, 1, bad),
                    ConfigError);
    CHECK_THROWS_AS(StructuredMesh::periodic_cell(3, 4, 1), ConfigError);
    CHECK_THROWS_AS(StructuredMesh::periodic_cell(1, 0, 1), ConfigError);
}
