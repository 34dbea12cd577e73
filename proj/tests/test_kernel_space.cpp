#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "twoscale/kernel_space.hpp"

using namespace twoscale;

namespace {

const double kKeyOracle =
    std::sqrt(1.0 + 1.0 / (4.0 * std::numbers::pi * std::numbers::pi));

ProblemGeometry uniform_1d(int N) {
    GeometryParams p;
    p.value_a = 1.0;
    return preset_geometry("uniform", 1, N, 1, p);
}

} // namespace

TEST_CASE("coercive tensors have a constants-only kernel") {
    const StructuredMesh mesh = StructuredMesh::periodic_cell(1, 16, 1);
    const ProblemGeometry g = uniform_1d(16);
    const KernelBasis basis = compute_kernel_basis(mesh, g.tensor);
    CHECK(basis.dimension() == 1);
    CHECK(basis.kernel_eigenvalues()[0] < 1e-10);
    CHECK(basis.gap_ratio() > 1e4);

    // The constant field lies in V: projecting changes nothing.
    const Eigen::VectorXd c = Eigen::VectorXd::Ones(mesh.dof_count());
    CHECK((basis.project_V(c) - c).norm() < 1e-10 * c.norm());
    CHECK(basis.project_Vperp(c).norm() < 1e-10 * c.norm());
}

TEST_CASE("kernel basis is Gram-orthonormal") {
    const StructuredMesh mesh = StructuredMesh::periodic_cell(2, 8, 1);
    GeometryParams p;
    const ProblemGeometry g = preset_geometry("double_porosity", 2, 8, 1, p);
    const KernelBasis basis = compute_kernel_basis(mesh, g.tensor);
    const int m = basis.dimension();
    Eigen::MatrixXd gram(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            gram(i, j) = basis.gram().inner(basis.vectors().col(i),
                                            basis.vectors().col(j));
    CHECK((gram - Eigen::MatrixXd::Identity(m, m)).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("double porosity kernel dimension matches the enumeration") {
    // Inclusion cells [2,6)^2 on the 8x8 grid: interior inclusion nodes form
    // a 3x3 block, plus the global constant: m = 1 + 9 = 10.
    const StructuredMesh mesh = StructuredMesh::periodic_cell(2, 8, 1);
    GeometryParams p;
    const ProblemGeometry g = preset_geometry("double_porosity", 2, 8, 1, p);
    const KernelBasis basis = compute_kernel_basis(mesh, g.tensor);
    CHECK(basis.dimension() == 10);
    CHECK(basis.gap_ratio() >= 1e4);

    // Every kernel vector is flux-free: K1*b vanishes to round-off. (The
    // quadratic form b'K1b cannot be resolved below eps*|K1|*|b|^2 in double
    // precision, so the residual norm is the meaningful zero test.)
    const SpMat K1 = assemble_stiffness(mesh, g.tensor, TensorPart::A1);
    for (int k = 0; k < basis.dimension(); ++k) {
        const Eigen::VectorXd b = basis.vectors().col(k);
        CHECK((K1 * b).norm() < 1e-12 * std::max(1.0, b.norm()));
    }
}

TEST_CASE("key constant matches the Fourier oracle in the coercive case") {
    const int N = 64;
    const StructuredMesh mesh = StructuredMesh::periodic_cell(1, N, 1);
    const ProblemGeometry g = uniform_1d(N);
    const KernelBasis basis = compute_kernel_basis(mesh, g.tensor);
    const KeyConstantEstimate est =
        estimate_key_constant(mesh, g.tensor, basis);
    CHECK(std::abs(est.C - kKeyOracle) / kKeyOracle < 0.01);
}

TEST_CASE("sparse eigensolver path agrees with the oracle") {
    const int N = 1600; // above the dense threshold
    const StructuredMesh mesh = StructuredMesh::periodic_cell(1, N, 1);
    const ProblemGeometry g = uniform_1d(N);
    KernelOptions opts;
    opts.gram = GramKind::L2Gradient;
    const KernelBasis basis = compute_kernel_basis(mesh, g.tensor, opts);
    CHECK(basis.dimension() == 1);
    const KeyConstantEstimate est =
        estimate_key_constant(mesh, g.tensor, basis);
    CHECK(std::abs(est.C - kKeyOracle) / kKeyOracle < 0.01);
}

TEST_CASE("the two Gram products define equivalent but different norms") {
    const StructuredMesh mesh = StructuredMesh::periodic_cell(1, 64, 1);
    const GramOperator mg = h1_inner_product(mesh);
    CHECK(mg.kind() == GramKind::MeanGradient);
    const GramOperator l2 = h1_inner_product(mesh, GramKind::L2Gradient);

    // Constant field: both norms equal 1 for the unit constant.
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(mesh.dof_count());
    CHECK(mg.norm(ones) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(l2.norm(ones) == doctest::Approx(1.0).epsilon(1e-10));

    // Zero-mean oscillation: the mean-value product sees only the gradient.
    Eigen::VectorXd s(mesh.dof_count());
    for (int i = 0; i < mesh.node_count(); ++i)
        s[i] = std::sin(2.0 * std::numbers::pi * mesh.node_coord(i)[0]);
    const double pi2 = 2.0 * std::numbers::pi * std::numbers::pi;
    CHECK(std::abs(mg.inner(s, s) - pi2) / pi2 < 0.01);
    CHECK(l2.inner(s, s) > mg.inner(s, s));
    CHECK(l2.inner(s, s) - mg.inner(s, s) ==
          doctest::Approx(0.5).epsilon(0.01));
}
