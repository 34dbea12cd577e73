#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include "twoscale/cell_solvers.hpp"

using namespace twoscale;

namespace {

CellProblem make_problem(const std::string& tag, int d, int N, int n = 1) {
    GeometryParams p;
    const ProblemGeometry g = preset_geometry(tag, d, N, n, p);
    static std::vector<std::unique_ptr<StructuredMesh>> keep_alive;
    keep_alive.push_back(
        std::make_unique<StructuredMesh>(StructuredMesh::periodic_cell(d, N, n)));
    const StructuredMesh& mesh = *keep_alive.back();
    KernelBasis basis = compute_kernel_basis(mesh, g.tensor);
    return CellProblem(mesh, g.tensor, g.density, std::move(basis));
}

FluxField random_flux(const CellProblem& cp, unsigned seed) {
    FluxField f = cp.zero_flux();
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int i = 0; i < f.values.size(); ++i) f.values[i] = dist(rng);
    return f;
}

} // namespace

TEST_CASE("laminate corrector gradient matches the closed form") {
    CellProblem cp = make_problem("laminate", 1, 8);
    const CorrectorField chi =
        cp.solve_corrector_for_direction(cp.constant_direction(0, 0));
    CHECK(chi.kernel_component < 1e-10);
    const FluxField g = cp.gradient(chi.field);
    // chi' = -1 + (4/3)/a(y): +1/3 where a=1, -1/3 where a=2
    const StructuredMesh& mesh = cp.mesh();
    for (int e = 0; e < mesh.element_count(); ++e) {
        const double a = (e < mesh.cells_axis(0) / 2) ? 1.0 : 2.0;
        const double expect = -1.0 + (4.0 / 3.0) / a;
        for (int q = 0; q < mesh.quad_count(); ++q)
            CHECK(g.values[(e * mesh.quad_count() + q)] ==
                  doctest::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("uniform coefficients produce zero correctors") {
    CellProblem cp = make_problem("uniform", 1, 8);
    const CorrectorBank& bank = cp.correctors();
    CHECK(bank.m == 1);
    CHECK(bank.d == 1);
    for (const Eigen::VectorXd& chi : bank.chi) CHECK(chi.norm() < 1e-10);
    CHECK(bank.flux_gram(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("solvability condition is enforced") {
    CellProblem cp = make_problem("double_porosity", 2, 8);
    const int m = cp.basis().dimension();
    CHECK(m == 10);

    // A load with a kernel component is rejected with its defect.
    CellFunctional bad;
    bad.load = cp.basis().vectors().col(1);
    CHECK(cp.check_solvability(bad) > 1e-6);
    CHECK_THROWS_AS(cp.solve_degenerate_cell(bad), SolvabilityError);

    // A load in the range of K1 is compatible and solvable on V-perp.
    CellFunctional good;
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Eigen::VectorXd v(cp.mesh().dof_count());
    for (int i = 0; i < v.size(); ++i) v[i] = dist(rng);
    good.load = cp.stiffness_a1() * v;
    CHECK(cp.check_solvability(good) < 1e-10 * good.load.norm());
    const CorrectorField sol = cp.solve_degenerate_cell(good);
    CHECK(sol.equation_residual < 1e-8);
    CHECK(sol.kernel_component < 1e-10);
    CHECK(sol.iterations > 0);
}

TEST_CASE("Weyl decomposition reconstructs gradient-range fluxes") {
    CellProblem cp = make_problem("double_porosity", 2, 8);
    for (unsigned seed : {1u, 2u, 3u, 4u, 5u}) {
        const FluxField psi = random_flux(cp, seed);
        const FluxField pw = cp.project_onto_W(psi);
        CHECK(pw.in_W);
        FluxField eta = psi;
        eta.values -= pw.values; // the W-orthogonal part
        if (cp.flux_norm(eta) == 0.0) continue;
        const CorrectorField u1 = cp.weyl_decompose(eta);
        FluxField diff = eta;
        diff.values -= cp.sqrt_gradient(u1.field).values;
        CHECK(cp.flux_norm(diff) <= 1e-8 * cp.flux_norm(eta));
    }
}

TEST_CASE("projection onto W is idempotent and self-adjoint") {
    CellProblem cp = make_problem("laminate", 2, 6);
    const FluxField p1 = random_flux(cp, 11);
    const FluxField p2 = random_flux(cp, 12);
    const FluxField w1 = cp.project_onto_W(p1);
    const FluxField w2 = cp.project_onto_W(p2);
    const FluxField ww = cp.project_onto_W(w1);
    FluxField diff = ww;
    diff.values -= w1.values;
    CHECK(cp.flux_norm(diff) <= 1e-10 * cp.flux_norm(p1));
    CHECK(std::abs(cp.flux_inner(w1, p2) - cp.flux_inner(p1, w2)) <=
          1e-10 * cp.flux_norm(p1) * cp.flux_norm(p2));
}

TEST_CASE("gradient quadrature norm of a sine field") {
    CellProblem cp = make_problem("uniform", 1, 64);
    const StructuredMesh& mesh = cp.mesh();
    Eigen::VectorXd s(mesh.dof_count());
    for (int i = 0; i < mesh.node_count(); ++i)
        s[i] = std::sin(2.0 * std::numbers::pi * mesh.node_coord(i)[0]);
    const double oracle = 2.0 * std::numbers::pi / std::sqrt(2.0);
    CHECK(std::abs(cp.flux_norm(cp.gradient(s)) - oracle) / oracle < 0.01);
}

TEST_CASE("flux operator slice and pointwise evaluation agree") {
    CellProblem cp = make_problem("double_porosity", 2, 8);
    const CorrectorBank& bank = cp.correctors();
    Eigen::MatrixXd gc(bank.m, bank.d);
    std::mt19937 rng(21);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int k = 0; k < bank.m; ++k)
        for (int j = 0; j < bank.d; ++j) gc(k, j) = dist(rng);

    const FluxField xi = cp.apply_T_slice(gc);
    CHECK(xi.in_W);
    const StructuredMesh& mesh = cp.mesh();
    const int nq = mesh.quad_count();
    const int nd = mesh.components() * mesh.dim();
    for (int e : {0, 13, 27}) {
        for (int q = 0; q < nq; ++q) {
            const Eigen::VectorXd at =
                cp.apply_T_at(gc, mesh.quad_point(e, q));
            for (int r = 0; r < nd; ++r)
                CHECK(at[r] == doctest::Approx(
                                   xi.values[(e * nq + q) * nd + r])
                                   .epsilon(1e-10));
        }
    }
}

TEST_CASE("corrector bank export and import round trip") {
    namespace fs = std::filesystem;
    const fs::path file =
        fs::temp_directory_path() / "twoscale_bank_test.json";
    CellProblem cp = make_problem("double_porosity", 2, 8);
    const CorrectorBank& bank = cp.correctors();
    cp.export_correctors(file);

    CellProblem cp2 = make_problem("double_porosity", 2, 8);
    cp2.import_correctors(file);
    const CorrectorBank& bank2 = cp2.correctors();
    CHECK(bank2.m == bank.m);
    for (std::size_t i = 0; i < bank.chi.size(); ++i)
        CHECK((bank.chi[i] - bank2.chi[i]).norm() < 1e-12);
    CHECK((bank.flux_gram - bank2.flux_gram).cwiseAbs().maxCoeff() < 1e-12);

    // Importing into a different geometry is rejected by the content hash.
    CellProblem other = make_problem("laminate", 2, 8);
    CHECK_THROWS_AS(other.import_correctors(file), ConfigError);
    fs::remove(file);
}

TEST_CASE("corrector fluxes are certified members of W") {
    CellProblem cp = make_problem("double_porosity", 2, 8);
    const CorrectorBank& bank = cp.correctors();
    CHECK(static_cast<int>(bank.zeta.size()) == bank.m * bank.d);
    for (const FluxField& z : bank.zeta) {
        CHECK(z.in_W);
        CHECK(z.divergence_residual < 1e-6);
    }
}
