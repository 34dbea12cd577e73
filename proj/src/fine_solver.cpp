#include "twoscale/fine_solver.hpp"

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "twoscale/assembly.hpp"
#include "twoscale/errors.hpp"

namespace twoscale {

namespace {

int checked_periods(double length, double eps, const char* what) {
    const double ratio = length / eps;
    const double rounded = std::round(ratio);
    if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9 * rounded)
        throw ConfigError(std::string(what) + " must contain a whole number "
                          "of epsilon-periods; got length/eps = " +
                          std::to_string(ratio));
    return static_cast<int>(rounded);
}

// Map a fine element to the coefficient cell of the periodic pattern.
struct PeriodMap {
    const StructuredMesh* fine;
    std::array<int, 2> qcells; // coefficient cells per axis
    int per_period;            // fine cells per period per axis

    int qcell(int e) const {
        int i, j;
        fine->cell_coords(e, i, j);
        const int qi = (i % (per_period * qcells[0])) / per_period;
        if (fine->dim() == 1) return qi;
        const int qj = (j % (per_period * qcells[1])) / per_period;
        return qi + qcells[0] * qj;
    }
};

std::vector<Eigen::MatrixXd> cell_sqrts(const CoefficientTensor& a) {
    std::vector<Eigen::MatrixXd> out(a.cell_count());
    for (int c = 0; c < a.cell_count(); ++c) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
            0.5 * (a.a1[c] + a.a1[c].transpose()));
        Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
        for (int i = 0; i < lam.size(); ++i)
            if (lam[i] <= 1e-12) lam[i] = 0.0;
        out[c] = es.eigenvectors() * lam.cwiseSqrt().asDiagonal() *
                 es.eigenvectors().transpose();
    }
    return out;
}

} // namespace

FineSolution solve_epsilon_problem(const StructuredMesh& cell,
                                   const ProblemGeometry& geo, const Box& box,
                                   double eps, int multiplier, double lambda,
                                   const ForcingSpec& forcing,
                                   const Tolerances& tol) {
    if (!(eps > 0.0)) throw ConfigError("epsilon must be positive");
    if (multiplier < 1) throw ConfigError("fine multiplier must be >= 1");
    const CoefficientTensor& a = geo.tensor;
    const int d = cell.dim();
    const int n = cell.components();
    checked_periods(1.0, eps, "the unit length"); // 1/eps integral
    std::array<int, 2> fine_cells{1, 1};
    for (int k = 0; k < d; ++k) {
        const int periods = checked_periods(box.length(k), eps, "the domain");
        if (std::abs(box.lo[k] / eps - std::round(box.lo[k] / eps)) > 1e-9)
            throw ConfigError("domain origin must sit on the periodicity "
                              "lattice");
        fine_cells[k] = multiplier * a.cells[k] * periods;
    }

    auto mesh = std::make_shared<StructuredMesh>(
        StructuredMesh::dirichlet_box(d, fine_cells, n, box));
    PeriodMap pmap{mesh.get(), a.cells, multiplier};

    const double eps2 = eps * eps;
    const SpMat K = assemble_stiffness(*mesh, [&](int e) {
        const int c = pmap.qcell(e);
        return Eigen::MatrixXd(a.a1[c] + eps2 * a.a0[c]);
    });
    const SpMat M = assemble_mass(
        *mesh, [&](int e) { return geo.density.rho[pmap.qcell(e)]; });
    const SpMat A_full = K + lambda * M;
    const Eigen::VectorXd f_full = assemble_load(
        *mesh,
        [&](const Eigen::VectorXd& x) {
            return forcing.at_eps(x, eps, box, n);
        });

    const std::vector<int> map = interior_dof_map(*mesh);
    int interior = 0;
    for (int v : map)
        if (v >= 0) ++interior;
    const SpMat A = restrict_to_interior(A_full, map, interior);
    const Eigen::VectorXd f = restrict_vector(f_full, map, interior);

    Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper,
                             Eigen::DiagonalPreconditioner<double>>
        cg;
    cg.setTolerance(tol.cg_rel);
    cg.setMaxIterations(100000);
    cg.compute(A);
    const Eigen::VectorXd ui = cg.solve(f);
    if (cg.info() != Eigen::Success) {
        const Eigen::VectorXd diag = A.diagonal();
        const double cond_est =
            diag.maxCoeff() / std::max(diag.minCoeff(), 1e-300);
        throw SolverError(
            "fine-scale CG did not converge: " +
            std::to_string(cg.iterations()) + " iterations, residual " +
            std::to_string(cg.error()) + ", diagonal condition estimate " +
            std::to_string(cond_est));
    }

    FineSolution sol;
    sol.mesh = mesh;
    sol.u = prolong_vector(ui, map);
    sol.eps = eps;
    sol.multiplier = multiplier;
    sol.iterations = static_cast<int>(cg.iterations());
    sol.residual = cg.error();
    sol.energy_lhs = ui.dot(A * ui);
    sol.energy_rhs = f.dot(ui);
    return sol;
}

AprioriRatios apriori_ratios(const FineSolution& sol,
                             const ProblemGeometry& geo,
                             const ForcingSpec& forcing) {
    const StructuredMesh& mesh = *sol.mesh;
    const int d = mesh.dim();
    const int n = mesh.components();
    const int nd = n * d;
    const int nc = mesh.corners();
    const int nq = mesh.quad_count();
    PeriodMap pmap{&mesh, geo.tensor.cells, sol.multiplier};
    const std::vector<Eigen::MatrixXd> sroot = cell_sqrts(geo.tensor);

    double uu = 0.0, gg = 0.0, ss = 0.0, ff = 0.0;
    Eigen::VectorXd uq(n), gq(nd);
    for (int e = 0; e < mesh.element_count(); ++e) {
        const int c = pmap.qcell(e);
        for (int q = 0; q < nq; ++q) {
            uq.setZero();
            gq.setZero();
            for (int a = 0; a < nc; ++a) {
                const int node = mesh.element_node(e, a);
                const double s = mesh.shape(a, q);
                for (int i = 0; i < n; ++i) {
                    const double v = sol.u[mesh.dof(node, i)];
                    uq[i] += s * v;
                    for (int j = 0; j < d; ++j)
                        gq[i * d + j] += mesh.dshape(a, q, j) * v;
                }
            }
            const double w = mesh.qweight(q);
            uu += w * uq.squaredNorm();
            gg += w * gq.squaredNorm();
            ss += w * (sroot[c] * gq).squaredNorm();
            ff += w * forcing
                          .at_eps(mesh.quad_point(e, q), sol.eps, mesh.box(), n)
                          .squaredNorm();
        }
    }
    AprioriRatios r;
    r.f_norm = std::sqrt(ff);
    const double fn = std::max(r.f_norm, 1e-300);
    r.r1 = std::sqrt(uu) / fn;
    r.r2 = sol.eps * std::sqrt(gg) / fn;
    r.r3 = std::sqrt(ss) / fn;
    return r;
}

TwoScaleError two_scale_error(const FineSolution& sol, const CellProblem& cell,
                              const TwoScaleField& limit) {
    const StructuredMesh& mesh = *sol.mesh;
    const int d = mesh.dim();
    const int n = mesh.components();
    const int nd = n * d;
    const int nc = mesh.corners();
    const int nq = mesh.quad_count();
    PeriodMap pmap{&mesh, cell.tensor().cells, sol.multiplier};

    double eu = 0.0, exi = 0.0, u0n = 0.0, xin = 0.0;
    Eigen::VectorXd uq(n), gq(nd), y(d);
    for (int e = 0; e < mesh.element_count(); ++e) {
        const int c = pmap.qcell(e);
        for (int q = 0; q < nq; ++q) {
            uq.setZero();
            gq.setZero();
            for (int a = 0; a < nc; ++a) {
                const int node = mesh.element_node(e, a);
                const double s = mesh.shape(a, q);
                for (int i = 0; i < n; ++i) {
                    const double v = sol.u[mesh.dof(node, i)];
                    uq[i] += s * v;
                    for (int j = 0; j < d; ++j)
                        gq[i * d + j] += mesh.dshape(a, q, j) * v;
                }
            }
            const Eigen::VectorXd x = mesh.quad_point(e, q);
            for (int k = 0; k < d; ++k) {
                const double t = x[k] / sol.eps;
                y[k] = t - std::floor(t);
            }
            const double w = mesh.qweight(q);
            const Eigen::VectorXd u0 = limit.at(cell, x, y);
            const Eigen::VectorXd xi0 =
                cell.apply_T_at(limit.macro_gradcoef_at(x), y);
            const Eigen::VectorXd sflat = cell.sqrt_a1(c) * gq;
            eu += w * (uq - u0).squaredNorm();
            exi += w * (sflat - xi0).squaredNorm();
            u0n += w * u0.squaredNorm();
            xin += w * xi0.squaredNorm();
        }
    }
    TwoScaleError err;
    err.e_u = std::sqrt(eu);
    err.e_xi = std::sqrt(exi);
    err.u0_norm = std::sqrt(u0n);
    err.xi0_norm = std::sqrt(xin);
    return err;
}

} // namespace twoscale
