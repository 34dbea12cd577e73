#ifndef TWOSCALE_FINE_SOLVER_HPP
#define TWOSCALE_FINE_SOLVER_HPP

#include <memory>

#include <Eigen/Dense>

#include "twoscale/cell_solvers.hpp"
#include "twoscale/coefficients.hpp"
#include "twoscale/mesh.hpp"
#include "twoscale/two_scale_limit.hpp"

namespace twoscale {

/// Direct Galerkin solution of the epsilon-problem on a fine grid nested in
/// the epsilon-periodicity pattern.
struct FineSolution {
    std::shared_ptr<StructuredMesh> mesh; // Dirichlet, n components
    Eigen::VectorXd u;                    // full nodal vector, zero on boundary
    double eps = 0.0;
    int multiplier = 1; // fine cells per coefficient cell per period
    int iterations = 0;
    double residual = 0.0;   // relative CG residual
    double energy_lhs = 0.0; // u' (K + lambda M) u
    double energy_rhs = 0.0; // f' u
};

/// Ratios of the a priori estimates, each normalized by the forcing norm:
/// r1 = ||u||_2 / ||f||, r2 = ||eps grad u|| / ||f||,
/// r3 = ||a1(./eps)^{1/2} grad u|| / ||f||.
struct AprioriRatios {
    double r1 = 0.0;
    double r2 = 0.0;
    double r3 = 0.0;
    double f_norm = 0.0;
};

/// Solve the fine problem (a1(x/eps) + eps^2 a0(x/eps)) with the lambda rho
/// zero-order term and Dirichlet boundary. Requires 1/eps integral per axis
/// and nests multiplier * N fine cells in every period. Preconditioned CG
/// with a relative tolerance of tol.cg_rel and a 1e5 iteration budget.
FineSolution solve_epsilon_problem(const StructuredMesh& cell,
                                   const ProblemGeometry& geo, const Box& box,
                                   double eps, int multiplier, double lambda,
                                   const ForcingSpec& forcing,
                                   const Tolerances& tol = {});

AprioriRatios apriori_ratios(const FineSolution& sol,
                             const ProblemGeometry& geo,
                             const ForcingSpec& forcing);

struct TwoScaleError {
    double e_u = 0.0;  // || u_eps - u0(x, x/eps) ||_2
    double e_xi = 0.0; // || s(x/eps) grad u_eps - xi0(x, x/eps) ||_2
    double u0_norm = 0.0;
    double xi0_norm = 0.0;
};

/// Quadrature comparison of the fine solution against the evaluated
/// two-scale limit (field and projected flux).
TwoScaleError two_scale_error(const FineSolution& sol, const CellProblem& cell,
                              const TwoScaleField& limit);

} // namespace twoscale

#endif
