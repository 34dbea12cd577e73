#ifndef TWOSCALE_TWO_SCALE_LIMIT_HPP
#define TWOSCALE_TWO_SCALE_LIMIT_HPP

#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "twoscale/cell_solvers.hpp"
#include "twoscale/coefficients.hpp"
#include "twoscale/mesh.hpp"

namespace twoscale {

/// Galerkin subspace of the limit space: tensor products of interior macro
/// shape functions (scalar, homogeneous Dirichlet) with kernel basis vectors.
/// Dof index = interior_node * m + k.
class TwoScaleSpace {
public:
    TwoScaleSpace(std::shared_ptr<const StructuredMesh> macro, int m);

    const StructuredMesh& macro() const { return *macro_; }
    int kernel_dim() const { return m_; }
    int size() const { return interior_count_ * m_; }
    int interior_count() const { return interior_count_; }
    /// -1 for boundary nodes.
    int interior_index(int node) const { return node_map_[node]; }
    int index(int interior_node, int k) const {
        return interior_node * m_ + k;
    }

private:
    std::shared_ptr<const StructuredMesh> macro_;
    int m_;
    std::vector<int> node_map_;
    int interior_count_;
};

TwoScaleSpace build_two_scale_space(std::shared_ptr<const StructuredMesh> macro,
                                    const KernelBasis& basis);

struct LimitSystem {
    SpMat matrix;
    Eigen::VectorXd load;
};

/// Two-scale limit field u0(x,y) = sum c_{I,k} Phi_I(x) b_k(y).
class TwoScaleField {
public:
    TwoScaleField(const TwoScaleSpace& space, Eigen::VectorXd coeff)
        : space_(&space), coeff_(std::move(coeff)) {}

    const Eigen::VectorXd& coefficients() const { return coeff_; }
    const TwoScaleSpace& space() const { return *space_; }

    /// Kernel coefficients of u0(x, .) at a macro point: entry k is
    /// sum_I c_{I,k} Phi_I(x).
    Eigen::VectorXd macro_coeff_at(const Eigen::VectorXd& x) const;
    /// m x d matrix of sum_I c_{I,k} d_j Phi_I(x).
    Eigen::MatrixXd macro_gradcoef_at(const Eigen::VectorXd& x) const;

    /// Pointwise value u0(x,y) (n components).
    Eigen::VectorXd at(const CellProblem& cell, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& y) const;

private:
    const TwoScaleSpace* space_;
    Eigen::VectorXd coeff_;
};

/// Assemble the limit system: projected-flux term (through the corrector
/// bank), a^(0) gradient term, and the lambda-weighted density term, with a
/// separable two-scale load.
LimitSystem assemble_limit_system(const TwoScaleSpace& space,
                                  const CellProblem& cell, double lambda,
                                  const ForcingSpec& forcing);

/// Solve the SPD limit system by Cholesky factorization; indefiniteness is an
/// invariant violation.
TwoScaleField solve_limit(const TwoScaleSpace& space, const LimitSystem& sys);

/// Classical homogenized tensor a^hom for non-degenerate a^(1) (kernel =
/// constants, m = n), as an (n*d) x (n*d) matrix on flattened gradients.
Eigen::MatrixXd homogenized_tensor(const CellProblem& cell);

} // namespace twoscale

#endif
