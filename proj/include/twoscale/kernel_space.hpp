#ifndef TWOSCALE_KERNEL_SPACE_HPP
#define TWOSCALE_KERNEL_SPACE_HPP

#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "twoscale/assembly.hpp"
#include "twoscale/coefficients.hpp"
#include "twoscale/mesh.hpp"

namespace twoscale {

/// Choice of H1 inner product on the periodic cell. MeanGradient is the
/// mean-value-plus-gradient product (int v)(int w) + int grad v . grad w;
/// L2Gradient is the plain int v.w + int grad v . grad w. The two are
/// equivalent norms and induce the same kernel space.
enum class GramKind { MeanGradient, L2Gradient };

/// Symmetric positive-definite Gram operator, stored as a sparse part plus an
/// optional low-rank part G = S + U U^T (the mean-value product contributes
/// rank n).
class GramOperator {
public:
    GramKind kind() const { return kind_; }
    const SpMat& sparse_part() const { return S_; }
    const Eigen::MatrixXd& low_rank() const { return U_; }

    Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
    double inner(const Eigen::VectorXd& v, const Eigen::VectorXd& w) const;
    double norm(const Eigen::VectorXd& v) const;
    Eigen::MatrixXd dense() const;
    int size() const { return static_cast<int>(S_.rows()); }

    static GramOperator make(const StructuredMesh& mesh, GramKind kind);

private:
    GramKind kind_ = GramKind::MeanGradient;
    SpMat S_;
    Eigen::MatrixXd U_;
};

/// The H1 inner product of the cell space (mean-value product plus gradient
/// product by default).
GramOperator h1_inner_product(const StructuredMesh& mesh,
                              GramKind kind = GramKind::MeanGradient);

/// Orthonormal nodal basis of the discrete kernel V = {v : a1 grad v = 0},
/// with projectors onto V and its orthogonal complement.
class KernelBasis {
public:
    int dimension() const { return static_cast<int>(vectors_.cols()); }
    const Eigen::MatrixXd& vectors() const { return vectors_; }
    const GramOperator& gram() const { return gram_; }
    const Eigen::VectorXd& kernel_eigenvalues() const { return kernel_eigs_; }
    double first_nonkernel_eigenvalue() const { return first_nonkernel_; }
    double gap_ratio() const { return gap_ratio_; }

    Eigen::VectorXd project_V(const Eigen::VectorXd& v) const;
    Eigen::VectorXd project_Vperp(const Eigen::VectorXd& v) const;

    KernelBasis(Eigen::MatrixXd vectors, GramOperator gram,
                Eigen::VectorXd kernel_eigs, double first_nonkernel,
                double gap_ratio)
        : vectors_(std::move(vectors)), gram_(std::move(gram)),
          kernel_eigs_(std::move(kernel_eigs)),
          first_nonkernel_(first_nonkernel), gap_ratio_(gap_ratio) {}

private:
    Eigen::MatrixXd vectors_; // dofs x m, Gram-orthonormal
    GramOperator gram_;
    Eigen::VectorXd kernel_eigs_;
    double first_nonkernel_;
    double gap_ratio_;
};

struct KernelOptions {
    double tol_kernel = 1e-8;
    GramKind gram = GramKind::MeanGradient;
    double gap_requirement = 1e4; // demand mu_{m+1}/mu_m at least this
    int dense_threshold = 1500;   // dofs above which the sparse path is used
};

/// Kernel basis of the eigenspace {mu <= tol_kernel} of K1 v = mu G v.
/// Detection runs in the L2Gradient product (the sparse-friendly one); the
/// returned basis is orthonormalized in the requested product.
KernelBasis compute_kernel_basis(const StructuredMesh& mesh,
                                 const CoefficientTensor& a,
                                 const KernelOptions& opts = {});

struct KeyConstantEstimate {
    double C = 0.0;   // mu1^{-1/2}
    double mu1 = 0.0; // smallest nonzero generalized eigenvalue
    std::vector<std::pair<int, double>> history; // (N, C_N), filled by callers
};

/// Smallest eigenvalue above the kernel of K2 v = mu G v, where K2 is the
/// squared-flux operator; C = mu1^{-1/2} bounds ||P_{Vperp} v|| by
/// C ||a1 grad v||_2 on the discrete space. The default product is the plain
/// L2-plus-gradient one, matching the Fourier oracle of the coercive case.
KeyConstantEstimate estimate_key_constant(const StructuredMesh& mesh,
                                          const CoefficientTensor& a,
                                          const KernelBasis& basis,
                                          GramKind gram = GramKind::L2Gradient,
                                          double tol_kernel = 1e-8,
                                          int dense_threshold = 1500);

namespace detail {

struct EigenPairs {
    Eigen::VectorXd values;  // ascending
    Eigen::MatrixXd vectors; // Gram-orthonormal columns
};

/// k smallest eigenpairs of the symmetric pencil (A, G). Dense solve below
/// the threshold; otherwise shift-inverted block subspace iteration (needs a
/// purely sparse Gram operator).
EigenPairs smallest_eigenpairs(const SpMat& A, const GramOperator& G, int k,
                               int dense_threshold);

} // namespace detail

} // namespace twoscale

#endif
