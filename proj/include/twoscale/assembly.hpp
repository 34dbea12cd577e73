#ifndef TWOSCALE_ASSEMBLY_HPP
#define TWOSCALE_ASSEMBLY_HPP

#include <functional>
#include <vector>

#include <Eigen/Sparse>

#include "twoscale/coefficients.hpp"
#include "twoscale/mesh.hpp"

namespace twoscale {

using SpMat = Eigen::SparseMatrix<double>;

enum class TensorPart { A1, A0, Sum };

/// Per-element coefficient providers. The element index is the mesh element
/// index; callers map it to coefficient cells as appropriate (identity on the
/// unit-cell mesh, epsilon-periodic lookup on fine meshes).
using ScalarByElement = std::function<double(int)>;
using TensorByElement = std::function<Eigen::MatrixXd(int)>;

/// Weighted mass matrix, block-diagonal over components. Weight must be
/// positive on every element.
SpMat assemble_mass(const StructuredMesh& mesh, const ScalarByElement& weight);

/// Stiffness matrix for a cellwise-constant rank-4 tensor given per element
/// as an (n*d) x (n*d) block acting on flattened gradients.
SpMat assemble_stiffness(const StructuredMesh& mesh,
                         const TensorByElement& tensor);

/// Convenience overloads for the unit-cell mesh (element index == cell index).
SpMat assemble_mass(const StructuredMesh& mesh, const DensityField& rho);
SpMat assemble_stiffness(const StructuredMesh& mesh,
                         const CoefficientTensor& a, TensorPart part);

/// Squared-flux operator K2 with v' K2 v = sum_q w_q |a(y_q) grad v(y_q)|^2;
/// assembled as the stiffness of the tensor a' a. Distinct from the energy
/// norm of a^(1/2) when a degenerates.
SpMat assemble_flux_square(const StructuredMesh& mesh,
                           const CoefficientTensor& a);

/// Sparse map from nodal fields to per-quadrature-point gradient tensors,
/// layout ((e*nq + q)*n + i)*d + j. Annihilates constants.
SpMat gradient_matrix(const StructuredMesh& mesh);

/// Load vector from a pointwise forcing density.
Eigen::VectorXd assemble_load(
    const StructuredMesh& mesh,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f);

/// Interior-dof numbering for Dirichlet meshes: entry is -1 on boundary dofs,
/// otherwise the compressed interior index.
std::vector<int> interior_dof_map(const StructuredMesh& mesh);

SpMat restrict_to_interior(const SpMat& full, const std::vector<int>& map,
                           int interior_count);
Eigen::VectorXd restrict_vector(const Eigen::VectorXd& full,
                                const std::vector<int>& map,
                                int interior_count);
Eigen::VectorXd prolong_vector(const Eigen::VectorXd& interior,
                               const std::vector<int>& map);

} // namespace twoscale

#endif
