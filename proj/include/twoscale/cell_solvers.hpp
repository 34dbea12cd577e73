#ifndef TWOSCALE_CELL_SOLVERS_HPP
#define TWOSCALE_CELL_SOLVERS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "twoscale/assembly.hpp"
#include "twoscale/coefficients.hpp"
#include "twoscale/kernel_space.hpp"
#include "twoscale/mesh.hpp"

namespace twoscale {

/// A periodic H^{-1} functional represented by its nodal load vector.
struct CellFunctional {
    Eigen::VectorXd load;
    std::string provenance = "user";
};

/// Solution of a degenerate cell problem, living in the discrete V-perp.
struct CorrectorField {
    Eigen::VectorXd field;
    double equation_residual = 0.0; // Gram-weighted (discrete H^{-1}) relative
    double kernel_component = 0.0;  // ||P_V field|| / ||field||
    int iterations = 0;
};

/// Per-quadrature-point n x d tensor field on the unit cell, flattened with
/// the gradient_matrix layout ((e*nq + q)*n + i)*d + j.
struct FluxField {
    int n = 1;
    int d = 1;
    Eigen::VectorXd values;
    bool in_W = false;                // certified membership flag
    double divergence_residual = 0.0; // discrete H^{-1} residual when flagged
};

/// Elementary correctors chi^(k,j) (kernel index k, macro direction j) and
/// their fluxes zeta^(k,j) = a^{1/2} [ b_k (x) e_j + grad chi^(k,j) ].
struct CorrectorBank {
    int m = 0;
    int d = 1;
    std::vector<Eigen::VectorXd> chi;
    std::vector<FluxField> zeta;
    Eigen::MatrixXd flux_gram; // (m*d) x (m*d) pairwise flux inner products
    std::uint64_t geometry_hash = 0;

    int index(int k, int j) const { return k * d + j; }
};

/// Degenerate cell-problem machinery for one coefficient geometry: the
/// projected conjugate-gradient solver on V-perp, the generalized Weyl
/// decomposition, the projector onto W, and the corrector bank behind the
/// flux operator T.
class CellProblem {
public:
    CellProblem(const StructuredMesh& mesh, const CoefficientTensor& a,
                const DensityField& rho, KernelBasis basis,
                Tolerances tol = {});

    const StructuredMesh& mesh() const { return mesh_; }
    const CoefficientTensor& tensor() const { return a_; }
    const DensityField& density() const { return rho_; }
    const KernelBasis& basis() const { return basis_; }
    const SpMat& stiffness_a1() const { return K1_; }
    std::uint64_t hash() const { return hash_; }
    const Eigen::MatrixXd& sqrt_a1(int cell) const { return sqrt_a1_[cell]; }

    // -- flux-field algebra ------------------------------------------------
    FluxField zero_flux() const;
    FluxField gradient(const Eigen::VectorXd& v) const;
    FluxField sqrt_gradient(const Eigen::VectorXd& v) const; // a^{1/2} grad v
    FluxField apply_sqrt(const FluxField& psi) const;
    FluxField apply_a1(const FluxField& psi) const;
    double flux_inner(const FluxField& f, const FluxField& g) const;
    double flux_norm(const FluxField& f) const;

    /// Nodal functional w -> sum_q w_q psi(y_q) : grad w(y_q).
    Eigen::VectorXd gradient_pairing(const FluxField& psi) const;
    /// The functional -div(a^{1/2} psi) in nodal form.
    Eigen::VectorXd flux_divergence_load(const FluxField& psi) const;
    /// Discrete H^{-1} norm of div(a^{1/2} psi) (one Gram solve).
    double divergence_residual(const FluxField& psi) const;

    // -- degenerate cell problems -----------------------------------------
    /// Max over kernel basis vectors of |<F, b_k>|.
    double check_solvability(const CellFunctional& F) const;

    /// Unique solution in V-perp of the projected system; throws
    /// SolvabilityError when the compatibility condition fails and
    /// SolverError on CG stagnation.
    CorrectorField solve_degenerate_cell(const CellFunctional& F) const;

    /// Reconstruct eta = a^{1/2} grad u1 for eta orthogonal to W.
    CorrectorField weyl_decompose(const FluxField& eta) const;

    /// Orthogonal projection onto the discrete W (divergence-free fluxes).
    FluxField project_onto_W(const FluxField& psi) const;

    // -- correctors and the flux operator T --------------------------------
    const CorrectorBank& correctors() const;

    /// Corrector for an arbitrary constant macroscopic gradient direction Y
    /// (used by the classical reduction).
    CorrectorField solve_corrector_for_direction(const FluxField& Y) const;
    FluxField constant_direction(int p, int q) const; // Y_{ij} = d_ip d_jq

    /// xi(x_fixed, .) = sum_{k,j} gradcoef(k,j) zeta^(k,j); the result is in
    /// W by construction.
    FluxField apply_T_slice(const Eigen::MatrixXd& gradcoef) const;
    /// Pointwise evaluation of the same combination at a cell point y.
    Eigen::VectorXd apply_T_at(const Eigen::MatrixXd& gradcoef,
                               const Eigen::VectorXd& y) const;

    Eigen::VectorXd kernel_value_at(int k, const Eigen::VectorXd& y) const;
    Eigen::VectorXd elementary_flux_at(int k, int j,
                                       const Eigen::VectorXd& y) const;

    /// Per-quadrature-point interpolation of kernel vector k tensored with
    /// direction j.
    FluxField kernel_direction_flux(int k, int j) const;

    void export_correctors(const std::filesystem::path& file) const;
    /// Load a previously exported bank; rejects geometry-hash mismatches.
    void import_correctors(const std::filesystem::path& file);

private:
    CorrectorField solve_projected(const Eigen::VectorXd& rhs_vperp) const;

    const StructuredMesh& mesh_;
    CoefficientTensor a_;
    DensityField rho_;
    KernelBasis basis_;
    Tolerances tol_;
    std::uint64_t hash_;
    SpMat K1_;
    SpMat grad_;
    Eigen::VectorXd qw_; // per-gradient-row quadrature weight
    std::vector<Eigen::MatrixXd> sqrt_a1_;
    Eigen::VectorXd jacobi_;    // CG preconditioner diag
    Eigen::MatrixXd kernel_l2_; // l2-orthonormal kernel span (CG deflation)
    GramOperator plain_gram_;
    Eigen::SimplicialLDLT<SpMat> gram_solver_;
    mutable std::optional<CorrectorBank> bank_;
};

} // namespace twoscale

#endif
