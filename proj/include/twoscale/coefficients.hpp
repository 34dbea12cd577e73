#ifndef TWOSCALE_COEFFICIENTS_HPP
#define TWOSCALE_COEFFICIENTS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "twoscale/errors.hpp"
#include "twoscale/mesh.hpp"

#include <nlohmann/json_fwd.hpp>

namespace twoscale {

/// Cellwise-constant rank-4 tensors a^(1), a^(0) on the unit cell, stored per
/// cell as symmetric (n*d) x (n*d) matrices acting on flattened gradients
/// zeta_{ij} with flat index i*d + j (component-major).
struct CoefficientTensor {
    int n = 1;
    int d = 1;
    std::array<int, 2> cells{2, 1}; // cells per axis, lexicographic indexing
    std::string geometry_tag = "custom";
    std::vector<Eigen::MatrixXd> a1; // leading (possibly degenerate) part
    std::vector<Eigen::MatrixXd> a0; // eps^2-scaled part

    int cell_count() const { return cells[0] * cells[1]; }
    int flat_dim() const { return n * d; }
    Eigen::MatrixXd sum_at(int cell) const { return a1[cell] + a0[cell]; }
    void check_sized() const;
};

/// Bounded, uniformly positive density on the cell.
struct DensityField {
    std::vector<double> rho; // per cell
    double nu = 1.0;         // certified lower bound
};

struct ValidityReport {
    bool pass = false;
    double value = 0.0; // max asymmetry / min eigenvalue / worst rank-one value
    int worst_cell = -1;
    std::string detail;
};

/// Max |a_{ijpq} - a_{pqij}| over all cells of both tensor parts; passes at
/// the round-off tolerance 1e-12 (exact data is symmetric by construction).
ValidityReport validate_symmetry(const CoefficientTensor& a);

/// Minimum over cells of the smallest eigenvalue of the a^(1) block; passes
/// iff >= -1e-12.
ValidityReport validate_nonnegativity(const CoefficientTensor& a);

/// Minimum over cells and a deterministic angular grid of the rank-one value
/// (a^(0)+a^(1)) xi (x) eta : xi (x) eta / (|xi|^2 |eta|^2); passes iff >= nu.
/// The grid is refined until the minimum moves by less than 1e-6.
ValidityReport validate_strong_ellipticity(const CoefficientTensor& a,
                                           double nu);

struct GeometryParams {
    double value_a = 1.0;       // matrix / first laminate / uniform value
    double value_b = 2.0;       // second laminate / checkerboard value
    double inclusion_halfwidth = 0.25; // double porosity, mesh-aligned
    double rho = 1.0;
    // custom voxel payloads (row-major per-cell entries, flat (nd)^2 each)
    std::vector<double> voxel_a1;
    std::vector<double> voxel_a0;
    std::vector<double> voxel_rho;
};

struct ProblemGeometry {
    CoefficientTensor tensor;
    DensityField density;
};

/// Instantiate a named coefficient geometry on an N-per-axis cell grid.
/// Tags: uniform | laminate | checkerboard | double_porosity | custom_voxel.
ProblemGeometry preset_geometry(const std::string& tag, int d, int N, int n,
                                const GeometryParams& params);

/// Canonical content hash of the per-cell tensor arrays (keys corrector
/// caches across runs).
std::uint64_t geometry_hash(const CoefficientTensor& a,
                            const DensityField& rho);

/// Separable two-scale forcing f(x,y) = f_x(x) f_y(y); f^eps(x) = f(x, x/eps).
struct ForcingSpec {
    enum class MacroKind { SineProduct, Constant };
    enum class CellKind { Constant, Cosine };

    MacroKind macro = MacroKind::SineProduct;
    CellKind cell = CellKind::Constant;
    double amplitude = 1.0;
    double cell_beta = 0.0; // f_y = 1 + cell_beta * cos(2 pi y_1) for Cosine

    double macro_value(const Eigen::VectorXd& x, const Box& box) const;
    double cell_value(const Eigen::VectorXd& y) const;
    /// f^eps at a physical point, one value per component.
    Eigen::VectorXd at_eps(const Eigen::VectorXd& x, double eps, const Box& box,
                           int n) const;
    Eigen::VectorXd at_two_scale(const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& y, const Box& box,
                                 int n) const;
};

struct Tolerances {
    double tol_sym = 1e-12;
    double tol_kernel = 1e-8;
    double cg_rel = 1e-12;
    double weyl_rel = 1e-8;
    double solvability_rel = 1e-10;
};

/// Full problem description, ingested from a single JSON document.
struct ProblemConfig {
    int d = 1;
    int n = 1;
    int cell_N = 2;       // cell resolution
    int macro_M = 16;     // macro resolution per axis
    int fine_multiplier = 1;
    double lambda = 1.0;
    double nu = 1.0;
    std::vector<double> epsilons{0.25, 0.125, 0.0625, 0.03125};
    std::vector<int> kernel_refinements; // for the key-constant history
    Box domain;
    std::string geometry_tag = "uniform";
    GeometryParams geometry;
    ForcingSpec forcing;
    Tolerances tol;
    unsigned seed = 1234; // randomized property checks only

    ProblemGeometry build_geometry() const {
        return preset_geometry(geometry_tag, d, cell_N, n, geometry);
    }

    static ProblemConfig from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;

    void validate() const; // throws ConfigError
};

} // namespace twoscale

#endif
