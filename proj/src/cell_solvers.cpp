#include "twoscale/cell_solvers.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace twoscale {

CellProblem::CellProblem(const StructuredMesh& mesh, const CoefficientTensor& a,
                         const DensityField& rho, KernelBasis basis,
                         Tolerances tol)
    : mesh_(mesh), a_(a), rho_(rho), basis_(std::move(basis)), tol_(tol),
      hash_(geometry_hash(a, rho)),
      K1_(assemble_stiffness(mesh, a, TensorPart::A1)),
      grad_(gradient_matrix(mesh)),
      plain_gram_(GramOperator::make(mesh, GramKind::L2Gradient)) {
    if (basis_.vectors().rows() != mesh.dof_count())
        throw DimensionError("kernel basis does not match mesh");

    const int n = mesh.components();
    const int d = mesh.dim();
    const int nq = mesh.quad_count();
    qw_.resize(grad_.rows());
    for (int e = 0; e < mesh.element_count(); ++e)
        for (int q = 0; q < nq; ++q)
            for (int c = 0; c < n * d; ++c)
                qw_[((e * nq + q) * n * d) + c] = mesh.qweight(q);

    // Cellwise symmetric square root, negative round-off modes zeroed.
    sqrt_a1_.resize(a_.cell_count());
    for (int c = 0; c < a_.cell_count(); ++c) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
            0.5 * (a_.a1[c] + a_.a1[c].transpose()));
        Eigen::VectorXd lam = es.eigenvalues();
        for (int i = 0; i < lam.size(); ++i)
            lam[i] = lam[i] > 1e-12 ? std::sqrt(lam[i]) : 0.0;
        sqrt_a1_[c] = es.eigenvectors() * lam.asDiagonal() *
                      es.eigenvectors().transpose();
    }

    jacobi_ = Eigen::VectorXd(K1_.diagonal());
    for (int i = 0; i < jacobi_.size(); ++i)
        if (!(jacobi_[i] > 0)) jacobi_[i] = 1.0;

    // l2-orthonormal kernel span for the symmetric CG deflation; the
    // G-orthogonal projector is applied once at the end.
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis_.vectors());
    kernel_l2_ = qr.householderQ() *
                 Eigen::MatrixXd::Identity(mesh_.dof_count(),
                                           basis_.dimension());

    gram_solver_.compute(plain_gram_.sparse_part());
    if (gram_solver_.info() != Eigen::Success)
        throw SolverError("Gram factorization failed");
}

FluxField CellProblem::zero_flux() const {
    FluxField f;
    f.n = mesh_.components();
    f.d = mesh_.dim();
    f.values = Eigen::VectorXd::Zero(grad_.rows());
    return f;
}

FluxField CellProblem::gradient(const Eigen::VectorXd& v) const {
    FluxField f = zero_flux();
    f.values = grad_ * v;
    return f;
}

namespace {

// Apply a per-cell (nd)x(nd) block to every quadrature-point tensor value.
void apply_blocks(const StructuredMesh& mesh,
                  const std::vector<Eigen::MatrixXd>& blocks,
                  const Eigen::VectorXd& in, Eigen::VectorXd& out) {
    const int nd = mesh.components() * mesh.dim();
    const int nq = mesh.quad_count();
    out.resize(in.size());
    for (int e = 0; e < mesh.element_count(); ++e)
        for (int q = 0; q < nq; ++q)
            out.segment((e * nq + q) * nd, nd) =
                blocks[e] * in.segment((e * nq + q) * nd, nd);
}

} // namespace

FluxField CellProblem::apply_sqrt(const FluxField& psi) const {
    FluxField out = psi;
    out.in_W = false;
    apply_blocks(mesh_, sqrt_a1_, psi.values, out.values);
    return out;
}

FluxField CellProblem::apply_a1(const FluxField& psi) const {
    FluxField out = psi;
    out.in_W = false;
    apply_blocks(mesh_, a_.a1, psi.values, out.values);
    return out;
}

FluxField CellProblem::sqrt_gradient(const Eigen::VectorXd& v) const {
    return apply_sqrt(gradient(v));
}

double CellProblem::flux_inner(const FluxField& f, const FluxField& g) const {
    return f.values.dot(qw_.cwiseProduct(g.values));
}

double CellProblem::flux_norm(const FluxField& f) const {
    return std::sqrt(std::max(0.0, flux_inner(f, f)));
}

Eigen::VectorXd CellProblem::gradient_pairing(const FluxField& psi) const {
    return grad_.transpose() * qw_.cwiseProduct(psi.values);
}

Eigen::VectorXd CellProblem::flux_divergence_load(const FluxField& psi) const {
    return gradient_pairing(apply_sqrt(psi));
}

double CellProblem::divergence_residual(const FluxField& psi) const {
    const Eigen::VectorXd r = flux_divergence_load(psi);
    const Eigen::VectorXd gr = gram_solver_.solve(r);
    return std::sqrt(std::max(0.0, r.dot(gr)));
}

double CellProblem::check_solvability(const CellFunctional& F) const {
    if (F.load.size() != mesh_.dof_count())
        throw DimensionError("functional does not match mesh");
    double worst = 0.0;
    for (int k = 0; k < basis_.dimension(); ++k)
        worst = std::max(worst,
                         std::abs(basis_.vectors().col(k).dot(F.load)));
    return worst;
}

CorrectorField CellProblem::solve_projected(
    const Eigen::VectorXd& rhs_vperp) const {
    const int ndof = mesh_.dof_count();
    // Symmetric deflation projector (l2-orthonormal kernel span). The load
    // of a solvable problem lies in range(K1) = V-perp (l2), so the deflated
    // system is consistent; the G-orthogonal projector maps the result into
    // the contractual V-perp afterwards.
    auto deflate = [this](const Eigen::VectorXd& v) -> Eigen::VectorXd {
        return v - kernel_l2_ * (kernel_l2_.transpose() * v);
    };
    auto op = [&](const Eigen::VectorXd& v) {
        return deflate(K1_ * deflate(v));
    };

    const double rhs_norm = rhs_vperp.norm();
    CorrectorField out;
    out.field = Eigen::VectorXd::Zero(ndof);
    if (rhs_norm == 0.0) return out;

    Eigen::VectorXd x = Eigen::VectorXd::Zero(ndof);
    Eigen::VectorXd r = rhs_vperp;
    Eigen::VectorXd z = deflate(r.cwiseQuotient(jacobi_));
    Eigen::VectorXd p = z;
    double rz = r.dot(z);
    const int max_iter = std::max(5000, 20 * ndof);
    int iter = 0;
    for (; iter < max_iter; ++iter) {
        if (r.norm() <= tol_.cg_rel * rhs_norm) break;
        const Eigen::VectorXd Ap = op(p);
        const double pAp = p.dot(Ap);
        if (!(pAp > 0))
            throw SolverError(
                "CG stagnation on V-perp (non-positive curvature); mu1=" +
                std::to_string(basis_.first_nonkernel_eigenvalue()) +
                ", iterations=" + std::to_string(iter));
        const double alpha = rz / pAp;
        x += alpha * p;
        r -= alpha * Ap;
        // Re-projection each iteration suppresses kernel drift.
        x = deflate(x);
        r = deflate(r);
        z = deflate(r.cwiseQuotient(jacobi_));
        const double rz_new = r.dot(z);
        p = z + (rz_new / rz) * p;
        rz = rz_new;
    }
    if (r.norm() > tol_.cg_rel * rhs_norm)
        throw SolverError("CG did not reach tolerance on V-perp; mu1=" +
                          std::to_string(basis_.first_nonkernel_eigenvalue()) +
                          ", iterations=" + std::to_string(iter) +
                          ", relative residual " +
                          std::to_string(r.norm() / rhs_norm));

    // Kernel shift into the Gram-orthogonal complement.
    x -= basis_.vectors() *
         (basis_.vectors().transpose() * basis_.gram().apply(x));
    out.field = x;
    out.iterations = iter;
    const double xnorm = basis_.gram().norm(x);
    out.kernel_component =
        xnorm > 0 ? basis_.gram().norm(basis_.project_V(x)) / xnorm : 0.0;

    // Gram-weighted residual of the projected equation.
    Eigen::VectorXd res = K1_ * x - rhs_vperp;
    res -= kernel_l2_ * (kernel_l2_.transpose() * res);
    const Eigen::VectorXd gres = gram_solver_.solve(res);
    const Eigen::VectorXd grhs = gram_solver_.solve(rhs_vperp);
    const double rhs_h = std::sqrt(std::max(0.0, rhs_vperp.dot(grhs)));
    out.equation_residual =
        rhs_h > 0 ? std::sqrt(std::max(0.0, res.dot(gres))) / rhs_h : 0.0;
    return out;
}

CorrectorField CellProblem::solve_degenerate_cell(
    const CellFunctional& F) const {
    const double defect = check_solvability(F);
    // Floor the scale at 1: the cell is the unit cell with O(1) coefficients,
    // so a vanishing load (e.g. constant coefficients) carries only round-off
    // and must not fail a relative test against its own noise.
    const double scale = std::max(F.load.norm(), 1.0);
    if (defect > tol_.solvability_rel * scale)
        throw SolvabilityError(
            "cell problem right-hand side is not orthogonal to V "
            "(provenance: " + F.provenance + ")",
            defect);
    // The deflated load drops any kernel component the defect tolerance let
    // through.
    Eigen::VectorXd rhs = F.load;
    rhs -= kernel_l2_ * (kernel_l2_.transpose() * rhs);
    return solve_projected(rhs);
}

CorrectorField CellProblem::weyl_decompose(const FluxField& eta) const {
    CellFunctional F{flux_divergence_load(eta), "from flux divergence"};
    CorrectorField u1 = solve_degenerate_cell(F);
    FluxField recon = sqrt_gradient(u1.field);
    recon.values = eta.values - recon.values;
    const double eta_norm = flux_norm(eta);
    const double resid = flux_norm(recon);
    if (resid > tol_.weyl_rel * std::max(eta_norm, 1e-300))
        throw InvariantError(
            "Weyl decomposition failed: ||P_W eta|| = " +
            std::to_string(resid) + " for ||eta|| = " +
            std::to_string(eta_norm) +
            " (input not orthogonal to W?)");
    return u1;
}

FluxField CellProblem::project_onto_W(const FluxField& psi) const {
    CellFunctional F{flux_divergence_load(psi), "from flux divergence"};
    const CorrectorField u1 = solve_degenerate_cell(F);
    FluxField out = psi;
    out.values = psi.values - sqrt_gradient(u1.field).values;
    out.divergence_residual = divergence_residual(out);
    out.in_W = out.divergence_residual <=
               tol_.weyl_rel * std::max(flux_norm(out), 1.0);
    return out;
}

FluxField CellProblem::kernel_direction_flux(int k, int j) const {
    const int n = mesh_.components();
    const int d = mesh_.dim();
    const int nq = mesh_.quad_count();
    FluxField Y = zero_flux();
    const Eigen::VectorXd& b = basis_.vectors().col(k);
    for (int e = 0; e < mesh_.element_count(); ++e) {
        for (int q = 0; q < nq; ++q) {
            for (int i = 0; i < n; ++i) {
                double v = 0.0;
                for (int a = 0; a < mesh_.corners(); ++a)
                    v += mesh_.shape(a, q) *
                         b[mesh_.dof(mesh_.element_node(e, a), i)];
                Y.values[((e * nq + q) * n + i) * d + j] = v;
            }
        }
    }
    return Y;
}

FluxField CellProblem::constant_direction(int p, int q) const {
    const int n = mesh_.components();
    const int d = mesh_.dim();
    const int nq = mesh_.quad_count();
    FluxField Y = zero_flux();
    for (int e = 0; e < mesh_.element_count(); ++e)
        for (int qq = 0; qq < nq; ++qq)
            Y.values[((e * nq + qq) * n + p) * d + q] = 1.0;
    return Y;
}

CorrectorField CellProblem::solve_corrector_for_direction(
    const FluxField& Y) const {
    CellFunctional F{-gradient_pairing(apply_a1(Y)), "from macro gradient"};
    return solve_degenerate_cell(F);
}

const CorrectorBank& CellProblem::correctors() const {
    if (bank_) return *bank_;
    CorrectorBank bank;
    bank.m = basis_.dimension();
    bank.d = mesh_.dim();
    bank.geometry_hash = hash_;
    const int total = bank.m * bank.d;
    bank.chi.resize(total);
    bank.zeta.resize(total);
    for (int k = 0; k < bank.m; ++k) {
        for (int j = 0; j < bank.d; ++j) {
            const FluxField Y = kernel_direction_flux(k, j);
            const CorrectorField chi = solve_corrector_for_direction(Y);
            FluxField zeta = gradient(chi.field);
            zeta.values += Y.values;
            zeta = apply_sqrt(zeta);
            zeta.divergence_residual = divergence_residual(zeta);
            zeta.in_W = true;
            bank.chi[bank.index(k, j)] = chi.field;
            bank.zeta[bank.index(k, j)] = std::move(zeta);
        }
    }
    bank.flux_gram.resize(total, total);
    for (int i = 0; i < total; ++i)
        for (int j = 0; j <= i; ++j) {
            const double v = flux_inner(bank.zeta[i], bank.zeta[j]);
            bank.flux_gram(i, j) = v;
            bank.flux_gram(j, i) = v;
        }
    bank_ = std::move(bank);
    return *bank_;
}

FluxField CellProblem::apply_T_slice(const Eigen::MatrixXd& gradcoef) const {
    const CorrectorBank& bank = correctors();
    if (gradcoef.rows() != bank.m || gradcoef.cols() != bank.d)
        throw DimensionError("gradient coefficients do not match the bank");
    FluxField out = zero_flux();
    for (int k = 0; k < bank.m; ++k)
        for (int j = 0; j < bank.d; ++j) {
            const double c = gradcoef(k, j);
            if (c != 0.0) out.values += c * bank.zeta[bank.index(k, j)].values;
        }
    out.in_W = true;
    return out;
}

Eigen::VectorXd CellProblem::kernel_value_at(int k,
                                             const Eigen::VectorXd& y) const {
    return interpolate(mesh_, basis_.vectors().col(k), y);
}

Eigen::VectorXd CellProblem::elementary_flux_at(
    int k, int j, const Eigen::VectorXd& y) const {
    const CorrectorBank& bank = correctors();
    const int n = mesh_.components();
    const int d = mesh_.dim();
    double ref[2];
    const int cell = mesh_.locate(y, ref);
    const Eigen::VectorXd bk = kernel_value_at(k, y);
    const Eigen::MatrixXd gchi =
        interpolate_gradient(mesh_, bank.chi[bank.index(k, j)], y);
    Eigen::VectorXd zeta(n * d);
    for (int i = 0; i < n; ++i)
        for (int r = 0; r < d; ++r)
            zeta[i * d + r] = gchi(i, r) + (r == j ? bk[i] : 0.0);
    return sqrt_a1_[cell] * zeta;
}

Eigen::VectorXd CellProblem::apply_T_at(const Eigen::MatrixXd& gradcoef,
                                        const Eigen::VectorXd& y) const {
    const CorrectorBank& bank = correctors();
    if (gradcoef.rows() != bank.m || gradcoef.cols() != bank.d)
        throw DimensionError("gradient coefficients do not match the bank");
    Eigen::VectorXd out =
        Eigen::VectorXd::Zero(mesh_.components() * mesh_.dim());
    for (int k = 0; k < bank.m; ++k)
        for (int j = 0; j < bank.d; ++j) {
            const double c = gradcoef(k, j);
            if (c != 0.0) out += c * elementary_flux_at(k, j, y);
        }
    return out;
}

void CellProblem::export_correctors(const std::filesystem::path& file) const {
    const CorrectorBank& bank = correctors();
    nlohmann::json doc;
    doc["schema_version"] = 1;
    doc["geometry_hash"] = bank.geometry_hash;
    doc["dimension"] = mesh_.dim();
    doc["cells"] = mesh_.cells_axis(0);
    doc["system_size"] = mesh_.components();
    doc["kernel_dimension"] = bank.m;
    nlohmann::json chis = nlohmann::json::array();
    for (const auto& chi : bank.chi)
        chis.push_back(std::vector<double>(chi.data(), chi.data() + chi.size()));
    doc["chi"] = std::move(chis);
    std::ofstream out(file);
    if (!out) throw ConfigError("cannot write corrector bank to " +
                                file.string());
    out << doc.dump(0) << "\n";
}

void CellProblem::import_correctors(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in)
        throw ConfigError("cannot read corrector bank from " + file.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed corrector bank: ") + e.what());
    }
    if (doc.value("geometry_hash", std::uint64_t{0}) != hash_)
        throw ConfigError("corrector bank geometry hash does not match");
    const int m = doc.at("kernel_dimension").get<int>();
    if (m != basis_.dimension())
        throw ConfigError("corrector bank kernel dimension does not match");

    CorrectorBank bank;
    bank.m = m;
    bank.d = mesh_.dim();
    bank.geometry_hash = hash_;
    const auto chis = doc.at("chi");
    const int total = bank.m * bank.d;
    if (static_cast<int>(chis.size()) != total)
        throw ConfigError("corrector bank has wrong corrector count");
    bank.chi.resize(total);
    bank.zeta.resize(total);
    for (int idx = 0; idx < total; ++idx) {
        const auto vec = chis[idx].get<std::vector<double>>();
        if (static_cast<int>(vec.size()) != mesh_.dof_count())
            throw ConfigError("corrector field has wrong length");
        bank.chi[idx] =
            Eigen::Map<const Eigen::VectorXd>(vec.data(), vec.size());
    }
    for (int k = 0; k < bank.m; ++k)
        for (int j = 0; j < bank.d; ++j) {
            const int idx = bank.index(k, j);
            FluxField zeta = gradient(bank.chi[idx]);
            zeta.values += kernel_direction_flux(k, j).values;
            zeta = apply_sqrt(zeta);
            zeta.divergence_residual = divergence_residual(zeta);
            zeta.in_W = true;
            bank.zeta[idx] = std::move(zeta);
        }
    bank.flux_gram.resize(total, total);
    for (int i = 0; i < total; ++i)
        for (int j = 0; j <= i; ++j) {
            const double v = flux_inner(bank.zeta[i], bank.zeta[j]);
            bank.flux_gram(i, j) = v;
            bank.flux_gram(j, i) = v;
        }
    bank_ = std::move(bank);
}

} // namespace twoscale
