#include "twoscale/kernel_space.hpp"

#include <cmath>
#include <limits>

#include <Eigen/SparseCholesky>

namespace twoscale {

Eigen::VectorXd GramOperator::apply(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out = S_ * v;
    if (U_.cols() > 0) out.noalias() += U_ * (U_.transpose() * v);
    return out;
}

double GramOperator::inner(const Eigen::VectorXd& v,
                           const Eigen::VectorXd& w) const {
    return v.dot(apply(w));
}

double GramOperator::norm(const Eigen::VectorXd& v) const {
    return std::sqrt(std::max(0.0, inner(v, v)));
}

Eigen::MatrixXd GramOperator::dense() const {
    Eigen::MatrixXd out = Eigen::MatrixXd(S_);
    if (U_.cols() > 0) out.noalias() += U_ * U_.transpose();
    return out;
}

GramOperator GramOperator::make(const StructuredMesh& mesh, GramKind kind) {
    GramOperator g;
    g.kind_ = kind;
    const int n = mesh.components();
    const int d = mesh.dim();
    const Eigen::MatrixXd ident = Eigen::MatrixXd::Identity(n * d, n * d);
    const SpMat grad = assemble_stiffness(mesh, [&](int) { return ident; });
    if (kind == GramKind::L2Gradient) {
        g.S_ = grad + assemble_mass(mesh, [](int) { return 1.0; });
    } else {
        g.S_ = grad;
        // Mean-value vectors: column c has entries int_Q phi_node for the
        // c-component dofs, so that (U^T v)_c = int_Q v_c.
        g.U_.resize(mesh.dof_count(), n);
        for (int c = 0; c < n; ++c) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
            e[c] = 1.0;
            g.U_.col(c) = assemble_load(
                mesh, [&](const Eigen::VectorXd&) { return e; });
        }
    }
    return g;
}

GramOperator h1_inner_product(const StructuredMesh& mesh, GramKind kind) {
    return GramOperator::make(mesh, kind);
}

Eigen::VectorXd KernelBasis::project_V(const Eigen::VectorXd& v) const {
    if (v.size() != vectors_.rows())
        throw DimensionError("field size does not match kernel basis");
    return vectors_ * (vectors_.transpose() * gram_.apply(v));
}

Eigen::VectorXd KernelBasis::project_Vperp(const Eigen::VectorXd& v) const {
    return v - project_V(v);
}

namespace detail {

namespace {

// Deterministic pseudo-random fill for subspace initialization.
void lcg_fill(Eigen::MatrixXd& X, std::uint64_t state) {
    for (int j = 0; j < X.cols(); ++j)
        for (int i = 0; i < X.rows(); ++i) {
            state = state * 6364136223846793005ull + 1442695040888963407ull;
            X(i, j) = static_cast<double>(state >> 11) /
                          static_cast<double>(1ull << 53) -
                      0.5;
        }
}

Eigen::MatrixXd gram_orthonormalize(const GramOperator& G, Eigen::MatrixXd Y) {
    for (int pass = 0; pass < 2; ++pass) {
        Eigen::MatrixXd GY(Y.rows(), Y.cols());
        for (int j = 0; j < Y.cols(); ++j) GY.col(j) = G.apply(Y.col(j));
        Eigen::MatrixXd W = Y.transpose() * GY;
        Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (W + W.transpose()));
        if (llt.info() != Eigen::Success)
            throw SolverError("subspace iteration lost rank");
        Y = llt.matrixL().solve(Y.transpose()).transpose();
    }
    return Y;
}

EigenPairs dense_eigenpairs(const SpMat& A, const GramOperator& G, int k) {
    const int ndof = static_cast<int>(A.rows());
    if (ndof > 8000)
        throw SolverError(
            "dense generalized eigensolve requested for " +
            std::to_string(ndof) +
            " dofs; use the sparse path (plain Gram) at this size");
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(
        Eigen::MatrixXd(A), G.dense());
    if (es.info() != Eigen::Success)
        throw SolverError("dense generalized eigensolve failed");
    EigenPairs out;
    out.values = es.eigenvalues().head(k);
    out.vectors = es.eigenvectors().leftCols(k);
    return out;
}

EigenPairs sparse_eigenpairs(const SpMat& A, const GramOperator& G, int k) {
    const int ndof = static_cast<int>(A.rows());
    const SpMat& S = G.sparse_part();
    const double tr_a = Eigen::VectorXd(A.diagonal()).sum();
    const double tr_s = Eigen::VectorXd(S.diagonal()).sum();
    const double sigma = std::max(1e-12, 1e-2 * tr_a / tr_s);
    const double anorm =
        std::max(Eigen::VectorXd(A.diagonal()).cwiseAbs().maxCoeff(), 1e-300);

    SpMat B = A + sigma * S;
    Eigen::SimplicialLDLT<SpMat> fact;
    fact.compute(B);
    if (fact.info() != Eigen::Success)
        throw SolverError("factorization of the shifted pencil failed");

    const int kb = std::min(ndof, k + 5);
    Eigen::MatrixXd X(ndof, kb);
    lcg_fill(X, 0x9e3779b97f4a7c15ull);
    Eigen::VectorXd vals = Eigen::VectorXd::Zero(kb);

    double worst_residual = std::numeric_limits<double>::infinity();
    // The pencil spectrum may cluster (relative gaps of a few percent), so
    // the per-iteration contraction can be slow; iterations are cheap once
    // the factorization is in place.
    for (int iter = 0; iter < 3000; ++iter) {
        Eigen::MatrixXd Y(ndof, kb);
        for (int j = 0; j < kb; ++j) Y.col(j) = fact.solve(G.apply(X.col(j)));
        Y = gram_orthonormalize(G, Y);
        Eigen::MatrixXd AY = A * Y;
        Eigen::MatrixXd Ar = Y.transpose() * AY;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small(
            0.5 * (Ar + Ar.transpose()));
        X = Y * small.eigenvectors();
        vals = small.eigenvalues();

        worst_residual = 0.0;
        bool done = true;
        for (int j = 0; j < k; ++j) {
            const Eigen::VectorXd x = X.col(j);
            const double res = (A * x - vals[j] * G.apply(x)).norm();
            const double rel = res / (anorm * x.norm());
            worst_residual = std::max(worst_residual, rel);
            // Kernel candidates get a tighter target so the returned basis
            // vectors are clean null vectors, not merely 1e-10-accurate ones.
            const double target = (vals[j] <= 1e-8) ? 1e-13 : 1e-10;
            if (rel > target) done = false;
        }
        if (done) {
            EigenPairs out;
            out.values = vals.head(k);
            out.vectors = X.leftCols(k);
            return out;
        }
    }
    throw SolverError("subspace iteration did not converge, worst relative "
                      "residual " +
                      std::to_string(worst_residual));
}

} // namespace

EigenPairs smallest_eigenpairs(const SpMat& A, const GramOperator& G, int k,
                               int dense_threshold) {
    const int ndof = static_cast<int>(A.rows());
    k = std::min(k, ndof);
    if (k < 1) throw SolverError("requested no eigenpairs");
    if (ndof <= dense_threshold || G.low_rank().cols() > 0)
        return dense_eigenpairs(A, G, k);
    return sparse_eigenpairs(A, G, k);
}

} // namespace detail

namespace {

// Strip the range(K1)-component of a kernel candidate by CG on
// K1 x = K1 b: started from zero the iterates stay in range(K1), so the
// limit is exactly the non-kernel part of b. This lifts dense-eigensolver
// kernel vectors from ~1e-7 flux residual to round-off purity.
void purify_kernel_vector(const SpMat& K1, Eigen::VectorXd& b) {
    const double anorm =
        std::max(Eigen::VectorXd(K1.diagonal()).cwiseAbs().maxCoeff(), 1e-300);
    const double target = 1e-13 * anorm * std::max(b.norm(), 1e-300);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
    Eigen::VectorXd r = K1 * b;
    if (r.norm() <= target) return;
    Eigen::VectorXd p = r;
    double rr = r.squaredNorm();
    for (int it = 0; it < 1000; ++it) {
        const Eigen::VectorXd Kp = K1 * p;
        const double pKp = p.dot(Kp);
        if (pKp <= 0.0) break;
        const double alpha = rr / pKp;
        x += alpha * p;
        r -= alpha * Kp;
        const double rr_new = r.squaredNorm();
        if (std::sqrt(rr_new) <= target) break;
        p = r + (rr_new / rr) * p;
        rr = rr_new;
    }
    b -= x;
}

void canonicalize_signs(Eigen::MatrixXd& V) {
    for (int j = 0; j < V.cols(); ++j) {
        int idx = 0;
        V.col(j).cwiseAbs().maxCoeff(&idx);
        if (V(idx, j) < 0) V.col(j) = -V.col(j);
    }
}

} // namespace

KernelBasis compute_kernel_basis(const StructuredMesh& mesh,
                                 const CoefficientTensor& a,
                                 const KernelOptions& opts) {
    const SpMat K1 = assemble_stiffness(mesh, a, TensorPart::A1);
    const GramOperator plain = GramOperator::make(mesh, GramKind::L2Gradient);
    const int ndof = mesh.dof_count();

    detail::EigenPairs pairs;
    if (ndof <= opts.dense_threshold) {
        pairs = detail::smallest_eigenpairs(K1, plain, ndof,
                                            opts.dense_threshold);
    } else {
        int k = std::min(ndof, mesh.components() + 2);
        for (;;) {
            pairs = detail::smallest_eigenpairs(K1, plain, k,
                                                opts.dense_threshold);
            const bool all_kernel =
                pairs.values[pairs.values.size() - 1] <= opts.tol_kernel;
            if (!all_kernel || k == ndof) break;
            k = std::min(ndof, 2 * k);
        }
    }

    int m = 0;
    while (m < pairs.values.size() && pairs.values[m] <= opts.tol_kernel) ++m;
    if (m < mesh.components())
        throw SolverError("kernel smaller than the constants block; "
                          "eigensolve is suspect");

    double first_nonkernel = std::numeric_limits<double>::infinity();
    double gap_ratio = std::numeric_limits<double>::infinity();
    if (m < pairs.values.size()) {
        first_nonkernel = pairs.values[m];
        const double last_kernel = std::max(pairs.values[m - 1], 1e-300);
        gap_ratio = first_nonkernel / last_kernel;
        if (gap_ratio < opts.gap_requirement)
            throw SolverError(
                "gap not resolved: mu_m=" + std::to_string(pairs.values[m - 1]) +
                ", mu_{m+1}=" + std::to_string(first_nonkernel) +
                " at this resolution");
    }

    GramOperator gram = (opts.gram == GramKind::L2Gradient)
                            ? plain
                            : GramOperator::make(mesh, GramKind::MeanGradient);
    Eigen::MatrixXd V = pairs.vectors.leftCols(m);
    for (int j = 0; j < m; ++j) {
        Eigen::VectorXd col = V.col(j);
        purify_kernel_vector(K1, col);
        V.col(j) = col;
    }
    // Re-orthonormalize in the requested product (detection ran in the plain
    // one; the kernel subspace itself is product-independent).
    for (int pass = 0; pass < 2; ++pass) {
        Eigen::MatrixXd GV(V.rows(), V.cols());
        for (int j = 0; j < V.cols(); ++j) GV.col(j) = gram.apply(V.col(j));
        Eigen::MatrixXd W = V.transpose() * GV;
        Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (W + W.transpose()));
        if (llt.info() != Eigen::Success)
            throw SolverError("kernel basis re-orthonormalization failed");
        V = llt.matrixL().solve(V.transpose()).transpose();
    }
    canonicalize_signs(V);

    return KernelBasis(std::move(V), std::move(gram),
                       pairs.values.head(m), first_nonkernel, gap_ratio);
}

KeyConstantEstimate estimate_key_constant(const StructuredMesh& mesh,
                                          const CoefficientTensor& a,
                                          const KernelBasis& basis,
                                          GramKind gram, double tol_kernel,
                                          int dense_threshold) {
    const int m = basis.dimension();
    const int ndof = mesh.dof_count();
    if (m >= ndof)
        throw SolverError("kernel exhausts the discrete space; no complement");
    const SpMat K2 = assemble_flux_square(mesh, a);
    const GramOperator G = GramOperator::make(mesh, gram);
    const int k = std::min(ndof, m + 2);
    const detail::EigenPairs pairs =
        detail::smallest_eigenpairs(K2, G, k, dense_threshold);
    if (pairs.values[m - 1] > tol_kernel)
        throw SolverError("squared-flux operator kernel disagrees with the "
                          "kernel basis dimension");
    const double mu1 = pairs.values[m];
    if (mu1 <= 10.0 * tol_kernel)
        throw SolverError("gap not resolved: mu1=" + std::to_string(mu1) +
                          " is indistinguishable from the kernel at this "
                          "resolution");
    KeyConstantEstimate est;
    est.mu1 = mu1;
    est.C = 1.0 / std::sqrt(mu1);
    return est;
}

} // namespace twoscale
