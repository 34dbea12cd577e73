#include "twoscale/two_scale_limit.hpp"

#include <cmath>
#include <vector>

#include <Eigen/SparseCholesky>

#include "twoscale/assembly.hpp"
#include "twoscale/errors.hpp"

namespace twoscale {

TwoScaleSpace::TwoScaleSpace(std::shared_ptr<const StructuredMesh> macro,
                             int m)
    : macro_(std::move(macro)), m_(m) {
    if (!macro_) throw ConfigError("two-scale space needs a macro mesh");
    if (macro_->topology() != StructuredMesh::Topology::Dirichlet)
        throw ConfigError("macro mesh must carry a Dirichlet boundary");
    if (macro_->components() != 1)
        throw ConfigError("macro mesh of the two-scale space is scalar");
    if (m_ < 1) throw ConfigError("kernel dimension must be positive");
    node_map_.assign(macro_->node_count(), -1);
    interior_count_ = 0;
    for (int node = 0; node < macro_->node_count(); ++node)
        if (!macro_->node_on_boundary(node)) node_map_[node] = interior_count_++;
    if (interior_count_ == 0)
        throw ConfigError("macro mesh has no interior nodes");
}

TwoScaleSpace build_two_scale_space(std::shared_ptr<const StructuredMesh> macro,
                                    const KernelBasis& basis) {
    return TwoScaleSpace(std::move(macro), basis.dimension());
}

namespace {

// Kernel basis vectors sampled at the cell quadrature points:
// values[(e*nq + q)*m + k] = b_k(y_{e,q}).
std::vector<double> kernel_at_quadrature(const StructuredMesh& cell,
                                         const Eigen::MatrixXd& B) {
    const int m = static_cast<int>(B.cols());
    const int n = cell.components();
    const int nq = cell.quad_count();
    const int nc = cell.corners();
    std::vector<double> out(
        static_cast<std::size_t>(cell.element_count()) * nq * m * n, 0.0);
    for (int e = 0; e < cell.element_count(); ++e)
        for (int q = 0; q < nq; ++q) {
            double* slot = out.data() +
                           (static_cast<std::size_t>(e) * nq + q) * m * n;
            for (int a = 0; a < nc; ++a) {
                const int node = cell.element_node(e, a);
                const double s = cell.shape(a, q);
                for (int k = 0; k < m; ++k)
                    for (int i = 0; i < n; ++i)
                        slot[k * n + i] += s * B(cell.dof(node, i), k);
            }
        }
    return out;
}

} // namespace

LimitSystem assemble_limit_system(const TwoScaleSpace& space,
                                  const CellProblem& cell, double lambda,
                                  const ForcingSpec& forcing) {
    const StructuredMesh& macro = space.macro();
    const StructuredMesh& cmesh = cell.mesh();
    const KernelBasis& basis = cell.basis();
    const int m = basis.dimension();
    const int d = macro.dim();
    const int n = cmesh.components();
    if (space.kernel_dim() != m)
        throw DimensionError("space and cell problem disagree on the kernel "
                             "dimension");

    // Cell-side reductions: projected-flux Gram matrix D, the a^(0) energy
    // E_{kk'} = (a0 grad b_k, grad b_k'), the weighted mass R_{kk'} =
    // (rho b_k, b_k'), and the load weights F_k = (f_y, b_k).
    const Eigen::MatrixXd& D = cell.correctors().flux_gram;
    const SpMat K0 = assemble_stiffness(cmesh, cell.tensor(), TensorPart::A0);
    const SpMat Mrho = assemble_mass(cmesh, cell.density());
    const Eigen::MatrixXd& B = basis.vectors();
    const Eigen::MatrixXd E = B.transpose() * (K0 * B).eval();
    const Eigen::MatrixXd R = B.transpose() * (Mrho * B).eval();
    const Eigen::MatrixXd Z = E + lambda * R;

    Eigen::VectorXd F = Eigen::VectorXd::Zero(m);
    {
        const std::vector<double> bq = kernel_at_quadrature(cmesh, B);
        const int nq = cmesh.quad_count();
        for (int e = 0; e < cmesh.element_count(); ++e)
            for (int q = 0; q < nq; ++q) {
                const double fy =
                    forcing.cell_value(cmesh.quad_point(e, q));
                const double* slot =
                    bq.data() + (static_cast<std::size_t>(e) * nq + q) * m * n;
                const double w = cmesh.qweight(q) * fy;
                for (int k = 0; k < m; ++k) {
                    double sum = 0.0;
                    for (int i = 0; i < n; ++i) sum += slot[k * n + i];
                    F[k] += w * sum;
                }
            }
    }

    // Macro loop: the bilinear form is grad_x' D grad_x + Phi Phi' (E + l R).
    const int nc = macro.corners();
    const int nq = macro.quad_count();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(macro.element_count()) * nc * nc *
                  m * m);
    Eigen::VectorXd load = Eigen::VectorXd::Zero(space.size());

    for (int e = 0; e < macro.element_count(); ++e) {
        for (int q = 0; q < nq; ++q) {
            const double w = macro.qweight(q);
            const double fx =
                forcing.macro_value(macro.quad_point(e, q), macro.box());
            for (int a = 0; a < nc; ++a) {
                const int Ia = space.interior_index(macro.element_node(e, a));
                if (Ia < 0) continue;
                const double sa = macro.shape(a, q);
                for (int k = 0; k < m; ++k)
                    load[space.index(Ia, k)] += w * fx * sa * F[k];
                for (int b = 0; b < nc; ++b) {
                    const int Ib =
                        space.interior_index(macro.element_node(e, b));
                    if (Ib < 0) continue;
                    const double sb = macro.shape(b, q);
                    for (int k = 0; k < m; ++k)
                        for (int kp = 0; kp < m; ++kp) {
                            double val = w * sa * sb * Z(k, kp);
                            for (int j = 0; j < d; ++j)
                                for (int jp = 0; jp < d; ++jp)
                                    val += w * macro.dshape(a, q, j) *
                                           macro.dshape(b, q, jp) *
                                           D(k * d + j, kp * d + jp);
                            trips.emplace_back(space.index(Ia, k),
                                               space.index(Ib, kp), val);
                        }
                }
            }
        }
    }

    LimitSystem sys;
    sys.matrix.resize(space.size(), space.size());
    sys.matrix.setFromTriplets(trips.begin(), trips.end());
    sys.matrix.makeCompressed();
    sys.load = std::move(load);
    return sys;
}

TwoScaleField solve_limit(const TwoScaleSpace& space, const LimitSystem& sys) {
    Eigen::SimplicialLLT<SpMat> llt;
    llt.compute(sys.matrix);
    if (llt.info() != Eigen::Success)
        throw InvariantError("limit system is not symmetric positive "
                             "definite; assembly invariant violated");
    Eigen::VectorXd c = llt.solve(sys.load);
    const double rel = (sys.matrix * c - sys.load).norm() /
                       std::max(sys.load.norm(), 1e-300);
    if (rel > 1e-10)
        throw SolverError("limit solve residual " + std::to_string(rel) +
                          " exceeds tolerance");
    return TwoScaleField(space, std::move(c));
}

Eigen::VectorXd TwoScaleField::macro_coeff_at(const Eigen::VectorXd& x) const {
    const StructuredMesh& macro = space_->macro();
    const int m = space_->kernel_dim();
    double ref[2];
    const int e = macro.locate(x, ref);
    double values[4];
    macro.shape_at(ref, values);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(m);
    for (int a = 0; a < macro.corners(); ++a) {
        const int I = space_->interior_index(macro.element_node(e, a));
        if (I < 0) continue;
        for (int k = 0; k < m; ++k)
            out[k] += values[a] * coeff_[space_->index(I, k)];
    }
    return out;
}

Eigen::MatrixXd
TwoScaleField::macro_gradcoef_at(const Eigen::VectorXd& x) const {
    const StructuredMesh& macro = space_->macro();
    const int m = space_->kernel_dim();
    const int d = macro.dim();
    double ref[2];
    const int e = macro.locate(x, ref);
    double grads[8];
    macro.dshape_at(ref, grads);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m, d);
    for (int a = 0; a < macro.corners(); ++a) {
        const int I = space_->interior_index(macro.element_node(e, a));
        if (I < 0) continue;
        for (int k = 0; k < m; ++k)
            for (int j = 0; j < d; ++j)
                out(k, j) += grads[a * d + j] * coeff_[space_->index(I, k)];
    }
    return out;
}

Eigen::VectorXd TwoScaleField::at(const CellProblem& cell,
                                  const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& y) const {
    const Eigen::VectorXd c = macro_coeff_at(x);
    Eigen::VectorXd out =
        Eigen::VectorXd::Zero(cell.mesh().components());
    for (int k = 0; k < c.size(); ++k)
        out += c[k] * cell.kernel_value_at(k, y);
    return out;
}

Eigen::MatrixXd homogenized_tensor(const CellProblem& cell) {
    const int n = cell.mesh().components();
    const int d = cell.mesh().dim();
    const int m = cell.basis().dimension();
    if (m != n)
        throw InvariantError(
            "classical reduction needs kernel = constants (m = n); got m = " +
            std::to_string(m));
    const int nd = n * d;
    std::vector<FluxField> corrected(nd);
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < d; ++q) {
            const FluxField Y = cell.constant_direction(p, q);
            const CorrectorField chi = cell.solve_corrector_for_direction(Y);
            FluxField g = cell.gradient(chi.field);
            g.values += Y.values;
            corrected[p * d + q] = std::move(g);
        }
    Eigen::MatrixXd ahom(nd, nd);
    for (int r = 0; r < nd; ++r) {
        const FluxField ag = cell.apply_a1(corrected[r]);
        for (int s = 0; s < nd; ++s)
            ahom(r, s) = cell.flux_inner(ag, corrected[s]);
    }
    return 0.5 * (ahom + ahom.transpose());
}

} // namespace twoscale
