#include "twoscale/mesh.hpp"

#include <cmath>

namespace twoscale {

namespace {
constexpr double kGaussOffset = 0.28867513459481287; // 1/(2 sqrt(3))
} // namespace

StructuredMesh::StructuredMesh(int d, std::array<int, 2> cells, int n_comp,
                               Topology topo, Box box)
    : d_(d), cells_(cells), n_(n_comp), topo_(topo), box_(box) {
    if (d != 1 && d != 2)
        throw ConfigError("mesh dimension must be 1 or 2, got " +
                          std::to_string(d));
    if (n_comp < 1) throw ConfigError("system size n must be >= 1");
    for (int k = 0; k < d; ++k)
        if (cells_[k] < 2)
            throw ConfigError("mesh needs at least 2 cells per axis, got " +
                              std::to_string(cells_[k]));
    if (box.d != d || !box.nondegenerate())
        throw ConfigError("degenerate or mismatched mesh box");
    if (d == 1) cells_[1] = 1;

    corners_ = 1 << d;
    elem_count_ = cells_[0] * (d == 2 ? cells_[1] : 1);
    for (int k = 0; k < d; ++k) {
        nodes_[k] = (topo == Topology::Periodic) ? cells_[k] : cells_[k] + 1;
        h_[k] = box_.length(k) / cells_[k];
    }
    if (d == 1) {
        nodes_[1] = 1;
        h_[1] = 1.0;
    }
    node_count_ = nodes_[0] * nodes_[1];
    cell_volume_ = h_[0] * (d == 2 ? h_[1] : 1.0);

    // Connectivity, lexicographic elements, corner a = (a&1, a>>1).
    conn_.resize(static_cast<size_t>(elem_count_) * corners_);
    const int jmax = (d == 2) ? cells_[1] : 1;
    for (int j = 0; j < jmax; ++j) {
        for (int i = 0; i < cells_[0]; ++i) {
            const int e = cell_index(i, j);
            for (int a = 0; a < corners_; ++a) {
                int ni = i + (a & 1);
                int nj = j + (a >> 1);
                if (topo == Topology::Periodic) {
                    ni %= nodes_[0];
                    if (d == 2) nj %= nodes_[1];
                }
                conn_[e * corners_ + a] = ni + nodes_[0] * nj;
            }
        }
    }

    // Tensor-product 2-point Gauss rule on the reference cell [0,1]^d.
    const double g[2] = {0.5 - kGaussOffset, 0.5 + kGaussOffset};
    const int nq = corners_;
    shape_.resize(static_cast<size_t>(nq) * corners_);
    dshape_.resize(static_cast<size_t>(nq) * corners_ * 2, 0.0);
    qweight_.resize(nq);
    qref_.resize(static_cast<size_t>(nq) * 2, 0.0);
    for (int q = 0; q < nq; ++q) {
        double ref[2] = {g[q & 1], d == 2 ? g[q >> 1] : 0.0};
        qref_[q * 2 + 0] = ref[0];
        qref_[q * 2 + 1] = ref[1];
        qweight_[q] = cell_volume_ / nq;
        shape_at(ref, &shape_[q * corners_]);
        dshape_at(ref, &dshape_[static_cast<size_t>(q) * corners_ * 2]);
    }
}

StructuredMesh StructuredMesh::periodic_cell(int d, int N, int n_comp) {
    return StructuredMesh(d, {N, N}, n_comp, Topology::Periodic, Box::unit(d));
}

StructuredMesh StructuredMesh::dirichlet_box(int d, std::array<int, 2> cells,
                                             int n_comp, Box box) {
    return StructuredMesh(d, cells, n_comp, Topology::Dirichlet, box);
}

bool StructuredMesh::node_on_boundary(int node) const {
    if (topo_ == Topology::Periodic) return false;
    const int i = node % nodes_[0];
    if (i == 0 || i == nodes_[0] - 1) return true;
    if (d_ == 2) {
        const int j = node / nodes_[0];
        if (j == 0 || j == nodes_[1] - 1) return true;
    }
    return false;
}

Eigen::VectorXd StructuredMesh::quad_point(int e, int q) const {
    int i, j;
    cell_coords(e, i, j);
    Eigen::VectorXd x(d_);
    x[0] = box_.lo[0] + (i + qref_[q * 2 + 0]) * h_[0];
    if (d_ == 2) x[1] = box_.lo[1] + (j + qref_[q * 2 + 1]) * h_[1];
    return x;
}

Eigen::VectorXd StructuredMesh::node_coord(int node) const {
    Eigen::VectorXd x(d_);
    x[0] = box_.lo[0] + (node % nodes_[0]) * h_[0];
    if (d_ == 2) x[1] = box_.lo[1] + (node / nodes_[0]) * h_[1];
    return x;
}

void StructuredMesh::shape_at(const double* ref, double* values) const {
    for (int a = 0; a < corners_; ++a) {
        double v = (a & 1) ? ref[0] : 1.0 - ref[0];
        if (d_ == 2) v *= (a >> 1) ? ref[1] : 1.0 - ref[1];
        values[a] = v;
    }
}

void StructuredMesh::dshape_at(const double* ref, double* grads) const {
    for (int a = 0; a < corners_; ++a) {
        const double sx = (a & 1) ? 1.0 : -1.0;
        if (d_ == 1) {
            grads[a * 2 + 0] = sx / h_[0];
            grads[a * 2 + 1] = 0.0;
        } else {
            const double sy = (a >> 1) ? 1.0 : -1.0;
            const double vy = (a >> 1) ? ref[1] : 1.0 - ref[1];
            const double vx = (a & 1) ? ref[0] : 1.0 - ref[0];
            grads[a * 2 + 0] = sx * vy / h_[0];
            grads[a * 2 + 1] = sy * vx / h_[1];
        }
    }
}

int StructuredMesh::locate(const Eigen::VectorXd& x, double* ref) const {
    int idx[2] = {0, 0};
    for (int k = 0; k < d_; ++k) {
        double t = (x[k] - box_.lo[k]) / h_[k];
        if (topo_ == Topology::Periodic) {
            t -= std::floor(t / cells_[k]) * cells_[k];
            if (t >= cells_[k]) t = 0.0;
        }
        int c = static_cast<int>(std::floor(t));
        c = std::min(std::max(c, 0), cells_[k] - 1);
        idx[k] = c;
        ref[k] = t - c;
    }
    return cell_index(idx[0], d_ == 2 ? idx[1] : 0);
}

Eigen::VectorXd interpolate(const StructuredMesh& mesh,
                            const Eigen::VectorXd& nodal,
                            const Eigen::VectorXd& x) {
    if (nodal.size() != mesh.dof_count())
        throw DimensionError("nodal field size does not match mesh");
    double ref[2];
    const int e = mesh.locate(x, ref);
    std::vector<double> sh(mesh.corners());
    mesh.shape_at(ref, sh.data());
    const int n = mesh.components();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (int a = 0; a < mesh.corners(); ++a) {
        const int node = mesh.element_node(e, a);
        for (int c = 0; c < n; ++c) out[c] += sh[a] * nodal[mesh.dof(node, c)];
    }
    return out;
}

Eigen::MatrixXd interpolate_gradient(const StructuredMesh& mesh,
                                     const Eigen::VectorXd& nodal,
                                     const Eigen::VectorXd& x) {
    if (nodal.size() != mesh.dof_count())
        throw DimensionError("nodal field size does not match mesh");
    double ref[2];
    const int e = mesh.locate(x, ref);
    std::vector<double> dg(static_cast<size_t>(mesh.corners()) * 2);
    mesh.dshape_at(ref, dg.data());
    const int n = mesh.components();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, mesh.dim());
    for (int a = 0; a < mesh.corners(); ++a) {
        const int node = mesh.element_node(e, a);
        for (int c = 0; c < n; ++c)
            for (int k = 0; k < mesh.dim(); ++k)
                out(c, k) += dg[a * 2 + k] * nodal[mesh.dof(node, c)];
    }
    return out;
}

} // namespace twoscale
