#include "twoscale/assembly.hpp"

#include <cmath>

namespace twoscale {

namespace {

void check_cell_tensor(const StructuredMesh& mesh, const CoefficientTensor& a) {
    if (a.n != mesh.components() || a.d != mesh.dim())
        throw DimensionError("coefficient tensor n/d do not match mesh");
    if (a.cells[0] != mesh.cells_axis(0) ||
        (mesh.dim() == 2 && a.cells[1] != mesh.cells_axis(1)))
        throw DimensionError("coefficient tensor cell grid does not match mesh");
    a.check_sized();
}

} // namespace

SpMat assemble_mass(const StructuredMesh& mesh, const ScalarByElement& weight) {
    const int n = mesh.components();
    const int nc = mesh.corners();
    const int nq = mesh.quad_count();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(mesh.element_count()) * nc * nc * n);
    for (int e = 0; e < mesh.element_count(); ++e) {
        const double w = weight(e);
        if (!(w > 0.0))
            throw CoefficientError("mass weight must be positive, got " +
                                   std::to_string(w) + " on element " +
                                   std::to_string(e));
        for (int a = 0; a < nc; ++a) {
            for (int b = 0; b < nc; ++b) {
                double m = 0.0;
                for (int q = 0; q < nq; ++q)
                    m += mesh.qweight(q) * mesh.shape(a, q) * mesh.shape(b, q);
                m *= w;
                const int na = mesh.element_node(e, a);
                const int nb = mesh.element_node(e, b);
                for (int c = 0; c < n; ++c)
                    trips.emplace_back(mesh.dof(na, c), mesh.dof(nb, c), m);
            }
        }
    }
    SpMat M(mesh.dof_count(), mesh.dof_count());
    M.setFromTriplets(trips.begin(), trips.end());
    M.makeCompressed();
    return M;
}

SpMat assemble_stiffness(const StructuredMesh& mesh,
                         const TensorByElement& tensor) {
    const int n = mesh.components();
    const int d = mesh.dim();
    const int nc = mesh.corners();
    const int nq = mesh.quad_count();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<size_t>(mesh.element_count()) * nc * nc * n * n);
    for (int e = 0; e < mesh.element_count(); ++e) {
        const Eigen::MatrixXd A = tensor(e);
        if (A.rows() != n * d || A.cols() != n * d)
            throw DimensionError("element tensor block has wrong size");
        for (int a = 0; a < nc; ++a) {
            for (int b = 0; b < nc; ++b) {
                const int na = mesh.element_node(e, a);
                const int nb = mesh.element_node(e, b);
                for (int i = 0; i < n; ++i) {
                    for (int p = 0; p < n; ++p) {
                        double k = 0.0;
                        for (int q = 0; q < nq; ++q) {
                            double s = 0.0;
                            for (int j = 0; j < d; ++j)
                                for (int r = 0; r < d; ++r)
                                    s += A(i * d + j, p * d + r) *
                                         mesh.dshape(a, q, j) *
                                         mesh.dshape(b, q, r);
                            k += mesh.qweight(q) * s;
                        }
                        trips.emplace_back(mesh.dof(na, i), mesh.dof(nb, p), k);
                    }
                }
            }
        }
    }
    SpMat K(mesh.dof_count(), mesh.dof_count());
    K.setFromTriplets(trips.begin(), trips.end());
    K.makeCompressed();
    return K;
}

SpMat assemble_mass(const StructuredMesh& mesh, const DensityField& rho) {
    if (static_cast<int>(rho.rho.size()) != mesh.element_count())
        throw DimensionError("density field does not match mesh");
    for (double r : rho.rho)
        if (!(r >= rho.nu) || !(rho.nu > 0))
            throw CoefficientError("density below its certified lower bound");
    return assemble_mass(mesh, [&rho](int e) { return rho.rho[e]; });
}

SpMat assemble_stiffness(const StructuredMesh& mesh,
                         const CoefficientTensor& a, TensorPart part) {
    check_cell_tensor(mesh, a);
    return assemble_stiffness(mesh, [&a, part](int e) -> Eigen::MatrixXd {
        switch (part) {
        case TensorPart::A1: return a.a1[e];
        case TensorPart::A0: return a.a0[e];
        default: return a.a1[e] + a.a0[e];
        }
    });
}

SpMat assemble_flux_square(const StructuredMesh& mesh,
                           const CoefficientTensor& a) {
    check_cell_tensor(mesh, a);
    return assemble_stiffness(mesh, [&a](int e) -> Eigen::MatrixXd {
        return a.a1[e].transpose() * a.a1[e];
    });
}

SpMat gradient_matrix(const StructuredMesh& mesh) {
    const int n = mesh.components();
    const int d = mesh.dim();
    const int nc = mesh.corners();
    const int nq = mesh.quad_count();
    std::vector<Eigen::Triplet<double>> trips;
    for (int e = 0; e < mesh.element_count(); ++e) {
        for (int q = 0; q < nq; ++q) {
            for (int a = 0; a < nc; ++a) {
                const int node = mesh.element_node(e, a);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j)
                        trips.emplace_back(
                            ((e * nq + q) * n + i) * d + j, mesh.dof(node, i),
                            mesh.dshape(a, q, j));
            }
        }
    }
    SpMat G(mesh.element_count() * nq * n * d, mesh.dof_count());
    G.setFromTriplets(trips.begin(), trips.end());
    G.makeCompressed();
    return G;
}

Eigen::VectorXd assemble_load(
    const StructuredMesh& mesh,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f) {
    const int n = mesh.components();
    Eigen::VectorXd load = Eigen::VectorXd::Zero(mesh.dof_count());
    for (int e = 0; e < mesh.element_count(); ++e) {
        for (int q = 0; q < mesh.quad_count(); ++q) {
            const Eigen::VectorXd fx = f(mesh.quad_point(e, q));
            for (int a = 0; a < mesh.corners(); ++a) {
                const int node = mesh.element_node(e, a);
                const double s = mesh.qweight(q) * mesh.shape(a, q);
                for (int c = 0; c < n; ++c)
                    load[mesh.dof(node, c)] += s * fx[c];
            }
        }
    }
    return load;
}

std::vector<int> interior_dof_map(const StructuredMesh& mesh) {
    std::vector<int> map(mesh.dof_count(), -1);
    int next = 0;
    for (int node = 0; node < mesh.node_count(); ++node) {
        if (mesh.node_on_boundary(node)) continue;
        for (int c = 0; c < mesh.components(); ++c)
            map[mesh.dof(node, c)] = next++;
    }
    return map;
}

SpMat restrict_to_interior(const SpMat& full, const std::vector<int>& map,
                           int interior_count) {
    std::vector<Eigen::Triplet<double>> trips;
    for (int k = 0; k < full.outerSize(); ++k) {
        for (SpMat::InnerIterator it(full, k); it; ++it) {
            const int r = map[it.row()];
            const int c = map[it.col()];
            if (r >= 0 && c >= 0) trips.emplace_back(r, c, it.value());
        }
    }
    SpMat out(interior_count, interior_count);
    out.setFromTriplets(trips.begin(), trips.end());
    out.makeCompressed();
    return out;
}

Eigen::VectorXd restrict_vector(const Eigen::VectorXd& full,
                                const std::vector<int>& map,
                                int interior_count) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(interior_count);
    for (size_t i = 0; i < map.size(); ++i)
        if (map[i] >= 0) out[map[i]] = full[static_cast<int>(i)];
    return out;
}

Eigen::VectorXd prolong_vector(const Eigen::VectorXd& interior,
                               const std::vector<int>& map) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<int>(map.size()));
    for (size_t i = 0; i < map.size(); ++i)
        if (map[i] >= 0) out[static_cast<int>(i)] = interior[map[i]];
    return out;
}

} // namespace twoscale
