#ifndef TWOSCALE_MESH_HPP
#define TWOSCALE_MESH_HPP

#include <array>
#include <vector>

#include <Eigen/Dense>

#include "twoscale/errors.hpp"

namespace twoscale {

/// Axis-aligned box in 1 or 2 dimensions.
struct Box {
    int d = 1;
    std::array<double, 2> lo{0.0, 0.0};
    std::array<double, 2> hi{1.0, 1.0};

    static Box unit(int d) {
        Box b;
        b.d = d;
        return b;
    }
    double length(int axis) const { return hi[axis] - lo[axis]; }
    bool nondegenerate() const {
        for (int k = 0; k < d; ++k)
            if (!(length(k) > 0.0)) return false;
        return true;
    }
};

/// Structured multilinear (Q1) grid on an axis-aligned box, either periodic
/// (the unit cell Q, opposite faces identified) or with homogeneous Dirichlet
/// boundary. Node and element ordering is lexicographic; quadrature is the
/// 2-point tensor-product Gauss rule, exact for cellwise-constant
/// coefficients against Q1 gradients.
class StructuredMesh {
public:
    enum class Topology { Periodic, Dirichlet };

    StructuredMesh(int d, std::array<int, 2> cells, int n_comp, Topology topo,
                   Box box);

    /// Periodic unit-cell mesh with N cells per axis and n components.
    static StructuredMesh periodic_cell(int d, int N, int n_comp);
    /// Dirichlet mesh on a box with the given cells per axis.
    static StructuredMesh dirichlet_box(int d, std::array<int, 2> cells,
                                        int n_comp, Box box);

    int dim() const { return d_; }
    int components() const { return n_; }
    Topology topology() const { return topo_; }
    const Box& box() const { return box_; }

    int cells_axis(int axis) const { return cells_[axis]; }
    int nodes_axis(int axis) const { return nodes_[axis]; }
    int element_count() const { return elem_count_; }
    int node_count() const { return node_count_; }
    int dof_count() const { return node_count_ * n_; }
    int corners() const { return corners_; } // 2^d nodes per element
    int quad_count() const { return corners_; } // 2^d points per element

    int dof(int node, int comp) const { return node * n_ + comp; }

    double h(int axis) const { return h_[axis]; }
    double cell_volume() const { return cell_volume_; }

    /// Global node index of element corner a (a in [0, 2^d)).
    int element_node(int e, int a) const { return conn_[e * corners_ + a]; }

    bool node_on_boundary(int node) const;

    /// Shape value of corner a at quadrature point q (reference data, shared
    /// by all elements).
    double shape(int a, int q) const { return shape_[q * corners_ + a]; }
    /// Physical gradient of the shape function of corner a at point q.
    double dshape(int a, int q, int axis) const {
        return dshape_[(q * corners_ + a) * 2 + axis];
    }
    /// Physical quadrature weight; per element the weights sum to the cell
    /// volume.
    double qweight(int q) const { return qweight_[q]; }

    Eigen::VectorXd quad_point(int e, int q) const;
    Eigen::VectorXd node_coord(int node) const;

    int cell_index(int i, int j) const { return i + cells_[0] * j; }
    void cell_coords(int e, int& i, int& j) const {
        i = e % cells_[0];
        j = e / cells_[0];
    }

    /// Shape values / reference-cell local coordinates at an arbitrary point
    /// of the reference cell (coordinates in [0,1]^d).
    void shape_at(const double* ref, double* values) const;
    void dshape_at(const double* ref, double* grads) const; // physical, 2^d x d

    /// Locate the element containing a physical point (clamped to the grid)
    /// and its reference-cell coordinates. Periodic meshes wrap the point
    /// into the box first.
    int locate(const Eigen::VectorXd& x, double* ref) const;

private:
    int d_;
    std::array<int, 2> cells_;
    int n_;
    Topology topo_;
    Box box_;
    std::array<int, 2> nodes_;
    int elem_count_;
    int node_count_;
    int corners_;
    std::array<double, 2> h_;
    double cell_volume_;
    std::vector<int> conn_;
    std::vector<double> shape_;   // nq x corners
    std::vector<double> dshape_;  // nq x corners x 2
    std::vector<double> qweight_; // nq
    std::vector<double> qref_;    // nq x 2, reference coordinates
};

/// Evaluate a nodal vector field at a physical point (multilinear
/// interpolation; periodic meshes wrap).
Eigen::VectorXd interpolate(const StructuredMesh& mesh,
                            const Eigen::VectorXd& nodal,
                            const Eigen::VectorXd& x);

/// Evaluate the gradient of a nodal vector field at a physical point.
/// Returns an n x d matrix.
Eigen::MatrixXd interpolate_gradient(const StructuredMesh& mesh,
                                     const Eigen::VectorXd& nodal,
                                     const Eigen::VectorXd& x);

} // namespace twoscale

#endif
