#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <functional>
#include <stdexcept>
#include <vector>

#include "oldroyd/mesh.hpp"
#include "oldroyd/quadrature.hpp"

namespace oldroyd {

using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using VectorField = std::function<std::array<double, 2>(double, double, double)>;

/// Mini-element mixed space: per velocity component P1 vertex DOFs followed
/// by one cubic bubble DOF per triangle; P1 pressure on vertices.
/// Velocity DOF layout is component-major:
///   [u1 vertices | u1 bubbles | u2 vertices | u2 bubbles].
struct MixedSpace {
  const TriMesh* mesh = nullptr;
  int n_vertices = 0;
  int n_triangles = 0;
  int n_vel_scalar = 0;
  int n_vel = 0;
  int n_pressure = 0;

  int vertex_dof(int comp, int v) const { return comp * n_vel_scalar + v; }
  int bubble_dof(int comp, int t) const { return comp * n_vel_scalar + n_vertices + t; }
};

inline MixedSpace build_mini_space(const TriMesh& mesh) {
  MixedSpace sp;
  sp.mesh = &mesh;
  sp.n_vertices = mesh.n_vertices();
  sp.n_triangles = mesh.n_triangles();
  sp.n_vel_scalar = sp.n_vertices + sp.n_triangles;
  sp.n_vel = 2 * sp.n_vel_scalar;
  sp.n_pressure = sp.n_vertices;
  return sp;
}

/// Scalar Mini basis on one triangle: 3 P1 hats plus the bubble 27*l1*l2*l3
/// (value 1 at the barycenter, 0 on all edges).
struct ElementBasis {
  std::array<std::array<double, 2>, 3> grad_l;  // constant P1 gradients
  double area = 0;

  explicit ElementBasis(const TriMesh& mesh, int t) {
    const auto& tr = mesh.triangles[t];
    const auto& p0 = mesh.vertices[tr[0]];
    const auto& p1 = mesh.vertices[tr[1]];
    const auto& p2 = mesh.vertices[tr[2]];
    const double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    area = 0.5 * det;
    grad_l[0] = {(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det};
    grad_l[1] = {(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det};
    grad_l[2] = {(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det};
  }

  // values[0..2] = barycentric hats, values[3] = bubble
  static std::array<double, 4> values(const std::array<double, 3>& l) {
    return {l[0], l[1], l[2], 27.0 * l[0] * l[1] * l[2]};
  }

  std::array<std::array<double, 2>, 4> gradients(const std::array<double, 3>& l) const {
    std::array<std::array<double, 2>, 4> g;
    for (int i = 0; i < 3; ++i) g[i] = grad_l[i];
    for (int d = 0; d < 2; ++d) {
      g[3][d] = 27.0 * (l[1] * l[2] * grad_l[0][d] + l[0] * l[2] * grad_l[1][d] +
                        l[0] * l[1] * grad_l[2][d]);
    }
    return g;
  }
};

/// Vertex DOFs take pointwise values of f; bubble DOFs are zero.
inline Vec interpolate_velocity(const MixedSpace& sp, const VectorField& f, double t) {
  Vec u = Vec::Zero(sp.n_vel);
  for (int v = 0; v < sp.n_vertices; ++v) {
    const auto& p = sp.mesh->vertices[v];
    const auto val = f(p[0], p[1], t);
    u[sp.vertex_dof(0, v)] = val[0];
    u[sp.vertex_dof(1, v)] = val[1];
  }
  return u;
}

/// Evaluate a velocity coefficient vector at barycentric point l of triangle t.
inline std::array<double, 2> eval_velocity(const MixedSpace& sp, const Vec& u, int t,
                                           const std::array<double, 3>& l) {
  const auto& tr = sp.mesh->triangles[t];
  const auto phi = ElementBasis::values(l);
  std::array<double, 2> out = {0.0, 0.0};
  for (int c = 0; c < 2; ++c) {
    double s = 0;
    for (int i = 0; i < 3; ++i) s += u[sp.vertex_dof(c, tr[i])] * phi[i];
    s += u[sp.bubble_dof(c, t)] * phi[3];
    out[c] = s;
  }
  return out;
}

struct DirichletSet {
  std::vector<int> dofs;       // velocity DOF indices, unique
  std::vector<double> values;  // prescribed values, same length
};

/// Constrains both velocity components on all vertices carrying the given
/// tags. Bubbles vanish on edges and are never constrained.
inline DirichletSet make_dirichlet(const MixedSpace& sp,
                                   const std::vector<std::pair<BoundaryTag, VectorField>>& bcs,
                                   double t) {
  DirichletSet ds;
  std::vector<char> seen(sp.n_vel, 0);
  for (const auto& [tag, f] : bcs) {
    for (int v : boundary_dofs(*sp.mesh, tag)) {
      const auto& p = sp.mesh->vertices[v];
      const auto val = f(p[0], p[1], t);
      for (int c = 0; c < 2; ++c) {
        const int dof = sp.vertex_dof(c, v);
        if (seen[dof]) continue;
        seen[dof] = 1;
        ds.dofs.push_back(dof);
        ds.values.push_back(val[c]);
      }
    }
  }
  return ds;
}

/// Row replacement by identity*value plus column elimination with rhs
/// correction, preserving symmetry of a symmetric block.
inline void apply_dirichlet(SparseMat& A, Vec& rhs, const DirichletSet& ds) {
  const int n = static_cast<int>(A.rows());
  if (A.rows() != A.cols()) throw std::invalid_argument("apply_dirichlet: matrix must be square");
  std::vector<char> constrained(n, 0);
  std::vector<double> value(n, 0.0);
  for (size_t i = 0; i < ds.dofs.size(); ++i) {
    const int d = ds.dofs[i];
    if (d < 0 || d >= n) throw std::out_of_range("apply_dirichlet: index out of range");
    constrained[d] = 1;
    value[d] = ds.values[i];
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(A.nonZeros() + ds.dofs.size());
  for (int r = 0; r < n; ++r) {
    for (SparseMat::InnerIterator it(A, r); it; ++it) {
      const int c = static_cast<int>(it.col());
      if (constrained[r]) continue;
      if (constrained[c]) {
        rhs[r] -= it.value() * value[c];
        continue;
      }
      trips.emplace_back(r, c, it.value());
    }
  }
  for (int d = 0; d < n; ++d) {
    if (constrained[d]) {
      trips.emplace_back(d, d, 1.0);
      rhs[d] = value[d];
    }
  }
  SparseMat out(n, n);
  out.setFromTriplets(trips.begin(), trips.end());
  A.swap(out);
}

}  // namespace oldroyd
