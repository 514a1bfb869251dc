#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "oldroyd/fespace.hpp"
#include "oldroyd/mesh.hpp"
#include "oldroyd/quadrature.hpp"

namespace oldroyd {

/// Coefficients of the symmetric elliptic operator: matrix a_ij(x) and
/// nonnegative zeroth-order a(x). Symmetry/ellipticity is checked by sampling
/// at quadrature points during assembly.
struct EllipticCoeffs {
  std::function<std::array<double, 4>(double, double)> a_mat;  // a11,a12,a21,a22
  std::function<double(double, double)> a0;

  static EllipticCoeffs laplacian(double c) {
    EllipticCoeffs e;
    e.a_mat = [c](double, double) { return std::array<double, 4>{c, 0.0, 0.0, c}; };
    e.a0 = [](double, double) { return 0.0; };
    return e;
  }
};

/// Coefficients of the (generally nonsymmetric) second-order form with
/// first-order terms b_i and zeroth-order b.
struct BFormCoeffs {
  std::function<std::array<double, 4>(double, double)> b_mat;
  std::function<std::array<double, 2>(double, double)> b_vec;
  std::function<double(double, double)> b0;

  static BFormCoeffs laplacian(double c) {
    BFormCoeffs b;
    b.b_mat = [c](double, double) { return std::array<double, 4>{c, 0.0, 0.0, c}; };
    b.b_vec = [](double, double) { return std::array<double, 2>{0.0, 0.0}; };
    b.b0 = [](double, double) { return 0.0; };
    return b;
  }

  static BFormCoeffs zero() { return laplacian(0.0); }
};

namespace detail {

inline std::array<double, 2> phys_point(const TriMesh& mesh, int t, const std::array<double, 3>& l) {
  const auto& tr = mesh.triangles[t];
  const auto& p0 = mesh.vertices[tr[0]];
  const auto& p1 = mesh.vertices[tr[1]];
  const auto& p2 = mesh.vertices[tr[2]];
  return {l[0] * p0[0] + l[1] * p1[0] + l[2] * p2[0], l[0] * p0[1] + l[1] * p1[1] + l[2] * p2[1]};
}

// Velocity element DOFs of one scalar component: 3 vertices + bubble.
inline std::array<int, 4> scalar_dofs(const MixedSpace& sp, int comp, int t) {
  const auto& tr = sp.mesh->triangles[t];
  return {sp.vertex_dof(comp, tr[0]), sp.vertex_dof(comp, tr[1]), sp.vertex_dof(comp, tr[2]),
          sp.bubble_dof(comp, t)};
}

inline SparseMat from_triplets(int rows, int cols, std::vector<Eigen::Triplet<double>>& trips) {
  SparseMat m(rows, cols);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

}  // namespace detail

/// Velocity mass matrix (n_vel x n_vel), block diagonal over components.
inline SparseMat assemble_mass(const MixedSpace& sp) {
  const auto rule = QuadratureRule::triangle(6);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(sp.mesh->n_triangles() * 32);
  for (int t = 0; t < sp.mesh->n_triangles(); ++t) {
    const ElementBasis eb(*sp.mesh, t);
    double local[4][4] = {};
    for (const auto& q : rule.points) {
      const auto phi = ElementBasis::values(q.bary);
      const double w = 2.0 * eb.area * q.w;
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) local[i][j] += w * phi[i] * phi[j];
      }
    }
    for (int c = 0; c < 2; ++c) {
      const auto dofs = detail::scalar_dofs(sp, c, t);
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) trips.emplace_back(dofs[i], dofs[j], local[i][j]);
      }
    }
  }
  return detail::from_triplets(sp.n_vel, sp.n_vel, trips);
}

/// Stiffness-type matrix of the symmetric elliptic form. Acts componentwise
/// on vector fields; entry (i,j) = sum_kl (a_kl d_k phi_j, d_l phi_i) + (a phi_j, phi_i).
inline SparseMat assemble_A(const MixedSpace& sp, const EllipticCoeffs& coeffs) {
  const auto rule = QuadratureRule::triangle(6);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(sp.mesh->n_triangles() * 32);
  for (int t = 0; t < sp.mesh->n_triangles(); ++t) {
    const ElementBasis eb(*sp.mesh, t);
    double local[4][4] = {};
    for (const auto& q : rule.points) {
      const auto p = detail::phys_point(*sp.mesh, t, q.bary);
      const auto a = coeffs.a_mat(p[0], p[1]);
      const double a0 = coeffs.a0(p[0], p[1]);
      if (std::abs(a[1] - a[2]) > 1e-12 * (std::abs(a[1]) + std::abs(a[2]) + 1.0)) {
        throw std::invalid_argument("assemble_A: a_ij must be symmetric");
      }
      const double tr = a[0] + a[3], det = a[0] * a[3] - a[1] * a[2];
      if (tr <= 0 || det <= 0) throw std::invalid_argument("assemble_A: a_ij must be positive definite");
      if (a0 < 0) throw std::invalid_argument("assemble_A: a(x) must be nonnegative");
      const auto phi = ElementBasis::values(q.bary);
      const auto grad = eb.gradients(q.bary);
      const double w = 2.0 * eb.area * q.w;
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          // sum_{k,l} a_kl d u/dx_k d v/dx_l with u = phi_j, v = phi_i
          double s = 0;
          for (int k = 0; k < 2; ++k) {
            for (int l = 0; l < 2; ++l) s += a[2 * k + l] * grad[j][k] * grad[i][l];
          }
          local[i][j] += w * (s + a0 * phi[j] * phi[i]);
        }
      }
    }
    for (int c = 0; c < 2; ++c) {
      const auto dofs = detail::scalar_dofs(sp, c, t);
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) trips.emplace_back(dofs[i], dofs[j], local[i][j]);
      }
    }
  }
  return detail::from_triplets(sp.n_vel, sp.n_vel, trips);
}

/// Matrix of the memory-operator form; nonsymmetric terms allowed.
inline SparseMat assemble_B(const MixedSpace& sp, const BFormCoeffs& coeffs) {
  const auto rule = QuadratureRule::triangle(6);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(sp.mesh->n_triangles() * 32);
  for (int t = 0; t < sp.mesh->n_triangles(); ++t) {
    const ElementBasis eb(*sp.mesh, t);
    double local[4][4] = {};
    for (const auto& q : rule.points) {
      const auto p = detail::phys_point(*sp.mesh, t, q.bary);
      const auto b = coeffs.b_mat(p[0], p[1]);
      const auto bv = coeffs.b_vec(p[0], p[1]);
      const double b0 = coeffs.b0(p[0], p[1]);
      const auto phi = ElementBasis::values(q.bary);
      const auto grad = eb.gradients(q.bary);
      const double w = 2.0 * eb.area * q.w;
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          double s = 0;
          for (int k = 0; k < 2; ++k) {
            for (int l = 0; l < 2; ++l) s += b[2 * k + l] * grad[j][k] * grad[i][l];
          }
          s += (bv[0] * grad[j][0] + bv[1] * grad[j][1]) * phi[i];
          local[i][j] += w * (s + b0 * phi[j] * phi[i]);
        }
      }
    }
    for (int c = 0; c < 2; ++c) {
      const auto dofs = detail::scalar_dofs(sp, c, t);
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) trips.emplace_back(dofs[i], dofs[j], local[i][j]);
      }
    }
  }
  return detail::from_triplets(sp.n_vel, sp.n_vel, trips);
}

/// Divergence matrix (n_pressure x n_vel): entry (i,j) = (div phi_j, q_i).
inline SparseMat assemble_div(const MixedSpace& sp) {
  const auto rule = QuadratureRule::triangle(6);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(sp.mesh->n_triangles() * 24);
  for (int t = 0; t < sp.mesh->n_triangles(); ++t) {
    const ElementBasis eb(*sp.mesh, t);
    const auto& tr = sp.mesh->triangles[t];
    double local[3][4][2] = {};  // pressure i, velocity j, component
    for (const auto& q : rule.points) {
      const auto phi = ElementBasis::values(q.bary);
      const auto grad = eb.gradients(q.bary);
      const double w = 2.0 * eb.area * q.w;
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 4; ++j) {
          for (int c = 0; c < 2; ++c) local[i][j][c] += w * phi[i] * grad[j][c];
        }
      }
    }
    for (int c = 0; c < 2; ++c) {
      const auto dofs = detail::scalar_dofs(sp, c, t);
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 4; ++j) trips.emplace_back(tr[i], dofs[j], local[i][j][c]);
      }
    }
  }
  return detail::from_triplets(sp.n_pressure, sp.n_vel, trips);
}

/// Skew-symmetrized convection matrix with frozen transporting field w:
/// N(w)[i][j] = 1/2 ((w.grad) phi_j, phi_i) - 1/2 ((w.grad) phi_i, phi_j).
/// Both halves are assembled directly, giving exact discrete energy
/// neutrality v' N(w) v = 0 up to roundoff.
inline SparseMat assemble_convection(const MixedSpace& sp, const Vec& w) {
  if (w.size() != sp.n_vel) throw std::invalid_argument("assemble_convection: bad w size");
  const auto rule = QuadratureRule::triangle(6);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(sp.mesh->n_triangles() * 32);
  for (int t = 0; t < sp.mesh->n_triangles(); ++t) {
    const ElementBasis eb(*sp.mesh, t);
    double local[4][4] = {};
    for (const auto& q : rule.points) {
      const auto wval = eval_velocity(sp, w, t, q.bary);
      const auto phi = ElementBasis::values(q.bary);
      const auto grad = eb.gradients(q.bary);
      const double wq = 2.0 * eb.area * q.w;
      double wgrad[4];
      for (int j = 0; j < 4; ++j) wgrad[j] = wval[0] * grad[j][0] + wval[1] * grad[j][1];
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
          local[i][j] += 0.5 * wq * (wgrad[j] * phi[i] - wgrad[i] * phi[j]);
        }
      }
    }
    for (int c = 0; c < 2; ++c) {
      const auto dofs = detail::scalar_dofs(sp, c, t);
      for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) trips.emplace_back(dofs[i], dofs[j], local[i][j]);
      }
    }
  }
  return detail::from_triplets(sp.n_vel, sp.n_vel, trips);
}

/// Load vector (f, phi_i) by quadrature of the given degree (6 or 10).
inline Vec assemble_load(const MixedSpace& sp, const VectorField& f, double t, int degree = 6) {
  const auto rule = QuadratureRule::triangle(degree);
  Vec load = Vec::Zero(sp.n_vel);
  for (int tri = 0; tri < sp.mesh->n_triangles(); ++tri) {
    const ElementBasis eb(*sp.mesh, tri);
    for (const auto& q : rule.points) {
      const auto p = detail::phys_point(*sp.mesh, tri, q.bary);
      const auto fv = f(p[0], p[1], t);
      const auto phi = ElementBasis::values(q.bary);
      const double w = 2.0 * eb.area * q.w;
      for (int c = 0; c < 2; ++c) {
        const auto dofs = detail::scalar_dofs(sp, c, tri);
        for (int i = 0; i < 4; ++i) load[dofs[i]] += w * fv[c] * phi[i];
      }
    }
  }
  return load;
}

/// P1 pressure mass matrix (n_pressure x n_pressure).
inline SparseMat assemble_pressure_mass(const MixedSpace& sp) {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(sp.mesh->n_triangles() * 9);
  for (int t = 0; t < sp.mesh->n_triangles(); ++t) {
    const double a = sp.mesh->signed_area(t);
    const auto& tr = sp.mesh->triangles[t];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        trips.emplace_back(tr[i], tr[j], a * (i == j ? 1.0 / 6.0 : 1.0 / 12.0));
      }
    }
  }
  return detail::from_triplets(sp.n_pressure, sp.n_pressure, trips);
}

/// Integrals of the pressure basis functions (the zero-mean constraint row).
inline Vec assemble_pressure_integrals(const MixedSpace& sp) {
  Vec m = Vec::Zero(sp.n_pressure);
  for (int t = 0; t < sp.mesh->n_triangles(); ++t) {
    const double a = sp.mesh->signed_area(t) / 3.0;
    for (int i = 0; i < 3; ++i) m[sp.mesh->triangles[t][i]] += a;
  }
  return m;
}

struct SpectralRadiusResult {
  double value = 0;
  bool converged = false;
  int iterations = 0;
};

/// Largest eigenvalue magnitude of a symmetric sparse matrix by power
/// iteration; relative tolerance 1e-6, capped at 10000 iterations.
///
/// The iteration runs on the shifted matrices A + sI and sI - A (s a bound on
/// the spectrum), which converge to the upper and lower spectral edges even
/// when the extreme eigenvalues nearly cancel in magnitude.
inline SpectralRadiusResult spectral_radius_stiffness(const SparseMat& A, double rel_tol = 1e-6,
                                                      int max_iter = 10000) {
  SpectralRadiusResult res;
  const int n = static_cast<int>(A.rows());
  // infinity norm bounds the spectrum of a symmetric matrix
  Vec row_abs = Vec::Zero(n);
  for (int r = 0; r < A.outerSize(); ++r) {
    for (SparseMat::InnerIterator it(A, r); it; ++it) row_abs[it.row()] += std::abs(it.value());
  }
  const double shift = row_abs.maxCoeff();
  if (shift == 0) {
    res.converged = true;
    return res;
  }

  auto edge = [&](double sgn, bool& ok, int& iters) {
    std::mt19937 rng(12345);
    std::normal_distribution<double> dist;
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = dist(rng);
    v.normalize();
    double rho = 0;
    ok = false;
    for (int it = 0; it < max_iter; ++it) {
      const Vec w = A * v;
      rho = v.dot(w);
      // Rayleigh value is quadratically accurate in the residual
      if ((w - rho * v).norm() <= rel_tol * std::max(w.norm(), 1e-300)) {
        ok = true;
        iters = it + 1;
        return rho;
      }
      Vec b = sgn * w + shift * v;
      const double nrm = b.norm();
      if (nrm == 0) {
        ok = true;
        iters = it + 1;
        return 0.0;
      }
      v = b / nrm;
    }
    iters = max_iter;
    return rho;
  };

  bool ok_hi = false, ok_lo = false;
  int it_hi = 0, it_lo = 0;
  const double hi = edge(1.0, ok_hi, it_hi);   // largest eigenvalue
  const double lo = edge(-1.0, ok_lo, it_lo);  // smallest eigenvalue
  res.value = std::max(std::abs(hi), std::abs(lo));
  res.converged = ok_hi && ok_lo;
  res.iterations = std::max(it_hi, it_lo);
  return res;
}

/// L2 projection of f into the velocity space; the residual is orthogonal to
/// the space up to the direct solver's accuracy.
inline Vec l2_project_velocity(const MixedSpace& sp, const VectorField& f, double t,
                               const SparseMat* mass = nullptr) {
  SparseMat M = mass ? *mass : assemble_mass(sp);
  const Vec rhs = assemble_load(sp, f, t);
  Eigen::SparseMatrix<double> Mc = M;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(Mc);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("l2_project_velocity: singular mass matrix");
  }
  Vec u = solver.solve(rhs);
  return u;
}

}  // namespace oldroyd
