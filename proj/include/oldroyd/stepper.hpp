#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#ifdef OLDROYD_HAVE_UMFPACK
#include <Eigen/UmfPackSupport>
#endif
#include <chrono>
#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "oldroyd/assembly.hpp"
#include "oldroyd/fespace.hpp"
#include "oldroyd/history.hpp"
#include "oldroyd/kernels.hpp"
#include "oldroyd/manufactured.hpp"

namespace oldroyd {

struct TimeGrid {
  double T = 1.0;
  int N = 1;
  double dt = 1.0;
  TimeGrid() = default;
  TimeGrid(double T_, int N_) : T(T_), N(N_), dt(T_ / N_) {
    if (N_ < 1) throw std::invalid_argument("TimeGrid: N must be >= 1");
  }
  double t(int n) const { return n * dt; }
  double tbar(int n) const { return (n - 0.5) * dt; }
};

struct PicardParams {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  int max_iter = 50;
};

struct SchemeConfig {
  KernelSpec kernel;
  EllipticCoeffs a_coeffs;
  BFormCoeffs b_coeffs;
  double tol = 1e-12;  // compression tolerance
  PicardParams picard;
  bool audit = false;      // recompute weighted sums from stored originals
  int audit_samples = 5;
  unsigned audit_seed = 7;
};

struct ExactFields {
  const ExactSolution* exact = nullptr;
};

/// Problem data: space, boundary conditions, forcing, initial velocity.
struct ProblemSetup {
  const MixedSpace* space = nullptr;
  VectorField forcing;  // may be empty for f = 0
  VectorField initial;  // u0(x,y)
  std::vector<std::pair<BoundaryTag, VectorField>> dirichlet;
  int bc_ramp_steps = 0;  // scale BC values by min(1, n/ramp) when > 0
  const ExactSolution* exact = nullptr;
};

enum class RunMode { full, compressed, both };

struct StepRecord {
  int step = 0;
  double t = 0;
  int picard_iters = 0;
  int rank = 0;
  long long hist_floats = 0;
  double div_residual = 0;
};

struct BackendReport {
  std::vector<StepRecord> steps;
  long long peak_floats = 0;
  int final_rank = 0;
  int truncations = 0;
  double err_u = -1, err_p = -1;
  Vec u_final, p_final;
  double wall_seconds = 0;
  double max_div_residual = 0;
  int max_picard_iters = 0;
  double max_audit_error = 0;
};

struct RunReport {
  std::optional<BackendReport> full;
  std::optional<BackendReport> compressed;
  double diff_u = -1, diff_p = -1;  // L2 norms of final-field differences
  double sigma_S = 0;
  bool sigma_converged = false;
  double c0K0_estimate = -1;
  double compression_bound = -1;  // (T_sv+1) sqrt(sigma_S) tol
};

namespace detail {

inline void append_triplets(std::vector<Eigen::Triplet<double>>& out, const SparseMat& M,
                            double scale, int row_off, int col_off) {
  for (int r = 0; r < M.outerSize(); ++r) {
    for (SparseMat::InnerIterator it(M, r); it; ++it) {
      out.emplace_back(row_off + static_cast<int>(it.row()), col_off + static_cast<int>(it.col()),
                       scale * it.value());
    }
  }
}

inline void append_transposed(std::vector<Eigen::Triplet<double>>& out, const SparseMat& M,
                              double scale, int row_off, int col_off) {
  for (int r = 0; r < M.outerSize(); ++r) {
    for (SparseMat::InnerIterator it(M, r); it; ++it) {
      out.emplace_back(row_off + static_cast<int>(it.col()), col_off + static_cast<int>(it.row()),
                       scale * it.value());
    }
  }
}

}  // namespace detail

/// Saddle-point solver for one time step. The block system is
///   [ A_eff   -1/2 D^T   0 ] [u  ]   [rhs_u  ]
///   [ 1/2 D    0         m ] [q  ] = [rhs_div]
///   [ 0        m^T       0 ] [mu ]   [0      ]
/// with q = 2*pbar and the scalar multiplier enforcing a zero-mean pressure.
/// Dirichlet velocity rows are replaced by the identity; columns are
/// eliminated into the right-hand side, preserving A-block symmetry.
///
/// Internally the solve is exact block elimination, not a factorization of
/// the literal bordered matrix: the bubble DOFs (whose coupling block is
/// diagonal) are condensed out, and the multiplier pair (mu together with the
/// rank-deficiency of the pressure block) is resolved by a 2x2 bordered
/// correction around a pin-regularized factorization. The reported residual
/// is measured against the original block system.
class SaddleSolver {
 public:
  SaddleSolver(const MixedSpace& sp, std::vector<Eigen::Triplet<double>> fixed_vel,
               const SparseMat& D, Vec m, const std::vector<int>& bc_dofs)
      : sp_(&sp), n_vel_(sp.n_vel), n_p_(sp.n_pressure), fixed_(std::move(fixed_vel)),
        D_(&D), m_(std::move(m)), constrained_(n_vel_, 0) {
    for (int d : bc_dofs) {
      if (d < 0 || d >= n_vel_) throw std::out_of_range("SaddleSolver: constrained dof out of range");
      constrained_[d] = 1;
    }
    // condensed numbering: vertex velocity DOFs then pressure
    vel_map_.assign(n_vel_, -1);
    bubble_map_.assign(n_vel_, -1);
    int pos = 0;
    for (int c = 0; c < 2; ++c) {
      for (int v = 0; v < sp.n_vertices; ++v) vel_map_[sp.vertex_dof(c, v)] = pos++;
    }
    n_vv_ = pos;
    int b = 0;
    for (int c = 0; c < 2; ++c) {
      for (int t = 0; t < sp.n_triangles; ++t) bubble_map_[sp.bubble_dof(c, t)] = b++;
    }
    n_b_ = b;
    n_cond_ = n_vv_ + n_p_;
    pin_ = n_vv_;  // first pressure unknown
  }

  struct Result {
    Vec u;
    Vec pbar;
    double mu = 0;
    double lin_residual = 0;
  };

  /// conv: convection matrix N(w), added with factor 1/2; bc_values indexed
  /// by velocity DOF (only constrained entries are read).
  Result solve(const SparseMat* conv, const Vec& rhs_u, const Vec& rhs_div,
               const std::vector<double>& bc_values) {
    Vec rhs = rhs_u;  // velocity part, bc columns folded in below
    Vec rhs_q = rhs_div;

    // Bubble partition of the velocity block: vv entries go to the condensed
    // matrix, vb/bv entries to per-bubble lists, bb must be diagonal.
    // Entry positions and emission order are identical between calls, so the
    // compressed pattern is built once and later calls refill values in place
    // through the recorded slot sequence.
    const bool first = slots_.empty();
    trips_.clear();
    brow_.resize(n_b_);
    bcol_.resize(n_b_);
    for (auto& lst : brow_) lst.clear();
    for (auto& lst : bcol_) lst.clear();
    bdiag_.assign(n_b_, 0.0);
    size_t slot_pos = 0;
    double* kvals = first ? nullptr : K_.valuePtr();
    if (!first) std::fill(kvals, kvals + K_.nonZeros(), 0.0);

    auto emit = [&](int r, int c, double v) {
      if (first) {
        trips_.emplace_back(r, c, v);
      } else {
        kvals[slots_[slot_pos++]] += v;
      }
    };
    auto feed = [&](int r, int c, double v) {
      if (constrained_[r]) return;
      if (constrained_[c]) {
        rhs[r] -= v * bc_values[c];
        return;
      }
      const int rb = bubble_map_[r], cb = bubble_map_[c];
      if (rb < 0 && cb < 0) {
        emit(vel_map_[r], vel_map_[c], v);
      } else if (rb >= 0 && cb >= 0) {
        if (rb != cb) throw std::runtime_error("SaddleSolver: bubble block not diagonal");
        bdiag_[rb] += v;
      } else if (rb >= 0) {
        brow_[rb].emplace_back(vel_map_[c], v);
      } else {
        bcol_[cb].emplace_back(vel_map_[r], v);
      }
    };
    for (const auto& t : fixed_) feed(t.row(), t.col(), t.value());
    if (conv) {
      for (int r = 0; r < conv->outerSize(); ++r) {
        for (SparseMat::InnerIterator it(*conv, r); it; ++it) {
          feed(static_cast<int>(it.row()), static_cast<int>(it.col()), 0.5 * it.value());
        }
      }
    }
    // divergence blocks: +1/2 D in the pressure rows, -1/2 D^T in momentum
    for (int r = 0; r < D_->outerSize(); ++r) {
      for (SparseMat::InnerIterator it(*D_, r); it; ++it) {
        const int q = static_cast<int>(it.row());
        const int j = static_cast<int>(it.col());
        const double v = it.value();
        if (constrained_[j]) {
          rhs_q[q] -= 0.5 * v * bc_values[j];
          continue;
        }
        const int jb = bubble_map_[j];
        if (jb < 0) {
          emit(n_vv_ + q, vel_map_[j], 0.5 * v);
          emit(vel_map_[j], n_vv_ + q, -0.5 * v);
        } else {
          bcol_[jb].emplace_back(n_vv_ + q, 0.5 * v);
          brow_[jb].emplace_back(n_vv_ + q, -0.5 * v);
        }
      }
    }

    // condensed right-hand side and Schur corrections
    Vec crhs(n_cond_);
    for (int d = 0; d < n_vel_; ++d) {
      if (vel_map_[d] >= 0) crhs[vel_map_[d]] = constrained_[d] ? bc_values[d] : rhs[d];
    }
    crhs.segment(n_vv_, n_p_) = rhs_q;
    for (int b = 0; b < n_b_; ++b) {
      const double d = bdiag_[b];
      if (d == 0.0) throw std::runtime_error("SaddleSolver: zero bubble pivot");
      const double rb = rhs[bubble_dof_of(b)];
      for (const auto& [i, kib] : bcol_[b]) {
        crhs[i] -= kib * rb / d;
        for (const auto& [j, kbj] : brow_[b]) emit(i, j, -kib * kbj / d);
      }
    }
    // identity rows for constrained DOFs, pin regularization for the
    // pressure-constant nullspace
    for (int dof = 0; dof < n_vel_; ++dof) {
      if (constrained_[dof]) emit(vel_map_[dof], vel_map_[dof], 1.0);
    }
    if (first) {
      double acc = 0;
      int cnt = 0;
      for (const auto& t : trips_) {
        if (t.row() == t.col() && t.row() >= n_vv_) {
          acc += std::abs(t.value());
          ++cnt;
        }
      }
      pin_scale_ = cnt ? std::max(acc / cnt, 1e-12) : 1.0;
    }
    emit(pin_, pin_, pin_scale_);

    if (first) {
      K_.resize(n_cond_, n_cond_);
      K_.setFromTriplets(trips_.begin(), trips_.end());
      K_.makeCompressed();
      slots_.resize(trips_.size());
      const auto* outer = K_.outerIndexPtr();
      const auto* inner = K_.innerIndexPtr();
      for (size_t i = 0; i < trips_.size(); ++i) {
        const int col = trips_[i].col(), row = trips_[i].row();
        const auto* lo = inner + outer[col];
        const auto* hi = inner + outer[col + 1];
        const auto* it = std::lower_bound(lo, hi, row);
        slots_[i] = static_cast<int>(it - inner);
      }
      trips_.clear();
      trips_.shrink_to_fit();
    }
    if (!analyzed_) {
      solver_.analyzePattern(K_);
      analyzed_ = true;
    }
    solver_.factorize(K_);
    if (solver_.info() != Eigen::Success) {
      throw std::runtime_error("SaddleSolver: factorization failed (singular saddle matrix)");
    }

    // bordered correction: true system K0 x + c mu = b, m^T q = 0 with
    // K0 = K - pin e e^T and c = [0; m]
    Vec c_ext = Vec::Zero(n_cond_);
    c_ext.segment(n_vv_, n_p_) = m_;
    Vec e_pin = Vec::Zero(n_cond_);
    e_pin[pin_] = 1.0;
    const Vec zb = solver_.solve(crhs);
    const Vec zc = solver_.solve(c_ext);
    const Vec ze = solver_.solve(e_pin);
    const double s = pin_scale_;
    // unknowns (mu, nu = x[pin]):
    //   m.x:  -mu (c.zc) + s nu (c.ze) = -c.zb
    //   pin:  -mu zc[pin] + s nu ze[pin] - nu = -zb[pin]
    const double a11 = -c_ext.dot(zc), a12 = s * c_ext.dot(ze);
    const double a21 = -zc[pin_], a22 = s * ze[pin_] - 1.0;
    const double b1 = -c_ext.dot(zb), b2 = -zb[pin_];
    const double det = a11 * a22 - a12 * a21;
    if (det == 0) throw std::runtime_error("SaddleSolver: singular bordered system");
    const double mu = (b1 * a22 - a12 * b2) / det;
    const double nu = (a11 * b2 - b1 * a21) / det;
    Vec x = zb - mu * zc + (s * nu) * ze;

    // expand back: vertex velocities, recovered bubbles, pressure
    Result res;
    res.u = Vec::Zero(n_vel_);
    for (int dof = 0; dof < n_vel_; ++dof) {
      if (vel_map_[dof] >= 0) res.u[dof] = x[vel_map_[dof]];
    }
    for (int b = 0; b < n_b_; ++b) {
      double s_row = 0;
      for (const auto& [j, kbj] : brow_[b]) s_row += kbj * x[j];
      res.u[bubble_dof_of(b)] = (rhs[bubble_dof_of(b)] - s_row) / bdiag_[b];
    }
    const Vec q = x.segment(n_vv_, n_p_);
    res.pbar = 0.5 * q;
    res.mu = mu;

    // residual of the original block system
    Vec r_mom = -rhs_u;
    auto apply = [&](int r, int c, double v) {
      if (!constrained_[r]) {
        r_mom[r] += v * (constrained_[c] ? bc_values[c] : res.u[c]);
      }
    };
    for (const auto& t : fixed_) apply(t.row(), t.col(), t.value());
    if (conv) {
      for (int r = 0; r < conv->outerSize(); ++r) {
        for (SparseMat::InnerIterator it(*conv, r); it; ++it) {
          apply(static_cast<int>(it.row()), static_cast<int>(it.col()), 0.5 * it.value());
        }
      }
    }
    Vec dtq = SparseMat(D_->transpose()) * q;
    double res2 = 0, scale2 = std::max(1.0, rhs_u.squaredNorm() + rhs_div.squaredNorm());
    for (int dof = 0; dof < n_vel_; ++dof) {
      if (constrained_[dof]) continue;
      const double r = r_mom[dof] - 0.5 * dtq[dof];
      res2 += r * r;
    }
    const Vec r_div = 0.5 * (*D_ * res.u) + m_ * mu - rhs_div;
    res2 += r_div.squaredNorm();
    const double r_mean = m_.dot(q);
    res2 += r_mean * r_mean;
    res.lin_residual = std::sqrt(res2 / scale2);
    if (res.lin_residual > 1e-10) {
      throw std::runtime_error("SaddleSolver: linear residual above 1e-10");
    }
    return res;
  }

 private:
  int bubble_dof_of(int b) const {
    const int per = sp_->n_triangles;
    const int comp = b / per;
    return sp_->bubble_dof(comp, b % per);
  }

  const MixedSpace* sp_;
  int n_vel_, n_p_, n_vv_ = 0, n_b_ = 0, n_cond_ = 0, pin_ = 0;
  double pin_scale_ = 0;
  std::vector<Eigen::Triplet<double>> fixed_;
  const SparseMat* D_;
  Vec m_;
  std::vector<char> constrained_;
  std::vector<int> vel_map_, bubble_map_;
  std::vector<Eigen::Triplet<double>> trips_;
  std::vector<int> slots_;
  Eigen::SparseMatrix<double> K_;
  std::vector<std::vector<std::pair<int, double>>> brow_, bcol_;
  std::vector<double> bdiag_;
#ifdef OLDROYD_HAVE_UMFPACK
  Eigen::UmfPackLU<Eigen::SparseMatrix<double>> solver_;
#else
  Eigen::SparseLU<Eigen::SparseMatrix<double>> solver_;
#endif
  bool analyzed_ = false;
};

/// One-off saddle solve (assembles the fixed blocks from scratch).
inline SaddleSolver::Result solve_saddle(const MixedSpace& sp, const SparseMat& A_eff,
                                         const SparseMat& D, const Vec& m, const Vec& rhs_u,
                                         const Vec& rhs_div, const DirichletSet& ds) {
  std::vector<Eigen::Triplet<double>> fixed;
  detail::append_triplets(fixed, A_eff, 1.0, 0, 0);
  SaddleSolver solver(sp, std::move(fixed), D, m, ds.dofs);
  std::vector<double> bc_values(sp.n_vel, 0.0);
  for (size_t i = 0; i < ds.dofs.size(); ++i) bc_values[ds.dofs[i]] = ds.values[i];
  return solver.solve(nullptr, rhs_u, rhs_div, bc_values);
}

/// Rough estimate of the continuity constant c0 with |B(u,v)| <= c0 |u|_a |v|_a,
/// maximized over random coefficient pairs (reporting only).
inline double estimate_c0(const SparseMat& A, const SparseMat& B, int samples = 24,
                          unsigned seed = 99) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> dist;
  const int n = static_cast<int>(A.rows());
  double best = 0;
  for (int s = 0; s < samples; ++s) {
    Vec u(n), v(n);
    for (int i = 0; i < n; ++i) u[i] = dist(rng);
    if (s % 2 == 0) {
      v = u;
    } else {
      for (int i = 0; i < n; ++i) v[i] = dist(rng);
    }
    const double na = std::sqrt(std::abs(u.dot(A * u)));
    const double nb = std::sqrt(std::abs(v.dot(A * v)));
    if (na == 0 || nb == 0) continue;
    best = std::max(best, std::abs(v.dot(B * u)) / (na * nb));
  }
  return best;
}

namespace detail {

/// Spread the midpoint averages ubar^j onto snapshot columns: each ubar^j =
/// (u^j + u^{j-1})/2 contributes half its weight to columns j and j-1.
/// Nonsingular scheme at step n: hist = dt sum_{j=1}^{n-1} K(tbar_n-tbar_j) ubar^j
/// (the implicit j = n entry of the midpoint rule is folded into the system
/// matrix and not queried here).
inline Vec history_weights_nonsingular(const NonsingularKernel& k, int n, double dt) {
  const auto mid = midpoint_weights(k, n, dt);
  Vec w = Vec::Zero(n);  // columns 0..n-1
  for (int j = 1; j <= n - 1; ++j) {
    const double wj = 0.5 * mid[j - 1];
    w[j] += wj;
    w[j - 1] += wj;
  }
  return w;
}

/// Singular scheme at step n: hist = dt^alpha sum_{p=1}^{n} omega_p ubar^{n-p}
/// with ubar^0 = u^0/2 (u^{-1} = 0). The rho-correction term is added by the
/// caller with the exact stored u0.
inline Vec history_weights_singular(const CqWeights& cq, int n) {
  const double dta = std::pow(cq.dt, cq.alpha);
  Vec w = Vec::Zero(n);
  for (int p = 1; p <= n; ++p) {
    const int j = n - p;  // ubar^j
    const double wp = 0.5 * dta * cq.omega[p];
    w[j] += wp;
    if (j >= 1) w[j - 1] += wp;
  }
  return w;
}

}  // namespace detail

/// Advances the fully discrete scheme over the time grid with the chosen
/// history backend(s). Snapshots pushed into the backend are the per-step
/// velocity coefficients u^n; all midpoint averaging lives in the
/// weighted-sum query weights.
class OldroydStepper {
 public:
  OldroydStepper(const ProblemSetup& prob, const SchemeConfig& scheme, const TimeGrid& grid)
      : prob_(prob), scheme_(scheme), grid_(grid), sp_(*prob.space) {
    M_ = assemble_mass(sp_);
    A_ = assemble_A(sp_, scheme.a_coeffs);
    B_ = assemble_B(sp_, scheme.b_coeffs);
    D_ = assemble_div(sp_);
    mp_ = assemble_pressure_integrals(sp_);
    if (std::holds_alternative<TemperedFractionalKernel>(scheme.kernel)) {
      const auto& tf = std::get<TemperedFractionalKernel>(scheme.kernel);
      cq_ = cq_build(tf.alpha, tf.lambda, grid.N, grid.dt);
      beta_ = std::pow(grid.dt, tf.alpha) * cq_->omega[0];
    } else {
      beta_ = 0.5 * grid.dt * std::get<NonsingularKernel>(scheme.kernel).K_at_0;
    }
    collect_bc_dofs();
    build_initial();
  }

  const Vec& initial_velocity() const { return u0_; }

  /// Spectral radius of the A-block after Dirichlet elimination.
  SpectralRadiusResult sigma_S() const {
    SparseMat Ae = A_;
    Vec dummy = Vec::Zero(sp_.n_vel);
    DirichletSet ds;
    ds.dofs = bc_dofs_;
    ds.values.assign(bc_dofs_.size(), 0.0);
    apply_dirichlet(Ae, dummy, ds);
    return spectral_radius_stiffness(Ae);
  }

  double c0K0() const {
    double K0 = 0;
    if (std::holds_alternative<NonsingularKernel>(scheme_.kernel)) {
      K0 = std::get<NonsingularKernel>(scheme_.kernel).K0;
    } else {
      const auto& tf = std::get<TemperedFractionalKernel>(scheme_.kernel);
      // int_0^T e^(-l t) t^(a-1)/Gamma(a) dt
      K0 = tempered_convolution_reference(tf.alpha, tf.lambda, [](double) { return 1.0; }, grid_.T,
                                          1e-10);
    }
    return estimate_c0(A_, B_) * K0;
  }

  BackendReport run_backend(HistoryBackend& backend) {
    const auto t_start = std::chrono::steady_clock::now();
    BackendReport rep;
    SaddleSolver solver(sp_, build_fixed_triplets(), D_, mp_, bc_dofs_);

    std::vector<Vec> audit_store;
    std::vector<char> audit_steps(grid_.N + 1, 0);
    if (scheme_.audit) {
      std::mt19937 rng(scheme_.audit_seed);
      std::uniform_int_distribution<int> pick(2, std::max(2, grid_.N));
      for (int i = 0; i < scheme_.audit_samples; ++i) audit_steps[pick(rng)] = 1;
      audit_store.push_back(u0_);
    }

    backend.push(u0_);
    Vec u_prev = u0_;
    Vec u_prev2 = u0_;
    Vec p_last;

    for (int n = 1; n <= grid_.N; ++n) {
      const double tn = grid_.t(n);
      const double tbar = grid_.tbar(n);

      std::vector<double> bc_values(sp_.n_vel, 0.0);
      fill_bc_values(bc_values, tn, n);

      // History contribution (columns 0..n-1) as one weighted-sum query.
      Vec hist;
      Vec w;
      if (cq_) {
        w = detail::history_weights_singular(*cq_, n);
      } else {
        w = detail::history_weights_nonsingular(std::get<NonsingularKernel>(scheme_.kernel), n,
                                                grid_.dt);
      }
      hist = backend.weighted_sum(w);
      if (scheme_.audit && audit_steps[n]) {
        Vec explicit_sum = Vec::Zero(sp_.n_vel);
        for (int j = 0; j < n; ++j) explicit_sum += w[j] * audit_store[j];
        const double err = (hist - explicit_sum).norm();
        const double bound =
            (backend.truncation_count() + 1) * scheme_.tol * w.cwiseAbs().sum() + 1e-30;
        rep.max_audit_error = std::max(rep.max_audit_error, err / bound);
      }
      if (cq_) {
        const double rho_bar = 0.5 * (cq_->rho[n] + cq_->rho[n - 1]);
        hist += rho_bar * u0_;
      }

      Vec rhs_base = prob_.forcing ? assemble_load(sp_, prob_.forcing, tbar)
                                   : Vec::Zero(sp_.n_vel);
      rhs_base += (1.0 / grid_.dt) * (M_ * u_prev);
      rhs_base -= 0.5 * (A_ * u_prev);
      rhs_base -= 0.5 * beta_ * (B_ * u_prev);
      rhs_base -= B_ * hist;
      const Vec rhs_div = -0.5 * (D_ * u_prev);

      // Picard iteration on the transporting midpoint field.
      Vec w_transport =
          (n == 1) ? u_prev : Vec(1.5 * u_prev - 0.5 * u_prev2);
      SaddleSolver::Result sol;
      int iters = 0;
      bool converged = false;
      while (iters < scheme_.picard.max_iter) {
        const SparseMat conv = assemble_convection(sp_, w_transport);
        const Vec rhs_u = rhs_base - 0.5 * (conv * u_prev);
        sol = solver.solve(&conv, rhs_u, rhs_div, bc_values);
        const Vec ubar = 0.5 * (sol.u + u_prev);
        const double delta = (ubar - w_transport).norm();
        w_transport = ubar;
        ++iters;
        if (delta <= scheme_.picard.rel_tol * ubar.norm() + scheme_.picard.abs_tol) {
          converged = true;
          break;
        }
      }
      if (!converged) {
        throw std::runtime_error("Picard iteration did not converge at step " + std::to_string(n));
      }

      const Vec ubar = 0.5 * (sol.u + u_prev);
      const double div_res = (D_ * ubar).norm();

      u_prev2 = u_prev;
      u_prev = sol.u;
      p_last = sol.pbar;
      backend.push(sol.u);
      if (scheme_.audit) audit_store.push_back(sol.u);

      StepRecord rec;
      rec.step = n;
      rec.t = tn;
      rec.picard_iters = iters;
      rec.rank = backend.rank();
      rec.hist_floats = backend.floats_stored();
      rec.div_residual = div_res;
      rep.steps.push_back(rec);
      rep.max_div_residual = std::max(rep.max_div_residual, div_res);
      rep.max_picard_iters = std::max(rep.max_picard_iters, iters);
    }

    rep.u_final = u_prev;
    rep.p_final = p_last;
    rep.peak_floats = backend.peak_floats();
    rep.final_rank = backend.rank();
    rep.truncations = backend.truncation_count();
    if (prob_.exact) {
      const auto errs = error_norms(sp_, u_prev, &p_last, *prob_.exact, grid_.T);
      rep.err_u = errs.vel_l2;
      rep.err_p = errs.pres_l2;
    }
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
  }

  RunReport run(RunMode mode) {
    RunReport report;
    if (mode == RunMode::full || mode == RunMode::both) {
      FullHistory h;
      report.full = run_backend(h);
    }
    if (mode == RunMode::compressed || mode == RunMode::both) {
      CompressedHistory h(scheme_.tol);
      report.compressed = run_backend(h);
    }
    if (report.full && report.compressed) {
      const Vec du = report.full->u_final - report.compressed->u_final;
      report.diff_u = std::sqrt(du.dot(M_ * du));
      const Vec dp = report.full->p_final - report.compressed->p_final;
      const SparseMat Mp = assemble_pressure_mass(sp_);
      report.diff_p = std::sqrt(dp.dot(Mp * dp));
    }
    const auto sr = sigma_S();
    report.sigma_S = sr.value;
    report.sigma_converged = sr.converged;
    report.c0K0_estimate = c0K0();
    if (report.compressed) {
      report.compression_bound =
          (report.compressed->truncations + 1) * std::sqrt(report.sigma_S) * scheme_.tol;
    }
    return report;
  }

  const SparseMat& mass() const { return M_; }
  const SparseMat& stiffness_A() const { return A_; }
  const SparseMat& memory_B() const { return B_; }
  const SparseMat& divergence() const { return D_; }

 private:
  void collect_bc_dofs() {
    std::vector<char> seen(sp_.n_vel, 0);
    for (const auto& [tag, fn] : prob_.dirichlet) {
      for (int v : boundary_dofs(*sp_.mesh, tag)) {
        for (int c = 0; c < 2; ++c) {
          const int dof = sp_.vertex_dof(c, v);
          if (!seen[dof]) {
            seen[dof] = 1;
            bc_dofs_.push_back(dof);
          }
        }
      }
    }
    std::sort(bc_dofs_.begin(), bc_dofs_.end());
  }

  void fill_bc_values(std::vector<double>& values, double t, int n) const {
    double ramp = 1.0;
    if (prob_.bc_ramp_steps > 0) {
      ramp = std::min(1.0, static_cast<double>(n) / prob_.bc_ramp_steps);
    }
    for (const auto& [tag, fn] : prob_.dirichlet) {
      for (int v : boundary_dofs(*sp_.mesh, tag)) {
        const auto& p = sp_.mesh->vertices[v];
        const auto val = fn(p[0], p[1], t);
        values[sp_.vertex_dof(0, v)] = ramp * val[0];
        values[sp_.vertex_dof(1, v)] = ramp * val[1];
      }
    }
  }

  void build_initial() {
    u0_ = l2_project_velocity(sp_, prob_.initial, 0.0, &M_);
    std::vector<double> bc(sp_.n_vel, 0.0);
    fill_bc_values(bc, 0.0, 0);
    for (int d : bc_dofs_) u0_[d] = bc[d];
  }

  std::vector<Eigen::Triplet<double>> build_fixed_triplets() const {
    std::vector<Eigen::Triplet<double>> fixed;
    fixed.reserve(M_.nonZeros() + A_.nonZeros() + B_.nonZeros());
    detail::append_triplets(fixed, M_, 1.0 / grid_.dt, 0, 0);
    detail::append_triplets(fixed, A_, 0.5, 0, 0);
    detail::append_triplets(fixed, B_, 0.5 * beta_, 0, 0);
    return fixed;
  }

  ProblemSetup prob_;
  SchemeConfig scheme_;
  TimeGrid grid_;
  const MixedSpace& sp_;
  SparseMat M_, A_, B_, D_;
  Vec mp_;
  Vec u0_;
  std::vector<int> bc_dofs_;
  std::optional<CqWeights> cq_;
  double beta_ = 0;
};

}  // namespace oldroyd
