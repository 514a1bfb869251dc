#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace oldroyd {

/// Online incremental truncated SVD of a stream of m-vectors (columns).
///
/// Maintains U ~= Q Sigma R^T plus a buffer W of projection coefficients for
/// columns accepted under p-truncation since the last rank event. The same
/// tolerance drives p-truncation and singular-value truncation; T_sv counts
/// the singular-value truncations, which bound the per-column reconstruction
/// error by (T_sv + 1) * tol.
///
/// A leading run of (near-)zero columns is recorded and reconstructed as
/// exact zeros; the factorization starts at the first column with norm >= tol.
class IncrementalSvd {
 public:
  explicit IncrementalSvd(double tol, int buffer_max = 64)
      : tol_(tol), buffer_max_(buffer_max) {
    if (tol <= 0) throw std::invalid_argument("IncrementalSvd: tol must be positive");
    if (buffer_max < 1) throw std::invalid_argument("IncrementalSvd: buffer_max must be >= 1");
  }

  static IncrementalSvd init(const Eigen::VectorXd& u1, double tol) {
    IncrementalSvd s(tol);
    s.push(u1);
    return s;
  }

  struct RankEvent {
    Eigen::VectorXd sigma_before;
    double p = 0;
    Eigen::VectorXd sigma_after;  // the k+1 values of Ybar before any truncation
    bool truncated = false;
  };

  struct Report {
    int rank = 0;
    int truncations = 0;
    double column_error_bound = 0;  // (T_sv + 1) * tol
    long long floats_stored = 0;    // m*k + k + ell*k + k*s
    long long floats_uncompressed = 0;
  };

  void push(const Eigen::VectorXd& u) {
    if (!u.allFinite()) throw std::invalid_argument("IncrementalSvd::push: non-finite input");
    if (m_ == 0) m_ = static_cast<int>(u.size());
    if (u.size() != m_) throw std::invalid_argument("IncrementalSvd::push: size mismatch");
    if (k_ == 0) {
      const double nrm = u.norm();
      if (nrm < tol_) {
        ++zero_lead_;
        return;
      }
      initialize(u, nrm);
      return;
    }
    Eigen::VectorXd d, e;
    double p = project(u, d, e);
    if (p < tol_) {
      W_.col(s_) = d;
      ++s_;
      if (s_ == buffer_max_) finalize_buffer();
      return;
    }
    if (s_ > 0) {
      // Absorbing the buffer rotates Q within its span; the projection
      // coefficients must be recomputed against the updated factor.
      finalize_buffer();
      p = project(u, d, e);
    }
    grow_rank(d, e / std::max(p, 1e-300), p);
  }

  /// Absorbs the p-truncation buffer: thin SVD of Y = [diag(Sigma) | W].
  /// Reconstructions of previously stored columns are unchanged up to
  /// orthogonality drift.
  void finalize_buffer() {
    if (s_ == 0) return;
    Eigen::MatrixXd Y(k_, k_ + s_);
    Y.setZero();
    Y.leftCols(k_).diagonal() = sigma_;
    Y.rightCols(s_) = W_.leftCols(s_);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Y, Eigen::ComputeFullU | Eigen::ComputeThinV);
    Eigen::MatrixXd U = svd.matrixU();
    Eigen::MatrixXd V = svd.matrixV();  // (k+s) x k
    fix_signs(U, V);
    Q_ = (Q_ * U).eval();
    sigma_ = svd.singularValues();
    Eigen::MatrixXd Rnew(ell_ + s_, k_);
    Rnew.topRows(ell_) = R_ * V.topRows(k_);
    Rnew.bottomRows(s_) = V.bottomRows(s_);
    R_.swap(Rnew);
    ell_ += s_;
    s_ = 0;
  }

  /// Number of represented columns (leading zeros + finalized + buffered).
  int columns() const { return zero_lead_ + ell_ + s_; }
  int rank() const { return k_; }
  int truncation_count() const { return T_sv_; }
  int zero_lead() const { return zero_lead_; }
  int buffered() const { return s_; }
  double tol() const { return tol_; }
  const Eigen::VectorXd& singular_values() const { return sigma_; }
  const Eigen::MatrixXd& Q() const { return Q_; }
  const Eigen::MatrixXd& R() const { return R_; }
  Eigen::MatrixXd Wbuf() const { return W_.leftCols(s_); }
  const std::vector<RankEvent>& rank_events() const { return events_; }

  Eigen::VectorXd reconstruct(int j) const {
    if (j < 0 || j >= columns()) throw std::out_of_range("IncrementalSvd::reconstruct");
    if (j < zero_lead_) return Eigen::VectorXd::Zero(m_);
    const int jj = j - zero_lead_;
    if (jj < ell_) return Q_ * (sigma_.cwiseProduct(R_.row(jj).transpose()));
    return Q_ * W_.col(jj - ell_);
  }

  /// sum_j w_j * column_j evaluated as Q (Sigma .* (R^T w) + W w_buf);
  /// cost O((m + ell) k), no columns are materialized.
  Eigen::VectorXd weighted_sum(const Eigen::VectorXd& w) const {
    if (w.size() != columns()) throw std::invalid_argument("IncrementalSvd::weighted_sum: length mismatch");
    if (k_ == 0) return Eigen::VectorXd::Zero(m_);
    Eigen::VectorXd coeff = sigma_.cwiseProduct(R_.transpose() * w.segment(zero_lead_, ell_));
    if (s_ > 0) coeff += W_.leftCols(s_) * w.tail(s_);
    return Q_ * coeff;
  }

  long long floats_stored() const {
    return static_cast<long long>(m_) * k_ + k_ + static_cast<long long>(ell_) * k_ +
           static_cast<long long>(k_) * s_;
  }

  Report report() const {
    Report r;
    r.rank = k_;
    r.truncations = T_sv_;
    r.column_error_bound = (T_sv_ + 1) * tol_;
    r.floats_stored = floats_stored();
    r.floats_uncompressed = static_cast<long long>(m_) * columns();
    return r;
  }

  double orthogonality_error_Q() const {
    if (k_ == 0) return 0;
    return (Q_.transpose() * Q_ - Eigen::MatrixXd::Identity(k_, k_)).cwiseAbs().maxCoeff();
  }

  double orthogonality_error_R() const {
    if (k_ == 0) return 0;
    return (R_.transpose() * R_ - Eigen::MatrixXd::Identity(k_, k_)).cwiseAbs().maxCoeff();
  }

  /// Plain-text state dump: dimensions, then Sigma, Q, R, W (row-major).
  void dump(std::ostream& os) const {
    os << m_ << ' ' << k_ << ' ' << ell_ << ' ' << s_ << ' ' << zero_lead_ << ' ' << T_sv_ << '\n';
    os.precision(17);
    for (int i = 0; i < k_; ++i) os << sigma_[i] << (i + 1 < k_ ? ' ' : '\n');
    auto put = [&os](const Eigen::MatrixXd& M) {
      for (Eigen::Index r = 0; r < M.rows(); ++r) {
        for (Eigen::Index c = 0; c < M.cols(); ++c) os << M(r, c) << (c + 1 < M.cols() ? ' ' : '\n');
      }
    };
    put(Q_);
    put(R_);
    put(W_.leftCols(s_));
  }

 private:
  // Projection coefficients and residual, with one extra orthogonalization
  // pass when the residual keeps a visible component along q1. The 1e-14
  // trigger is measured against the residual's own norm: the leftover
  // Q-component after one pass is machine precision relative to the input
  // column, which is far from negligible once the residual is small, and the
  // rank-growth step divides e by that small norm.
  double project(const Eigen::VectorXd& u, Eigen::VectorXd& d, Eigen::VectorXd& e) const {
    d = Q_.transpose() * u;
    e = u - Q_ * d;
    if (std::abs(e.dot(Q_.col(0))) > reorth_tol_ * e.norm()) {
      const Eigen::VectorXd delta = Q_.transpose() * e;
      e -= Q_ * delta;
      d += delta;
    }
    return e.norm();
  }

  void initialize(const Eigen::VectorXd& u, double nrm) {
    k_ = 1;
    Q_ = u / nrm;
    sigma_ = Eigen::VectorXd::Constant(1, nrm);
    R_ = Eigen::MatrixXd::Ones(1, 1);
    ell_ = 1;
    s_ = 0;
    W_.resize(1, buffer_max_);
  }

  // Deterministic sign convention: first nonzero entry of every left singular
  // vector is positive.
  static void fix_signs(Eigen::MatrixXd& U, Eigen::MatrixXd& V) {
    for (Eigen::Index c = 0; c < U.cols(); ++c) {
      double lead = 0;
      for (Eigen::Index r = 0; r < U.rows(); ++r) {
        if (U(r, c) != 0.0) {
          lead = U(r, c);
          break;
        }
      }
      if (lead < 0) {
        U.col(c) = -U.col(c);
        if (c < V.cols()) V.col(c) = -V.col(c);
      }
    }
  }

  void grow_rank(const Eigen::VectorXd& d, const Eigen::VectorXd& e_unit, double p) {
    Eigen::MatrixXd Ybar(k_ + 1, k_ + 1);
    Ybar.setZero();
    Ybar.topLeftCorner(k_, k_).diagonal() = sigma_;
    Ybar.topRightCorner(k_, 1) = d;
    Ybar(k_, k_) = p;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Ybar, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::MatrixXd U = svd.matrixU();
    Eigen::MatrixXd V = svd.matrixV();
    fix_signs(U, V);
    const Eigen::VectorXd sv = svd.singularValues();

    RankEvent ev;
    ev.sigma_before = sigma_;
    ev.p = p;
    ev.sigma_after = sv;

    Eigen::MatrixXd Qext(m_, k_ + 1);
    Qext.leftCols(k_) = Q_;
    Qext.col(k_) = e_unit;
    Eigen::MatrixXd Rext(ell_ + 1, k_ + 1);
    Rext.setZero();
    Rext.topLeftCorner(ell_, k_) = R_;
    Rext(ell_, k_) = 1.0;

    // Only the last singular value of Ybar can fall below tol.
    if (sv[k_] < tol_) {
      ev.truncated = true;
      ++T_sv_;
      Q_ = (Qext * U.leftCols(k_)).eval();
      sigma_ = sv.head(k_);
      R_ = (Rext * V.leftCols(k_)).eval();
    } else {
      Q_ = (Qext * U).eval();
      sigma_ = sv;
      R_ = (Rext * V).eval();
      k_ += 1;
      W_.resize(k_, buffer_max_);
    }
    ell_ += 1;
    events_.push_back(std::move(ev));
  }

  int m_ = 0;
  int k_ = 0;
  int ell_ = 0;
  int s_ = 0;
  int zero_lead_ = 0;
  int T_sv_ = 0;
  double tol_;
  double reorth_tol_ = 1e-14;
  int buffer_max_;
  Eigen::MatrixXd Q_, R_, W_;
  Eigen::VectorXd sigma_;
  std::vector<RankEvent> events_;
};

}  // namespace oldroyd
