#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace oldroyd {

/// Gamma function for positive arguments (Lanczos, g=7, 9 coefficients),
/// accurate to ~1e-14 relative.
inline double gamma_pos(double z) {
  static const double coef[9] = {0.99999999999980993,     676.5203681218851,   -1259.1392167224028,
                                 771.32342877765313,      -176.61502916214059, 12.507343278686905,
                                 -0.13857109526572012,    9.9843695780195716e-6,
                                 1.5056327351493116e-7};
  if (z <= 0) throw std::invalid_argument("gamma_pos: argument must be positive");
  if (z < 0.5) {
    // reflection formula
    return M_PI / (std::sin(M_PI * z) * gamma_pos(1.0 - z));
  }
  z -= 1.0;
  double x = coef[0];
  for (int i = 1; i < 9; ++i) x += coef[i] / (z + i);
  const double t = z + 7.5;
  return std::sqrt(2.0 * M_PI) * std::pow(t, z + 0.5) * std::exp(-t) * x;
}

/// Memory-kernel description: either a nonsingular callable with its value at
/// zero and total mass on [0,T], or the tempered weakly singular family
/// exp(-lambda t) t^(alpha-1) / Gamma(alpha).
struct NonsingularKernel {
  std::function<double(double)> K;
  double K_at_0 = 0;
  double K0 = 0;  // integral of K over [0,T]
};

struct TemperedFractionalKernel {
  double alpha = 0.5;
  double lambda = 0.0;
};

using KernelSpec = std::variant<NonsingularKernel, TemperedFractionalKernel>;

/// Midpoint-rule history weights for the nonsingular scheme at step n:
/// w_j = dt*K(tbar_n - tbar_j) for j=1..n-1 and w_n = dt/2*K(0);
/// returned as an array of length n (index j-1 holds w_j).
inline std::vector<double> midpoint_weights(const NonsingularKernel& k, int n, double dt) {
  if (n < 1) throw std::invalid_argument("midpoint_weights: n must be >= 1");
  std::vector<double> w(n);
  for (int j = 1; j <= n - 1; ++j) w[j - 1] = dt * k.K((n - j) * dt);
  w[n - 1] = 0.5 * dt * k.K_at_0;
  return w;
}

/// sigma_s = Gamma(alpha+s)/(Gamma(alpha) s!) via the stable recurrence.
inline std::vector<double> cq_sigma(double alpha, int s_max) {
  std::vector<double> s(s_max + 1);
  s[0] = 1.0;
  for (int i = 1; i <= s_max; ++i) s[i] = s[i - 1] * (alpha + i - 1) / i;
  return s;
}

/// beta_s = Gamma(alpha+1)/(Gamma(alpha-s+1) s!) via the stable recurrence.
inline std::vector<double> cq_beta(double alpha, int s_max) {
  std::vector<double> b(s_max + 1);
  b[0] = 1.0;
  for (int i = 1; i <= s_max; ++i) b[i] = b[i - 1] * (alpha - i + 1) / i;
  return b;
}

/// Trapezoidal convolution-quadrature weights for the tempered fractional
/// kernel, with the starting correction rho.
struct CqWeights {
  std::vector<double> omega;  // omega_n^{(alpha,lambda)}, n = 0..N
  std::vector<double> rho;    // rho_n^{(alpha,lambda)},   n = 0..N
  double alpha = 0.5;
  double lambda = 0.0;
  double dt = 0.0;
};

inline CqWeights cq_build(double alpha, double lambda, int N, double dt) {
  if (N < 1) throw std::invalid_argument("cq_build: N must be >= 1");
  if (alpha <= 0.0 || alpha >= 1.0) throw std::invalid_argument("cq_build: alpha must be in (0,1)");
  if (lambda < 0.0) throw std::invalid_argument("cq_build: lambda must be >= 0");
  CqWeights w;
  w.alpha = alpha;
  w.lambda = lambda;
  w.dt = dt;
  const auto sig = cq_sigma(alpha, N);
  const auto bet = cq_beta(alpha, N);
  const double scale = std::pow(2.0, -alpha);
  std::vector<double> omega0(N + 1);
  for (int n = 0; n <= N; ++n) {
    double s = 0;
    for (int k = 0; k <= n; ++k) s += sig[k] * bet[n - k];
    omega0[n] = scale * s;
  }
  w.omega.resize(N + 1);
  w.rho.resize(N + 1);
  const double g1 = gamma_pos(alpha + 1.0);
  const double dta = std::pow(dt, alpha);
  double omega0_partial = 0;  // sum_{p<=n} omega_p^{(alpha,0)}
  for (int n = 0; n <= N; ++n) {
    const double tn = n * dt;
    const double damp = std::exp(-lambda * tn);
    w.omega[n] = damp * omega0[n];
    omega0_partial += omega0[n];
    // exp(-lambda(t_n-t_p)) omega_p^{(alpha,lambda)} = exp(-lambda t_n) omega_p^{(alpha,0)}
    w.rho[n] = damp * (std::pow(tn, alpha) / g1 - dta * omega0_partial);
  }
  return w;
}

/// Q_n = dt^alpha sum_{p=0}^{n} omega_p u^{n-p} + rho_n u0, with history
/// columns provided by a callable.
template <typename ColumnProvider>
Eigen::VectorXd cq_apply(const CqWeights& w, ColumnProvider&& column, int n,
                         const Eigen::VectorXd& u0) {
  if (n < 0 || n >= static_cast<int>(w.omega.size())) {
    throw std::out_of_range("cq_apply: step index outside built weights");
  }
  const double dta = std::pow(w.dt, w.alpha);
  Eigen::VectorXd out = w.rho[n] * u0;
  for (int p = 0; p <= n; ++p) out += dta * w.omega[p] * column(n - p);
  return out;
}

namespace detail {

// Adaptive Gauss-Kronrod (G7,K15) integration on [a,b] to absolute tolerance.
struct GK15 {
  // Kronrod nodes on [0,1] (positive half) and weights; Gauss subset marked.
  static void eval(const std::function<double(double)>& f, double a, double b, double& I,
                   double& err) {
    static const double xk[8] = {0.991455371120813, 0.949107912342759, 0.864864423359769,
                                 0.741531185599394, 0.586087235467691, 0.405845151377397,
                                 0.207784955007898, 0.0};
    static const double wk[8] = {0.022935322010529, 0.063092092629979, 0.104790010322250,
                                 0.140653259715525, 0.169004726639267, 0.190350578064785,
                                 0.204432940075298, 0.209482141084728};
    static const double wg[4] = {0.129484966168870, 0.279705391489277, 0.381830050505119,
                                 0.417959183673469};
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double resk = 0, resg = 0;
    for (int i = 0; i < 8; ++i) {
      const double dx = h * xk[i];
      const double f1 = f(c - dx);
      const double f2 = (i == 7) ? f1 : f(c + dx);
      const double fsum = (i == 7) ? f1 : (f1 + f2);
      resk += wk[i] * fsum;
      if (i % 2 == 1) resg += wg[i / 2] * fsum;  // Gauss nodes are the odd Kronrod indices
    }
    I = resk * h;
    err = std::abs((resk - resg) * h);
  }
};

}  // namespace detail

/// Adaptive quadrature of f on [a,b] to the given absolute tolerance.
inline double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                                 double abs_tol, int max_depth = 40) {
  struct Seg {
    double a, b, tol;
    int depth;
  };
  double total = 0, leftover = 0;
  std::vector<Seg> stack{{a, b, abs_tol, 0}};
  while (!stack.empty()) {
    const Seg s = stack.back();
    stack.pop_back();
    double I, err;
    detail::GK15::eval(f, s.a, s.b, I, err);
    if (err <= s.tol || s.depth >= max_depth) {
      total += I;
      if (s.depth >= max_depth) leftover += err;
      continue;
    }
    const double m = 0.5 * (s.a + s.b);
    stack.push_back({s.a, m, 0.5 * s.tol, s.depth + 1});
    stack.push_back({m, s.b, 0.5 * s.tol, s.depth + 1});
  }
  if (leftover > 100.0 * abs_tol) {
    throw std::runtime_error("integrate_adaptive: failed to converge");
  }
  return total;
}

/// Reference value of int_0^t K(t-s) phi(s) ds for the tempered fractional
/// kernel; the endpoint singularity is removed by s = t - tau^(1/alpha).
inline double tempered_convolution_reference(double alpha, double lambda,
                                             const std::function<double(double)>& phi, double t,
                                             double abs_tol = 1e-12) {
  if (t <= 0) return 0.0;
  const double ga = gamma_pos(alpha);
  auto g = [&](double tau) {
    const double u = std::pow(tau, 1.0 / alpha);
    return std::exp(-lambda * u) * phi(t - u) / (alpha * ga);
  };
  return integrate_adaptive(g, 0.0, std::pow(t, alpha), abs_tol);
}

/// Max over n of |reference - Q_n(phi)| for a smooth scalar function.
inline double quadrature_error_probe(double alpha, double lambda,
                                     const std::function<double(double)>& phi, int N, double dt) {
  const auto w = cq_build(alpha, lambda, N, dt);
  const double dta = std::pow(dt, alpha);
  std::vector<double> vals(N + 1);
  for (int i = 0; i <= N; ++i) vals[i] = phi(i * dt);
  double max_err = 0;
  for (int n = 1; n <= N; ++n) {
    double q = w.rho[n] * vals[0];
    for (int p = 0; p <= n; ++p) q += dta * w.omega[p] * vals[n - p];
    const double ref = tempered_convolution_reference(alpha, lambda, phi, n * dt);
    max_err = std::max(max_err, std::abs(ref - q));
  }
  return max_err;
}

}  // namespace oldroyd
