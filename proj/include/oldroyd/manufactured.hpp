#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "oldroyd/assembly.hpp"
#include "oldroyd/kernels.hpp"

namespace oldroyd {

using ScalarField = std::function<double(double, double, double)>;

/// Closed-form exact solution with the derivative fields needed to build the
/// forcing term and measure errors.
struct ExactSolution {
  VectorField u;
  ScalarField p;
  VectorField u_t;
  VectorField lap_u;
  std::function<std::array<double, 2>(double, double, double)> grad_p;
  VectorField convection;  // (u . grad) u
  int example = 0;
  double alpha = 0;
  double lambda = 0;
};

namespace detail {

// 1D polynomial factors shared by both manufactured solutions.
inline double Px(double x) { return x * x * (x - 1) * (x - 1); }
inline double dPx(double x) { return 2 * x * (x - 1) * (2 * x - 1); }
inline double ddPx(double x) { return 2 * (6 * x * x - 6 * x + 1); }
inline double Qy(double y) { return y * (y - 1) * (2 * y - 1); }
inline double dQy(double y) { return 6 * y * y - 6 * y + 1; }
inline double ddQy(double y) { return 12 * y - 6; }
inline double Rx(double x) { return x * (x - 1) * (2 * x - 1); }
inline double dRx(double x) { return 6 * x * x - 6 * x + 1; }
inline double ddRx(double x) { return 12 * x - 6; }
inline double Sy(double y) { return y * y * (y - 1) * (y - 1); }
inline double dSy(double y) { return 2 * y * (y - 1) * (2 * y - 1); }
inline double ddSy(double y) { return 2 * (6 * y * y - 6 * y + 1); }

struct VelGrad {
  double u1, u2, u1x, u1y, u2x, u2y;
};

}  // namespace detail

/// u1 = 5t x^2(x-1)^2 y(y-1)(2y-1) + 4 sin^2(pi x) sin(pi y) cos(pi y),
/// u2 = -5t x(x-1)(2x-1) y^2(y-1)^2 - 4 sin(pi x) cos(pi x) sin^2(pi y),
/// p  = 10 (2x-1)(2y-1) cos t.
inline ExactSolution exact_example1() {
  using namespace detail;
  const double pi = M_PI;
  auto vg = [pi](double x, double y, double t) {
    VelGrad g;
    const double s2x = std::sin(pi * x) * std::sin(pi * x);
    const double s2y = std::sin(pi * y) * std::sin(pi * y);
    const double sin2x = std::sin(2 * pi * x), sin2y = std::sin(2 * pi * y);
    const double cos2x = std::cos(2 * pi * x), cos2y = std::cos(2 * pi * y);
    g.u1 = 5 * t * Px(x) * Qy(y) + 2 * s2x * sin2y;
    g.u2 = -5 * t * Rx(x) * Sy(y) - 2 * sin2x * s2y;
    g.u1x = 5 * t * dPx(x) * Qy(y) + 2 * pi * sin2x * sin2y;
    g.u1y = 5 * t * Px(x) * dQy(y) + 4 * pi * s2x * cos2y;
    g.u2x = -5 * t * dRx(x) * Sy(y) - 4 * pi * cos2x * s2y;
    g.u2y = -5 * t * Rx(x) * dSy(y) - 2 * pi * sin2x * sin2y;
    return g;
  };
  ExactSolution ex;
  ex.example = 1;
  ex.u = [vg](double x, double y, double t) {
    const auto g = vg(x, y, t);
    return std::array<double, 2>{g.u1, g.u2};
  };
  ex.u_t = [](double x, double y, double) {
    return std::array<double, 2>{5 * Px(x) * Qy(y), -5 * Rx(x) * Sy(y)};
  };
  ex.lap_u = [pi](double x, double y, double t) {
    const double s2x = std::sin(pi * x) * std::sin(pi * x);
    const double s2y = std::sin(pi * y) * std::sin(pi * y);
    const double sin2x = std::sin(2 * pi * x), sin2y = std::sin(2 * pi * y);
    const double cos2x = std::cos(2 * pi * x), cos2y = std::cos(2 * pi * y);
    const double l1 = 5 * t * (ddPx(x) * Qy(y) + Px(x) * ddQy(y)) +
                      4 * pi * pi * cos2x * sin2y - 8 * pi * pi * s2x * sin2y;
    const double l2 = -5 * t * (ddRx(x) * Sy(y) + Rx(x) * ddSy(y)) +
                      8 * pi * pi * sin2x * s2y - 4 * pi * pi * sin2x * cos2y;
    return std::array<double, 2>{l1, l2};
  };
  ex.p = [](double x, double y, double t) { return 10 * (2 * x - 1) * (2 * y - 1) * std::cos(t); };
  ex.grad_p = [](double x, double y, double t) {
    return std::array<double, 2>{20 * (2 * y - 1) * std::cos(t), 20 * (2 * x - 1) * std::cos(t)};
  };
  ex.convection = [vg](double x, double y, double t) {
    const auto g = vg(x, y, t);
    return std::array<double, 2>{g.u1 * g.u1x + g.u2 * g.u1y, g.u1 * g.u2x + g.u2 * g.u2y};
  };
  return ex;
}

/// u = (-10 P Q, 10 R S) * t^(2+alpha) e^(-lambda t) / Gamma(3+alpha),
/// p as in the first manufactured solution.
inline ExactSolution exact_example2(double alpha, double lambda) {
  using namespace detail;
  const double g3a = gamma_pos(3.0 + alpha);
  auto tau = [=](double t) { return std::pow(t, 2 + alpha) * std::exp(-lambda * t) / g3a; };
  auto dtau = [=](double t) {
    if (t == 0) return 0.0;
    return std::exp(-lambda * t) * ((2 + alpha) * std::pow(t, 1 + alpha) - lambda * std::pow(t, 2 + alpha)) /
           g3a;
  };
  auto vg = [=](double x, double y, double t) {
    VelGrad g;
    const double f = tau(t);
    g.u1 = -10 * Px(x) * Qy(y) * f;
    g.u2 = 10 * Rx(x) * Sy(y) * f;
    g.u1x = -10 * dPx(x) * Qy(y) * f;
    g.u1y = -10 * Px(x) * dQy(y) * f;
    g.u2x = 10 * dRx(x) * Sy(y) * f;
    g.u2y = 10 * Rx(x) * dSy(y) * f;
    return g;
  };
  ExactSolution ex;
  ex.example = 2;
  ex.alpha = alpha;
  ex.lambda = lambda;
  ex.u = [vg](double x, double y, double t) {
    const auto g = vg(x, y, t);
    return std::array<double, 2>{g.u1, g.u2};
  };
  ex.u_t = [=](double x, double y, double t) {
    const double f = dtau(t);
    return std::array<double, 2>{-10 * Px(x) * Qy(y) * f, 10 * Rx(x) * Sy(y) * f};
  };
  ex.lap_u = [=](double x, double y, double t) {
    const double f = tau(t);
    return std::array<double, 2>{-10 * (ddPx(x) * Qy(y) + Px(x) * ddQy(y)) * f,
                                 10 * (ddRx(x) * Sy(y) + Rx(x) * ddSy(y)) * f};
  };
  ex.p = [](double x, double y, double t) { return 10 * (2 * x - 1) * (2 * y - 1) * std::cos(t); };
  ex.grad_p = [](double x, double y, double t) {
    return std::array<double, 2>{20 * (2 * y - 1) * std::cos(t), 20 * (2 * x - 1) * std::cos(t)};
  };
  ex.convection = [vg](double x, double y, double t) {
    const auto g = vg(x, y, t);
    return std::array<double, 2>{g.u1 * g.u1x + g.u2 * g.u1y, g.u1 * g.u2x + g.u2 * g.u2y};
  };
  return ex;
}

/// Spatial Laplacian factor of the second manufactured velocity (without the
/// time factor); used by the closed-form memory term.
inline std::array<double, 2> example2_lap_spatial(double x, double y) {
  using namespace detail;
  return {-10 * (ddPx(x) * Qy(y) + Px(x) * ddQy(y)), 10 * (ddRx(x) * Sy(y) + Rx(x) * ddSy(y))};
}

/// Forcing f = u_t + Au + int_0^t K(t-s) Bu(s) ds + (u.grad)u + grad p for
/// the manufactured problems. A = -a_scale*Lap, B = -Lap.
///
/// Manufactured solution 1: the memory integral splits into
/// Lap(g)*I1(t) + Lap(w)*I0(t); I0, I1 are evaluated by adaptive quadrature
/// (closed forms exist and are used as a cross-check in the tests).
/// Manufactured solution 2: the tempered-fractional convolution of the time
/// factor has the closed form e^(-lambda t) t^(2+2alpha) / Gamma(3+2alpha).
class Forcing {
 public:
  Forcing(const ExactSolution& ex, const KernelSpec& kernel, double a_scale)
      : ex_(&ex), kernel_(kernel), a_scale_(a_scale) {}

  std::array<double, 2> operator()(double x, double y, double t) const {
    const auto ut = ex_->u_t(x, y, t);
    const auto lap = ex_->lap_u(x, y, t);
    const auto conv = ex_->convection(x, y, t);
    const auto gp = ex_->grad_p(x, y, t);
    const auto mem = memory_term(x, y, t);
    return {ut[0] - a_scale_ * lap[0] + mem[0] + conv[0] + gp[0],
            ut[1] - a_scale_ * lap[1] + mem[1] + conv[1] + gp[1]};
  }

  /// The term int_0^t K(t-s) (-Lap u)(s) ds.
  std::array<double, 2> memory_term(double x, double y, double t) const {
    if (t <= 0) return {0.0, 0.0};
    if (ex_->example == 1) {
      update_cache(t);
      // u = t*g + w;  Lap u(s) = s*Lap g + Lap w
      const auto lap1 = ex_->lap_u(x, y, 1.0);
      const auto lap0 = ex_->lap_u(x, y, 0.0);
      const std::array<double, 2> lapg = {lap1[0] - lap0[0], lap1[1] - lap0[1]};
      return {-(lapg[0] * I1_ + lap0[0] * I0_), -(lapg[1] * I1_ + lap0[1] * I0_)};
    }
    const double a = ex_->alpha, l = ex_->lambda;
    const double factor = std::exp(-l * t) * std::pow(t, 2 + 2 * a) / gamma_pos(3 + 2 * a);
    const auto lap = example2_lap_spatial(x, y);
    return {-lap[0] * factor, -lap[1] * factor};
  }

 private:
  void update_cache(double t) const {
    if (t == cached_t_) return;
    const auto& k = std::get<NonsingularKernel>(kernel_);
    I0_ = integrate_adaptive([&](double s) { return k.K(s); }, 0.0, t, 1e-12);
    I1_ = integrate_adaptive([&](double s) { return k.K(s) * (t - s); }, 0.0, t, 1e-12);
    cached_t_ = t;
  }

  const ExactSolution* ex_;
  KernelSpec kernel_;
  double a_scale_;
  mutable double cached_t_ = -1, I0_ = 0, I1_ = 0;
};

/// Closed forms of I0 = int_0^t K and I1 = int_0^t K(tau)(t - tau) dtau for
/// K(t) = c ln(1+t); used as quadrature cross-checks.
inline double log_kernel_I0(double c, double t) { return c * ((1 + t) * std::log(1 + t) - t); }
inline double log_kernel_I1(double c, double t) {
  return c * (0.5 * (1 + t) * (1 + t) * std::log(1 + t) - 0.75 * t * t - 0.5 * t);
}

struct ErrorNorms {
  double vel_l2 = 0;
  double pres_l2 = 0;
};

/// L2 errors by degree-10 quadrature of the pointwise difference per element;
/// the pressure error compares zero-mean representatives of both fields.
inline ErrorNorms error_norms(const MixedSpace& sp, const Vec& u_coeffs, const Vec* p_coeffs,
                              const ExactSolution& ex, double t) {
  const auto rule = QuadratureRule::triangle(10);
  const TriMesh& mesh = *sp.mesh;
  ErrorNorms out;
  double vel2 = 0;
  double mean_h = 0, mean_ex = 0, area = 0;
  if (p_coeffs) {
    for (int tri = 0; tri < mesh.n_triangles(); ++tri) {
      const double a = mesh.signed_area(tri);
      area += a;
      const auto& tv = mesh.triangles[tri];
      mean_h += a / 3.0 * ((*p_coeffs)[tv[0]] + (*p_coeffs)[tv[1]] + (*p_coeffs)[tv[2]]);
      for (const auto& q : rule.points) {
        const auto p = detail::phys_point(mesh, tri, q.bary);
        mean_ex += 2.0 * a * q.w * ex.p(p[0], p[1], t);
      }
    }
    mean_h /= area;
    mean_ex /= area;
  }
  double pres2 = 0;
  for (int tri = 0; tri < mesh.n_triangles(); ++tri) {
    const double a = mesh.signed_area(tri);
    const auto& tv = mesh.triangles[tri];
    for (const auto& q : rule.points) {
      const auto p = detail::phys_point(mesh, tri, q.bary);
      const auto uh = eval_velocity(sp, u_coeffs, tri, q.bary);
      const auto ue = ex.u(p[0], p[1], t);
      const double dx = uh[0] - ue[0], dy = uh[1] - ue[1];
      vel2 += 2.0 * a * q.w * (dx * dx + dy * dy);
      if (p_coeffs) {
        const double ph = q.bary[0] * (*p_coeffs)[tv[0]] + q.bary[1] * (*p_coeffs)[tv[1]] +
                          q.bary[2] * (*p_coeffs)[tv[2]];
        const double dp = (ph - mean_h) - (ex.p(p[0], p[1], t) - mean_ex);
        pres2 += 2.0 * a * q.w * dp * dp;
      }
    }
  }
  out.vel_l2 = std::sqrt(vel2);
  out.pres_l2 = std::sqrt(pres2);
  return out;
}

}  // namespace oldroyd
