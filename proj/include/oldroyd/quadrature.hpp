#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace oldroyd {

/// Quadrature rule on the reference triangle {x,y >= 0, x+y <= 1}.
/// Points are stored in barycentric coordinates (l1,l2,l3) with
/// l1 = 1-x-y, l2 = x, l3 = y; weights sum to the reference area 1/2.
/// A physical integral is area(T)/area(ref) * sum_q w_q f(x_q).
struct QuadratureRule {
  struct Point {
    std::array<double, 3> bary;
    double w;
  };
  std::vector<Point> points;
  int degree = 0;

  static QuadratureRule triangle(int degree);
};

namespace detail {

// Gauss-Legendre nodes/weights on [0,1], computed by Newton iteration on P_n.
inline void gauss_legendre_01(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    // initial guess on [-1,1]
    double t = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      double dp = n * (t * p1 - p0) / (t * t - 1.0);
      double dt = p1 / dp;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    double p0 = 1.0, p1 = t;
    for (int k = 2; k <= n; ++k) {
      double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    double dp = n * (t * p1 - p0) / (t * t - 1.0);
    x[i] = 0.5 * (t + 1.0);
    w[i] = 1.0 / ((1.0 - t * t) * dp * dp);  // = 0.5 * 2/((1-t^2) P'^2)
  }
}

}  // namespace detail

inline QuadratureRule QuadratureRule::triangle(int degree) {
  QuadratureRule rule;
  if (degree <= 6) {
    // Symmetric 12-point rule, exact through degree 6. Weights below are
    // normalized to sum 1 and rescaled to reference area 1/2.
    struct Group {
      double w, a, b, c;
      bool six;
    };
    const Group groups[] = {
        {0.050844906370207, 0.873821971016996, 0.063089014491502, 0.063089014491502, false},
        {0.116786275726379, 0.501426509658179, 0.249286745170910, 0.249286745170910, false},
        {0.082851075618374, 0.636502499121399, 0.310352451033784, 0.053145049844817, true},
    };
    for (const auto& g : groups) {
      const double w = 0.5 * g.w;
      if (!g.six) {
        rule.points.push_back({{g.a, g.b, g.c}, w});
        rule.points.push_back({{g.b, g.a, g.c}, w});
        rule.points.push_back({{g.b, g.c, g.a}, w});
      } else {
        rule.points.push_back({{g.a, g.b, g.c}, w});
        rule.points.push_back({{g.a, g.c, g.b}, w});
        rule.points.push_back({{g.b, g.a, g.c}, w});
        rule.points.push_back({{g.b, g.c, g.a}, w});
        rule.points.push_back({{g.c, g.a, g.b}, w});
        rule.points.push_back({{g.c, g.b, g.a}, w});
      }
    }
    rule.degree = 6;
    return rule;
  }
  if (degree <= 10) {
    // Collapsed-square Gauss rule: x = u, y = v(1-u), Jacobian (1-u).
    // With 6x6 Gauss points this integrates total degree 10 exactly.
    std::vector<double> gx, gw;
    detail::gauss_legendre_01(6, gx, gw);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) {
        const double u = gx[i], v = gx[j];
        const double x = u, y = v * (1.0 - u);
        rule.points.push_back({{1.0 - x - y, x, y}, gw[i] * gw[j] * (1.0 - u)});
      }
    }
    rule.degree = 10;
    return rule;
  }
  throw std::invalid_argument("QuadratureRule::triangle: unsupported degree");
}

}  // namespace oldroyd
