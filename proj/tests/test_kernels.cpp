#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

#include "oldroyd/kernels.hpp"

using namespace oldroyd;

TEST_CASE("gamma function", "[kernels]") {
  CHECK(gamma_pos(0.5) == Catch::Approx(std::sqrt(M_PI)).epsilon(1e-13));
  CHECK(gamma_pos(1.0) == Catch::Approx(1.0).epsilon(1e-13));
  CHECK(gamma_pos(5.0) == Catch::Approx(24.0).epsilon(1e-13));
  for (double z : {0.1, 0.25, 0.75, 1.5, 3.5, 7.2}) {
    CHECK(gamma_pos(z) == Catch::Approx(std::tgamma(z)).epsilon(1e-13));
  }
}

TEST_CASE("midpoint history weights", "[kernels]") {
  NonsingularKernel k;
  k.K = [](double t) { return 25.0 * std::log1p(t); };
  k.K_at_0 = 0.0;
  k.K0 = 0.0;

  SECTION("K(0)=0 kills the implicit weight") {
    const auto w = midpoint_weights(k, 5, 0.1);
    REQUIRE(w.size() == 5);
    CHECK(w[4] == 0.0);
  }

  SECTION("n=2 weight value") {
    const auto w = midpoint_weights(k, 2, 0.1);
    REQUIRE(w.size() == 2);
    CHECK(w[0] == Catch::Approx(0.1 * 25.0 * std::log(1.1)).epsilon(1e-14));
  }

  SECTION("n=1 has only the implicit entry") {
    NonsingularKernel e;
    e.K = [](double t) { return std::exp(-t); };
    e.K_at_0 = 1.0;
    e.K0 = 0.0;
    const auto w = midpoint_weights(e, 1, 0.25);
    REQUIRE(w.size() == 1);
    CHECK(w[0] == Catch::Approx(0.5 * 0.25).epsilon(1e-14));
  }
}

TEST_CASE("cq sigma and beta recurrences", "[kernels]") {
  const auto s = cq_sigma(0.5, 4);
  const auto b = cq_beta(0.5, 4);
  CHECK(s[0] == 1.0);
  CHECK(b[0] == 1.0);
  CHECK(s[1] == Catch::Approx(0.5));
  CHECK(b[1] == Catch::Approx(0.5));
  CHECK(s[2] == Catch::Approx(0.375).epsilon(1e-14));
  CHECK(b[2] == Catch::Approx(-0.125).epsilon(1e-14));
  // direct product formulas as oracle
  for (double alpha : {0.25, 0.7}) {
    const auto sig = cq_sigma(alpha, 6);
    const auto bet = cq_beta(alpha, 6);
    double sp = 1, bp = 1;
    for (int i = 1; i <= 6; ++i) {
      sp *= (alpha + i - 1) / i;
      bp *= (alpha - i + 1) / i;
      CHECK(sig[i] == Catch::Approx(sp).epsilon(1e-13));
      CHECK(bet[i] == Catch::Approx(bp).epsilon(1e-13));
    }
  }
  // |beta_s| strictly decreasing for s >= 2
  const auto bb = cq_beta(0.3, 12);
  for (int i = 3; i <= 12; ++i) CHECK(std::abs(bb[i]) < std::abs(bb[i - 1]));
}

TEST_CASE("cq weights", "[kernels]") {
  const double alpha = 0.5, dt = 0.1;
  const auto w = cq_build(alpha, 0.0, 16, dt);

  CHECK(w.omega[0] == Catch::Approx(std::pow(2.0, -alpha)).epsilon(1e-14));
  CHECK(w.omega[1] == Catch::Approx(std::pow(2.0, 1 - alpha) * alpha).epsilon(1e-14));
  CHECK(w.rho[0] == Catch::Approx(-std::pow(dt, alpha) * std::pow(2.0, -alpha)).epsilon(1e-14));

  SECTION("lambda = 0 equals the untempered weights") {
    const auto wl = cq_build(alpha, 0.5, 16, dt);
    for (int n = 0; n <= 16; ++n) {
      CHECK(wl.omega[n] == Catch::Approx(std::exp(-0.5 * n * dt) * w.omega[n]).margin(1e-15));
    }
  }

  SECTION("rho matches the literal formula") {
    for (double lambda : {0.0, 0.5, 2.0}) {
      const auto wt = cq_build(alpha, lambda, 32, dt);
      for (int n = 0; n <= 32; ++n) {
        double s = 0;
        for (int p = 0; p <= n; ++p) {
          s += std::exp(-lambda * (n - p) * dt) * wt.omega[p];
        }
        const double literal =
            std::exp(-lambda * n * dt) * std::pow(n * dt, alpha) / gamma_pos(alpha + 1) -
            std::pow(dt, alpha) * s;
        CHECK(wt.rho[n] == Catch::Approx(literal).margin(1e-14));
      }
    }
  }

  SECTION("omega_n decays like n^(alpha-1)") {
    for (double a : {0.25, 0.5, 0.75}) {
      const auto ww = cq_build(a, 0.0, 512, 1.0 / 512);
      const double limit = 1.0 / gamma_pos(a);
      for (int n = 16; n <= 512; n *= 2) {
        const double ratio = ww.omega[n] / std::pow(n, a - 1.0);
        CHECK(ratio > 0.5 * limit);
        CHECK(ratio < 2.0 * limit);
      }
    }
  }
}

TEST_CASE("cq_apply reproduces the quadrature", "[kernels]") {
  const double alpha = 0.5, dt = 0.05;
  const int N = 32;
  const auto w = cq_build(alpha, 0.0, N, dt);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(3);

  SECTION("zero history gives zero") {
    const auto q = cq_apply(w, [&](int) { return zero; }, 10, zero);
    CHECK(q.norm() == 0.0);
  }

  SECTION("n = 0 single term") {
    const auto q = cq_apply(w, [&](int) { return one; }, 0, one);
    const double want = std::pow(dt, alpha) * w.omega[0] + w.rho[0];
    CHECK(q[0] == Catch::Approx(want).margin(1e-15));
  }

  SECTION("constant history integrates the kernel exactly at lambda = 0") {
    for (int n : {1, 5, 17, 32}) {
      const auto q = cq_apply(w, [&](int) { return one; }, n, one);
      const double exact = std::pow(n * dt, alpha) / gamma_pos(alpha + 1);
      CHECK(q[0] == Catch::Approx(exact).margin(1e-12));
    }
  }
}

TEST_CASE("tempered convolution reference handles the endpoint singularity", "[kernels]") {
  // int_0^t K(t-s) ds = t^alpha/Gamma(1+alpha) for lambda = 0
  for (double alpha : {0.3, 0.5, 0.8}) {
    const double got = tempered_convolution_reference(alpha, 0.0, [](double) { return 1.0; }, 0.7);
    CHECK(got == Catch::Approx(std::pow(0.7, alpha) / gamma_pos(1 + alpha)).margin(1e-11));
  }
  // tempered power law: int K(t-s) s^2 e^(-l s) ds has the Beta closed form
  const double a = 0.5, l = 0.5, t = 1.0;
  auto phi = [l](double s) { return s * s * std::exp(-l * s); };
  const double got = tempered_convolution_reference(a, l, phi, t);
  const double want = std::exp(-l * t) * std::pow(t, 2 + a) * gamma_pos(3.0) / gamma_pos(3.0 + a);
  CHECK(got == Catch::Approx(want).margin(1e-11));
}

TEST_CASE("quadrature error probe shows order 2", "[kernels]") {
  auto phi = [](double t) { return t * t * std::exp(-0.5 * t); };  // phi'(0) = 0

  SECTION("zero function has zero error") {
    CHECK(quadrature_error_probe(0.5, 0.5, [](double) { return 0.0; }, 8, 0.125) <
          1e-13);
  }

  SECTION("dt halving quarters the error") {
    for (auto [alpha, lambda] : {std::pair{0.5, 0.5}, std::pair{0.25, 0.0}}) {
      double prev = -1;
      for (int N : {16, 32, 64}) {
        const double err = quadrature_error_probe(alpha, lambda, phi, N, 1.0 / N);
        if (prev > 0) {
          const double ratio = prev / err;
          CHECK(ratio > 3.5);
          CHECK(ratio < 4.5);
        }
        prev = err;
      }
    }
  }
}

TEST_CASE("cq weights are positive definite as a sequence", "[kernels]") {
  std::mt19937 rng(2024);
  std::normal_distribution<double> dist;
  const int N = 64, d = 6;
  for (double alpha : {0.25, 0.5, 0.75}) {
    for (double lambda : {0.0, 0.5}) {
      const auto w = cq_build(alpha, lambda, N, 1.0 / N);
      for (int rep = 0; rep < 10; ++rep) {
        std::vector<Eigen::VectorXd> v(N + 1, Eigen::VectorXd::Zero(d));
        double energy = 0;
        for (int i = 1; i <= N; ++i) {
          for (int j = 0; j < d; ++j) v[i][j] = dist(rng);
          energy += v[i].squaredNorm();
        }
        double quad = 0;
        for (int n = 1; n <= N; ++n) {
          for (int p = 0; p <= n; ++p) quad += w.omega[p] * v[n - p].dot(v[n]);
        }
        CHECK(quad >= -1e-12 * energy);
      }
    }
  }
}
