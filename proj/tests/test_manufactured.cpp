#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

#include "oldroyd/manufactured.hpp"

using namespace oldroyd;

namespace {

// central finite differences of the exact velocity
std::array<double, 2> fd_laplacian(const VectorField& u, double x, double y, double t, double h) {
  std::array<double, 2> out;
  for (int c = 0; c < 2; ++c) {
    const double uxx =
        (u(x + h, y, t)[c] - 2 * u(x, y, t)[c] + u(x - h, y, t)[c]) / (h * h);
    const double uyy =
        (u(x, y + h, t)[c] - 2 * u(x, y, t)[c] + u(x, y - h, t)[c]) / (h * h);
    out[c] = uxx + uyy;
  }
  return out;
}

double fd_divergence(const VectorField& u, double x, double y, double t, double h) {
  return (u(x + h, y, t)[0] - u(x - h, y, t)[0]) / (2 * h) +
         (u(x, y + h, t)[1] - u(x, y - h, t)[1]) / (2 * h);
}

NonsingularKernel log_kernel() {
  NonsingularKernel k;
  k.K = [](double t) { return 25.0 * std::log1p(t); };
  k.K_at_0 = 0.0;
  k.K0 = log_kernel_I0(25.0, 1.0);
  return k;
}

}  // namespace

TEST_CASE("manufactured solutions vanish on the boundary and are solenoidal", "[manufactured]") {
  const auto ex1 = exact_example1();
  const auto ex2 = exact_example2(0.5, 0.5);
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  for (double t : {0.0, 0.3, 1.0}) {
    for (int i = 0; i < 20; ++i) {
      const double s = unif(rng);
      for (const auto* ex : {&ex1, &ex2}) {
        for (auto [x, y] : {std::pair{0.0, s}, std::pair{1.0, s}, std::pair{s, 0.0},
                            std::pair{s, 1.0}}) {
          const auto v = ex->u(x, y, t);
          CHECK(std::abs(v[0]) < 1e-12);
          CHECK(std::abs(v[1]) < 1e-12);
        }
        const double x = unif(rng), y = unif(rng);
        CHECK(std::abs(fd_divergence(ex->u, x, y, t, 1e-6)) < 1e-7);
      }
    }
  }
}

TEST_CASE("first solution: known pointwise values", "[manufactured]") {
  const auto ex = exact_example1();
  // at t=0 only the stream-function part remains; u1(0.5,0.5,0) = 0
  CHECK(ex.u(0.5, 0.5, 0.0)[0] == Catch::Approx(0.0).margin(1e-15));
  // 4 sin^2(pi/4) sin(pi/4) cos(pi/4) = 4 * 1/2 * 1/2 = 1
  CHECK(ex.u(0.25, 0.25, 0.0)[0] == Catch::Approx(1.0).epsilon(1e-13));
  // second solution is identically zero at t=0
  const auto ex2 = exact_example2(0.5, 0.5);
  CHECK(ex2.u(0.3, 0.7, 0.0)[0] == 0.0);
  CHECK(ex2.u(0.3, 0.7, 0.0)[1] == 0.0);
}

TEST_CASE("hand-differentiated fields match finite differences", "[manufactured]") {
  const auto ex1 = exact_example1();
  const auto ex2 = exact_example2(0.5, 0.5);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> unif(0.1, 0.9);
  const double h = 1e-6;
  for (const auto* ex : {&ex1, &ex2}) {
    for (int i = 0; i < 12; ++i) {
      const double x = unif(rng), y = unif(rng), t = 0.4 + 0.5 * unif(rng);
      // second differences need a larger step to stay above roundoff
      const auto lap_fd = fd_laplacian(ex->u, x, y, t, 1e-4);
      const auto lap = ex->lap_u(x, y, t);
      CHECK(lap[0] == Catch::Approx(lap_fd[0]).margin(1e-4));
      CHECK(lap[1] == Catch::Approx(lap_fd[1]).margin(1e-4));

      const auto ut = ex->u_t(x, y, t);
      for (int c = 0; c < 2; ++c) {
        const double fd = (ex->u(x, y, t + h)[c] - ex->u(x, y, t - h)[c]) / (2 * h);
        CHECK(ut[c] == Catch::Approx(fd).margin(1e-6));
      }

      const auto gp = ex->grad_p(x, y, t);
      const double px = (ex->p(x + h, y, t) - ex->p(x - h, y, t)) / (2 * h);
      const double py = (ex->p(x, y + h, t) - ex->p(x, y - h, t)) / (2 * h);
      CHECK(gp[0] == Catch::Approx(px).margin(1e-6));
      CHECK(gp[1] == Catch::Approx(py).margin(1e-6));

      const auto conv = ex->convection(x, y, t);
      std::array<double, 2> conv_fd;
      const auto u0 = ex->u(x, y, t);
      for (int c = 0; c < 2; ++c) {
        const double dx = (ex->u(x + h, y, t)[c] - ex->u(x - h, y, t)[c]) / (2 * h);
        const double dy = (ex->u(x, y + h, t)[c] - ex->u(x, y - h, t)[c]) / (2 * h);
        conv_fd[c] = u0[0] * dx + u0[1] * dy;
      }
      CHECK(conv[0] == Catch::Approx(conv_fd[0]).margin(1e-5));
      CHECK(conv[1] == Catch::Approx(conv_fd[1]).margin(1e-5));
    }
  }
}

TEST_CASE("log-kernel moments: closed form vs adaptive quadrature", "[manufactured]") {
  const auto k = log_kernel();
  for (double t = 0.1; t <= 1.0; t += 0.1) {
    const double i0 = integrate_adaptive([&](double s) { return k.K(s); }, 0.0, t, 1e-12);
    const double i1 = integrate_adaptive([&](double s) { return k.K(s) * (t - s); }, 0.0, t, 1e-12);
    CHECK(std::abs(i0 - log_kernel_I0(25.0, t)) <= 1e-11);
    CHECK(std::abs(i1 - log_kernel_I1(25.0, t)) <= 1e-11);
  }
}

TEST_CASE("memory term of the first forcing matches the closed form", "[manufactured]") {
  const auto ex = exact_example1();
  const Forcing f(ex, KernelSpec(log_kernel()), 10.0);
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> unif(0.1, 0.9);
  for (double t : {0.2, 0.6, 1.0}) {
    for (int i = 0; i < 5; ++i) {
      const double x = unif(rng), y = unif(rng);
      const auto got = f.memory_term(x, y, t);
      const auto lap1 = ex.lap_u(x, y, 1.0);
      const auto lap0 = ex.lap_u(x, y, 0.0);
      for (int c = 0; c < 2; ++c) {
        const double want =
            -((lap1[c] - lap0[c]) * log_kernel_I1(25.0, t) + lap0[c] * log_kernel_I0(25.0, t));
        CHECK(got[c] == Catch::Approx(want).margin(1e-10));
      }
    }
  }
}

TEST_CASE("tempered-fractional memory term: identity vs singular quadrature", "[manufactured]") {
  const double alpha = 0.5, lambda = 0.5;
  const auto ex = exact_example2(alpha, lambda);
  const Forcing f(ex, KernelSpec(TemperedFractionalKernel{alpha, lambda}), 1.0);

  // the time-factor convolution at t=1 equals e^{-1/2}/Gamma(4) = e^{-1/2}/6
  const double scalar = tempered_convolution_reference(
      alpha, lambda,
      [&](double s) { return std::pow(s, 2 + alpha) * std::exp(-lambda * s) / gamma_pos(3 + alpha); },
      1.0, 1e-12);
  CHECK(scalar == Catch::Approx(std::exp(-0.5) / 6.0).margin(1e-10));

  std::mt19937 rng(17);
  std::uniform_real_distribution<double> unif(0.1, 0.9);
  for (double t : {0.3, 1.0}) {
    const double conv = tempered_convolution_reference(
        alpha, lambda,
        [&](double s) { return std::pow(s, 2 + alpha) * std::exp(-lambda * s) / gamma_pos(3 + alpha); },
        t, 1e-12);
    for (int i = 0; i < 5; ++i) {
      const double x = unif(rng), y = unif(rng);
      const auto got = f.memory_term(x, y, t);
      const auto lap = example2_lap_spatial(x, y);
      for (int c = 0; c < 2; ++c) {
        CHECK(got[c] == Catch::Approx(-lap[c] * conv).margin(1e-9));
      }
    }
  }
}

TEST_CASE("error norms: exact members and interpolation order", "[manufactured]") {
  const auto ex = exact_example1();

  SECTION("zero against zero is zero") {
    const auto mesh = build_mesh(DomainSpec::unit_square(4));
    const auto sp = build_mini_space(mesh);
    const auto ex2 = exact_example2(0.5, 0.5);
    const Vec z = Vec::Zero(sp.n_vel);
    const auto err = error_norms(sp, z, nullptr, ex2, 0.0);
    CHECK(err.vel_l2 == Catch::Approx(0.0).margin(1e-15));
  }

  SECTION("interpolated exact solution converges at second order") {
    double prev = -1;
    for (int n : {8, 16, 32}) {
      const auto mesh = build_mesh(DomainSpec::unit_square(n));
      const auto sp = build_mini_space(mesh);
      const Vec ui = interpolate_velocity(sp, ex.u, 1.0);
      const auto err = error_norms(sp, ui, nullptr, ex, 1.0);
      if (prev > 0) {
        const double rate = std::log2(prev / err.vel_l2);
        CHECK(rate > 1.8);
        CHECK(rate < 2.2);
      }
      prev = err.vel_l2;
    }
  }

  SECTION("pressure error uses zero-mean representatives") {
    const auto mesh = build_mesh(DomainSpec::unit_square(6));
    const auto sp = build_mini_space(mesh);
    const Vec u = interpolate_velocity(sp, ex.u, 1.0);
    Vec p(sp.n_pressure), p_shift(sp.n_pressure);
    for (int v = 0; v < sp.n_pressure; ++v) {
      p[v] = ex.p(mesh.vertices[v][0], mesh.vertices[v][1], 1.0);
      p_shift[v] = p[v] + 42.0;
    }
    const auto e1 = error_norms(sp, u, &p, ex, 1.0);
    const auto e2 = error_norms(sp, u, &p_shift, ex, 1.0);
    CHECK(e1.pres_l2 == Catch::Approx(e2.pres_l2).margin(1e-12));
  }
}

TEST_CASE("weak residual of the interpolant decreases under refinement", "[manufactured]") {
  // All terms of the momentum equation are assembled on the interpolated
  // exact fields; the residual against interior test functions measures the
  // interpolation error and must shrink under refinement.
  const auto ex = exact_example1();
  const auto k = log_kernel();
  const double t = 0.5;
  auto residual = [&](int n) {
    const auto mesh = build_mesh(DomainSpec::unit_square(n));
    const auto sp = build_mini_space(mesh);
    const Vec u = interpolate_velocity(sp, ex.u, t);
    const Vec ut = interpolate_velocity(sp, ex.u_t, t);
    Vec mem = Vec::Zero(sp.n_vel);
    {
      // memory field m(x) = int K(t-s) u(s) ds = I1(t) g + I0(t) w
      const double i0 = log_kernel_I0(25.0, t), i1 = log_kernel_I1(25.0, t);
      auto memf = [&](double x, double y, double) {
        const auto u1 = ex.u(x, y, 1.0);
        const auto u0 = ex.u(x, y, 0.0);
        return std::array<double, 2>{(u1[0] - u0[0]) * i1 + u0[0] * i0,
                                     (u1[1] - u0[1]) * i1 + u0[1] * i0};
      };
      mem = interpolate_velocity(sp, memf, 0.0);
    }
    const SparseMat M = assemble_mass(sp);
    const SparseMat A = assemble_A(sp, EllipticCoeffs::laplacian(10.0));
    const SparseMat B = assemble_B(sp, BFormCoeffs::laplacian(1.0));
    const SparseMat N = assemble_convection(sp, u);
    const SparseMat D = assemble_div(sp);
    Vec pc(sp.n_pressure);
    for (int v = 0; v < sp.n_pressure; ++v) {
      pc[v] = ex.p(mesh.vertices[v][0], mesh.vertices[v][1], t);
    }
    const Forcing f(ex, KernelSpec(k), 10.0);
    auto ff = [&f](double x, double y, double tt) { return f(x, y, tt); };
    const Vec load = assemble_load(sp, ff, t, 10);
    Vec r = M * ut + A * u + B * mem + N * u - SparseMat(D.transpose()) * pc - load;
    // interior velocity vertex DOFs only
    const auto wall = boundary_dofs(mesh, BoundaryTag::wall);
    std::vector<char> bdry(sp.n_vertices, 0);
    for (int v : wall) bdry[v] = 1;
    double norm = 0;
    for (int c = 0; c < 2; ++c) {
      for (int v = 0; v < sp.n_vertices; ++v) {
        if (!bdry[v]) norm = std::max(norm, std::abs(r[sp.vertex_dof(c, v)]));
      }
    }
    return norm;
  };
  const double r4 = residual(4);
  const double r8 = residual(8);
  CHECK(r8 < r4 / 1.8);
}
