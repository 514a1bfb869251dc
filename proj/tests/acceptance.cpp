// Acceptance suite: runs the solver's headline claims end to end and prints
// one pass/fail line per criterion. Exit code is the number of failures.

#include <Eigen/SVD>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oldroyd/harness.hpp"

using namespace oldroyd;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int id, bool pass, const std::string& label, const std::string& details) {
  std::printf("[%s] criterion %d: %s — %s\n", pass ? "PASS" : "FAIL", id, label.c_str(),
              details.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4e", v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct ManufacturedOutcome {
  ResultTable table;
  RunReport grid20_report;
  double wall_seconds = 0;
};

// Grid sweep with both backends on the first grid (for the compression
// criteria) and the full scheme on the rest.
ManufacturedOutcome run_example(const std::string& example, const std::vector<int>& grids) {
  ManufacturedOutcome out;
  const auto t0 = Clock::now();
  for (size_t i = 0; i < grids.size(); ++i) {
    RunConfig cfg;
    cfg.example = example;
    cfg.tol = 1e-12;
    cfg.mode = i == 0 ? "both" : "full";
    auto run = run_single(cfg, grids[i]);
    if (i == 0) out.grid20_report = run.report;
    ResultRow row;
    row.grid = grids[i];
    row.err_u = run.report.full->err_u;
    row.err_p = run.report.full->err_p;
    if (run.report.compressed) row.err_u_hat = run.report.compressed->err_u;
    row.diff_u = run.report.diff_u;
    row.diff_p = run.report.diff_p;
    out.table.rows.push_back(row);
  }
  out.table.compute_rates();
  out.wall_seconds = seconds_since(t0);
  return out;
}

void criterion_1_and_2() {
  const std::vector<double> table1 = {2.0946e-2, 9.3613e-3, 5.2699e-3};
  const auto out = run_example("1", {20, 30, 40});

  bool pass = out.wall_seconds < 600.0;
  std::string details;
  for (size_t i = 0; i < out.table.rows.size(); ++i) {
    const double ratio = out.table.rows[i].err_u / table1[i];
    if (ratio < 1.0 / 3.0 || ratio > 3.0) pass = false;
    if (i > 0) {
      const double rate = out.table.rows[i].rate_u;
      if (rate < 1.8 || rate > 2.2) pass = false;
      details += "rate " + fmt(rate) + " ";
    }
    details += "err " + fmt(out.table.rows[i].err_u) + " ";
  }
  // pressure errors reported, asserted monotone only
  bool p_monotone = true;
  for (size_t i = 1; i < out.table.rows.size(); ++i) {
    if (out.table.rows[i].err_p >= out.table.rows[i - 1].err_p) p_monotone = false;
  }
  pass = pass && p_monotone;
  details += "| err_p ";
  for (const auto& r : out.table.rows) details += fmt(r.err_p) + " ";
  details += "| wall " + fmt(out.wall_seconds) + " s";
  report(1, pass, "nonsingular-kernel convergence vs published values", details);

  const auto& rep = out.grid20_report;
  const double bound = (rep.compressed->truncations + 1) * std::sqrt(rep.sigma_S) * 1e-12 * 1e3;
  const bool pass2 = rep.diff_u <= 1e-9 && rep.diff_u <= bound;
  report(2, pass2, "compression fidelity, nonsingular kernel",
         "|u-u_hat| " + fmt(rep.diff_u) + " <= 1e-9, audit bound " + fmt(bound) + " (T_sv " +
             std::to_string(rep.compressed->truncations) + ", sigma(S) " + fmt(rep.sigma_S) + ")");
}

void criterion_3() {
  const std::vector<double> table3 = {1.2841e-4, 5.6702e-5, 3.1774e-5};
  const auto out = run_example("2", {20, 30, 40});
  bool pass = true;
  std::string details = "dt = h/4 convention; ";
  for (size_t i = 0; i < out.table.rows.size(); ++i) {
    const double ratio = out.table.rows[i].err_u / table3[i];
    if (ratio < 1.0 / 3.0 || ratio > 3.0) pass = false;
    if (i > 0) {
      const double rate = out.table.rows[i].rate_u;
      if (rate < 1.8 || rate > 2.2) pass = false;
      details += "rate " + fmt(rate) + " ";
    }
    details += "err " + fmt(out.table.rows[i].err_u) + " ";
  }
  for (size_t i = 1; i < out.table.rows.size(); ++i) {
    if (out.table.rows[i].err_p >= out.table.rows[i - 1].err_p) pass = false;
  }
  const double diff = out.grid20_report.diff_u;
  if (diff > 1e-9) pass = false;
  details += "| diff " + fmt(diff);
  report(3, pass, "tempered weakly singular convergence vs published values", details);
}

void criterion_4() {
  auto phi = [](double t) { return t * t * std::exp(-0.5 * t); };
  std::vector<double> errs;
  for (int N : {16, 32, 64, 128}) {
    errs.push_back(quadrature_error_probe(0.5, 0.5, phi, N, 1.0 / N));
  }
  bool pass = true;
  std::string details;
  for (size_t i = 1; i < errs.size(); ++i) {
    const double ratio = errs[i - 1] / errs[i];
    if (ratio < 3.3 || ratio > 4.7) pass = false;
    details += "ratio " + fmt(ratio) + " ";
  }
  report(4, pass, "convolution quadrature error is O(dt^2)", details);
}

void criterion_5() {
  std::mt19937 rng(515151);
  std::normal_distribution<double> dist;
  const int N = 64, d = 8;
  bool pass = true;
  double worst = 0;
  for (double alpha : {0.25, 0.5, 0.75}) {
    for (double lambda : {0.0, 0.5}) {
      const auto w = cq_build(alpha, lambda, N, 1.0 / N);
      for (int rep = 0; rep < 100; ++rep) {
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
        worst = std::min(worst, quad / energy);
        if (quad < -1e-12 * energy) pass = false;
      }
    }
  }
  report(5, pass, "quadrature weights are positive definite",
         "600 random sequences, worst normalized form " + fmt(worst));
}

struct IsvdStreams {
  std::vector<IncrementalSvd> states;
  double seconds = 0;
};

IsvdStreams g_c6_streams;

void criterion_6() {
  std::mt19937 rng(606060);
  std::normal_distribution<double> dist;
  std::uniform_int_distribution<int> mdist(60, 400), ndist(40, 200), rdist(2, 12);
  std::uniform_real_distribution<double> mag(0.5, 5.0);
  // tol sits well above the basis-contamination floor: a direction first
  // captured with small amplitude carries the capturing column's noise at
  // amplified relative level (~1e-10 here), which would otherwise trigger
  // spurious rank events
  const double tol = 1e-8;
  bool pass = true;
  std::string bad;
  const auto t0 = Clock::now();
  for (int rep = 0; rep < 50; ++rep) {
    const int m = mdist(rng), n = ndist(rng), r = rdist(rng);
    Eigen::MatrixXd G(m, r);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < r; ++j) G(i, j) = dist(rng);
    Eigen::MatrixXd U = Eigen::HouseholderQR<Eigen::MatrixXd>(G).householderQ() *
                        Eigen::MatrixXd::Identity(m, r);
    Eigen::MatrixXd C(r, n);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < n; ++j) C(i, j) = mag(rng) * dist(rng);
    Eigen::MatrixXd A = U * C;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) A(i, j) += 1e-13 * dist(rng);

    IncrementalSvd svd(tol);
    for (int j = 0; j < n; ++j) svd.push(A.col(j));
    svd.finalize_buffer();
    Eigen::BDCSVD<Eigen::MatrixXd> batch(A);
    const auto& sv = batch.singularValues();
    if (svd.rank() != r) {
      pass = false;
      bad += "rank " + std::to_string(svd.rank()) + "!=" + std::to_string(r) + " ";
    }
    for (int i = 0; i < svd.rank() && i < sv.size(); ++i) {
      if (std::abs(svd.singular_values()[i] - sv[i]) > std::max(1e-8, 10 * tol)) pass = false;
    }
    for (int i = svd.rank(); i < sv.size(); ++i) {
      if (sv[i] >= 10 * tol) pass = false;
    }
    g_c6_streams.states.push_back(std::move(svd));
  }
  g_c6_streams.seconds = seconds_since(t0);
  if (g_c6_streams.seconds >= 60.0) pass = false;
  report(6, pass, "streaming SVD matches the batch oracle",
         "50 random low-rank streams, " + fmt(g_c6_streams.seconds) + " s" +
             (bad.empty() ? "" : ", " + bad));
}

void criterion_7() {
  bool pass = true;
  std::string details;
  std::mt19937 rng(707070);
  std::normal_distribution<double> dist;
  for (int variant = 0; variant < 3; ++variant) {
    const double tol = variant == 2 ? 1e-8 : 1e-6;
    const int m = 50;
    IncrementalSvd s(tol);
    std::vector<Eigen::VectorXd> cols;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(m);
    if (variant == 0) {
      a[0] = 1.0;
    } else {
      for (int i = 0; i < 10; ++i) a[i] = dist(rng);
    }
    cols.push_back(a);
    s.push(a);
    for (int i = 1; i <= 6; ++i) {
      Eigen::VectorXd c = 2.0 * s.singular_values()[0] * s.Q().col(0);
      c[m - i] += 1.5 * tol;
      cols.push_back(c);
      s.push(c);
    }
    const int n = static_cast<int>(cols.size());
    double maxerr = 0;
    for (int j = 0; j < n; ++j) {
      maxerr = std::max(maxerr, (s.reconstruct(j) - cols[j]).norm());
    }
    const double bound = (s.truncation_count() + 1) * tol + n * 1e-13;
    if (s.truncation_count() < 3 || maxerr > bound) pass = false;
    details += "T_sv " + std::to_string(s.truncation_count()) + " err " + fmt(maxerr) +
               " <= " + fmt(bound) + "; ";
  }
  report(7, pass, "per-column bound under forced singular-value truncations", details);
}

void criterion_8() {
  bool pass = true;
  long events = 0;
  double worst_slack = 0;
  for (const auto& s : g_c6_streams.states) {
    for (const auto& ev : s.rank_events()) {
      ++events;
      const int k = static_cast<int>(ev.sigma_before.size());
      const double slack = 1e-12 * std::max(1.0, ev.sigma_after[0]);
      auto record = [&](double violation) {
        worst_slack = std::max(worst_slack, violation);
        if (violation > slack) pass = false;
      };
      record(ev.sigma_after[k] - ev.p);
      record(ev.sigma_after[k] - ev.sigma_before[k - 1]);
      for (int i = 0; i < k; ++i) {
        record(ev.sigma_before[i] - ev.sigma_after[i]);
        if (i > 0) record(ev.sigma_after[i] - ev.sigma_before[i - 1]);
      }
    }
  }
  report(8, pass, "interlacing at every rank event",
         std::to_string(events) + " events, worst violation " + fmt(worst_slack));
}

void criterion_9() {
  RunConfig cfg;
  cfg.example = "1";
  cfg.tol = 1e-12;
  cfg.mode = "compressed";
  cfg.dt_rule = "fixed:0.001";
  const auto t0 = Clock::now();
  auto run = run_single(cfg, 50);
  const double wall = seconds_since(t0);
  const auto& rep = *run.report.compressed;
  const long long m = run.example.space->n_vel;
  const long long N = run.grid.N;
  const long long k = rep.final_rank;
  const long long bound1 = 3 * (m + N) * k;
  const double frac = double(rep.peak_floats) / double(m * N);
  const bool pass = rep.peak_floats <= bound1 && frac <= 0.05;
  report(9, pass, "compressed history storage",
         "peak " + std::to_string(rep.peak_floats) + " floats <= 3(m+N)k = " +
             std::to_string(bound1) + ", " + fmt(100 * frac) + "% of m*N (rank " +
             std::to_string(k) + ", N " + std::to_string(N) + "); wall " + fmt(wall) +
             " s (measured only)");
}

void criterion_10() {
  RunConfig cfg;
  cfg.example = "contraction";
  cfg.tol = 1e-12;
  cfg.mode = "both";
  cfg.corner_levels = 2;
  cfg.dt_rule = "fixed:0.01";
  auto run = run_single(cfg, 20);
  const auto& rep = run.report;
  const auto& sp = *run.example.space;

  double max_div = std::max(rep.full->max_div_residual, rep.compressed->max_div_residual);

  // lattice snapshot agreement
  const auto dir = std::filesystem::temp_directory_path() / "oldroyd_acceptance";
  std::filesystem::create_directories(dir);
  const auto pf = (dir / "full.txt").string(), pc = (dir / "comp.txt").string();
  field_snapshot(sp, rep.full->u_final, pf, 161, 81, 0, 16, 0, 8);
  field_snapshot(sp, rep.compressed->u_final, pc, 161, 81, 0, 16, 0, 8);
  double snap_diff = 0;
  {
    std::ifstream f1(pf), f2(pc);
    std::string l1, l2;
    std::getline(f1, l1);
    std::getline(f2, l2);
    double x1, y1, u1, v1, x2, y2, u2, v2;
    while ((f1 >> x1 >> y1 >> u1 >> v1) && (f2 >> x2 >> y2 >> u2 >> v2)) {
      snap_diff = std::max({snap_diff, std::abs(u1 - u2), std::abs(v1 - v2)});
    }
  }

  // discrete flux balance of the solved field
  auto flux = [&](BoundaryTag tag) {
    double s = 0;
    for (const auto& e : run.example.mesh->boundary_edges) {
      if (e.tag != tag) continue;
      const auto& a = run.example.mesh->vertices[e.a];
      const auto& b = run.example.mesh->vertices[e.b];
      const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
      s += 0.5 * len *
           (rep.full->u_final[sp.vertex_dof(0, e.a)] + rep.full->u_final[sp.vertex_dof(0, e.b)]);
    }
    return s;
  };
  const double balance = std::abs(flux(BoundaryTag::inflow) - flux(BoundaryTag::outflow));

  const bool pass = max_div <= 1e-9 && snap_diff <= 1e-8 && balance <= 1e-8;
  report(10, pass, "4:1 contraction benchmark",
         "max div residual " + fmt(max_div) + ", snapshot diff " + fmt(snap_diff) +
             ", flux balance " + fmt(balance) + ", final rank " +
             std::to_string(rep.compressed->final_rank));
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  auto want = [&](int id) { return selected.empty() || selected.count(id) > 0; };

  std::printf("acceptance suite (%s)\n", kVersionString);
  const auto t0 = Clock::now();
  if (want(1) || want(2)) criterion_1_and_2();
  if (want(3)) criterion_3();
  if (want(4)) criterion_4();
  if (want(5)) criterion_5();
  if (want(6) || want(8)) criterion_6();
  if (want(7)) criterion_7();
  if (want(8)) criterion_8();
  if (want(9)) criterion_9();
  if (want(10)) criterion_10();
  std::printf("total wall time %.1f s, %d failure(s)\n", seconds_since(t0), g_failures);
  return g_failures;
}
