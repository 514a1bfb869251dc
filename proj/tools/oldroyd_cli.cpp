// Command-line front end: convergence studies, lockstep full/compressed
// comparisons, the convolution-quadrature probe, the contraction benchmark,
// and a streaming-SVD micro-benchmark. Outputs are CSV tables plus plain-text
// metadata sidecars.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "oldroyd/harness.hpp"

namespace {

using namespace oldroyd;

std::string out_path(const RunConfig& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.out);
  return (std::filesystem::path(cfg.out) / name).string();
}

std::vector<std::pair<std::string, std::string>> config_echo(const RunConfig& cfg,
                                                             const std::string& rule) {
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("example", cfg.example);
  std::string grids;
  for (size_t i = 0; i < cfg.grids.size(); ++i) grids += (i ? "," : "") + std::to_string(cfg.grids[i]);
  kv.emplace_back("grids", grids);
  kv.emplace_back("dt_rule", rule);
  kv.emplace_back("tol", detail::sci(cfg.tol));
  kv.emplace_back("mode", cfg.mode);
  kv.emplace_back("t", detail::sci(cfg.T));
  kv.emplace_back("seed", std::to_string(cfg.seed));
  return kv;
}

void report_backend(const std::string& label, const BackendReport& rep) {
  std::cout << "  " << label << ": wall " << rep.wall_seconds << " s, peak hist floats "
            << rep.peak_floats << ", rank " << rep.final_rank << ", sv-truncations "
            << rep.truncations << ", max div residual " << rep.max_div_residual;
  if (rep.err_u >= 0) std::cout << ", err_u " << detail::sci(rep.err_u);
  if (rep.err_p >= 0) std::cout << ", err_p " << detail::sci(rep.err_p);
  std::cout << "\n";
}

int cmd_cq_probe(const RunConfig& cfg);

int cmd_run(const RunConfig& cfg, int grid, bool snapshots, bool export_mesh = false) {
  if (cfg.example == "cq-probe") return cmd_cq_probe(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  SingleRun run = run_single(cfg, grid);
  if (export_mesh) {
    std::ofstream os(out_path(cfg, "mesh.txt"));
    write_mesh(*run.example.mesh, os);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "example " << cfg.example << ", grid " << grid << ", N " << run.grid.N << ", dt "
            << run.grid.dt << "\n";
  if (run.report.full) {
    emit_step_csv(*run.report.full, out_path(cfg, "run_full.csv"));
    report_backend("full", *run.report.full);
  }
  if (run.report.compressed) {
    emit_step_csv(*run.report.compressed, out_path(cfg, "run_compressed.csv"));
    report_backend("compressed", *run.report.compressed);
  }
  if (run.report.diff_u >= 0) {
    std::cout << "  |u_full - u_comp|_L2 = " << detail::sci(run.report.diff_u)
              << ", |p_full - p_comp|_L2 = " << detail::sci(run.report.diff_p) << "\n";
  }
  std::cout << "  sigma(S) = " << run.report.sigma_S
            << ", c0*K0 estimate = " << run.report.c0K0_estimate << "\n";

  auto kv = config_echo(cfg, cfg.dt_rule.empty() ? run.example.default_dt_rule : cfg.dt_rule);
  kv.emplace_back("grid", std::to_string(grid));
  kv.emplace_back("steps", std::to_string(run.grid.N));
  kv.emplace_back("wall_seconds", std::to_string(wall));
  if (run.report.compressed) {
    kv.emplace_back("peak_hist_floats", std::to_string(run.report.compressed->peak_floats));
  } else if (run.report.full) {
    kv.emplace_back("peak_hist_floats", std::to_string(run.report.full->peak_floats));
  }
  if (cfg.example == "contraction") {
    kv.emplace_back("outflow_flux_scale", std::to_string(run.example.flux_scale));
    kv.emplace_back("bc_ramp_steps", std::to_string(run.example.problem.bc_ramp_steps));
  }
  emit_metadata(out_path(cfg, "run.meta.txt"), kv);

  if (snapshots) {
    const bool contraction = cfg.example == "contraction";
    const double x1 = contraction ? 16.0 : 1.0, y1 = contraction ? 8.0 : 1.0;
    const int nx = contraction ? 161 : 101, ny = contraction ? 81 : 101;
    if (run.report.full) {
      field_snapshot(*run.example.space, run.report.full->u_final,
                     out_path(cfg, "snapshot_full.txt"), nx, ny, 0, x1, 0, y1);
    }
    if (run.report.compressed) {
      field_snapshot(*run.example.space, run.report.compressed->u_final,
                     out_path(cfg, "snapshot_compressed.txt"), nx, ny, 0, x1, 0, y1);
    }
  }
  return 0;
}

int cmd_convergence(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ConvergenceResult res = run_convergence(cfg);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string path = out_path(cfg, "convergence_example" + cfg.example + ".csv");
  emit_table(res.table, path);
  auto kv = config_echo(cfg, cfg.dt_rule.empty() ? res.runs.front().example.default_dt_rule : cfg.dt_rule);
  kv.emplace_back("wall_seconds", std::to_string(wall));
  long long peak = 0;
  for (const auto& r : res.runs) {
    if (r.report.compressed) peak = std::max(peak, r.report.compressed->peak_floats);
  }
  kv.emplace_back("peak_hist_floats", std::to_string(peak));
  emit_metadata(path + ".meta.txt", kv);
  std::cout << "wrote " << path << "\n";
  for (const auto& row : res.table.rows) {
    std::cout << "  grid " << row.grid << ": err_u " << detail::sci(row.err_u);
    if (row.has_rate) std::cout << " rate " << row.rate_u;
    if (row.diff_u >= 0) std::cout << " diff " << detail::sci(row.diff_u);
    std::cout << "\n";
  }
  return 0;
}

int cmd_cq_probe(const RunConfig& cfg) {
  const auto w = cq_build(cfg.alpha, cfg.lambda, cfg.cq_N, 1.0 / cfg.cq_N);
  {
    std::ofstream os(out_path(cfg, "cq_weights.csv"));
    os << "n,omega,rho\n";
    for (int n = 0; n <= cfg.cq_N; ++n) {
      os << n << ',' << detail::sci(w.omega[n]) << ',' << detail::sci(w.rho[n]) << '\n';
    }
  }
  auto phi = [](double t) { return t * t * std::exp(-t); };
  std::ofstream os(out_path(cfg, "cq_probe.csv"));
  os << "dt,max_err,order\n";
  double prev = -1;
  std::cout << "cq probe, alpha " << cfg.alpha << ", lambda " << cfg.lambda << "\n";
  for (int N : {16, 32, 64, 128}) {
    const double dt = 1.0 / N;
    const double err = quadrature_error_probe(cfg.alpha, cfg.lambda, phi, N, dt);
    const double order = prev > 0 ? std::log2(prev / err) : 0.0;
    os << detail::sci(dt) << ',' << detail::sci(err);
    if (prev > 0) os << ',' << order;
    else os << ',';
    os << '\n';
    std::cout << "  dt " << detail::sci(dt) << "  max_err " << detail::sci(err);
    if (prev > 0) std::cout << "  order " << order;
    std::cout << "\n";
    prev = err;
  }
  return 0;
}

int cmd_isvd_bench(const RunConfig& cfg, int m, int n, int rank) {
  std::mt19937 rng(static_cast<unsigned>(cfg.seed ? cfg.seed : 42));
  std::normal_distribution<double> dist;
  Eigen::MatrixXd L(m, rank), Rm(n, rank);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < rank; ++j) L(i, j) = dist(rng);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < rank; ++j) Rm(i, j) = dist(rng);
  Eigen::MatrixXd A = L * Rm.transpose();
  const auto t0 = std::chrono::steady_clock::now();
  IncrementalSvd svd(cfg.tol);
  for (int j = 0; j < n; ++j) svd.push(A.col(j));
  svd.finalize_buffer();
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double max_err = 0;
  for (int j = 0; j < n; ++j) max_err = std::max(max_err, (svd.reconstruct(j) - A.col(j)).norm());
  const auto rep = svd.report();
  std::ofstream os(out_path(cfg, "isvd_bench.csv"));
  os << "m,n,rank,tol,final_rank,truncations,max_col_err,floats,floats_uncompressed,seconds\n";
  os << m << ',' << n << ',' << rank << ',' << detail::sci(cfg.tol) << ',' << rep.rank << ','
     << rep.truncations << ',' << detail::sci(max_err) << ',' << rep.floats_stored << ','
     << rep.floats_uncompressed << ',' << wall << '\n';
  std::cout << "isvd bench: m " << m << ", n " << n << ", exact rank " << rank << " -> rank "
            << rep.rank << ", max column error " << detail::sci(max_err) << ", floats "
            << rep.floats_stored << " / " << rep.floats_uncompressed << ", " << wall << " s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace oldroyd;
  RunConfig cfg;

  // --config is honored before the flag definitions so CLI flags override it.
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      try {
        load_config_file(argv[i + 1], cfg);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
      }
    }
  }

  CLI::App app{"Mini-element solver for integro-differential flow with compressed history"};
  app.require_subcommand(1);
  std::string config_file;
  app.add_option("--config", config_file, "plain-text key = value config file");

  int grid = cfg.grids.empty() ? 20 : cfg.grids[0];
  bool snapshots = false;
  bool export_mesh = false;
  std::string grids_str;
  int bench_m = 400, bench_n = 200, bench_rank = 8;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--example", cfg.example, "1 | 2 | contraction");
    sub->add_option("--dt-rule", cfg.dt_rule, "half_h | quarter_h | four_h | fixed:<v>");
    sub->add_option("--tol", cfg.tol, "compression tolerance")
        ->check(CLI::PositiveNumber);
    sub->add_option("--mode", cfg.mode, "full | compressed | both");
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_option("--seed", cfg.seed, "seed for randomized runs");
    sub->add_option("--T", cfg.T, "final time");
    sub->add_option("--alpha", cfg.alpha, "fractional order");
    sub->add_option("--lambda", cfg.lambda, "tempering parameter");
    sub->add_option("--corner-levels", cfg.corner_levels, "contraction corner refinement levels");
  };

  auto* run_cmd = app.add_subcommand("run", "single run, per-step CSV + summary");
  add_common(run_cmd);
  run_cmd->add_option("--grid", grid, "grid label n");
  run_cmd->add_flag("--snapshots", snapshots, "write velocity field snapshots");
  run_cmd->add_flag("--export-mesh", export_mesh, "write the mesh as plain text");

  auto* conv_cmd = app.add_subcommand("convergence", "grid sweep with rate table");
  add_common(conv_cmd);
  conv_cmd->add_option("--grids", grids_str, "comma list, e.g. 20,30,40");

  auto* cmp_cmd = app.add_subcommand("compare", "lockstep full vs compressed on one grid");
  add_common(cmp_cmd);
  cmp_cmd->add_option("--grid", grid, "grid label n");

  auto* contraction_cmd = app.add_subcommand("contraction", "4:1 contraction benchmark");
  add_common(contraction_cmd);

  auto* cq_cmd = app.add_subcommand("cq-probe", "convolution-quadrature weights and error probe");
  cq_cmd->add_option("--alpha", cfg.alpha, "fractional order");
  cq_cmd->add_option("--lambda", cfg.lambda, "tempering parameter");
  cq_cmd->add_option("--N", cfg.cq_N, "number of steps for the weight table");
  cq_cmd->add_option("--out", cfg.out, "output directory");

  auto* bench_cmd = app.add_subcommand("isvd-bench", "streaming SVD micro-benchmark");
  bench_cmd->add_option("--m", bench_m, "rows");
  bench_cmd->add_option("--n", bench_n, "columns");
  bench_cmd->add_option("--rank", bench_rank, "exact rank");
  bench_cmd->add_option("--tol", cfg.tol, "truncation tolerance")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", cfg.seed, "rng seed");
  bench_cmd->add_option("--out", cfg.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (!grids_str.empty()) cfg.grids = parse_grid_list(grids_str);
    if (run_cmd->parsed()) return cmd_run(cfg, grid, snapshots, export_mesh);
    if (conv_cmd->parsed()) return cmd_convergence(cfg);
    if (cmp_cmd->parsed()) {
      cfg.mode = "both";
      return cmd_run(cfg, grid, false);
    }
    if (contraction_cmd->parsed()) {
      cfg.example = "contraction";
      cfg.mode = cfg.mode.empty() ? "both" : cfg.mode;
      return cmd_run(cfg, grid, true);
    }
    if (cq_cmd->parsed()) return cmd_cq_probe(cfg);
    if (bench_cmd->parsed()) return cmd_isvd_bench(cfg, bench_m, bench_n, bench_rank);
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    try {
      std::filesystem::create_directories(cfg.out);
      std::ofstream diag(std::filesystem::path(cfg.out) / "diagnostics.txt");
      diag << "aborted: " << e.what() << "\n";
    } catch (...) {
    }
    return 1;
  }
  return 0;
}
