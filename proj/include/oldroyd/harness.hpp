#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "oldroyd/manufactured.hpp"
#include "oldroyd/mesh.hpp"
#include "oldroyd/stepper.hpp"

namespace oldroyd {

inline constexpr const char* kVersionString = "oldroyd 0.1.0";

struct RunConfig {
  std::string example = "1";  // 1 | 2 | contraction | cq-probe
  std::vector<int> grids = {20, 30, 40};
  std::string dt_rule;  // half_h | quarter_h | four_h | fixed:<v>; default per example
  double tol = 1e-12;
  std::string mode = "both";  // full | compressed | both
  double T = 1.0;
  std::string out = ".";
  unsigned long long seed = 0;
  double alpha = 0.5;
  double lambda = 0.5;
  int corner_levels = 2;
  int cq_N = 128;
};

inline std::vector<int> parse_grid_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

/// Plain-text config: `#` comments, `[section]` headers (ignored for lookup),
/// `key = value` lines with keys in lower snake case.
inline void load_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("bad config line: " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "example") cfg.example = val;
    else if (key == "grids") cfg.grids = parse_grid_list(val);
    else if (key == "dt_rule") cfg.dt_rule = val;
    else if (key == "tol") cfg.tol = std::stod(val);
    else if (key == "mode") cfg.mode = val;
    else if (key == "t" || key == "t_final") cfg.T = std::stod(val);
    else if (key == "out") cfg.out = val;
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "alpha") cfg.alpha = std::stod(val);
    else if (key == "lambda") cfg.lambda = std::stod(val);
    else if (key == "corner_levels") cfg.corner_levels = std::stoi(val);
    else if (key == "cq_n") cfg.cq_N = std::stoi(val);
    else throw std::runtime_error("unknown config key: " + key);
  }
}

/// Time grid from a dt rule; grid label n follows the tables' sqrt(2)/h
/// convention while the dt pairings read h as the grid spacing 1/n, which
/// keeps the step counts integral (rounded otherwise).
inline TimeGrid make_time_grid(double T, const std::string& rule, int n_grid) {
  double target = 0;
  if (rule == "half_h") target = 1.0 / (2.0 * n_grid);
  else if (rule == "quarter_h") target = 1.0 / (4.0 * n_grid);
  else if (rule == "four_h") target = 4.0 / n_grid;
  else if (rule.rfind("fixed:", 0) == 0) target = std::stod(rule.substr(6));
  else throw std::invalid_argument("unknown dt rule: " + rule);
  if (target <= 0) throw std::invalid_argument("dt rule gives nonpositive dt");
  const int N = std::max(1, static_cast<int>(std::llround(T / target)));
  return TimeGrid(T, N);
}

struct ResultRow {
  int grid = 0;
  double err_u = -1, rate_u = 0;
  double err_u_hat = -1, rate_u_hat = 0;
  double diff_u = -1;
  double err_p = -1, rate_p = 0;
  double diff_p = -1;
  bool has_rate = false;
};

struct ResultTable {
  std::vector<ResultRow> rows;

  /// rate_k = ln(e_{k-1}/e_k) / ln(h_{k-1}/h_k); h ratio = n_k / n_{k-1}.
  void compute_rates() {
    for (size_t i = 0; i < rows.size(); ++i) {
      if (i == 0) {
        rows[i].has_rate = false;
        continue;
      }
      const double hr = std::log(double(rows[i].grid) / rows[i - 1].grid);
      rows[i].rate_u = std::log(rows[i - 1].err_u / rows[i].err_u) / hr;
      if (rows[i].err_u_hat > 0 && rows[i - 1].err_u_hat > 0) {
        rows[i].rate_u_hat = std::log(rows[i - 1].err_u_hat / rows[i].err_u_hat) / hr;
      }
      if (rows[i].err_p > 0 && rows[i - 1].err_p > 0) {
        rows[i].rate_p = std::log(rows[i - 1].err_p / rows[i].err_p) / hr;
      }
      rows[i].has_rate = true;
    }
  }
};

namespace detail {

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.5e", v);
  return buf;
}

}  // namespace detail

/// CSV with the fixed header; scientific notation, 6 significant digits;
/// rate columns are blank on the first row. Values below zero mark absent
/// measurements and are emitted blank.
inline void emit_table(const ResultTable& table, const std::string& path) {
  if (table.rows.empty()) throw std::invalid_argument("emit_table: table must have rows");
  std::ofstream os(path);
  if (!os) throw std::runtime_error("emit_table: cannot open " + path);
  os << "grid,err_u,rate_u,err_u_hat,rate_u_hat,diff_u,err_p,rate_p,diff_p\n";
  auto cell = [](double v, bool present) { return present ? detail::sci(v) : std::string(); };
  for (const auto& r : table.rows) {
    os << r.grid << ',' << cell(r.err_u, r.err_u >= 0) << ',' << cell(r.rate_u, r.has_rate) << ','
       << cell(r.err_u_hat, r.err_u_hat >= 0) << ',' << cell(r.rate_u_hat, r.has_rate && r.err_u_hat >= 0)
       << ',' << cell(r.diff_u, r.diff_u >= 0) << ',' << cell(r.err_p, r.err_p >= 0) << ','
       << cell(r.rate_p, r.has_rate && r.err_p >= 0) << ',' << cell(r.diff_p, r.diff_p >= 0) << '\n';
  }
}

inline ResultTable parse_table(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("parse_table: cannot open " + path);
  std::string line;
  std::getline(is, line);  // header
  ResultTable t;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    cells.resize(9);
    ResultRow r;
    auto num = [&](int i, double dflt) { return cells[i].empty() ? dflt : std::stod(cells[i]); };
    r.grid = std::stoi(cells[0]);
    r.err_u = num(1, -1);
    r.rate_u = num(2, 0);
    r.has_rate = !cells[2].empty();
    r.err_u_hat = num(3, -1);
    r.rate_u_hat = num(4, 0);
    r.diff_u = num(5, -1);
    r.err_p = num(6, -1);
    r.rate_p = num(7, 0);
    r.diff_p = num(8, -1);
    t.rows.push_back(r);
  }
  return t;
}

/// Sidecar metadata: config echo, version, wall time, peak history floats.
inline void emit_metadata(const std::string& path, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream os(path);
  os << "version = " << kVersionString << '\n';
  for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
}

/// Uniform lattice sample of a velocity field: header `nx ny`, then rows
/// `x y u1 u2`. Points outside the mesh sample as zero.
inline void field_snapshot(const MixedSpace& sp, const Vec& u, const std::string& path, int nx,
                           int ny, double x0, double x1, double y0, double y1) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("field_snapshot: cannot open " + path);
  os << nx << ' ' << ny << '\n';
  os.precision(12);
  const TriMesh& mesh = *sp.mesh;
  const int nt = mesh.n_triangles();
  std::vector<std::array<double, 4>> bbox(nt);
  for (int t = 0; t < nt; ++t) {
    const auto& tr = mesh.triangles[t];
    bbox[t] = {std::min({mesh.vertices[tr[0]][0], mesh.vertices[tr[1]][0], mesh.vertices[tr[2]][0]}),
               std::max({mesh.vertices[tr[0]][0], mesh.vertices[tr[1]][0], mesh.vertices[tr[2]][0]}),
               std::min({mesh.vertices[tr[0]][1], mesh.vertices[tr[1]][1], mesh.vertices[tr[2]][1]}),
               std::max({mesh.vertices[tr[0]][1], mesh.vertices[tr[1]][1], mesh.vertices[tr[2]][1]})};
  }
  auto locate = [&](double x, double y, std::array<double, 3>& bary) -> int {
    for (int t = 0; t < nt; ++t) {
      if (x < bbox[t][0] - 1e-12 || x > bbox[t][1] + 1e-12 || y < bbox[t][2] - 1e-12 ||
          y > bbox[t][3] + 1e-12) {
        continue;
      }
      const auto& tr = mesh.triangles[t];
      const auto& p0 = mesh.vertices[tr[0]];
      const auto& p1 = mesh.vertices[tr[1]];
      const auto& p2 = mesh.vertices[tr[2]];
      const double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
      const double l2 = ((x - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (y - p0[1])) / det;
      const double l3 = ((p1[0] - p0[0]) * (y - p0[1]) - (x - p0[0]) * (p1[1] - p0[1])) / det;
      const double l1 = 1.0 - l2 - l3;
      const double eps = 1e-10;
      if (l1 >= -eps && l2 >= -eps && l3 >= -eps) {
        bary = {l1, l2, l3};
        return t;
      }
    }
    return -1;
  };
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double x = x0 + (x1 - x0) * i / (nx - 1);
      const double y = y0 + (y1 - y0) * j / (ny - 1);
      std::array<double, 3> bary;
      const int t = locate(x, y, bary);
      double u1 = 0, u2 = 0;
      if (t >= 0) {
        const auto val = eval_velocity(sp, u, t, bary);
        u1 = val[0];
        u2 = val[1];
      }
      os << x << ' ' << y << ' ' << u1 << ' ' << u2 << '\n';
    }
  }
}

/// A ready-to-run problem: mesh + space are owned here, the setup points at
/// them.
struct ExampleCase {
  std::shared_ptr<TriMesh> mesh;
  std::shared_ptr<MixedSpace> space;
  std::shared_ptr<ExactSolution> exact;
  std::shared_ptr<Forcing> forcing;
  ProblemSetup problem;
  SchemeConfig scheme;
  std::string default_dt_rule;
  double flux_scale = 1.0;  // contraction outflow correction factor
};

inline ExampleCase make_example1(int grid) {
  ExampleCase c;
  c.mesh = std::make_shared<TriMesh>(build_mesh(DomainSpec::unit_square(grid)));
  c.space = std::make_shared<MixedSpace>(build_mini_space(*c.mesh));
  c.exact = std::make_shared<ExactSolution>(exact_example1());
  // kernel K(t) = 25 ln(1+t) (scaling folded into the kernel), A = -10 Lap,
  // B = -Lap.
  NonsingularKernel k;
  k.K = [](double t) { return 25.0 * std::log1p(t); };
  k.K_at_0 = 0.0;
  k.K0 = log_kernel_I0(25.0, 1.0);
  c.scheme.kernel = k;
  c.scheme.a_coeffs = EllipticCoeffs::laplacian(10.0);
  c.scheme.b_coeffs = BFormCoeffs::laplacian(1.0);
  c.forcing = std::make_shared<Forcing>(*c.exact, c.scheme.kernel, 10.0);
  c.problem.space = c.space.get();
  c.problem.exact = c.exact.get();
  const Forcing* f = c.forcing.get();
  c.problem.forcing = [f](double x, double y, double t) { return (*f)(x, y, t); };
  const ExactSolution* ex = c.exact.get();
  c.problem.initial = [ex](double x, double y, double) { return ex->u(x, y, 0.0); };
  c.problem.dirichlet = {{BoundaryTag::wall,
                          [](double, double, double) { return std::array<double, 2>{0.0, 0.0}; }}};
  c.default_dt_rule = "half_h";
  return c;
}

inline ExampleCase make_example2(int grid, double alpha, double lambda) {
  ExampleCase c;
  c.mesh = std::make_shared<TriMesh>(build_mesh(DomainSpec::unit_square(grid)));
  c.space = std::make_shared<MixedSpace>(build_mini_space(*c.mesh));
  c.exact = std::make_shared<ExactSolution>(exact_example2(alpha, lambda));
  c.scheme.kernel = TemperedFractionalKernel{alpha, lambda};
  c.scheme.a_coeffs = EllipticCoeffs::laplacian(1.0);
  c.scheme.b_coeffs = BFormCoeffs::laplacian(1.0);
  c.forcing = std::make_shared<Forcing>(*c.exact, c.scheme.kernel, 1.0);
  c.problem.space = c.space.get();
  c.problem.exact = c.exact.get();
  const Forcing* f = c.forcing.get();
  c.problem.forcing = [f](double x, double y, double t) { return (*f)(x, y, t); };
  c.problem.initial = [](double, double, double) { return std::array<double, 2>{0.0, 0.0}; };
  c.problem.dirichlet = {{BoundaryTag::wall,
                          [](double, double, double) { return std::array<double, 2>{0.0, 0.0}; }}};
  c.default_dt_rule = "quarter_h";
  return c;
}

inline double contraction_inflow_u1(double y) {
  const double r = (4.0 - y) / 4.0;
  return (3.0 / 8.0) * (1.0 - r * r);
}

inline double contraction_outflow_u1(double y) { return 1.5 * (1.0 - (y - 4.0) * (y - 4.0)); }

/// Discrete flux of a P1 boundary profile through the edges with a tag.
inline double boundary_flux(const TriMesh& mesh, BoundaryTag tag,
                            const std::function<double(double)>& profile) {
  double flux = 0;
  for (const auto& e : mesh.boundary_edges) {
    if (e.tag != tag) continue;
    const auto& a = mesh.vertices[e.a];
    const auto& b = mesh.vertices[e.b];
    const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
    flux += 0.5 * len * (profile(a[1]) + profile(b[1]));
  }
  return flux;
}

/// 4:1 contraction benchmark: K(t) = rho*exp(-delta t), A = -mu*Lap, f = 0,
/// u0 = 0, developed inflow/outflow profiles, no-slip walls. The outflow
/// profile is scaled so the discrete fluxes balance exactly; boundary values
/// ramp over the first 5 steps.
inline ExampleCase make_contraction(int corner_levels, double mu = 100.0, double rho = 1.0,
                                    double delta = 100.0, double T = 1.0) {
  ExampleCase c;
  c.mesh = std::make_shared<TriMesh>(build_mesh(DomainSpec::contraction(8.0, 8.0, corner_levels)));
  c.space = std::make_shared<MixedSpace>(build_mini_space(*c.mesh));
  NonsingularKernel k;
  k.K = [rho, delta](double t) { return rho * std::exp(-delta * t); };
  k.K_at_0 = rho;
  k.K0 = rho / delta * (1.0 - std::exp(-delta * T));
  c.scheme.kernel = k;
  c.scheme.a_coeffs = EllipticCoeffs::laplacian(mu);
  c.scheme.b_coeffs = BFormCoeffs::laplacian(1.0);
  c.problem.space = c.space.get();
  c.problem.initial = [](double, double, double) { return std::array<double, 2>{0.0, 0.0}; };

  const double f_in = boundary_flux(*c.mesh, BoundaryTag::inflow, contraction_inflow_u1);
  const double f_out = boundary_flux(*c.mesh, BoundaryTag::outflow, contraction_outflow_u1);
  const double scale = f_in / f_out;
  c.flux_scale = scale;
  c.problem.dirichlet = {
      {BoundaryTag::wall, [](double, double, double) { return std::array<double, 2>{0.0, 0.0}; }},
      {BoundaryTag::inflow,
       [](double, double y, double) {
         return std::array<double, 2>{contraction_inflow_u1(y), 0.0};
       }},
      {BoundaryTag::outflow, [scale](double, double y, double) {
         return std::array<double, 2>{scale * contraction_outflow_u1(y), 0.0};
       }}};
  c.problem.bc_ramp_steps = 5;
  c.default_dt_rule = "fixed:0.01";
  return c;
}

inline RunMode mode_from_string(const std::string& s) {
  if (s == "full") return RunMode::full;
  if (s == "compressed") return RunMode::compressed;
  if (s == "both") return RunMode::both;
  throw std::invalid_argument("unknown mode: " + s);
}

inline ExampleCase make_case(const RunConfig& cfg, int grid) {
  if (cfg.example == "1") return make_example1(grid);
  if (cfg.example == "2") return make_example2(grid, cfg.alpha, cfg.lambda);
  if (cfg.example == "contraction") return make_contraction(cfg.corner_levels, 100.0, 1.0, 100.0, cfg.T);
  throw std::invalid_argument("unknown example: " + cfg.example);
}

struct SingleRun {
  RunReport report;
  TimeGrid grid;
  ExampleCase example;
};

inline SingleRun run_single(const RunConfig& cfg, int grid_n, bool audit = false) {
  SingleRun out{.report = {}, .grid = TimeGrid(1.0, 1), .example = make_case(cfg, grid_n)};
  const std::string rule = cfg.dt_rule.empty() ? out.example.default_dt_rule : cfg.dt_rule;
  out.grid = make_time_grid(cfg.T, rule, grid_n);
  out.example.scheme.tol = cfg.tol;
  out.example.scheme.audit = audit;
  OldroydStepper stepper(out.example.problem, out.example.scheme, out.grid);
  out.report = stepper.run(mode_from_string(cfg.mode));
  return out;
}

struct ConvergenceResult {
  ResultTable table;
  std::vector<SingleRun> runs;
};

inline ConvergenceResult run_convergence(const RunConfig& cfg) {
  ConvergenceResult res;
  for (int g : cfg.grids) {
    res.runs.push_back(run_single(cfg, g));
    const auto& rep = res.runs.back().report;
    ResultRow row;
    row.grid = g;
    if (rep.full) {
      row.err_u = rep.full->err_u;
      row.err_p = rep.full->err_p;
    }
    if (rep.compressed) row.err_u_hat = rep.compressed->err_u;
    row.diff_u = rep.diff_u;
    row.diff_p = rep.diff_p;
    res.table.rows.push_back(row);
  }
  res.table.compute_rates();
  return res;
}

inline void emit_step_csv(const BackendReport& rep, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << "step,t,picard_iters,rank,hist_floats,div_residual\n";
  for (const auto& s : rep.steps) {
    os << s.step << ',' << detail::sci(s.t) << ',' << s.picard_iters << ',' << s.rank << ','
       << s.hist_floats << ',' << detail::sci(s.div_residual) << '\n';
  }
}

}  // namespace oldroyd
