#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "heatctl/cost_lab.hpp"
#include "heatctl/numerics.hpp"

namespace heatctl::cost_lab {
namespace {

constexpr const char* kConfigKeyHelp = R"(Config keys (JSON):
  seed                            recorded in artifacts, reserved for seeded extensions (default 0)
  problem.nx                      interior grid points (>= 3)
  problem.nt                      time steps (>= 2)
  problem.T                       horizon (> 0)
  problem.omega_lo / omega_hi     control region, 0 <= lo < hi <= 1
  problem.nonlinearity.type       zero | affine | sine | cubic
  problem.nonlinearity.a / b      f: affine a*s+b, sine sin(a*s)+b, cubic a*s^3
  problem.u0 / problem.u_d        initial and target profiles, each with:
    .type                         zero | sine | bump | parabola | custom
    .amplitude                    scale factor (default 1)
    .k                            sine frequency (default 1)
    .center / .width              bump placement (defaults 0.5 / 0.25)
    .values                       custom tabulation, exactly nx entries
  controller.t_prime_policy      eq-2.9 | epsilon-T | fixed
  controller.t_prime_fixed       window length for the fixed policy
  controller.n_policy            adaptive | paper-formula
  controller.e_mode              adaptive | paper
  controller.constants.c0..c6    analytic-formula constants (default 1)
  controller.constants.n_o       lower clamp for the formula band count (default 1)
  controller.mu_floor_rel        spectral floor relative to mu_1 (default 1e-5)
  controller.tol_fp              Picard settling tolerance (default 1e-6)
  controller.tol_pde             residual acceptance threshold (default 1e-4)
  controller.sigma_step          homotopy step in (0,1] (default 0.25)
  controller.theta_damp          Picard damping in (0,1] (default 1)
  controller.max_picard          iteration budget per sigma stage (default 60)
  controller.blowup_cap          sup-norm abort threshold (default 1e12)
  controller.freeze_basis_after  increment below which the basis freezes (0 = never)
  sweep.epsilons                 target accuracies, each in (0, 1]
  sweep.repetitions              rows per epsilon (default 1)
  sweep.workers                  thread count (0 = auto, HEATCTL_THREADS caps)
  output.directory               artifact directory (default heatctl_out)
  output.csv_name                results file name (default results.csv)
  output.emit_plot_data          also write fit_<model>.dat and fit_report.txt
)";

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << text;
  out.flush();
  if (!out) throw Error("write failed: " + path.string());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_rows(const std::vector<SweepRow>& rows, const std::string& dir) {
  int conv = 0;
  for (const SweepRow& r : rows) {
    std::cout << "eps=" << r.epsilon << " T_prime=" << r.T_prime
              << " N=" << r.N_used << " cost_L2=" << r.cost_L2
              << " err_L2=" << r.err_L2
              << " converged=" << (r.converged ? "true" : "false") << "\n";
    conv += r.converged ? 1 : 0;
  }
  std::cout << rows.size() << " rows, " << conv << " converged; artifacts in "
            << dir << "\n";
}

int run_sweep_command(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  ExperimentConfig lin_cfg = cfg;
  lin_cfg.problem.nonlinearity = NonlinearitySelector{};  // f -> 0 reduction

  fs::create_directories(cfg.output.directory);
  std::vector<std::string> log;
  log.push_back("sweep: linear reduction pass");
  const auto lin_rows = compute_linear_rows(lin_cfg, &log);
  log.push_back("sweep: semilinear pass");
  const auto semi_rows = compute_semilinear_rows(cfg, &log);

  const fs::path dir(cfg.output.directory);
  write_file(dir / ("linear_" + cfg.output.csv_name), to_csv(lin_rows));
  write_file(dir / cfg.output.csv_name, to_csv(semi_rows));
  write_file(dir / "resolved_config.json", echo_config(cfg));
  if (cfg.output.emit_plot_data) {
    try {
      const FitReport rep = fit_cost_curve(semi_rows);
      write_fit_artifacts(rep, dir.string());
      log.push_back("fit: selected " + rep.best);
    } catch (const InsufficientData& e) {
      log.push_back(std::string("fit skipped: ") + e.what());
    }
    try {
      const FitReport rep = fit_cost_curve(lin_rows);
      write_fit_artifacts(rep, dir.string(), "linear_");
      log.push_back("linear fit: selected " + rep.best);
    } catch (const InsufficientData& e) {
      log.push_back(std::string("linear fit skipped: ") + e.what());
    }
  }
  write_file(dir / "run.log", [&] {
    std::string text;
    for (const auto& l : log) {
      text += l;
      text += '\n';
    }
    return text;
  }());
  print_rows(semi_rows, cfg.output.directory);
  return 0;
}

}  // namespace

int selftest() {
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<Real> unif(-1.0, 1.0);
  int fails = 0;
  auto check = [&fails](bool ok, const char* name, const std::string& detail) {
    if (ok) {
      std::cout << "[ok] " << name << "\n";
    } else {
      std::cout << "[FAIL] " << name << " (" << detail << ")\n";
      ++fails;
    }
  };
  auto str = [](Real v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };

  {
    const int n = 40;
    Vector lo(n - 1), up(n - 1), di(n), b(n);
    for (int i = 0; i < n - 1; ++i) {
      lo(i) = unif(rng);
      up(i) = unif(rng);
    }
    for (int i = 0; i < n; ++i) {
      di(i) = 4 + unif(rng);
      b(i) = unif(rng);
    }
    Matrix A = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) A(i, i) = di(i);
    for (int i = 0; i < n - 1; ++i) {
      A(i + 1, i) = lo(i);
      A(i, i + 1) = up(i);
    }
    const Vector x_dense = A.fullPivLu().solve(b);
    const Vector x_tri = numerics::solve_tridiagonal(lo, di, up, b);
    const Real rel = (x_tri - x_dense).norm() / x_dense.norm();
    check(rel <= 1e-10, "tridiagonal vs dense LU", "rel=" + str(rel));
  }

  const Grid g(24, 0.5, 48, 0.3, 0.8);

  {
    const Grid gd(40, 0.1, 80, 0.3, 0.8);
    SpaceField u0(gd.nx), exact(gd.nx);
    for (int i = 0; i < gd.nx; ++i) {
      u0(i) = std::sin(M_PI * gd.node(i));
      exact(i) = std::exp(-M_PI * M_PI * gd.T) * u0(i);
    }
    const auto traj = heat1d::solve_forward(gd, {}, {}, {}, u0);
    const Real rel = numerics::l2_norm(traj.terminal() - exact, gd) /
                     numerics::l2_norm(exact, gd);
    check(rel <= 5e-3, "heat kernel decay", "rel=" + str(rel));
  }

  {
    SpaceField wT(g.nx);
    for (int i = 0; i < g.nx; ++i) wT(i) = unif(rng);
    const auto back = heat1d::solve_backward(g, {}, {}, {}, wT);
    const bool exact = (back.terminal().array() == wT.array()).all();
    check(exact, "backward solve pins terminal data", "terminal differs");
  }

  {
    SpaceField a(g.nx), b2(g.nx);
    for (int i = 0; i < g.nx; ++i) {
      a(i) = unif(rng);
      b2(i) = unif(rng);
    }
    const auto ta = heat1d::solve_forward(g, {}, {}, {}, a);
    const auto tb = heat1d::solve_forward(g, {}, {}, {}, b2);
    const auto tab = heat1d::solve_forward(g, {}, {}, {}, a + b2);
    const Real gap = (tab.field.values - ta.field.values - tb.field.values)
                         .cwiseAbs()
                         .maxCoeff();
    check(gap <= 1e-12, "forward solve linearity", "gap=" + str(gap));
  }

  const auto wp = linctrl::make_window_problem(g, {}, 0.5,
                                               linctrl::EMode::adaptive, {}, 0);

  {
    Matrix theta(g.nx, g.nt + 1);
    SpaceField phi(g.nx);
    for (int i = 0; i < g.nx; ++i) {
      phi(i) = unif(rng);
      for (int k = 0; k <= g.nt; ++k) theta(i, k) = unif(rng);
    }
    SpaceTimeField th{theta, false};
    const Real lhs = numerics::l2_inner(linctrl::apply_C(th, wp), phi, wp.grid);
    const Real rhs =
        numerics::st_inner(th, linctrl::apply_Cstar(phi, wp), wp.grid);
    const Real scale = numerics::st_norm(th, wp.grid) *
                       numerics::l2_norm(phi, wp.grid);
    const Real gap = std::abs(lhs - rhs) / scale;
    check(gap <= 1e-10, "control/adjoint duality", "gap=" + str(gap));
  }

  const Matrix B = linctrl::assemble_B(wp);

  {
    Matrix qv(g.nx, g.nt + 1);
    for (int i = 0; i < g.nx; ++i) qv.row(i).setConstant(1 + g.node(i));
    SpaceTimeField qfull{qv, false};
    const auto wpq = linctrl::make_window_problem(
        g, qfull, 0.5, linctrl::EMode::adaptive, {}, field_sup(qfull));
    const Matrix Bq = linctrl::assemble_B(wpq);
    const Real asym = (Bq - Bq.transpose()).cwiseAbs().maxCoeff();
    const auto eig = numerics::eig_symmetric(Bq);
    const Real mineig = eig.eigenvalues(eig.eigenvalues.size() - 1);
    const bool ok = asym <= 1e-12 * Bq.cwiseAbs().maxCoeff() &&
                    mineig >= -1e-10 * eig.eigenvalues(0);
    check(ok, "gramian symmetric and nonnegative",
          "asym=" + str(asym) + " min_eig=" + str(mineig));
  }

  const auto basis = linctrl::spectral_bands(B);

  {
    const SpaceField z = basis.xi.col(0);
    const auto fc = linctrl::approx_control_l(z, basis.N_max, basis, wp);
    const SpaceField land = linctrl::window_forward(fc.ell, wp);
    const Real zn = numerics::l2_norm(z, wp.grid);
    const Real steer = numerics::l2_norm(land - fc.z_proj, wp.grid) / zn;
    const Real proj = numerics::l2_norm(z - fc.z_proj, wp.grid) / zn;
    check(steer <= 1e-6 && proj <= 1e-6, "band-filtered steering",
          "steer=" + str(steer) + " proj=" + str(proj));
  }

  {
    SpaceField pi0(g.nx);
    for (int i = 0; i < g.nx; ++i) pi0(i) = std::sin(M_PI * g.node(i));
    const auto nc = linctrl::null_control(pi0, wp, 1e-3);
    check(nc.residual_rel <= 1e-3, "penalized null control",
          "residual=" + str(nc.residual_rel));
  }

  {
    const Real nan = std::numeric_limits<Real>::quiet_NaN();
    std::vector<SweepRow> rows(3);
    rows[0] = {0.5, 0.5, 2, 12.25, 0.031, 1.5, 9, true, 0.125};
    rows[1] = {0.25, nan, 0, nan, nan, nan, 0, false, 0.5};
    rows[2] = {0.1, 0.5, 3, 1e6, 0.099, 2.5, 17, true, 1.75};
    const std::string text = to_csv(rows);
    const std::string again = to_csv(parse_csv(text));
    check(text == again, "csv round trip", "serializations differ");
  }

  {
    const std::string sample = R"({"seed": 7, "problem": {"nx": 24, "nt": 48,
      "T": 0.5, "omega_lo": 0.3, "omega_hi": 0.8, "u0": {"type": "sine"},
      "u_d": {"type": "parabola", "amplitude": 0.5}},
      "sweep": {"epsilons": [0.5, 0.25]}})";
    const std::string e1 = echo_config(parse_config_text(sample));
    const std::string e2 = echo_config(parse_config_text(e1));
    check(e1 == e2, "config echo idempotent", "echoes differ");
  }

  {
    std::vector<SweepRow> rows;
    for (const Real e : {1.0, 0.8, 0.6, 0.5, 0.4}) {
      SweepRow r;
      r.epsilon = e;
      r.cost_L2 = std::exp(3 / e);
      r.converged = true;
      rows.push_back(r);
    }
    const FitReport rep = fit_cost_curve(rows);
    Real slope = 0;
    for (const auto& m : rep.models)
      if (m.name == rep.best) slope = m.slope;
    check(rep.best == "exp_inv_eps" && std::abs(slope - 3) <= 0.15,
          "cost-curve fit recovers exp(3/eps)",
          "best=" + rep.best + " slope=" + str(slope));
  }

  std::cout << (fails == 0 ? "selftest passed" : "selftest FAILED") << "\n";
  return fails;
}

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{
      "numerical laboratory for approximate controllability of the 1d "
      "semilinear heat equation",
      "heatctl"};
  app.footer(kConfigKeyHelp);
  app.require_subcommand(1);

  std::string config_path;
  std::string csv_path;

  CLI::App* lin = app.add_subcommand(
      "linear", "sweep with the linear controller (requires f identically 0)");
  lin->add_option("config", config_path, "experiment config (JSON)")->required();
  CLI::App* semi = app.add_subcommand(
      "semilinear", "sweep with the homotopy controller");
  semi->add_option("config", config_path, "experiment config (JSON)")->required();
  CLI::App* sweep = app.add_subcommand(
      "sweep", "both passes: the f->0 linear reduction, then the semilinear run");
  sweep->add_option("config", config_path, "experiment config (JSON)")->required();
  CLI::App* fit = app.add_subcommand(
      "fit", "fit cost-growth models to an existing results CSV");
  fit->add_option("csv", csv_path, "results CSV produced by a sweep")->required();
  app.add_subcommand("selftest", "run the seeded invariant battery");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("heatctl");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (lin->parsed()) {
      const auto cfg = load_config(config_path);
      print_rows(run_linear(cfg), cfg.output.directory);
      return 0;
    }
    if (semi->parsed()) {
      const auto cfg = load_config(config_path);
      print_rows(run_semilinear(cfg), cfg.output.directory);
      return 0;
    }
    if (sweep->parsed()) return run_sweep_command(load_config(config_path));
    if (fit->parsed()) {
      std::cout << format_fit_report(fit_cost_curve(parse_csv(read_file(csv_path))));
      return 0;
    }
    return selftest() > 0 ? 2 : 0;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const InsufficientData& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace heatctl::cost_lab
