#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "heatctl/semictrl.hpp"

namespace heatctl::cost_lab {

/// Catalog entry for an initial or target profile.
/// types: zero | sine (amplitude * sin(k pi x)) | bump (smooth, supported in
/// |x-center| < width) | parabola (amplitude * x(1-x)) | custom (tabulated).
struct FieldSelector {
  std::string type = "zero";
  Real amplitude = 1;
  int k = 1;
  Real center = 0.5;
  Real width = 0.25;
  std::vector<Real> values;
};

/// Catalog entry for f. types: zero | affine (a s + b) | sine (sin(a s) + b) |
/// cubic (a s^3).
struct NonlinearitySelector {
  std::string type = "zero";
  Real a = 1;
  Real b = 0;
};

struct ProblemBlock {
  int nx = 0;
  int nt = 0;
  Real T = 0;
  Real omega_lo = 0;
  Real omega_hi = 0;
  NonlinearitySelector nonlinearity;
  FieldSelector u0;
  FieldSelector u_d;
};

struct ControllerBlock {
  std::string t_prime_policy = "eq-2.9";  // eq-2.9 | epsilon-T | fixed
  Real t_prime_fixed = 0;
  std::string n_policy = "adaptive";      // adaptive | paper-formula
  std::string e_mode = "adaptive";        // adaptive | paper
  linctrl::Constants constants;
  Real mu_floor_rel = linctrl::kDefaultMuFloorRel;
  Real tol_fp = 1e-6;
  Real tol_pde = 1e-4;
  Real sigma_step = 0.25;
  Real theta_damp = 1.0;
  int max_picard = 60;
  Real blowup_cap = 1e12;
  Real freeze_basis_after = 0;
};

struct SweepBlock {
  std::vector<Real> epsilons;
  int repetitions = 1;
  int workers = 0;  // 0 = min(#points, 8); HEATCTL_THREADS caps further
};

struct OutputBlock {
  std::string directory = "heatctl_out";
  std::string csv_name = "results.csv";
  bool emit_plot_data = false;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  ProblemBlock problem;
  ControllerBlock controller;
  SweepBlock sweep;
  OutputBlock output;
};

/// Strict parse: unknown keys raise ParseError naming the key; value
/// violations raise ValidationError listing every broken invariant.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& json_text);

/// Fully resolved canonical serialization; reloading the echo and echoing
/// again is byte-identical.
std::string echo_config(const ExperimentConfig& cfg);

struct SweepRow {
  Real epsilon = 0;
  Real T_prime = 0;
  int N_used = 0;
  Real cost_L2 = 0;
  Real err_L2 = 0;
  Real u_sup = 0;
  int picard_iters_total = 0;
  bool converged = false;
  Real runtime_s = 0;
};

/// CSV schema, exactly this header, '.' decimals, LF line ends, shortest
/// round-trip float formatting.
extern const char* const kCsvHeader;

std::string to_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> parse_csv(const std::string& text);

/// Resolvers shared by the runners and tests.
SpaceField resolve_field(const FieldSelector& sel, const Grid& g);
semictrl::Nonlinearity resolve_nonlinearity(const NonlinearitySelector& sel);
bool nonlinearity_is_zero(const NonlinearitySelector& sel);

/// Pure sweeps: one row per (epsilon, repetition) in config order, parallel
/// across points, per-row failures flagged instead of aborting.
std::vector<SweepRow> compute_linear_rows(const ExperimentConfig& cfg,
                                          std::vector<std::string>* log = nullptr);
std::vector<SweepRow> compute_semilinear_rows(const ExperimentConfig& cfg,
                                              std::vector<std::string>* log = nullptr);

/// Sweep runners with artifacts: CSV + resolved_config.json + run.log in the
/// output directory, plus fit files when emit_plot_data is set.
/// run_linear requires the configured nonlinearity to be identically zero.
std::vector<SweepRow> run_linear(const ExperimentConfig& cfg);
std::vector<SweepRow> run_semilinear(const ExperimentConfig& cfg);

struct FitModelReport {
  std::string name;
  Real slope = 0;
  Real intercept = 0;
  Real ssr = 0;
  Real r2 = 0;
  std::vector<std::array<Real, 2>> points;  // transformed (x, y) pairs
};

struct FitReport {
  std::vector<FitModelReport> models;
  std::string best;
  std::string label;
  int rows_used = 0;
};

/// Least-squares fits of the converged rows against three growth laws:
///   exp_inv_eps:        ln cost        vs 1/eps
///   exp_exp_inv_eps:    ln ln max(cost, 1+1e-6) vs 1/eps
///   exp_inv_eps_sq:     ln cost        vs 1/eps^2
/// Model selection maximizes R^2. Throws InsufficientData below three
/// converged rows with distinct epsilon.
FitReport fit_cost_curve(const std::vector<SweepRow>& rows);

/// Renders the fit report (always carries the empirical disclaimer label).
std::string format_fit_report(const FitReport& rep);

/// Writes fit_<model>.dat files (two columns, whitespace separated) and the
/// report text into dir; prefix prepends to the file names.
void write_fit_artifacts(const FitReport& rep, const std::string& dir,
                         const std::string& prefix = "");

/// Seeded invariant battery used by `heatctl selftest`; returns the number of
/// failed checks and prints one line per check.
int selftest();

/// CLI entry: subcommands linear | semilinear | sweep | fit | selftest.
/// Exit codes: 0 success, 1 validation/parse failure, 2 numerical failure.
int cli_main(const std::vector<std::string>& args);

}  // namespace heatctl::cost_lab
