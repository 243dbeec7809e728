#include "heatctl/cost_lab.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "heatctl/numerics.hpp"

namespace heatctl::cost_lab {
namespace {

using json = nlohmann::ordered_json;

constexpr const char* kFitLabel =
    "empirical — constants in the theoretical bound are not computable";

std::string fmt_real(Real v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

[[noreturn]] void fail_type(const std::string& path, const char* want) {
  throw ParseError("key " + path + ": expected " + want);
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    fail_type(path.empty() ? std::string("<root>") : path, "object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        known = true;
        break;
      }
    if (!known)
      throw ParseError("unknown key: " +
                       (path.empty() ? item.key() : path + "." + item.key()));
  }
}

Real jreal(const json& j, const char* key, const std::string& path, Real dflt) {
  if (!j.contains(key)) return dflt;
  const json& v = j.at(key);
  if (!v.is_number()) fail_type(path + "." + key, "number");
  return v.get<Real>();
}

int jint(const json& j, const char* key, const std::string& path, int dflt) {
  if (!j.contains(key)) return dflt;
  const json& v = j.at(key);
  if (!v.is_number_integer()) fail_type(path + "." + key, "integer");
  return v.get<int>();
}

bool jbool(const json& j, const char* key, const std::string& path, bool dflt) {
  if (!j.contains(key)) return dflt;
  const json& v = j.at(key);
  if (!v.is_boolean()) fail_type(path + "." + key, "boolean");
  return v.get<bool>();
}

std::string jstr(const json& j, const char* key, const std::string& path,
                 const std::string& dflt) {
  if (!j.contains(key)) return dflt;
  const json& v = j.at(key);
  if (!v.is_string()) fail_type(path + "." + key, "string");
  return v.get<std::string>();
}

std::vector<Real> jrealvec(const json& j, const char* key,
                           const std::string& path) {
  std::vector<Real> out;
  if (!j.contains(key)) return out;
  const json& v = j.at(key);
  if (!v.is_array()) fail_type(path + "." + key, "array of numbers");
  for (const auto& e : v) {
    if (!e.is_number()) fail_type(path + "." + key, "array of numbers");
    out.push_back(e.get<Real>());
  }
  return out;
}

FieldSelector parse_field(const json& j, const std::string& path) {
  check_keys(j, path, {"type", "amplitude", "k", "center", "width", "values"});
  FieldSelector s;
  s.type = jstr(j, "type", path, s.type);
  s.amplitude = jreal(j, "amplitude", path, s.amplitude);
  s.k = jint(j, "k", path, s.k);
  s.center = jreal(j, "center", path, s.center);
  s.width = jreal(j, "width", path, s.width);
  s.values = jrealvec(j, "values", path);
  return s;
}

void validate_field(const FieldSelector& s, const std::string& path, int nx,
                    std::vector<std::string>& bad) {
  const bool known = s.type == "zero" || s.type == "sine" || s.type == "bump" ||
                     s.type == "parabola" || s.type == "custom";
  if (!known) {
    bad.push_back(path + ".type must be one of zero|sine|bump|parabola|custom");
    return;
  }
  if (!std::isfinite(s.amplitude))
    bad.push_back(path + ".amplitude must be finite");
  if (s.type == "sine" && s.k < 1) bad.push_back(path + ".k must be >= 1");
  if (s.type == "bump") {
    if (!(s.width > 0)) bad.push_back(path + ".width must be positive");
    if (!(s.center > 0 && s.center < 1))
      bad.push_back(path + ".center must lie in (0, 1)");
  }
  if (s.type == "custom" && static_cast<int>(s.values.size()) != nx)
    bad.push_back(path + ".values must hold exactly nx entries");
}

json field_json(const FieldSelector& s) {
  json f = json::object();
  f["type"] = s.type;
  f["amplitude"] = s.amplitude;
  f["k"] = s.k;
  f["center"] = s.center;
  f["width"] = s.width;
  f["values"] = s.values;
  return f;
}

semictrl::TprimeRule tprime_rule(const ControllerBlock& c) {
  semictrl::TprimeRule rule;
  if (c.t_prime_policy == "eq-2.9")
    rule.policy = semictrl::TprimePolicy::rule_2_9;
  else if (c.t_prime_policy == "epsilon-T")
    rule.policy = semictrl::TprimePolicy::epsilon_T;
  else if (c.t_prime_policy == "fixed") {
    rule.policy = semictrl::TprimePolicy::fixed;
    rule.fixed_value = c.t_prime_fixed;
  } else
    throw ValidationError("unknown t_prime_policy: " + c.t_prime_policy);
  return rule;
}

linctrl::NPolicy n_policy_of(const ControllerBlock& c) {
  if (c.n_policy == "adaptive") return linctrl::NPolicy::adaptive;
  if (c.n_policy == "paper-formula") return linctrl::NPolicy::paper_formula;
  throw ValidationError("unknown n_policy: " + c.n_policy);
}

linctrl::EMode e_mode_of(const ControllerBlock& c) {
  if (c.e_mode == "adaptive") return linctrl::EMode::adaptive;
  if (c.e_mode == "paper") return linctrl::EMode::paper;
  throw ValidationError("unknown e_mode: " + c.e_mode);
}

SweepRow failed_row(Real eps) {
  const Real nan = std::numeric_limits<Real>::quiet_NaN();
  SweepRow row;
  row.epsilon = eps;
  row.T_prime = nan;
  row.cost_L2 = nan;
  row.err_L2 = nan;
  row.u_sup = nan;
  row.converged = false;
  return row;
}

std::string describe_row(const SweepRow& r) {
  std::ostringstream os;
  os << "eps=" << fmt_real(r.epsilon) << " converged="
     << (r.converged ? "true" : "false") << " err_L2=" << fmt_real(r.err_L2)
     << " cost_L2=" << fmt_real(r.cost_L2) << " N=" << r.N_used
     << " T_prime=" << fmt_real(r.T_prime)
     << " picard=" << r.picard_iters_total;
  return os.str();
}

// Runs one SweepRow computation per (epsilon, repetition) point, spreading
// points over a small thread pool. Rows land at their point index, so the
// output order never depends on scheduling.
template <typename PointFn>
std::vector<SweepRow> run_points(const ExperimentConfig& cfg, PointFn&& point,
                                 std::vector<std::string>* log) {
  std::vector<Real> eps_of_point;
  for (const Real e : cfg.sweep.epsilons)
    for (int r = 0; r < cfg.sweep.repetitions; ++r) eps_of_point.push_back(e);
  const int n = static_cast<int>(eps_of_point.size());
  std::vector<SweepRow> rows(n);
  if (n == 0) return rows;
  std::vector<std::string> lines(n);

  int workers = cfg.sweep.workers > 0 ? cfg.sweep.workers : std::min(n, 8);
  if (const char* env = std::getenv("HEATCTL_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap > 0) workers = std::min(workers, static_cast<int>(cap));
  }
  workers = std::min(std::max(workers, 1), n);

  std::atomic<int> next{0};
  auto work = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        rows[i] = point(eps_of_point[i]);
        rows[i].epsilon = eps_of_point[i];
        lines[i] = describe_row(rows[i]);
      } catch (const std::exception& e) {
        rows[i] = failed_row(eps_of_point[i]);
        lines[i] = "eps=" + fmt_real(eps_of_point[i]) + " failed: " + e.what();
      }
      rows[i].runtime_s =
          std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0)
              .count();
    }
  };

  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (log)
    for (auto& l : lines) log->push_back(std::move(l));
  return rows;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  out << text;
  out.flush();
  if (!out) throw Error("write failed: " + path);
}

std::vector<SweepRow> run_with_artifacts(const ExperimentConfig& cfg,
                                         bool semilinear) {
  namespace fs = std::filesystem;
  if (!semilinear && !nonlinearity_is_zero(cfg.problem.nonlinearity))
    throw ValidationError(
        "linear runner requires f identically zero; set "
        "problem.nonlinearity.type to \"zero\" or use the semilinear runner");
  fs::create_directories(cfg.output.directory);

  std::vector<std::string> log;
  log.push_back(semilinear ? "semilinear sweep" : "linear sweep");
  std::vector<SweepRow> rows = semilinear ? compute_semilinear_rows(cfg, &log)
                                          : compute_linear_rows(cfg, &log);

  const fs::path dir(cfg.output.directory);
  write_text_file((dir / cfg.output.csv_name).string(), to_csv(rows));
  write_text_file((dir / "resolved_config.json").string(), echo_config(cfg));
  if (cfg.output.emit_plot_data) {
    try {
      const FitReport rep = fit_cost_curve(rows);
      write_fit_artifacts(rep, dir.string());
      log.push_back("fit: selected " + rep.best);
    } catch (const InsufficientData& e) {
      log.push_back(std::string("fit skipped: ") + e.what());
    }
  }
  write_text_file((dir / "run.log").string(), join(log, "\n") + "\n");
  return rows;
}

}  // namespace

const char* const kCsvHeader =
    "epsilon,T_prime,N_used,cost_L2,err_L2,u_sup,picard_iters_total,"
    "converged,runtime_s";

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

ExperimentConfig parse_config_text(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  check_keys(j, "", {"seed", "problem", "controller", "sweep", "output"});
  if (!j.contains("problem"))
    throw ParseError("missing required block: problem");

  ExperimentConfig cfg;

  if (j.contains("seed")) {
    const json& v = j.at("seed");
    const bool ok = v.is_number_unsigned() ||
                    (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    if (!ok) fail_type("seed", "nonnegative integer");
    cfg.seed = v.get<std::uint64_t>();
  }

  {
    const json& p = j.at("problem");
    check_keys(p, "problem",
               {"nx", "nt", "T", "omega_lo", "omega_hi", "nonlinearity", "u0",
                "u_d"});
    cfg.problem.nx = jint(p, "nx", "problem", cfg.problem.nx);
    cfg.problem.nt = jint(p, "nt", "problem", cfg.problem.nt);
    cfg.problem.T = jreal(p, "T", "problem", cfg.problem.T);
    cfg.problem.omega_lo = jreal(p, "omega_lo", "problem", cfg.problem.omega_lo);
    cfg.problem.omega_hi = jreal(p, "omega_hi", "problem", cfg.problem.omega_hi);
    if (p.contains("nonlinearity")) {
      const json& nl = p.at("nonlinearity");
      check_keys(nl, "problem.nonlinearity", {"type", "a", "b"});
      cfg.problem.nonlinearity.type =
          jstr(nl, "type", "problem.nonlinearity", cfg.problem.nonlinearity.type);
      cfg.problem.nonlinearity.a =
          jreal(nl, "a", "problem.nonlinearity", cfg.problem.nonlinearity.a);
      cfg.problem.nonlinearity.b =
          jreal(nl, "b", "problem.nonlinearity", cfg.problem.nonlinearity.b);
    }
    if (p.contains("u0")) cfg.problem.u0 = parse_field(p.at("u0"), "problem.u0");
    if (p.contains("u_d"))
      cfg.problem.u_d = parse_field(p.at("u_d"), "problem.u_d");
  }

  if (j.contains("controller")) {
    const json& c = j.at("controller");
    check_keys(c, "controller",
               {"t_prime_policy", "t_prime_fixed", "n_policy", "e_mode",
                "constants", "mu_floor_rel", "tol_fp", "tol_pde", "sigma_step",
                "theta_damp", "max_picard", "blowup_cap", "freeze_basis_after"});
    ControllerBlock& cb = cfg.controller;
    cb.t_prime_policy = jstr(c, "t_prime_policy", "controller", cb.t_prime_policy);
    cb.t_prime_fixed = jreal(c, "t_prime_fixed", "controller", cb.t_prime_fixed);
    cb.n_policy = jstr(c, "n_policy", "controller", cb.n_policy);
    cb.e_mode = jstr(c, "e_mode", "controller", cb.e_mode);
    if (c.contains("constants")) {
      const json& k = c.at("constants");
      check_keys(k, "controller.constants",
                 {"c0", "c1", "c2", "c3", "c4", "c5", "c6", "n_o"});
      linctrl::Constants& cc = cb.constants;
      cc.c0 = jreal(k, "c0", "controller.constants", cc.c0);
      cc.c1 = jreal(k, "c1", "controller.constants", cc.c1);
      cc.c2 = jreal(k, "c2", "controller.constants", cc.c2);
      cc.c3 = jreal(k, "c3", "controller.constants", cc.c3);
      cc.c4 = jreal(k, "c4", "controller.constants", cc.c4);
      cc.c5 = jreal(k, "c5", "controller.constants", cc.c5);
      cc.c6 = jreal(k, "c6", "controller.constants", cc.c6);
      cc.n_o = jreal(k, "n_o", "controller.constants", cc.n_o);
    }
    cb.mu_floor_rel = jreal(c, "mu_floor_rel", "controller", cb.mu_floor_rel);
    cb.tol_fp = jreal(c, "tol_fp", "controller", cb.tol_fp);
    cb.tol_pde = jreal(c, "tol_pde", "controller", cb.tol_pde);
    cb.sigma_step = jreal(c, "sigma_step", "controller", cb.sigma_step);
    cb.theta_damp = jreal(c, "theta_damp", "controller", cb.theta_damp);
    cb.max_picard = jint(c, "max_picard", "controller", cb.max_picard);
    cb.blowup_cap = jreal(c, "blowup_cap", "controller", cb.blowup_cap);
    cb.freeze_basis_after =
        jreal(c, "freeze_basis_after", "controller", cb.freeze_basis_after);
  }

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    check_keys(s, "sweep", {"epsilons", "repetitions", "workers"});
    cfg.sweep.epsilons = jrealvec(s, "epsilons", "sweep");
    cfg.sweep.repetitions = jint(s, "repetitions", "sweep", cfg.sweep.repetitions);
    cfg.sweep.workers = jint(s, "workers", "sweep", cfg.sweep.workers);
  }

  if (j.contains("output")) {
    const json& o = j.at("output");
    check_keys(o, "output", {"directory", "csv_name", "emit_plot_data"});
    cfg.output.directory = jstr(o, "directory", "output", cfg.output.directory);
    cfg.output.csv_name = jstr(o, "csv_name", "output", cfg.output.csv_name);
    cfg.output.emit_plot_data =
        jbool(o, "emit_plot_data", "output", cfg.output.emit_plot_data);
  }

  // Value validation: collect every violation before failing.
  std::vector<std::string> bad;
  const ProblemBlock& p = cfg.problem;
  if (p.nx < 3) bad.push_back("problem.nx must be at least 3");
  if (p.nt < 2) bad.push_back("problem.nt must be at least 2");
  if (!(p.T > 0) || !std::isfinite(p.T))
    bad.push_back("problem.T must be positive and finite");
  if (!(p.omega_lo >= 0 && p.omega_lo < p.omega_hi && p.omega_hi <= 1))
    bad.push_back("problem omega must satisfy 0 <= omega_lo < omega_hi <= 1");
  if (bad.empty()) {
    try {
      Grid probe(p.nx, p.T, p.nt, p.omega_lo, p.omega_hi);
    } catch (const ValidationError& e) {
      bad.push_back(e.what());
    }
  }
  {
    const auto& nl = p.nonlinearity;
    const bool known = nl.type == "zero" || nl.type == "affine" ||
                       nl.type == "sine" || nl.type == "cubic";
    if (!known)
      bad.push_back(
          "problem.nonlinearity.type must be one of zero|affine|sine|cubic");
    if (!std::isfinite(nl.a) || !std::isfinite(nl.b))
      bad.push_back("problem.nonlinearity parameters must be finite");
  }
  validate_field(p.u0, "problem.u0", p.nx, bad);
  validate_field(p.u_d, "problem.u_d", p.nx, bad);

  const ControllerBlock& cb = cfg.controller;
  if (cb.t_prime_policy != "eq-2.9" && cb.t_prime_policy != "epsilon-T" &&
      cb.t_prime_policy != "fixed")
    bad.push_back(
        "controller.t_prime_policy must be one of eq-2.9|epsilon-T|fixed");
  if (cb.t_prime_policy == "fixed" && !(cb.t_prime_fixed > 0))
    bad.push_back("controller.t_prime_fixed must be positive");
  if (cb.n_policy != "adaptive" && cb.n_policy != "paper-formula")
    bad.push_back("controller.n_policy must be adaptive or paper-formula");
  if (cb.e_mode != "adaptive" && cb.e_mode != "paper")
    bad.push_back("controller.e_mode must be adaptive or paper");
  if (!(cb.mu_floor_rel >= 0 && cb.mu_floor_rel < 1))
    bad.push_back("controller.mu_floor_rel must lie in [0, 1)");
  if (!(cb.tol_fp > 0)) bad.push_back("controller.tol_fp must be positive");
  if (!(cb.tol_pde > 0)) bad.push_back("controller.tol_pde must be positive");
  if (!(cb.sigma_step > 0 && cb.sigma_step <= 1))
    bad.push_back("controller.sigma_step must lie in (0, 1]");
  if (!(cb.theta_damp > 0 && cb.theta_damp <= 1))
    bad.push_back("controller.theta_damp must lie in (0, 1]");
  if (cb.max_picard < 1)
    bad.push_back("controller.max_picard must be at least 1");
  if (!(cb.blowup_cap > 0))
    bad.push_back("controller.blowup_cap must be positive");
  if (!(cb.freeze_basis_after >= 0))
    bad.push_back("controller.freeze_basis_after must be nonnegative");
  for (const Real c : {cb.constants.c0, cb.constants.c1, cb.constants.c2,
                       cb.constants.c3, cb.constants.c4, cb.constants.c5,
                       cb.constants.c6}) {
    if (!(c > 0) || !std::isfinite(c)) {
      bad.push_back("controller.constants c0..c6 must be positive and finite");
      break;
    }
  }
  if (!(cb.constants.n_o >= 0) || !std::isfinite(cb.constants.n_o))
    bad.push_back("controller.constants.n_o must be nonnegative and finite");

  for (std::size_t i = 0; i < cfg.sweep.epsilons.size(); ++i) {
    const Real e = cfg.sweep.epsilons[i];
    if (!(e > 0 && e <= 1) || !std::isfinite(e))
      bad.push_back("sweep.epsilons[" + std::to_string(i) +
                    "] must lie in (0, 1]");
  }
  if (cfg.sweep.repetitions < 1)
    bad.push_back("sweep.repetitions must be at least 1");
  if (cfg.sweep.workers < 0)
    bad.push_back("sweep.workers must be nonnegative");
  if (cfg.output.directory.empty())
    bad.push_back("output.directory must be nonempty");
  if (cfg.output.csv_name.empty())
    bad.push_back("output.csv_name must be nonempty");

  if (!bad.empty())
    throw ValidationError("invalid config: " + join(bad, "; "));
  return cfg;
}

std::string echo_config(const ExperimentConfig& cfg) {
  json j = json::object();
  j["seed"] = cfg.seed;

  json p = json::object();
  p["nx"] = cfg.problem.nx;
  p["nt"] = cfg.problem.nt;
  p["T"] = cfg.problem.T;
  p["omega_lo"] = cfg.problem.omega_lo;
  p["omega_hi"] = cfg.problem.omega_hi;
  json nl = json::object();
  nl["type"] = cfg.problem.nonlinearity.type;
  nl["a"] = cfg.problem.nonlinearity.a;
  nl["b"] = cfg.problem.nonlinearity.b;
  p["nonlinearity"] = nl;
  p["u0"] = field_json(cfg.problem.u0);
  p["u_d"] = field_json(cfg.problem.u_d);
  j["problem"] = p;

  json c = json::object();
  c["t_prime_policy"] = cfg.controller.t_prime_policy;
  c["t_prime_fixed"] = cfg.controller.t_prime_fixed;
  c["n_policy"] = cfg.controller.n_policy;
  c["e_mode"] = cfg.controller.e_mode;
  json k = json::object();
  k["c0"] = cfg.controller.constants.c0;
  k["c1"] = cfg.controller.constants.c1;
  k["c2"] = cfg.controller.constants.c2;
  k["c3"] = cfg.controller.constants.c3;
  k["c4"] = cfg.controller.constants.c4;
  k["c5"] = cfg.controller.constants.c5;
  k["c6"] = cfg.controller.constants.c6;
  k["n_o"] = cfg.controller.constants.n_o;
  c["constants"] = k;
  c["mu_floor_rel"] = cfg.controller.mu_floor_rel;
  c["tol_fp"] = cfg.controller.tol_fp;
  c["tol_pde"] = cfg.controller.tol_pde;
  c["sigma_step"] = cfg.controller.sigma_step;
  c["theta_damp"] = cfg.controller.theta_damp;
  c["max_picard"] = cfg.controller.max_picard;
  c["blowup_cap"] = cfg.controller.blowup_cap;
  c["freeze_basis_after"] = cfg.controller.freeze_basis_after;
  j["controller"] = c;

  json s = json::object();
  s["epsilons"] = cfg.sweep.epsilons;
  s["repetitions"] = cfg.sweep.repetitions;
  s["workers"] = cfg.sweep.workers;
  j["sweep"] = s;

  json o = json::object();
  o["directory"] = cfg.output.directory;
  o["csv_name"] = cfg.output.csv_name;
  o["emit_plot_data"] = cfg.output.emit_plot_data;
  j["output"] = o;

  return j.dump(2) + "\n";
}

std::string to_csv(const std::vector<SweepRow>& rows) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const SweepRow& r : rows) {
    out += fmt_real(r.epsilon);
    out += ',';
    out += fmt_real(r.T_prime);
    out += ',';
    out += std::to_string(r.N_used);
    out += ',';
    out += fmt_real(r.cost_L2);
    out += ',';
    out += fmt_real(r.err_L2);
    out += ',';
    out += fmt_real(r.u_sup);
    out += ',';
    out += std::to_string(r.picard_iters_total);
    out += ',';
    out += r.converged ? "true" : "false";
    out += ',';
    out += fmt_real(r.runtime_s);
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t nxt = s.find(sep, pos);
    if (nxt == std::string::npos) {
      out.push_back(s.substr(pos));
      return out;
    }
    out.push_back(s.substr(pos, nxt - pos));
    pos = nxt + 1;
  }
}

Real csv_real(const std::string& s, int line) {
  Real v{};
  const char* b = s.data();
  const auto res = std::from_chars(b, b + s.size(), v);
  if (res.ec != std::errc() || res.ptr != b + s.size())
    throw ParseError("CSV line " + std::to_string(line) + ": bad number \"" +
                     s + "\"");
  return v;
}

int csv_int(const std::string& s, int line) {
  int v{};
  const char* b = s.data();
  const auto res = std::from_chars(b, b + s.size(), v);
  if (res.ec != std::errc() || res.ptr != b + s.size())
    throw ParseError("CSV line " + std::to_string(line) + ": bad integer \"" +
                     s + "\"");
  return v;
}

}  // namespace

std::vector<SweepRow> parse_csv(const std::string& text) {
  std::vector<std::string> lines = split(text, '\n');
  for (auto& l : lines)
    if (!l.empty() && l.back() == '\r') l.pop_back();
  if (lines.empty() || lines[0] != kCsvHeader)
    throw ParseError(std::string("CSV header mismatch; expected \"") +
                     kCsvHeader + "\"");
  std::vector<SweepRow> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto f = split(lines[li], ',');
    if (f.size() != 9)
      throw ParseError("CSV line " + std::to_string(li + 1) +
                       ": expected 9 fields, got " + std::to_string(f.size()));
    SweepRow r;
    const int ln = static_cast<int>(li + 1);
    r.epsilon = csv_real(f[0], ln);
    r.T_prime = csv_real(f[1], ln);
    r.N_used = csv_int(f[2], ln);
    r.cost_L2 = csv_real(f[3], ln);
    r.err_L2 = csv_real(f[4], ln);
    r.u_sup = csv_real(f[5], ln);
    r.picard_iters_total = csv_int(f[6], ln);
    if (f[7] == "true")
      r.converged = true;
    else if (f[7] == "false")
      r.converged = false;
    else
      throw ParseError("CSV line " + std::to_string(ln) +
                       ": converged must be true or false");
    r.runtime_s = csv_real(f[8], ln);
    rows.push_back(r);
  }
  return rows;
}

SpaceField resolve_field(const FieldSelector& sel, const Grid& g) {
  SpaceField v = SpaceField::Zero(g.nx);
  if (sel.type == "zero") return v;
  if (sel.type == "sine") {
    for (int i = 0; i < g.nx; ++i)
      v(i) = sel.amplitude * std::sin(sel.k * M_PI * g.node(i));
    return v;
  }
  if (sel.type == "bump") {
    for (int i = 0; i < g.nx; ++i) {
      const Real s = (g.node(i) - sel.center) / sel.width;
      if (std::abs(s) < 1)
        v(i) = sel.amplitude * std::exp(1 - 1 / (1 - s * s));
    }
    return v;
  }
  if (sel.type == "parabola") {
    for (int i = 0; i < g.nx; ++i)
      v(i) = sel.amplitude * g.node(i) * (1 - g.node(i));
    return v;
  }
  if (sel.type == "custom") {
    if (static_cast<int>(sel.values.size()) != g.nx)
      throw ValidationError("custom field needs exactly nx values");
    for (int i = 0; i < g.nx; ++i) v(i) = sel.values[i];
    return v;
  }
  throw ValidationError("unknown field type: " + sel.type);
}

semictrl::Nonlinearity resolve_nonlinearity(const NonlinearitySelector& sel) {
  const Real a = sel.a;
  const Real b = sel.b;
  if (sel.type == "zero") return semictrl::Nonlinearity::zero();
  if (sel.type == "affine")
    return {[a, b](Real s) { return a * s + b; }, b, a, "affine"};
  if (sel.type == "sine")
    return {[a, b](Real s) { return std::sin(a * s) + b; }, b, a, "sine"};
  if (sel.type == "cubic")
    return {[a](Real s) { return a * s * s * s; }, 0, 0, "cubic"};
  throw ValidationError("unknown nonlinearity type: " + sel.type);
}

bool nonlinearity_is_zero(const NonlinearitySelector& sel) {
  if (sel.type == "zero") return true;
  if (sel.type == "affine") return sel.a == 0 && sel.b == 0;
  if (sel.type == "sine") return sel.a == 0 && sel.b == 0;
  if (sel.type == "cubic") return sel.a == 0;
  return false;
}

std::vector<SweepRow> compute_linear_rows(const ExperimentConfig& cfg,
                                          std::vector<std::string>* log) {
  const Grid g(cfg.problem.nx, cfg.problem.T, cfg.problem.nt,
               cfg.problem.omega_lo, cfg.problem.omega_hi);
  const SpaceField u0 = resolve_field(cfg.problem.u0, g);
  const SpaceField ud = resolve_field(cfg.problem.u_d, g);
  const auto rule = tprime_rule(cfg.controller);
  const auto npol = n_policy_of(cfg.controller);
  const auto emode = e_mode_of(cfg.controller);

  return run_points(
      cfg,
      [&](Real eps) {
        const Real T_req = semictrl::choose_Tprime(eps, 0, g.T, rule);
        const auto wp = linctrl::make_window_problem(
            g, {}, T_req, emode, cfg.controller.constants, 0,
            cfg.controller.mu_floor_rel);
        linctrl::LinearControlSpec ls;
        ls.u0 = u0;
        ls.z_d = ud;
        ls.lambda = 0;
        ls.eps = eps;
        ls.n_policy = npol;
        const auto ctrl = linctrl::linear_approx_control(ls, wp, g, nullptr);
        SweepRow row;
        row.T_prime = ctrl.T_prime;
        row.N_used = ctrl.N_used;
        row.cost_L2 = ctrl.cost_L2;
        row.err_L2 = ctrl.err_L2;
        row.u_sup = field_sup(ctrl.controlled.field);
        row.picard_iters_total = 0;
        row.converged = ctrl.err_L2 <= eps;
        return row;
      },
      log);
}

std::vector<SweepRow> compute_semilinear_rows(const ExperimentConfig& cfg,
                                              std::vector<std::string>* log) {
  const Grid g(cfg.problem.nx, cfg.problem.T, cfg.problem.nt,
               cfg.problem.omega_lo, cfg.problem.omega_hi);
  const SpaceField u0 = resolve_field(cfg.problem.u0, g);
  const SpaceField ud = resolve_field(cfg.problem.u_d, g);
  const auto nl = resolve_nonlinearity(cfg.problem.nonlinearity);
  const auto rule = tprime_rule(cfg.controller);
  const auto npol = n_policy_of(cfg.controller);
  const auto emode = e_mode_of(cfg.controller);

  return run_points(
      cfg,
      [&](Real eps) {
        semictrl::SemilinearSpec spec;
        spec.grid = g;
        spec.nl = nl;
        spec.u0 = u0;
        spec.u_d = ud;
        spec.eps = eps;
        spec.tprime = rule;
        spec.n_policy = npol;
        spec.e_mode = emode;
        spec.constants = cfg.controller.constants;
        spec.homotopy.sigma_step = cfg.controller.sigma_step;
        spec.homotopy.theta_damp = cfg.controller.theta_damp;
        spec.homotopy.tol_fp = cfg.controller.tol_fp;
        spec.homotopy.max_picard = cfg.controller.max_picard;
        spec.homotopy.freeze_basis_after = cfg.controller.freeze_basis_after;
        spec.blowup_cap = cfg.controller.blowup_cap;
        spec.tol_pde = cfg.controller.tol_pde;
        spec.mu_floor_rel = cfg.controller.mu_floor_rel;
        const auto rep = semictrl::solve_semilinear(spec);
        SweepRow row;
        row.T_prime = rep.T_prime;
        row.N_used = rep.N_used;
        row.cost_L2 = rep.cost_L2;
        row.err_L2 = rep.err_L2;
        row.u_sup = rep.u_sup;
        row.picard_iters_total = rep.picard_iters_total;
        row.converged = rep.converged;
        return row;
      },
      log);
}

std::vector<SweepRow> run_linear(const ExperimentConfig& cfg) {
  return run_with_artifacts(cfg, false);
}

std::vector<SweepRow> run_semilinear(const ExperimentConfig& cfg) {
  return run_with_artifacts(cfg, true);
}

FitReport fit_cost_curve(const std::vector<SweepRow>& rows) {
  std::vector<std::array<Real, 2>> data;  // (epsilon, cost)
  std::set<Real> distinct;
  for (const SweepRow& r : rows) {
    if (!r.converged) continue;
    if (!std::isfinite(r.cost_L2) || !(r.cost_L2 > 0) || !(r.epsilon > 0))
      continue;
    data.push_back({r.epsilon, r.cost_L2});
    distinct.insert(r.epsilon);
  }
  if (distinct.size() < 3)
    throw InsufficientData(
        "cost-curve fit needs at least 3 converged rows with distinct epsilon; "
        "have " +
        std::to_string(distinct.size()));

  FitReport rep;
  rep.rows_used = static_cast<int>(data.size());
  rep.label = kFitLabel;

  struct ModelDef {
    const char* name;
    Real (*x_of)(Real eps);
    Real (*y_of)(Real cost);
  };
  static const ModelDef defs[] = {
      {"exp_inv_eps", [](Real e) { return 1 / e; },
       [](Real c) { return std::log(c); }},
      {"exp_exp_inv_eps", [](Real e) { return 1 / e; },
       [](Real c) { return std::log(std::log(std::max(c, Real(1) + Real(1e-6)))); }},
      {"exp_inv_eps_sq", [](Real e) { return 1 / (e * e); },
       [](Real c) { return std::log(c); }},
  };

  Real best_r2 = -std::numeric_limits<Real>::infinity();
  for (const ModelDef& d : defs) {
    FitModelReport m;
    m.name = d.name;
    const Real n = static_cast<Real>(data.size());
    Real sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& pt : data) {
      const Real x = d.x_of(pt[0]);
      const Real y = d.y_of(pt[1]);
      m.points.push_back({x, y});
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const Real denom = n * sxx - sx * sx;  // > 0: at least 3 distinct x
    m.slope = (n * sxy - sx * sy) / denom;
    m.intercept = (sy - m.slope * sx) / n;
    const Real ybar = sy / n;
    Real ssr = 0, sst = 0;
    for (const auto& pt : m.points) {
      const Real resid = pt[1] - (m.intercept + m.slope * pt[0]);
      ssr += resid * resid;
      const Real dev = pt[1] - ybar;
      sst += dev * dev;
    }
    m.ssr = ssr;
    m.r2 = sst == 0 ? (ssr <= 1e-20 ? Real(1) : Real(0)) : 1 - ssr / sst;
    if (m.r2 > best_r2) {
      best_r2 = m.r2;
      rep.best = m.name;
    }
    rep.models.push_back(std::move(m));
  }
  return rep;
}

std::string format_fit_report(const FitReport& rep) {
  std::ostringstream os;
  os << "cost-curve fit over " << rep.rows_used << " converged rows\n";
  for (const auto& m : rep.models) {
    os << "  " << m.name;
    for (std::size_t pad = m.name.size(); pad < 18; ++pad) os << ' ';
    os << " slope=" << fmt_real(m.slope) << " intercept=" << fmt_real(m.intercept)
       << " ssr=" << fmt_real(m.ssr) << " r2=" << fmt_real(m.r2) << "\n";
  }
  os << "selected model: " << rep.best << "\n";
  os << "note: " << rep.label << "\n";
  return os.str();
}

void write_fit_artifacts(const FitReport& rep, const std::string& dir,
                         const std::string& prefix) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (const auto& m : rep.models) {
    std::string body;
    for (const auto& pt : m.points) {
      body += fmt_real(pt[0]);
      body += ' ';
      body += fmt_real(pt[1]);
      body += '\n';
    }
    write_text_file((fs::path(dir) / (prefix + "fit_" + m.name + ".dat")).string(),
                    body);
  }
  write_text_file((fs::path(dir) / (prefix + "fit_report.txt")).string(),
                  format_fit_report(rep));
}

}  // namespace heatctl::cost_lab
