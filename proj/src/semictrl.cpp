#include "heatctl/semictrl.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "heatctl/numerics.hpp"

namespace heatctl::semictrl {
namespace {

using numerics::l2_norm;
using numerics::st_norm;

std::string fmt(Real v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

Nonlinearity Nonlinearity::zero() {
  return {[](Real) { return Real(0); }, 0, 0, "zero"};
}

Real g_eval(const Nonlinearity& nl, Real s) {
  if (!std::isfinite(s))
    throw NonFiniteValue("quotient slope evaluated at a non-finite state");
  if (std::abs(s) < 1e-8) return nl.fprime0;
  const Real fs = nl.f(s);
  if (!std::isfinite(fs))
    throw NonFiniteValue("f returned a non-finite value at s = " + fmt(s));
  return (fs - nl.f0) / s;
}

Real g_norm_inf(const Nonlinearity& nl, const SpaceTimeField& u) {
  if (u.empty()) return std::abs(nl.fprime0);
  Real m = 0;
  for (Eigen::Index k = 0; k < u.values.cols(); ++k)
    for (Eigen::Index i = 0; i < u.values.rows(); ++i)
      m = std::max(m, std::abs(g_eval(nl, u.values(i, k))));
  return m;
}

Real choose_Tprime(Real eps, Real gnorm, Real T, const TprimeRule& rule) {
  if (!(T > 0) || !std::isfinite(T))
    throw ValidationError("horizon T must be positive and finite");
  if (!(eps > 0)) throw ValidationError("eps must be positive");
  switch (rule.policy) {
    case TprimePolicy::rule_2_9: {
      const Real s = eps * gnorm * gnorm;
      return s <= 1 ? T : T / s;
    }
    case TprimePolicy::epsilon_T:
      return std::min(eps * T, T);
    case TprimePolicy::fixed:
      if (!(rule.fixed_value > 0))
        throw ValidationError("fixed window length must be positive");
      return std::min(rule.fixed_value, T);
  }
  throw ValidationError("unknown window policy");
}

int choose_N(Real eps, const SpaceField& z_d, Real lambda, Real T_prime,
             Real qnorm, const linctrl::Constants& constants,
             const linctrl::SpectralBasis& basis, linctrl::NPolicy policy,
             const linctrl::WindowProblem& wp) {
  // The explicit arguments win over the copies carried inside wp, so
  // substitution cases can probe the formula directly.
  linctrl::WindowProblem probe = wp;
  probe.T_prime = T_prime;
  probe.qnorm = qnorm;
  probe.constants = constants;
  const SpaceField z = z_d - linctrl::source_response_S(lambda, wp);
  return linctrl::choose_band_count(eps, z, numerics::h1_norm(z_d, wp.grid),
                                    lambda, policy, basis, probe);
}

HResult apply_H(const SpaceTimeField& u, Real sigma, const SemilinearSpec& spec,
                linctrl::BasisCache* cache) {
  const Grid& g = spec.grid;
  if (!(field_sup(u) <= spec.blowup_cap))
    throw BlowUp("iterate sup " + fmt(field_sup(u)) + " exceeded the cap " +
                 fmt(spec.blowup_cap));
  if (!u.empty() && (u.values.rows() != g.nx || u.values.cols() != g.nt + 1))
    throw ValidationError("iterate must be nx x (nt+1) for the grid");

  HResult out;
  out.sigma = sigma;
  if (sigma == 0) {
    out.y.field = SpaceTimeField::zeros(g);
    out.y.t1 = g.T;
    out.h = SpaceTimeField::zeros(g);
    out.h.omega_supported = true;
    out.T_prime = g.T;
    return out;
  }

  // State-dependent potential from the quotient slope.
  SpaceTimeField qf;
  qf.values.resize(g.nx, g.nt + 1);
  if (u.empty()) {
    qf.values.setConstant(sigma * spec.nl.fprime0);
  } else {
    for (Eigen::Index k = 0; k < qf.values.cols(); ++k)
      for (Eigen::Index i = 0; i < qf.values.rows(); ++i)
        qf.values(i, k) = sigma * g_eval(spec.nl, u.values(i, k));
  }
  const Real gn = sigma * g_norm_inf(spec.nl, u);
  const Real lambda = -sigma * spec.nl.f0;

  const Real T_req = choose_Tprime(spec.eps, gn, g.T, spec.tprime);
  const linctrl::WindowProblem wp = linctrl::make_window_problem(
      g, qf, T_req, spec.e_mode, spec.constants, gn, spec.mu_floor_rel);

  linctrl::LinearControlSpec ls;
  ls.q = std::move(qf);
  ls.u0 = spec.u0;
  ls.z_d = spec.u_d;
  ls.lambda = lambda;
  ls.eps = spec.eps;
  ls.n_policy = spec.n_policy;

  out.ctrl = linctrl::linear_approx_control(ls, wp, g, cache);
  out.h = out.ctrl.h;
  out.y = out.ctrl.controlled;
  if (sigma != 1) out.y.field.values *= sigma;
  out.T_prime = out.ctrl.T_prime;
  out.gnorm_sigma = gn;
  return out;
}

FixedPointReport solve_semilinear(const SemilinearSpec& spec) {
  const Grid& g = spec.grid;
  const HomotopyParams& hp = spec.homotopy;
  if (!(spec.eps > 0)) throw ValidationError("eps must be positive");
  if (!(hp.sigma_step > 0 && hp.sigma_step <= 1))
    throw ValidationError("sigma_step must lie in (0, 1]");
  if (!(hp.theta_damp > 0 && hp.theta_damp <= 1))
    throw ValidationError("theta_damp must lie in (0, 1]");
  if (hp.max_picard < 1)
    throw ValidationError("max_picard must be at least 1");
  if (!(hp.tol_fp > 0)) throw ValidationError("tol_fp must be positive");
  if (spec.u0.size() != g.nx || spec.u_d.size() != g.nx)
    throw ValidationError("u0 and u_d must have nx entries");

  FixedPointReport rep;
  const int stages = static_cast<int>(std::ceil(1 / hp.sigma_step - 1e-9));
  for (int j = 1; j < stages; ++j) rep.sigma_path.push_back(j * hp.sigma_step);
  rep.sigma_path.push_back(1);

  SpaceTimeField u = SpaceTimeField::zeros(g);
  linctrl::BasisCache cache;
  bool frozen = false;
  bool all_settled = true;
  HResult last;

  for (const Real sigma : rep.sigma_path) {
    bool settled = false;
    int iters = 0;
    for (int it = 0; it < hp.max_picard; ++it) {
      if (!frozen) cache.valid = false;
      last = apply_H(u, sigma, spec, &cache);
      Matrix unew;
      if (hp.theta_damp == 1)
        unew = last.y.field.values;
      else
        unew = (1 - hp.theta_damp) * u.values + hp.theta_damp * last.y.field.values;
      const Real inc = (unew - u.values).cwiseAbs().maxCoeff();
      u.values = std::move(unew);
      ++iters;
      rep.increments.push_back(inc);
      if (hp.freeze_basis_after > 0 && inc <= hp.freeze_basis_after)
        frozen = true;
      if (inc <= hp.tol_fp * (1 + field_sup(u))) {
        settled = true;
        break;
      }
    }
    rep.picard_iters.push_back(iters);
    rep.picard_iters_total += iters;
    if (!settled) {
      all_settled = false;
      break;
    }
  }

  rep.u = u;
  rep.h = last.h;
  rep.err_L2 = l2_norm(u.values.col(g.nt) - spec.u_d, g);
  rep.cost_L2 = st_norm(rep.h, g);
  rep.u_sup = field_sup(u);
  rep.pde_residual = semilinear_residual(u, rep.h, spec.nl, g);
  rep.T_prime = last.T_prime;
  rep.N_used = last.ctrl.N_used;
  rep.converged = all_settled && rep.err_L2 <= spec.eps &&
                  rep.pde_residual <= spec.tol_pde;
  return rep;
}

Real semilinear_residual(const SpaceTimeField& u, const SpaceTimeField& h,
                         const Nonlinearity& nl, const Grid& g) {
  const Matrix U = u.empty() ? Matrix::Zero(g.nx, g.nt + 1) : u.values;
  if (U.rows() != g.nx || U.cols() != g.nt + 1)
    throw ValidationError("state must be nx x (nt+1) for the grid");
  if (!h.empty() && (h.values.rows() != g.nx || h.values.cols() != g.nt + 1))
    throw ValidationError("control must be nx x (nt+1) for the grid");

  const int nx = g.nx;
  const Real dt = g.dt();
  const Real dx = g.dx();
  const Real inv_dx2 = 1 / (dx * dx);

  auto lap = [&](const Eigen::Index k, int i) {
    const Real left = i > 0 ? U(i - 1, k) : Real(0);
    const Real right = i < nx - 1 ? U(i + 1, k) : Real(0);
    return (left - 2 * U(i, k) + right) * inv_dx2;
  };

  Real acc = 0;
  for (int k = 0; k < g.nt; ++k) {
    for (int i = 0; i < nx; ++i) {
      const Real um = U(i, k);
      const Real up = U(i, k + 1);
      Real hterm = 0;
      if (!h.empty())
        hterm = g.mask(i) * Real(0.5) * (h.values(i, k) + h.values(i, k + 1));
      const Real r = (up - um) / dt -
                     Real(0.5) * (lap(k, i) + lap(k + 1, i)) +
                     Real(0.5) * (nl.f(um) + nl.f(up)) - hterm;
      acc += r * r;
    }
  }
  return std::sqrt(acc * dt * dx) / (1 + field_sup(u));
}

}  // namespace heatctl::semictrl
