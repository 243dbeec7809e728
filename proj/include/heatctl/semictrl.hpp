#pragma once

#include <functional>
#include <string>
#include <vector>

#include "heatctl/linctrl.hpp"

namespace heatctl::semictrl {

/// Pointwise nonlinearity f together with the data the construction needs.
struct Nonlinearity {
  std::function<Real(Real)> f;
  Real f0 = 0;       // f(0)
  Real fprime0 = 0;  // f'(0)
  std::string description;

  static Nonlinearity zero();
};

/// Quotient slope g(s) = (f(s) - f(0))/s, continued by f'(0) for |s| < 1e-8.
/// Throws NonFiniteValue when f(s) is not finite.
Real g_eval(const Nonlinearity& nl, Real s);

/// sup over every node and slice of |g_eval(u)|; |f'(0)| for u identically 0.
Real g_norm_inf(const Nonlinearity& nl, const SpaceTimeField& u);

enum class TprimePolicy { rule_2_9, epsilon_T, fixed };

struct TprimeRule {
  TprimePolicy policy = TprimePolicy::rule_2_9;
  Real fixed_value = 0;
};

/// Window length selection. rule_2_9: T' = T when eps*gnorm^2 <= 1, else
/// T/(eps*gnorm^2). epsilon_T: T' = eps*T. fixed: the supplied value clamped
/// to (0, T].
Real choose_Tprime(Real eps, Real gnorm, Real T, const TprimeRule& rule);

/// Band count selection. paper_formula:
///   N = floor( ln( c4 D e (1+eps)/eps (1 + ||z_d||_{H1_0}
///                  + |lambda| sqrt(T') e^{c5 T' qnorm^2}) ) )
/// with D = projection_scale_D, clamped to [max(1, ceil(n_o)), N_max].
/// adaptive: the smallest N whose truncation of z = z_d - S(lambda) is at most
/// 0.5*eps; throws BudgetExceeded when even N_max misses that budget.
int choose_N(Real eps, const SpaceField& z_d, Real lambda, Real T_prime,
             Real qnorm, const linctrl::Constants& constants,
             const linctrl::SpectralBasis& basis, linctrl::NPolicy policy,
             const linctrl::WindowProblem& wp);

struct HomotopyParams {
  Real sigma_step = 0.25;
  Real theta_damp = 1.0;
  Real tol_fp = 1e-6;
  int max_picard = 60;
  Real freeze_basis_after = 0;  // reuse the basis once increments fall below; 0 = never
};

struct SemilinearSpec {
  Grid grid;
  Nonlinearity nl;
  SpaceField u0;
  SpaceField u_d;
  Real eps = 0.1;
  TprimeRule tprime;
  linctrl::NPolicy n_policy = linctrl::NPolicy::adaptive;
  linctrl::EMode e_mode = linctrl::EMode::adaptive;
  linctrl::Constants constants;
  HomotopyParams homotopy;
  Real blowup_cap = 1e12;
  Real tol_pde = 1e-4;
  Real mu_floor_rel = linctrl::kDefaultMuFloorRel;
};

struct HResult {
  heat1d::Trajectory y;  // sigma-scaled controlled trajectory
  SpaceTimeField h;
  linctrl::ControlResult ctrl;
  Real T_prime = 0;
  Real gnorm_sigma = 0;
  Real sigma = 0;
};

/// One homotopy map evaluation: with q = sigma*g(u) and lambda = -sigma*f(0),
/// run the linear controller for target u_d and return y = sigma * (controlled
/// trajectory). H(u, 0) = 0 identically. Throws BlowUp when sup|u| exceeds the
/// cap before the evaluation starts.
HResult apply_H(const SpaceTimeField& u, Real sigma, const SemilinearSpec& spec,
                linctrl::BasisCache* cache = nullptr);

struct FixedPointReport {
  bool converged = false;
  std::vector<Real> sigma_path;
  std::vector<int> picard_iters;   // per sigma stage
  std::vector<Real> increments;    // sup-norm Picard increments, concatenated
  SpaceTimeField u;
  SpaceTimeField h;
  Real err_L2 = 0;
  Real cost_L2 = 0;
  Real u_sup = 0;
  Real pde_residual = 0;
  int picard_iters_total = 0;
  Real T_prime = 0;
  int N_used = 0;
};

/// Damped Picard iteration u <- (1-theta) u + theta H(u, sigma) continued in
/// sigma from sigma_step up to 1, each stage warm-started from the previous
/// fixed point. converged requires every stage to settle within max_picard
/// iterations, the terminal error to meet eps, and the equation residual to
/// meet tol_pde. Iteration budget exhaustion flags the report instead of
/// throwing; BlowUp propagates.
FixedPointReport solve_semilinear(const SemilinearSpec& spec);

/// Discrete L2(0,T; L2) residual of d_t u - d_xx u + f(u) - h*1_omega on CN
/// midpoints, each step contributing
///   (u^{k+1}-u^k)/dt - D_xx (u^k+u^{k+1})/2 + (f(u^k)+f(u^{k+1}))/2
///   - mask (h^k+h^{k+1})/2,
/// normalized by (1 + sup|u|). Trajectories produced by the solver with a
/// matching h reproduce the stencil to roundoff.
Real semilinear_residual(const SpaceTimeField& u, const SpaceTimeField& h,
                         const Nonlinearity& nl, const Grid& g);

}  // namespace heatctl::semictrl
