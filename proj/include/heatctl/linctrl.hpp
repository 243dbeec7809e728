#pragma once

#include <vector>

#include "heatctl/heat1d.hpp"
#include "heatctl/types.hpp"

namespace heatctl::linctrl {

inline constexpr Real kDefaultMuFloorRel = 1e-5;

enum class EMode { adaptive, paper };
enum class NPolicy { adaptive, paper_formula };

/// Tunable constants of the analytic formulas; all default to 1.
struct Constants {
  Real c0 = 1, c1 = 1, c2 = 1, c3 = 1, c4 = 1, c5 = 1, c6 = 1;
  Real n_o = 1;  // lower clamp for the formula-driven band count
};

/// The control window (T - T', T) of the full horizon, re-indexed to window
/// time tau in (0, T'), tau = t - (T - T'). grid.T equals the realized T'
/// (snapped to the full grid's time step) and grid.nt the window step count.
/// q_w holds the potential restricted to the window; offset is the full-grid
/// slice index where the window starts.
struct WindowProblem {
  Grid grid;
  Real T_prime = 0;
  int offset = 0;
  SpaceTimeField q_w;
  Real E = 1;
  Real qnorm = 0;  // sup |potential| over the full horizon, feeds the formulas
  Constants constants;
  EMode mode = EMode::adaptive;
  Real mu_floor_rel = kDefaultMuFloorRel;
};

/// Control scale E of the formula-driven mode (EMode::paper):
/// exp(c2 (1 + T' q e^{c2 T' q^2} + q^{2/3})), q = qnorm.
/// Throws NonFiniteValue on overflow.
Real control_scale_E(Real T_prime, Real qnorm, const Constants& c);

/// Projection-constant aggregate D = c1 (T' e^{c1 T' q^2} + 1/T').
Real projection_scale_D(Real T_prime, Real qnorm, const Constants& c);

/// Builds the window problem for a requested T': snaps T' to the time grid
/// (at least two steps; windows within one step of T snap to T), slices the
/// window potential out of q, and fixes E per mode.
WindowProblem make_window_problem(const Grid& full, const SpaceTimeField& q,
                                  Real T_prime_requested, EMode mode,
                                  const Constants& constants, Real qnorm,
                                  Real mu_floor_rel = kDefaultMuFloorRel);

/// Physical window control-to-state map: v(., T') of the forward window system
/// d_tau v - d_xx v + q_w v = control * 1_omega, v(., 0) = 0.
SpaceField window_forward(const SpaceTimeField& control, const WindowProblem& wp);

/// Exact discrete transpose of window_forward with respect to l2_inner on
/// states and st_inner on controls (discretize-then-transpose: the CN
/// recurrence is run transposed, not a re-discretized continuous adjoint).
/// Output is omega-supported.
SpaceTimeField window_adjoint(const SpaceField& phi, const WindowProblem& wp);

/// Control-to-state operator: apply_C(theta) = E * window_forward(theta).
SpaceField apply_C(const SpaceTimeField& theta, const WindowProblem& wp);

/// Adjoint of apply_C: E * window_adjoint(phi).
SpaceTimeField apply_Cstar(const SpaceField& phi, const WindowProblem& wp);

/// Gramian columns B e_j = apply_C(apply_Cstar(e_j)), unsymmetrized.
Matrix assemble_B_columns(const WindowProblem& wp);

/// Symmetrized Gramian (B + B^T)/2; rejects assembly whose raw asymmetry
/// exceeds 1e-9 of the largest entry.
Matrix assemble_B(const WindowProblem& wp);

/// Eigenstructure of B cut into dyadic bands. Thresholds follow
/// alpha_n = exp(mu1 + e - e^n), n >= 1, and S_n = {m : alpha_{n+1} < mu_m <= alpha_n}.
/// Eigenvalues below mu_floor are discarded as numerically unreachable.
struct SpectralBasis {
  Vector mu;                            // retained, nonincreasing, > mu_floor
  Matrix xi;                            // columns orthonormal in l2_inner
  std::vector<Real> alphas;             // alphas[n-1] = alpha_n, n = 1..N_max+1
  std::vector<std::vector<int>> bands;  // bands[n-1] = S_n (indices into mu)
  int N_max = 0;                        // largest n with S_n nonempty
  Real mu_floor = 0;

  bool empty() const { return mu.size() == 0; }
  Real mu1() const { return mu.size() ? mu(0) : Real(0); }
};

SpectralBasis spectral_bands(const Matrix& B, Real mu_floor_rel = kDefaultMuFloorRel);

struct FilteredControl {
  SpaceTimeField ell;  // window control, omega-supported
  SpaceField z_proj;   // band-filtered projection of the target
  int modes_used = 0;
};

/// Band-filtered steering control ell = E sum_{n<=N} sum_{m in S_n}
/// (z,xi_m) (1/mu_m) apply_Cstar(xi_m), together with z_proj = the matching
/// partial expansion of z. Driving the window system by ell from zero lands on
/// z_proj up to eigensolve roundoff. Empty bands contribute nothing. Throws
/// EmptySpectrum when the basis retains no modes.
FilteredControl approx_control_l(const SpaceField& z, int N,
                                 const SpectralBasis& basis,
                                 const WindowProblem& wp);

/// || z - z_proj(N) || in l2_norm, computed from the expansion coefficients.
Real truncation_error(const SpaceField& z, int N, const SpectralBasis& basis,
                      const Grid& g);

/// Canonical band-count selection shared by the controllers, steering target z.
/// paper_formula:
///   N = floor( ln( c4 D e (1+eps)/eps
///                  (1 + z_d_h1 + |lambda| sqrt(T') e^{c5 T' q^2}) ) )
/// with D = projection_scale_D and q = wp.qnorm, clamped to
/// [max(1, ceil(n_o)), N_max]. adaptive: the smallest N with
/// truncation_error(z, N) <= 0.5 eps; throws BudgetExceeded when even N_max
/// misses that budget. Throws EmptySpectrum on an empty basis.
int choose_band_count(Real eps, const SpaceField& z, Real z_d_h1, Real lambda,
                      NPolicy policy, const SpectralBasis& basis,
                      const WindowProblem& wp);

struct NullControlOptions {
  Real eta0 = -1;          // < 0: start from 1e-6 * lambda_max estimate
  int max_retries = 4;     // eta shrinks by 10 per retry
  Real cg_tol = 1e-10;
  int cg_maxit_factor = 10;  // maxit = factor * nx
};

struct NullControlResult {
  SpaceTimeField chi;   // omega-supported window control
  Real residual_rel = 0;  // ||v(.,T'; pi0, chi)|| / ||pi0||
  Real eta_used = 0;
  int cg_iterations = 0;
};

/// Penalized steering of pi0 to zero across the window: solve
/// (Lambda + eta I) phi = -v_free(., T') by CG, Lambda = window_forward o
/// window_adjoint, and take chi = window_adjoint(phi). The measured terminal
/// residual gates acceptance; eta shrinks tenfold per retry. Throws
/// NullControlFailure when all retries miss tol_null.
NullControlResult null_control(const SpaceField& pi0, const WindowProblem& wp,
                               Real tol_null, NullControlOptions opts = {});

/// Terminal response v(., T') to the constant source lambda with zero initial
/// data and no control.
SpaceField source_response_S(Real lambda, const WindowProblem& wp);

struct LinearControlSpec {
  SpaceTimeField q;  // full-horizon potential; empty means zero
  SpaceField u0;
  SpaceField z_d;
  Real lambda = 0;
  Real eps = 0;
  NPolicy n_policy = NPolicy::adaptive;
};

struct ControlDiagnostics {
  Real truncation_error = 0;
  Real null_residual_rel = 0;
  std::vector<int> band_populations;
  Real E_used = 1;
  Real eta_used = 0;
  int cg_iterations = 0;
  int modes_used = 0;
  /// Upper estimate of the filtered target's reachability norm via the
  /// explicit preimage: || ell ||_st / E.
  Real fnorm_upper = 0;
  int retries = 0;
};

struct ControlResult {
  SpaceTimeField h;  // full-horizon control, zero before the window
  Real err_L2 = 0;
  Real cost_L2 = 0;
  int N_used = 0;
  Real T_prime = 0;
  heat1d::Trajectory controlled;  // the verifying full-horizon solve
  ControlDiagnostics diag;
};

/// Optional reuse of an assembled Gramian basis across repeated calls with an
/// unchanged window length.
struct BasisCache {
  bool valid = false;
  Real T_prime = -1;
  SpectralBasis basis;
};

/// Two-phase approximate controller: free evolution up to the window, then
/// steering chi + ell inside it, verified by a single full-horizon solve.
/// In adaptive mode the error budget splits eps as: truncation <= 0.5 eps,
/// null-control residual <= 0.25 eps (normalized), remainder for the scheme;
/// one escalation retry (full retained span, tighter null tolerance) runs if
/// the verified error still exceeds eps.
ControlResult linear_approx_control(const LinearControlSpec& spec,
                                    const WindowProblem& wp,
                                    const Grid& full_grid,
                                    BasisCache* cache = nullptr);

}  // namespace heatctl::linctrl
