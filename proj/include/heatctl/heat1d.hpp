#pragma once

#include "heatctl/types.hpp"

namespace heatctl::heat1d {

inline constexpr Real kDefaultInstabilityCap = 1e12;

struct TimeSpan {
  Real t0 = 0;
  Real t1 = 0;  // t1 == t0 means "use (0, grid.T)"
};

/// A solved evolution. Slices run in forward time regardless of the solve
/// direction: column 0 is the state at t0 and column nt is the state at t1.
struct Trajectory {
  SpaceTimeField field;
  Real t0 = 0;
  Real t1 = 0;

  SpaceField initial() const { return field.values.col(0); }
  SpaceField terminal() const { return field.values.col(field.values.cols() - 1); }
};

/// Crank-Nicolson march for d_t u - d_xx u + a(x,t) u = source + control*1_omega,
/// u(0) = u0, Dirichlet ends. Step k -> k+1 solves
///   (I + dt/2 A_{k+1}) u^{k+1} = (I - dt/2 A_k) u^k + dt * rhs^{k+1/2}
/// with A_k the three-point Laplacian plus diag(a(.,t_k)) and rhs^{k+1/2} the
/// average of source + masked control at t_k and t_{k+1}. Empty fields mean
/// zero. Throws InstabilityGuard when any slice's sup norm exceeds the cap or
/// turns non-finite.
Trajectory solve_forward(const Grid& g, const SpaceTimeField& a,
                         const SpaceTimeField& source,
                         const SpaceTimeField& control, const SpaceField& u0,
                         TimeSpan span = {},
                         Real instability_cap = kDefaultInstabilityCap);

/// Backward evolution -d_t w - d_xx w + a w = source + control*1_omega with
/// terminal data w(t1) = wT, realized by the substitution tau = t1 - t: solve
/// forward with time-reflected coefficients, then reflect the slices back.
/// The returned trajectory runs in forward time with its last slice equal to
/// wT exactly.
Trajectory solve_backward(const Grid& g, const SpaceTimeField& a,
                          const SpaceTimeField& source,
                          const SpaceTimeField& control, const SpaceField& wT,
                          TimeSpan span = {},
                          Real instability_cap = kDefaultInstabilityCap);

/// Uncontrolled solve with potential q and constant source lambda.
Trajectory free_evolution(const Grid& g, const SpaceTimeField& q, Real lambda,
                          const SpaceField& u0, TimeSpan span = {},
                          Real instability_cap = kDefaultInstabilityCap);

}  // namespace heatctl::heat1d
