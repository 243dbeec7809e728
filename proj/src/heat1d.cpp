#include "heatctl/heat1d.hpp"

#include <cmath>
#include <string>

#include "heatctl/numerics.hpp"

namespace heatctl::heat1d {
namespace {

void check_field_shape(const SpaceTimeField& f, const Grid& g, const char* name) {
  if (f.empty()) return;
  if (f.values.rows() != g.nx || f.values.cols() != g.nt + 1)
    throw ValidationError(std::string(name) + " field must be nx x (nt+1) for this grid");
}

// Potential slice a(., t_k); zero when the field is empty.
Vector coeff_slice(const SpaceTimeField& a, int k, int nx) {
  if (a.empty()) return Vector::Zero(nx);
  return a.values.col(k);
}

// source + mask.*control at slice k. The mask holds exactly 0 or 1, so
// re-masking an omega-supported control is a bitwise no-op.
Vector forcing_slice(const SpaceTimeField& source, const SpaceTimeField& control,
                     const Grid& g, int k) {
  Vector v = Vector::Zero(g.nx);
  if (!source.empty()) v += source.values.col(k);
  if (!control.empty())
    v.array() += g.mask.array() * control.values.col(k).array();
  return v;
}

void guard_slice(const Eigen::Ref<const Vector>& u, Real cap, int k) {
  const Real m = u.cwiseAbs().maxCoeff();
  if (!(m <= cap))  // negated comparison also trips on NaN
    throw InstabilityGuard("solution slice " + std::to_string(k) +
                           " exceeded the instability cap (sup = " +
                           std::to_string(m) + ")");
}

}  // namespace

Trajectory solve_forward(const Grid& g, const SpaceTimeField& a,
                         const SpaceTimeField& source,
                         const SpaceTimeField& control, const SpaceField& u0,
                         TimeSpan span, Real instability_cap) {
  if (u0.size() != g.nx)
    throw ValidationError("initial data must have nx entries");
  check_field_shape(a, g, "potential");
  check_field_shape(source, g, "source");
  check_field_shape(control, g, "control");

  Real t0 = span.t0, t1 = span.t1;
  if (t1 == t0) {
    t0 = 0;
    t1 = g.T;
  }

  const int nx = g.nx;
  const int nt = g.nt;
  const Real dt = (t1 - t0) / Real(nt);
  const Real dx = g.dx();
  const Real r = dt / (2 * dx * dx);

  Trajectory traj;
  traj.t0 = t0;
  traj.t1 = t1;
  traj.field.values.resize(nx, nt + 1);
  traj.field.values.col(0) = u0;
  guard_slice(u0, instability_cap, 0);

  const Vector lower = Vector::Constant(nx - 1, -r);
  const Vector upper = Vector::Constant(nx - 1, -r);

  Vector rhs(nx), diag(nx);
  for (int k = 0; k < nt; ++k) {
    const Vector ak = coeff_slice(a, k, nx);
    const Vector ak1 = coeff_slice(a, k + 1, nx);
    const auto uk = traj.field.values.col(k);

    // (I - dt/2 A_k) u^k: explicit half step.
    rhs = (Real(1) - 2 * r) * uk - (dt / 2) * ak.cwiseProduct(uk);
    rhs.head(nx - 1) += r * uk.tail(nx - 1);
    rhs.tail(nx - 1) += r * uk.head(nx - 1);
    rhs += dt * Real(0.5) *
           (forcing_slice(source, control, g, k) +
            forcing_slice(source, control, g, k + 1));

    // (I + dt/2 A_{k+1}): implicit half step.
    diag = Vector::Constant(nx, Real(1) + 2 * r) + (dt / 2) * ak1;

    traj.field.values.col(k + 1) =
        numerics::solve_tridiagonal(lower, diag, upper, rhs);
    guard_slice(traj.field.values.col(k + 1), instability_cap, k + 1);
  }
  return traj;
}

Trajectory solve_backward(const Grid& g, const SpaceTimeField& a,
                          const SpaceTimeField& source,
                          const SpaceTimeField& control, const SpaceField& wT,
                          TimeSpan span, Real instability_cap) {
  Real t0 = span.t0, t1 = span.t1;
  if (t1 == t0) {
    t0 = 0;
    t1 = g.T;
  }
  Trajectory fwd =
      solve_forward(g, reflect_time(a), reflect_time(source),
                    reflect_time(control), wT, span, instability_cap);
  Trajectory traj;
  traj.t0 = t0;
  traj.t1 = t1;
  traj.field = reflect_time(fwd.field);
  return traj;
}

Trajectory free_evolution(const Grid& g, const SpaceTimeField& q, Real lambda,
                          const SpaceField& u0, TimeSpan span,
                          Real instability_cap) {
  SpaceTimeField src;
  if (lambda != 0) src = SpaceTimeField::constant(g, lambda);
  return solve_forward(g, q, src, {}, u0, span, instability_cap);
}

}  // namespace heatctl::heat1d
