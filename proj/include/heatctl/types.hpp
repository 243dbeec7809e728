#pragma once

#include <Eigen/Dense>

#include "heatctl/errors.hpp"

namespace heatctl {

using Real = double;
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

/// A spatial profile sampled at the interior nodes x_i = i/(nx+1), i = 1..nx.
using SpaceField = Vector;

/// Uniform space-time grid on (0,1) x (0,T) with homogeneous Dirichlet ends.
///
/// nx interior nodes, nt time steps over the interval this grid describes
/// (window problems carry their own Grid with T equal to the window length).
/// omega = (omega_lo, omega_hi) is the control subdomain; mask holds 1 at
/// nodes strictly inside omega and 0 elsewhere.
struct Grid {
  int nx = 0;
  Real T = 0;
  int nt = 0;
  Real omega_lo = 0;
  Real omega_hi = 0;
  Vector mask;

  Grid() = default;
  Grid(int nx, Real T, int nt, Real omega_lo, Real omega_hi);

  Real dx() const { return Real(1) / Real(nx + 1); }
  Real dt() const { return T / Real(nt); }
  Real node(int i) const { return Real(i + 1) * dx(); }
  int omega_node_count() const { return static_cast<int>(mask.sum() + Real(0.5)); }
};

/// Values on the grid's space-time lattice: nx rows, nt+1 columns, column k
/// holding the slice at t_k = k*dt. An empty field (0x0) means identically zero.
/// omega_supported marks fields that vanish outside omega on every slice.
struct SpaceTimeField {
  Matrix values;
  bool omega_supported = false;

  bool empty() const { return values.size() == 0; }

  static SpaceTimeField zeros(const Grid& g) {
    return {Matrix::Zero(g.nx, g.nt + 1), false};
  }
  static SpaceTimeField constant(const Grid& g, Real v) {
    return {Matrix::Constant(g.nx, g.nt + 1, v), false};
  }
};

/// Reverses the time order of the slices; empty stays empty.
SpaceTimeField reflect_time(const SpaceTimeField& f);

/// Copies slices [k0, k0+nt_w] into a window-local field.
SpaceTimeField window_slice(const SpaceTimeField& f, int k0, int nt_w);

/// Zeroes every node outside omega and marks the field omega-supported.
SpaceTimeField restrict_to_omega(SpaceTimeField f, const Grid& g);

/// Largest |value| over all slices; 0 for an empty field.
Real field_sup(const SpaceTimeField& f);

}  // namespace heatctl
