#pragma once

#include <functional>

#include "heatctl/types.hpp"

namespace heatctl::numerics {

/// Solves a tridiagonal system by Thomas elimination without pivoting.
/// lower/upper have n-1 entries, diag and rhs have n. Throws ZeroPivot when a
/// pivot magnitude falls below 1e-300. Intended for diagonally dominant
/// systems; the caller owns that guarantee.
Vector solve_tridiagonal(const Vector& lower, const Vector& diag,
                         const Vector& upper, const Vector& rhs);

struct EigResult {
  Vector eigenvalues;   // nonincreasing
  Matrix eigenvectors;  // orthonormal columns, paired with eigenvalues
};

/// Full spectral decomposition of a symmetric matrix. The input is
/// symmetrized as (A + A^T)/2 before factorization; callers must not rely on
/// the skew part. Throws NoConvergence if the factorization fails.
EigResult eig_symmetric(const Matrix& A);

using LinearOperator = std::function<SpaceField(const SpaceField&)>;

/// Optional per-iteration hook: return true to accept the current iterate.
using CgEarlyStop = std::function<bool(const SpaceField& x, Real residual_norm)>;

struct CgResult {
  SpaceField x;
  bool converged = false;
  int iterations = 0;
  Real rel_residual = 0;  // true residual norm over rhs norm, in l2_norm(grid)
};

/// Conjugate gradients for a symmetric positive definite operator in the
/// grid-weighted L2 inner product. Never throws on stagnation: the best
/// iterate seen is returned with converged = false.
CgResult cg_solve(const LinearOperator& apply_A, const SpaceField& b, Real tol,
                  int maxit, const Grid& grid, const CgEarlyStop& early_stop = {});

/// Rectangle-rule inner product dx * sum_i u_i v_i.
Real l2_inner(const SpaceField& u, const SpaceField& v, const Grid& g);
Real l2_norm(const SpaceField& u, const Grid& g);
Real sup_norm(const SpaceField& u);

/// Discrete H1_0 seminorm with ghost zeros at both boundaries:
/// sqrt(sum_{i=0}^{nx} ((u_{i+1}-u_i)/dx)^2 dx).
Real h1_norm(const SpaceField& u, const Grid& g);

/// Space-time inner product over omega x (0,T): rectangle rule in space,
/// trapezoid weights in time (dt/2 at the end slices, dt inside).
Real st_inner(const SpaceTimeField& p, const SpaceTimeField& q, const Grid& g);
Real st_norm(const SpaceTimeField& p, const Grid& g);

}  // namespace heatctl::numerics
