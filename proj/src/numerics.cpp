#include "heatctl/numerics.hpp"

#include <cmath>
#include <string>

namespace heatctl::numerics {

Vector solve_tridiagonal(const Vector& lower, const Vector& diag,
                         const Vector& upper, const Vector& rhs) {
  const Eigen::Index n = diag.size();
  if (rhs.size() != n || lower.size() != n - 1 || upper.size() != n - 1)
    throw ValidationError("tridiagonal solve: band sizes must be n-1, n, n-1, n");
  if (n == 0) return Vector();

  Vector d = diag;
  Vector b = rhs;
  // Forward elimination; the factorization is valid only while pivots stay
  // representable, hence the hard floor.
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    if (std::abs(d(i)) < 1e-300)
      throw ZeroPivot("tridiagonal solve: pivot " + std::to_string(i) +
                      " below 1e-300");
    const Real m = lower(i) / d(i);
    d(i + 1) -= m * upper(i);
    b(i + 1) -= m * b(i);
  }
  if (std::abs(d(n - 1)) < 1e-300)
    throw ZeroPivot("tridiagonal solve: pivot " + std::to_string(n - 1) +
                    " below 1e-300");

  Vector x(n);
  x(n - 1) = b(n - 1) / d(n - 1);
  for (Eigen::Index i = n - 2; i >= 0; --i)
    x(i) = (b(i) - upper(i) * x(i + 1)) / d(i);
  return x;
}

EigResult eig_symmetric(const Matrix& A) {
  if (A.rows() != A.cols())
    throw ValidationError("eig_symmetric: matrix must be square");
  const Matrix S = Real(0.5) * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(S);
  if (solver.info() != Eigen::Success)
    throw NoConvergence("eig_symmetric: factorization did not converge");
  // Eigen orders ascending; the callers want the dominant mode first.
  EigResult out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

CgResult cg_solve(const LinearOperator& apply_A, const SpaceField& b, Real tol,
                  int maxit, const Grid& grid, const CgEarlyStop& early_stop) {
  CgResult res;
  res.x = SpaceField::Zero(b.size());
  const Real bnorm = l2_norm(b, grid);
  if (bnorm == 0) {
    res.converged = true;
    return res;
  }

  SpaceField x = res.x;
  SpaceField r = b;
  SpaceField p = r;
  Real rr = l2_inner(r, r, grid);
  SpaceField best_x = x;
  Real best_rnorm = std::sqrt(rr);
  bool accepted = false;

  for (int it = 0; it < maxit; ++it) {
    const SpaceField Ap = apply_A(p);
    const Real pAp = l2_inner(p, Ap, grid);
    if (!(pAp > 0)) break;  // operator lost positivity, keep the best iterate
    const Real alpha = rr / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    const Real rr_new = l2_inner(r, r, grid);
    const Real rnorm = std::sqrt(rr_new);
    ++res.iterations;
    if (rnorm < best_rnorm) {
      best_rnorm = rnorm;
      best_x = x;
    }
    if (rnorm <= tol * bnorm) {
      accepted = true;
      break;
    }
    if (early_stop && early_stop(x, rnorm)) {
      best_x = x;
      accepted = true;
      break;
    }
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }

  res.x = accepted ? x : best_x;
  const Real true_res = l2_norm(b - apply_A(res.x), grid);
  res.rel_residual = true_res / bnorm;
  res.converged = accepted || true_res <= tol * bnorm;
  return res;
}

Real l2_inner(const SpaceField& u, const SpaceField& v, const Grid& g) {
  return g.dx() * u.dot(v);
}

Real l2_norm(const SpaceField& u, const Grid& g) {
  return std::sqrt(l2_inner(u, u, g));
}

Real sup_norm(const SpaceField& u) {
  return u.size() ? u.cwiseAbs().maxCoeff() : Real(0);
}

Real h1_norm(const SpaceField& u, const Grid& g) {
  const Real dx = g.dx();
  Real acc = 0;
  Real prev = 0;  // ghost value at x = 0
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const Real d = (u(i) - prev) / dx;
    acc += d * d * dx;
    prev = u(i);
  }
  const Real d = (Real(0) - prev) / dx;  // ghost value at x = 1
  acc += d * d * dx;
  return std::sqrt(acc);
}

Real st_inner(const SpaceTimeField& p, const SpaceTimeField& q, const Grid& g) {
  if (p.empty() || q.empty()) return 0;
  const Real dt = g.dt();
  const Real dx = g.dx();
  Real acc = 0;
  for (int k = 0; k <= g.nt; ++k) {
    const Real w = (k == 0 || k == g.nt) ? dt / 2 : dt;
    acc += w * (g.mask.array() * p.values.col(k).array() * q.values.col(k).array())
                   .sum();
  }
  return acc * dx;
}

Real st_norm(const SpaceTimeField& p, const Grid& g) {
  return std::sqrt(st_inner(p, p, g));
}

}  // namespace heatctl::numerics
