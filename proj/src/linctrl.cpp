#include "heatctl/linctrl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

#include "heatctl/numerics.hpp"

namespace heatctl::linctrl {
namespace {

using numerics::l2_inner;
using numerics::l2_norm;
using numerics::st_norm;

Vector q_slice(const WindowProblem& wp, int j) {
  if (wp.q_w.empty()) return Vector::Zero(wp.grid.nx);
  return wp.q_w.values.col(j);
}

// Diagonal of L_j = I + dt/2 A_j; built with the same expression the forward
// solver uses so the two factor the identical matrix.
Vector implicit_diag(const WindowProblem& wp, int j, Real r, Real dt) {
  return Vector::Constant(wp.grid.nx, Real(1) + 2 * r) + (dt / 2) * q_slice(wp, j);
}

// R_j v with R_j = I - dt/2 A_j.
Vector apply_explicit(const WindowProblem& wp, int j, const Vector& v, Real r,
                      Real dt) {
  const int nx = wp.grid.nx;
  Vector out = (Real(1) - 2 * r) * v - (dt / 2) * q_slice(wp, j).cwiseProduct(v);
  out.head(nx - 1) += r * v.tail(nx - 1);
  out.tail(nx - 1) += r * v.head(nx - 1);
  return out;
}

std::string fmt(Real v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

Real control_scale_E(Real T_prime, Real qnorm, const Constants& c) {
  if (!(T_prime > 0) || !(qnorm >= 0))
    throw ValidationError("control scale needs T' > 0 and qnorm >= 0");
  const Real q = qnorm;
  const Real e =
      std::exp(c.c2 * (1 + T_prime * q * std::exp(c.c2 * T_prime * q * q) +
                       std::pow(q, Real(2) / 3)));
  if (!std::isfinite(e))
    throw NonFiniteValue("control scale overflowed at T' = " + fmt(T_prime) +
                         ", qnorm = " + fmt(q));
  return e;
}

Real projection_scale_D(Real T_prime, Real qnorm, const Constants& c) {
  if (!(T_prime > 0) || !(qnorm >= 0))
    throw ValidationError("projection scale needs T' > 0 and qnorm >= 0");
  const Real d = c.c1 * (T_prime * std::exp(c.c1 * T_prime * qnorm * qnorm) +
                         1 / T_prime);
  if (!std::isfinite(d))
    throw NonFiniteValue("projection scale overflowed at T' = " + fmt(T_prime) +
                         ", qnorm = " + fmt(qnorm));
  return d;
}

WindowProblem make_window_problem(const Grid& full, const SpaceTimeField& q,
                                  Real T_prime_requested, EMode mode,
                                  const Constants& constants, Real qnorm,
                                  Real mu_floor_rel) {
  if (!(T_prime_requested > 0) || !std::isfinite(T_prime_requested))
    throw ValidationError("requested window length must be positive and finite");
  if (!q.empty() &&
      (q.values.rows() != full.nx || q.values.cols() != full.nt + 1))
    throw ValidationError("potential field must be nx x (nt+1) for the full grid");

  const Real dt = full.dt();
  const Real want = std::min(T_prime_requested, full.T);
  int nt_w = static_cast<int>(std::lround(want / dt));
  nt_w = std::clamp(nt_w, 2, full.nt);
  int offset = full.nt - nt_w;
  if (offset == 1) {  // a one-step free phase cannot form a valid sub-grid
    nt_w = full.nt;
    offset = 0;
  }

  WindowProblem wp;
  wp.grid = (nt_w == full.nt)
                ? full
                : Grid(full.nx, Real(nt_w) * dt, nt_w, full.omega_lo, full.omega_hi);
  wp.T_prime = wp.grid.T;
  wp.offset = offset;
  wp.q_w = q.empty() ? q : window_slice(q, offset, nt_w);
  wp.qnorm = qnorm;
  wp.constants = constants;
  wp.mode = mode;
  wp.mu_floor_rel = mu_floor_rel;
  wp.E = (mode == EMode::paper) ? control_scale_E(wp.T_prime, qnorm, constants)
                                : Real(1);
  return wp;
}

SpaceField window_forward(const SpaceTimeField& control, const WindowProblem& wp) {
  return heat1d::solve_forward(wp.grid, wp.q_w, {}, control,
                               SpaceField::Zero(wp.grid.nx))
      .terminal();
}

SpaceTimeField window_adjoint(const SpaceField& phi, const WindowProblem& wp) {
  const Grid& g = wp.grid;
  if (phi.size() != g.nx)
    throw ValidationError("adjoint data must have nx entries");

  const int nx = g.nx;
  const int nt_w = g.nt;
  const Real dt = g.dt();
  const Real dx = g.dx();
  const Real r = dt / (2 * dx * dx);
  const Vector lower = Vector::Constant(nx - 1, -r);
  const Vector upper = Vector::Constant(nx - 1, -r);

  SpaceTimeField out;
  out.values.resize(nx, nt_w + 1);
  out.omega_supported = true;

  // Transposed recurrence: p^{nt_w} = L_{nt_w}^{-1} phi, then
  // p^j = L_j^{-1} (R_j p^{j+1}) with both factors taken at slice j. The
  // output slices carry the trapezoid time weights of st_inner already
  // divided out, which lands the end slices on p itself and the interior
  // ones on consecutive averages.
  Vector p_next = numerics::solve_tridiagonal(
      lower, implicit_diag(wp, nt_w, r, dt), upper, phi);
  out.values.col(nt_w) = g.mask.cwiseProduct(p_next);
  for (int j = nt_w - 1; j >= 1; --j) {
    const Vector p_j = numerics::solve_tridiagonal(
        lower, implicit_diag(wp, j, r, dt), upper,
        apply_explicit(wp, j, p_next, r, dt));
    out.values.col(j) = g.mask.cwiseProduct(Real(0.5) * (p_j + p_next));
    p_next = p_j;
  }
  out.values.col(0) = g.mask.cwiseProduct(p_next);
  return out;
}

SpaceField apply_C(const SpaceTimeField& theta, const WindowProblem& wp) {
  return wp.E * window_forward(theta, wp);
}

SpaceTimeField apply_Cstar(const SpaceField& phi, const WindowProblem& wp) {
  SpaceTimeField out = window_adjoint(phi, wp);
  out.values *= wp.E;
  return out;
}

Matrix assemble_B_columns(const WindowProblem& wp) {
  const int nx = wp.grid.nx;
  Matrix B(nx, nx);
  SpaceField e = SpaceField::Zero(nx);
  for (int j = 0; j < nx; ++j) {
    e(j) = 1;
    B.col(j) = apply_C(apply_Cstar(e, wp), wp);
    e(j) = 0;
  }
  return B;
}

Matrix assemble_B(const WindowProblem& wp) {
  const Matrix raw = assemble_B_columns(wp);
  const Real scale = raw.cwiseAbs().maxCoeff();
  const Real asym = (raw - raw.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9 * std::max(scale, Real(1e-300)))
    throw ValidationError("Gramian asymmetry " + fmt(asym) +
                          " exceeds 1e-9 of its largest entry " + fmt(scale));
  return Real(0.5) * (raw + raw.transpose());
}

SpectralBasis spectral_bands(const Matrix& B, Real mu_floor_rel) {
  if (B.rows() != B.cols() || B.rows() == 0)
    throw ValidationError("Gramian must be square and nonempty");
  if (!(mu_floor_rel >= 0) || !(mu_floor_rel < 1))
    throw ValidationError("mu_floor_rel must lie in [0, 1)");

  const auto eig = numerics::eig_symmetric(B);
  const Eigen::Index n = eig.eigenvalues.size();
  const Real mu1 = eig.eigenvalues(0);
  const Real dx = Real(1) / Real(n + 1);

  SpectralBasis sb;
  sb.mu_floor = mu_floor_rel * std::max(mu1, Real(0));

  std::vector<int> keep;
  for (Eigen::Index i = 0; i < n; ++i)
    if (eig.eigenvalues(i) > sb.mu_floor && eig.eigenvalues(i) > 0)
      keep.push_back(static_cast<int>(i));
  if (keep.empty()) return sb;

  sb.mu.resize(keep.size());
  sb.xi.resize(n, keep.size());
  const Real unit = 1 / std::sqrt(dx);  // Euclidean-orthonormal -> l2_inner-orthonormal
  for (std::size_t m = 0; m < keep.size(); ++m) {
    sb.mu(m) = eig.eigenvalues(keep[m]);
    sb.xi.col(m) = unit * eig.eigenvectors.col(keep[m]);
  }

  // Band thresholds ln alpha_n = mu1 + e - e^n, evaluated in log space so
  // huge mu1 never overflows the comparisons. Every retained mu sits at or
  // below alpha_1 because ln mu <= mu.
  const Real kE = std::exp(Real(1));
  auto ln_alpha = [&](int nn) { return sb.mu1() + kE - std::exp(Real(nn)); };

  std::vector<int> band_of(keep.size());
  int cursor = 1;
  for (std::size_t m = 0; m < keep.size(); ++m) {
    const Real lnmu = std::log(sb.mu(m));
    while (lnmu <= ln_alpha(cursor + 1)) ++cursor;
    band_of[m] = cursor;
  }
  sb.N_max = cursor;
  sb.bands.assign(sb.N_max, {});
  for (std::size_t m = 0; m < keep.size(); ++m)
    sb.bands[band_of[m] - 1].push_back(static_cast<int>(m));
  sb.alphas.resize(sb.N_max + 1);
  for (int nn = 1; nn <= sb.N_max + 1; ++nn)
    sb.alphas[nn - 1] = std::exp(ln_alpha(nn));
  return sb;
}

FilteredControl approx_control_l(const SpaceField& z, int N,
                                 const SpectralBasis& basis,
                                 const WindowProblem& wp) {
  if (basis.empty())
    throw EmptySpectrum("no Gramian modes above the floor " + fmt(basis.mu_floor));
  if (N < 1) throw ValidationError("band count must be at least 1");
  const Grid& g = wp.grid;
  if (z.size() != g.nx) throw ValidationError("target must have nx entries");

  FilteredControl fc;
  fc.z_proj = SpaceField::Zero(g.nx);
  SpaceField preimage = SpaceField::Zero(g.nx);
  const int n_hi = std::min(N, basis.N_max);
  for (int n = 1; n <= n_hi; ++n) {
    for (int m : basis.bands[n - 1]) {
      const Real c = l2_inner(z, basis.xi.col(m), g);
      fc.z_proj += c * basis.xi.col(m);
      preimage += (c / basis.mu(m)) * basis.xi.col(m);
      ++fc.modes_used;
    }
  }
  if (fc.modes_used == 0) {
    fc.ell = SpaceTimeField::zeros(g);
    fc.ell.omega_supported = true;
  } else {
    fc.ell = apply_Cstar(preimage, wp);
    fc.ell.values *= wp.E;
  }
  return fc;
}

Real truncation_error(const SpaceField& z, int N, const SpectralBasis& basis,
                      const Grid& g) {
  Real total = l2_inner(z, z, g);
  if (basis.empty()) return std::sqrt(total);
  const int n_hi = std::min(N, basis.N_max);
  Real captured = 0;
  for (int n = 1; n <= n_hi; ++n)
    for (int m : basis.bands[n - 1]) {
      const Real c = l2_inner(z, basis.xi.col(m), g);
      captured += c * c;
    }
  return std::sqrt(std::max(Real(0), total - captured));
}

int choose_band_count(Real eps, const SpaceField& z, Real z_d_h1, Real lambda,
                      NPolicy policy, const SpectralBasis& basis,
                      const WindowProblem& wp) {
  if (basis.empty())
    throw EmptySpectrum("band selection needs a nonempty Gramian spectrum");
  if (!(eps > 0)) throw ValidationError("eps must be positive");

  if (policy == NPolicy::paper_formula) {
    const Constants& c = wp.constants;
    const Real D = projection_scale_D(wp.T_prime, wp.qnorm, c);
    const Real arg =
        c.c4 * D * std::exp(Real(1)) * (1 + eps) / eps *
        (1 + z_d_h1 +
         std::abs(lambda) * std::sqrt(wp.T_prime) *
             std::exp(c.c5 * wp.T_prime * wp.qnorm * wp.qnorm));
    if (!std::isfinite(arg))
      throw NonFiniteValue("band-count formula overflowed");
    const int lo = std::max(1, static_cast<int>(std::ceil(c.n_o)));
    const int raw = static_cast<int>(std::floor(std::log(arg)));
    // lower clamp first; the retained spectrum caps the result regardless
    return std::min(std::max(raw, lo), basis.N_max);
  }

  for (int N = 1; N <= basis.N_max; ++N)
    if (truncation_error(z, N, basis, wp.grid) <= Real(0.5) * eps) return N;
  throw BudgetExceeded(
      "truncation " + fmt(truncation_error(z, basis.N_max, basis, wp.grid)) +
      " at N_max = " + std::to_string(basis.N_max) + " exceeds the budget " +
      fmt(Real(0.5) * eps));
}

NullControlResult null_control(const SpaceField& pi0, const WindowProblem& wp,
                               Real tol_null, NullControlOptions opts) {
  if (!(tol_null > 0)) throw ValidationError("tol_null must be positive");
  const Grid& g = wp.grid;
  if (pi0.size() != g.nx)
    throw ValidationError("initial state must have nx entries");

  NullControlResult res;
  const Real pinorm = l2_norm(pi0, g);
  if (pinorm == 0) {
    res.chi = SpaceTimeField::zeros(g);
    res.chi.omega_supported = true;
    return res;
  }

  const SpaceField v_free =
      heat1d::solve_forward(g, wp.q_w, {}, {}, pi0).terminal();

  const numerics::LinearOperator gram = [&](const SpaceField& phi) {
    return window_forward(window_adjoint(phi, wp), wp);
  };

  Real eta = opts.eta0;
  if (!(eta > 0)) {
    // Deterministic power iteration for the top of Lambda's spectrum; a crude
    // value is enough to seed the penalty schedule.
    SpaceField x(g.nx);
    for (int i = 0; i < g.nx; ++i) x(i) = std::sin(M_PI * g.node(i));
    Real lam = 0;
    for (int it = 0; it < 30; ++it) {
      x = gram(x);
      lam = l2_norm(x, g);
      if (lam == 0) break;
      x /= lam;
    }
    eta = (lam > 0) ? 1e-6 * lam : Real(1e-6);
  }

  const int maxit = std::max(1, opts.cg_maxit_factor * g.nx);
  Real best_resid = std::numeric_limits<Real>::infinity();
  for (int attempt = 0; attempt <= opts.max_retries; ++attempt) {
    const SpaceField b = -v_free;
    const Real eta_now = eta;
    const numerics::CgEarlyStop stop = [&](const SpaceField& phi, Real rnorm) {
      // terminal state equals -(eta phi + r), so this bound certifies the
      // target before the verifying solve runs
      return eta_now * l2_norm(phi, g) + rnorm <= Real(0.5) * tol_null * pinorm;
    };
    const auto cg = numerics::cg_solve(
        [&](const SpaceField& v) -> SpaceField { return gram(v) + eta_now * v; },
        b, opts.cg_tol, maxit, g, stop);
    res.cg_iterations += cg.iterations;

    SpaceTimeField chi = window_adjoint(cg.x, wp);
    const SpaceField terminal =
        heat1d::solve_forward(g, wp.q_w, {}, chi, pi0).terminal();
    const Real resid = l2_norm(terminal, g) / pinorm;
    best_resid = std::min(best_resid, resid);
    if (resid <= tol_null) {
      res.chi = std::move(chi);
      res.residual_rel = resid;
      res.eta_used = eta_now;
      return res;
    }
    eta /= 10;
  }
  throw NullControlFailure("terminal residual " + fmt(best_resid) +
                           " missed tolerance " + fmt(tol_null) + " after " +
                           std::to_string(opts.max_retries + 1) + " penalty levels");
}

SpaceField source_response_S(Real lambda, const WindowProblem& wp) {
  const Grid& g = wp.grid;
  SpaceTimeField src;
  if (lambda != 0) src = SpaceTimeField::constant(g, lambda);
  return heat1d::solve_forward(g, wp.q_w, src, {}, SpaceField::Zero(g.nx))
      .terminal();
}

ControlResult linear_approx_control(const LinearControlSpec& spec,
                                    const WindowProblem& wp,
                                    const Grid& full_grid,
                                    BasisCache* cache) {
  const Grid& fg = full_grid;
  if (spec.u0.size() != fg.nx || spec.z_d.size() != fg.nx)
    throw ValidationError("u0 and z_d must have nx entries");
  if (!(spec.eps > 0)) throw ValidationError("eps must be positive");

  // Phase 1: free evolution up to the window start.
  SpaceField pi0 = spec.u0;
  if (wp.offset > 0) {
    const Grid pre(fg.nx, Real(wp.offset) * fg.dt(), wp.offset, fg.omega_lo,
                   fg.omega_hi);
    const SpaceTimeField q_pre =
        spec.q.empty() ? spec.q : window_slice(spec.q, 0, wp.offset);
    pi0 = heat1d::free_evolution(pre, q_pre, spec.lambda, spec.u0).terminal();
  }

  // Window target: subtract the source response so steering aims at z.
  const SpaceField z = spec.z_d - source_response_S(spec.lambda, wp);

  SpectralBasis basis;
  if (cache && cache->valid && cache->T_prime == wp.T_prime) {
    basis = cache->basis;
  } else {
    basis = spectral_bands(assemble_B(wp), wp.mu_floor_rel);
    if (cache) {
      cache->basis = basis;
      cache->T_prime = wp.T_prime;
      cache->valid = true;
    }
  }

  int N = choose_band_count(spec.eps, z, numerics::h1_norm(spec.z_d, fg),
                            spec.lambda, spec.n_policy, basis, wp);
  const Real pinorm = l2_norm(pi0, fg);
  Real tol_null = Real(0.25) * spec.eps / std::max(Real(1), pinorm);

  ControlResult out;
  for (int attempt = 0;; ++attempt) {
    const FilteredControl fc = approx_control_l(z, N, basis, wp);

    NullControlResult nc;
    if (pinorm > 0) nc = null_control(pi0, wp, tol_null);
    else {
      nc.chi = SpaceTimeField::zeros(wp.grid);
      nc.chi.omega_supported = true;
    }

    SpaceTimeField h;
    h.values = Matrix::Zero(fg.nx, fg.nt + 1);
    h.values.middleCols(wp.offset, wp.grid.nt + 1) = nc.chi.values + fc.ell.values;
    h.omega_supported = true;

    SpaceTimeField src;
    if (spec.lambda != 0) src = SpaceTimeField::constant(fg, spec.lambda);
    heat1d::Trajectory controlled =
        heat1d::solve_forward(fg, spec.q, src, h, spec.u0);
    const Real err = l2_norm(controlled.terminal() - spec.z_d, fg);

    out.h = std::move(h);
    out.err_L2 = err;
    out.cost_L2 = st_norm(out.h, fg);
    out.N_used = N;
    out.T_prime = wp.T_prime;
    out.controlled = std::move(controlled);
    out.diag.truncation_error = truncation_error(z, N, basis, wp.grid);
    out.diag.null_residual_rel = nc.residual_rel;
    out.diag.band_populations.clear();
    for (const auto& b : basis.bands)
      out.diag.band_populations.push_back(static_cast<int>(b.size()));
    out.diag.E_used = wp.E;
    out.diag.eta_used = nc.eta_used;
    out.diag.cg_iterations = nc.cg_iterations;
    out.diag.modes_used = fc.modes_used;
    out.diag.fnorm_upper = st_norm(fc.ell, wp.grid) / wp.E;
    out.diag.retries = attempt;

    const bool escalate = spec.n_policy == NPolicy::adaptive &&
                          err > spec.eps && attempt == 0;
    if (!escalate) return out;
    N = basis.N_max;
    tol_null /= 10;
  }
}

}  // namespace heatctl::linctrl
