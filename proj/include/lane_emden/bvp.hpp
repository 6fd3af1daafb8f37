#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lane_emden/bubble.hpp"
#include "lane_emden/errors.hpp"
#include "lane_emden/exponents.hpp"
#include "lane_emden/greens.hpp"
#include "lane_emden/numerics.hpp"
#include "lane_emden/reduced_energy.hpp"

namespace lane_emden {

// ---------------------------------------------------------------------------
// Radial solutions on the unit ball.
//
// The system with q = q_eps is invariant under u -> R^alpha u(R x), v -> R^beta v(R x).
// A solution on the unit ball is therefore the rescaling of the entire-space shot
// U(0) = 1, V(0) = s for which U and V reach zero at the same radius R.
// ---------------------------------------------------------------------------

struct ShootOptions {
  double rtol = 1e-13;
  double t0 = 1e-4;         ///< series start radius of the shot
  double s_rel_tol = 4e-16; ///< bracket width on s
  int max_bracket_steps = 80;
};

namespace detail {

/// One shot: trajectory of (U, U', V, V', int U'V' t^{N-1}, int V^{p+1} t^{N-1}) until U or V vanishes.
struct Shot {
  double s = 0.0;
  double mismatch = 0.0;  ///< U at the zero of V, or -V/s at the zero of U
  double R = 0.0;         ///< first zero
  std::shared_ptr<const Trajectory> traj;
};

inline Shot shoot(int N, double p, double q, double s, const ShootOptions& opt) {
  OdeRhs f = [N, p, q](double r, const double* y, double* dy) {
    dy[0] = y[1];
    dy[1] = -(N - 1) / r * y[1] - std::pow(std::max(y[2], 0.0), p);
    dy[2] = y[3];
    dy[3] = -(N - 1) / r * y[3] - std::pow(std::max(y[0], 0.0), q);
    const double rn = std::pow(r, N - 1);
    dy[4] = y[1] * y[3] * rn;
    dy[5] = std::pow(std::max(y[2], 0.0), p + 1) * rn;
  };
  const double t0 = opt.t0, sp = std::pow(s, p);
  const State y0{1.0 - sp * t0 * t0 / (2.0 * N),
                 -sp * t0 / N,
                 s - t0 * t0 / (2.0 * N),
                 -t0 / N,
                 sp * std::pow(t0, N + 2) / (N * N * (N + 2.0)),
                 std::pow(s, p + 1) * std::pow(t0, N) / N};
  OdeOptions o;
  o.rtol = opt.rtol;
  o.atol = 0.0;
  o.max_steps = 2000000;
  OdeStop stop = [](double, const double* y) { return y[0] <= 0.0 || y[2] <= 0.0; };
  auto tr = std::make_shared<Trajectory>(integrate_ode(f, t0, 1e15, y0, o, stop));
  if (!tr->stopped()) throw NoConvergence("shot did not reach a zero");
  const std::size_t n = tr->steps();
  const double a = tr->nodes()[n - 1], b = tr->nodes()[n];
  auto zero = [&](std::size_t i) -> double {
    if (tr->component(b, i) > 0.0) return INFINITY;
    double lo = a, hi = b;
    for (int k = 0; k < 200 && hi - lo > 1e-16 * hi; ++k) {
      const double m = 0.5 * (lo + hi);
      (tr->component(m, i) > 0.0 ? lo : hi) = m;
    }
    return 0.5 * (lo + hi);
  };
  const double RU = zero(0), RV = zero(2);
  Shot out;
  out.s = s;
  out.traj = tr;
  if (RU <= RV) {
    out.R = RU;
    out.mismatch = -tr->component(RU, 2) / s;
  } else {
    out.R = RV;
    out.mismatch = tr->component(RV, 0);
  }
  return out;
}

}  // namespace detail

/// Radial solution (u, v) of the system on the unit ball, sampled on a graded mesh.
struct BvpSolution {
  ExponentPair exp;
  std::vector<double> r;  ///< graded mesh r_j = (j/M)^gamma
  std::vector<double> u, v;
  double sup_u = 0.0;
  double lambda = 0.0;    ///< sup_u^{1/alpha_eps}
  double mu = 0.0;        ///< 1 / lambda
  double s = 0.0;         ///< V(0)/U(0) of the entire-space shot
  double boundary_residual = 0.0;
  std::shared_ptr<const Trajectory> traj;
  double t0 = 0.0;

  struct Point {
    double u, du, v, dv;
  };

  /// u, u', v, v' at radius rr in [0, 1].
  Point at(double rr) const {
    if (!(rr >= 0.0 && rr <= 1.0 + 1e-14)) throw DomainError("radius outside the unit ball");
    const double R = lambda, al = exp.alpha_eps, be = exp.beta_eps;
    const double t = std::min(R * rr, traj->r_end());
    double U, dU, V, dV;
    if (t <= t0) {
      const int N = exp.N;
      const double sp = std::pow(s, exp.p);
      U = 1.0 - sp * t * t / (2.0 * N);
      dU = -sp * t / N;
      V = s - t * t / (2.0 * N);
      dV = -t / N;
    } else {
      double y[6];
      traj->eval(t, y);
      U = y[0], dU = y[1], V = y[2], dV = y[3];
    }
    return {std::pow(R, al) * U, std::pow(R, al + 1) * dU, std::pow(R, be) * V, std::pow(R, be + 1) * dV};
  }

  /// int_{B_rho} grad u . grad v.
  double dirichlet_cross(double rho) const {
    const double R = lambda;
    const double I = traj->component(std::min(R * rho, traj->r_end()), 4);
    return sphere_area(exp.N) * std::pow(R, exp.alpha_eps + exp.beta_eps + 2 - exp.N) * I;
  }

  /// int_B |Delta u|^{(p+1)/p} = int_B v^{p+1}.
  double energy_proxy() const {
    const double R = lambda;
    return sphere_area(exp.N) * std::pow(R, exp.beta_eps * (exp.p + 1) - exp.N) * traj->component(traj->r_end(), 5);
  }
};

/// Mesh exponent so that at least `inner` of M nodes fall in r <= 10 mu.
inline double mesh_grading(double mu, int M, int inner = 200) {
  if (10.0 * mu >= 1.0) return 1.0;
  return std::max(1.0, std::log(10.0 * mu) / std::log(double(inner) / M));
}

inline std::vector<double> graded_mesh(int M, double gamma) {
  std::vector<double> r(static_cast<std::size_t>(M) + 1);
  for (int j = 0; j <= M; ++j) r[static_cast<std::size_t>(j)] = std::pow(double(j) / M, gamma);
  r.back() = 1.0;
  return r;
}

namespace detail {

inline BvpSolution finish_solution(const ExponentPair& e, const Shot& sh, const ShootOptions& opt, int M) {
  BvpSolution sol;
  sol.exp = e;
  sol.s = sh.s;
  sol.traj = sh.traj;
  sol.t0 = opt.t0;
  sol.lambda = sh.R;
  sol.mu = 1.0 / sh.R;
  sol.sup_u = std::pow(sh.R, e.alpha_eps);
  sol.boundary_residual = std::fabs(sh.mismatch);
  sol.r = graded_mesh(M, mesh_grading(sol.mu, M));
  sol.u.resize(sol.r.size());
  sol.v.resize(sol.r.size());
  for (std::size_t j = 0; j < sol.r.size(); ++j) {
    const BvpSolution::Point pt = sol.at(sol.r[j]);
    sol.u[j] = pt.u;
    sol.v[j] = pt.v;
  }
  sol.u.back() = sol.v.back() = 0.0;
  return sol;
}

}  // namespace detail

/// Solves the radial problem by bracketing s = V(0)/U(0) around s_seed.
inline BvpSolution solve_radial(const ExponentPair& e, double s_seed, const ShootOptions& opt = {}, int M = 8000) {
  if (!(e.eps > 0.0)) throw DomainError("solve_radial needs eps > 0");
  if (!(s_seed > 0.0)) throw DomainError("seed must be positive");
  const int N = e.N;
  const double p = e.p, q = e.q_eps;
  auto F = [&](double s) { return detail::shoot(N, p, q, s, opt).mismatch; };
  double lo = s_seed, hi = s_seed, flo = F(s_seed), fhi = flo;
  double step = 1e-7 * s_seed;
  for (int k = 0; k < opt.max_bracket_steps && (flo > 0.0) == (fhi > 0.0); ++k, step *= 2.0) {
    if (flo > 0.0) {
      lo = hi;
      flo = fhi;
      hi = hi + step;
      fhi = F(hi);
    } else {
      hi = lo;
      fhi = flo;
      lo = std::max(0.5 * lo, lo - step);
      flo = F(lo);
    }
  }
  if ((flo > 0.0) == (fhi > 0.0)) throw NoConvergence("no sign change of the shooting mismatch");
  boost::uintmax_t iters = 300;
  const auto br = boost::math::tools::toms748_solve(
      F, lo, hi, flo, fhi, [&](double a, double b) { return std::fabs(b - a) <= opt.s_rel_tol * std::fabs(a); }, iters);
  if (iters >= 300) throw NoConvergence("shooting bracket did not close");
  const detail::Shot a = detail::shoot(N, p, q, br.first, opt), b = detail::shoot(N, p, q, br.second, opt);
  return detail::finish_solution(e, std::fabs(a.mismatch) <= std::fabs(b.mismatch) ? a : b, opt, M);
}

inline BvpSolution solve_radial(const ExponentPair& e, const RadialProfile& bubble, const ShootOptions& opt = {}) {
  return solve_radial(e, bubble.s, opt);
}

/// Decreasing eps schedule; each shot is seeded from the previous s.
inline std::vector<BvpSolution> continuation_sweep(int N, double p, const std::vector<double>& eps,
                                                   const RadialProfile& bubble, const ShootOptions& opt = {}) {
  for (std::size_t i = 1; i < eps.size(); ++i)
    if (!(eps[i] < eps[i - 1])) throw DomainError("eps schedule must be strictly decreasing");
  std::vector<BvpSolution> out;
  double seed = bubble.s;
  for (double e : eps) {
    try {
      out.push_back(solve_radial(make_exponents(N, p, e), seed, opt));
    } catch (const NoConvergence& ex) {
      throw NoConvergence("at eps = " + std::to_string(e) + ": " + ex.what());
    }
    seed = out.back().s;
  }
  return out;
}

inline std::vector<double> log_schedule(double eps_max, double eps_min, int n) {
  if (!(eps_max > eps_min && eps_min > 0.0) || n < 2) throw DomainError("invalid eps schedule");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = eps_max * std::pow(eps_min / eps_max, double(i) / (n - 1));
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle: damped Newton on a finite-volume discretisation.
// ---------------------------------------------------------------------------

struct FdSolution {
  std::vector<double> r, u, v;
  double sup_u = 0.0;
  double residual = 0.0;  ///< sup |F| over the largest row magnitude
  int iterations = 0;
};

/// Cell balance over [r_{j-1/2}, r_{j+1/2}] of (r^{N-1} u')' = -r^{N-1} v^p, with u_M = v_M = 0.
inline FdSolution solve_radial_fd(const ExponentPair& e, const std::vector<double>& r, std::vector<double> u,
                                  std::vector<double> v, double tol = 1e-8, int max_iter = 60) {
  const int N = e.N;
  const double p = e.p, q = e.q_eps;
  const std::size_t M = r.size() - 1;
  if (u.size() != r.size() || v.size() != r.size()) throw DomainError("initial guess does not match the mesh");
  std::vector<double> flux(M), vol(M);  // flux coefficient on [r_j, r_{j+1}], cell volume of node j
  for (std::size_t j = 0; j < M; ++j) flux[j] = std::pow(0.5 * (r[j] + r[j + 1]), N - 1) / (r[j + 1] - r[j]);
  for (std::size_t j = 0; j < M; ++j) {
    const double a = j ? 0.5 * (r[j - 1] + r[j]) : 0.0, b = 0.5 * (r[j] + r[j + 1]);
    vol[j] = (std::pow(b, N) - std::pow(a, N)) / N;
  }
  const std::size_t n = 2 * M;
  auto residual = [&](const std::vector<double>& uu, const std::vector<double>& vv, Eigen::VectorXd& F) {
    F.resize(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < M; ++j) {
      const double fu = flux[j] * (uu[j + 1] - uu[j]) - (j ? flux[j - 1] * (uu[j] - uu[j - 1]) : 0.0);
      const double fv = flux[j] * (vv[j + 1] - vv[j]) - (j ? flux[j - 1] * (vv[j] - vv[j - 1]) : 0.0);
      F[static_cast<Eigen::Index>(2 * j)] = fu + vol[j] * std::pow(std::max(vv[j], 0.0), p);
      F[static_cast<Eigen::Index>(2 * j + 1)] = fv + vol[j] * std::pow(std::max(uu[j], 0.0), q);
    }
  };
  // Sup norm of F over the largest row magnitude (sum of absolute term sizes in that row).
  auto scaled_norm = [&](const Eigen::VectorXd& F, const std::vector<double>& uu, const std::vector<double>& vv) {
    double scale = 0.0;
    for (std::size_t j = 0; j < M; ++j) {
      const double left = j ? flux[j - 1] : 0.0;
      const double su = flux[j] * std::fabs(uu[j + 1] - uu[j]) + left * std::fabs(uu[j] - (j ? uu[j - 1] : uu[j])) +
                        vol[j] * std::pow(std::max(vv[j], 0.0), p);
      const double sv = flux[j] * std::fabs(vv[j + 1] - vv[j]) + left * std::fabs(vv[j] - (j ? vv[j - 1] : vv[j])) +
                        vol[j] * std::pow(std::max(uu[j], 0.0), q);
      scale = std::max({scale, su, sv});
    }
    return F.lpNorm<Eigen::Infinity>() / scale;
  };
  u.back() = v.back() = 0.0;
  const double u_start = u[0];
  Eigen::VectorXd F;
  residual(u, v, F);
  FdSolution out;
  for (int it = 0;; ++it) {
    out.residual = scaled_norm(F, u, v);
    if (out.residual <= tol) {
      out.iterations = it;
      break;
    }
    if (it >= max_iter) throw NoConvergence("finite-difference Newton stalled at residual " + std::to_string(out.residual));
    std::vector<Eigen::Triplet<double>> T;
    T.reserve(8 * M);
    auto add = [&](std::size_t row, std::size_t col, double val) {
      if (col < n) T.emplace_back(static_cast<int>(row), static_cast<int>(col), val);
    };
    for (std::size_t j = 0; j < M; ++j) {
      const double dl = j ? flux[j - 1] : 0.0, dr = flux[j];
      for (int c = 0; c < 2; ++c) {
        const std::size_t row = 2 * j + c;
        add(row, 2 * j + c, -dl - dr);
        if (j) add(row, 2 * (j - 1) + c, dl);
        if (j + 1 < M) add(row, 2 * (j + 1) + c, dr);
      }
      add(2 * j, 2 * j + 1, vol[j] * p * std::pow(std::max(v[j], 0.0), p - 1));
      add(2 * j + 1, 2 * j, vol[j] * q * std::pow(std::max(u[j], 0.0), q - 1));
    }
    Eigen::SparseMatrix<double> J(static_cast<int>(n), static_cast<int>(n));
    J.setFromTriplets(T.begin(), T.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(J);
    if (lu.info() != Eigen::Success) throw SingularJacobian("finite-difference Jacobian is singular");
    const Eigen::VectorXd dx = lu.solve(-F);
    const double f0 = F.norm();
    double t = 1.0;
    bool ok = false;
    std::vector<double> ut = u, vt = v;
    Eigen::VectorXd Ft;
    for (int bt = 0; bt < 40; ++bt, t *= 0.5) {
      for (std::size_t j = 0; j < M; ++j) {
        ut[j] = u[j] + t * dx[static_cast<Eigen::Index>(2 * j)];
        vt[j] = v[j] + t * dx[static_cast<Eigen::Index>(2 * j + 1)];
      }
      residual(ut, vt, Ft);
      if (Ft.allFinite() && Ft.norm() < (1.0 - 1e-4 * t) * f0) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      // A full step at roundoff level cannot lower |F| any further.
      const double step = dx.lpNorm<Eigen::Infinity>() / std::max(u[0], v[0]);
      if (step > 1e-11) throw NoConvergence("finite-difference line search failed");
      for (std::size_t j = 0; j < M; ++j) {
        ut[j] = u[j] + dx[static_cast<Eigen::Index>(2 * j)];
        vt[j] = v[j] + dx[static_cast<Eigen::Index>(2 * j + 1)];
      }
      residual(ut, vt, Ft);
    }
    u.swap(ut);
    v.swap(vt);
    F = Ft;
    if (u[0] < 1e-8 * u_start) throw TrivialSolution("Newton collapsed towards u = 0; reseed with a larger amplitude");
  }
  out.r = r;
  out.u = u;
  out.v = v;
  out.sup_u = u[0];
  return out;
}

/// Seed mu^{-alpha0} (U(r/mu) - U(1/mu)) and likewise for v: the projected bubble.
inline FdSolution solve_radial_fd(const ExponentPair& e, const RadialProfile& bubble, double mu_seed, int M = 8000) {
  const std::vector<double> r = graded_mesh(M, mesh_grading(mu_seed, M));
  const double a0 = e.alpha0(), b0 = e.beta0();
  const BubbleValue edge = bubble.at(1.0 / mu_seed);
  std::vector<double> u(r.size()), v(r.size());
  for (std::size_t j = 0; j < r.size(); ++j) {
    const BubbleValue bv = bubble.at(r[j] / mu_seed);
    u[j] = std::pow(mu_seed, -a0) * (bv.U - edge.U);
    v[j] = std::pow(mu_seed, -b0) * (bv.V - edge.V);
  }
  return solve_radial_fd(e, r, std::move(u), std::move(v));
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// sup_{t <= R_cmp} |lambda^{-alpha} u(t/lambda) - U(t)| + |lambda^{-beta} v(t/lambda) - V(t)|,
/// against the bubble dilated by mu_factor (1 is the true profile).
inline double rescaled_profile_distance(const BvpSolution& sol, const RadialProfile& prof, double R_cmp = 20.0,
                                        double mu_factor = 1.0, int samples = 4000) {
  const double L = sol.lambda, al = sol.exp.alpha_eps, be = sol.exp.beta_eps;
  const double a0 = sol.exp.alpha0(), b0 = sol.exp.beta0();
  const double tmax = std::min(R_cmp, L);
  double d = 0.0;
  for (int i = 0; i <= samples; ++i) {
    const double t = tmax * i / samples;
    const BvpSolution::Point pt = sol.at(t / L);
    const BubbleValue b = prof.at(t / mu_factor);
    const double U = std::pow(mu_factor, -a0) * b.U, V = std::pow(mu_factor, -b0) * b.V;
    d = std::max(d, std::fabs(std::pow(L, -al) * pt.u - U) + std::fabs(std::pow(L, -be) * pt.v - V));
  }
  return d;
}

struct PohozaevTerms {
  double lhs = 0.0, flux = 0.0, potential = 0.0, mixed = 0.0;
  double residual = 0.0;  ///< |lhs - (flux + potential + mixed)| over the largest term
};

/// Local Pohozaev identity on B(0, rho) with u replaced by u_scale u (1 for the solution itself).
inline PohozaevTerms pohozaev_terms(const BvpSolution& sol, double rho, double u_scale = 1.0) {
  if (!(rho > 0.0 && rho < 1.0)) throw DomainError("rho must lie in (0, 1)");
  const int N = sol.exp.N;
  const double p = sol.exp.p, q = sol.exp.q_eps;
  // The eps that the stored double exponents actually satisfy; at eps ~ 1e-9 it differs from exp.eps in the 7th digit.
  const long double Nl = N;
  const double eps = static_cast<double>(Nl / (1.0L + p) + Nl / (1.0L + q) - (Nl - 2));
  const BvpSolution::Point pt = sol.at(rho);
  const double u = u_scale * pt.u, du = u_scale * pt.du, v = pt.v, dv = pt.dv;
  const double area = sphere_area(N) * std::pow(rho, N - 1);
  PohozaevTerms t;
  t.lhs = eps * u_scale * sol.dirichlet_cross(rho);
  t.flux = rho * area * (2.0 * du * dv - du * dv);
  t.potential = rho * area * (std::pow(v, p + 1) / (p + 1) + std::pow(u, q + 1) / (q + 1));
  t.mixed = N * area * (v * du / (p + 1) + u * dv / (q + 1));
  const double big = std::max({std::fabs(t.lhs), std::fabs(t.flux), std::fabs(t.potential), std::fabs(t.mixed)});
  t.residual = std::fabs(t.lhs - t.flux - t.potential - t.mixed) / big;
  return t;
}

inline double pohozaev_residual(const BvpSolution& sol, double rho, double u_scale = 1.0) {
  return pohozaev_terms(sol, rho, u_scale).residual;
}

/// The regime's blow-up product: eps |u|^{sigma}, divided by log |u| at the Serrin exponent.
inline double blowup_product(const BvpSolution& sol, const RateRecord& rates) {
  double P = sol.exp.eps * std::pow(sol.sup_u, rates.product_exponent);
  if (rates.log_corrected) P /= std::log(sol.sup_u);
  return P;
}

struct RateFit {
  double limit = 0.0;
  double coefficient = 0.0;
  double sigma = 0.0;
  double residual = 0.0;
};

/// Least-squares fit of P(eps) = L + c eps^sigma with sigma scanned over (0, 4].
inline RateFit fit_rate_model(const std::vector<double>& eps, const std::vector<double>& P) {
  if (eps.size() < 4 || eps.size() != P.size()) throw InsufficientData("rate fit needs at least four sweep points");
  auto solve = [&](double sigma, RateFit& f) {
    Eigen::MatrixXd A(static_cast<Eigen::Index>(eps.size()), 2);
    Eigen::VectorXd b(static_cast<Eigen::Index>(eps.size()));
    for (std::size_t i = 0; i < eps.size(); ++i) {
      A(static_cast<Eigen::Index>(i), 0) = 1.0;
      A(static_cast<Eigen::Index>(i), 1) = std::pow(eps[i], sigma);
      b[static_cast<Eigen::Index>(i)] = P[i];
    }
    const Eigen::VectorXd x = least_squares(A, b);
    f.limit = x[0];
    f.coefficient = x[1];
    f.sigma = sigma;
    f.residual = (A * x - b).norm();
    return f.residual;
  };
  RateFit best;
  double best_res = INFINITY;
  const int n = 400;
  double s_best = 0.01;
  for (int i = 1; i <= n; ++i) {
    RateFit f;
    const double sg = 4.0 * i / n;
    if (solve(sg, f) < best_res) {
      best_res = f.residual;
      s_best = sg;
    }
  }
  // Golden-section refinement around the best grid value.
  double a = std::max(1e-3, s_best - 4.0 / n), b = s_best + 4.0 / n;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  RateFit fc, fd;
  double c = b - g * (b - a), d = a + g * (b - a);
  double rc = solve(c, fc), rd = solve(d, fd);
  for (int it = 0; it < 80; ++it) {
    if (rc < rd) {
      b = d, d = c, rd = rc;
      c = b - g * (b - a);
      rc = solve(c, fc);
    } else {
      a = c, c = d, rc = rd;
      d = a + g * (b - a);
      rd = solve(d, fd);
    }
  }
  solve(0.5 * (a + b), best);
  return best;
}

struct RateCheck {
  std::vector<double> eps, product;
  RateFit fit;
  double predicted = 0.0;
  double ratio = 0.0;               ///< extrapolated / predicted
  bool distance_decreasing = false; ///< |P - predicted| strictly decreasing over the last three points
};

inline RateCheck blowup_rate_check(const std::vector<BvpSolution>& sweep, const RateRecord& rates, std::size_t last = 4) {
  if (sweep.size() < 4 || last < 4) throw InsufficientData("rate check needs at least four sweep points");
  RateCheck rc;
  for (const BvpSolution& s : sweep) {
    rc.eps.push_back(s.exp.eps);
    rc.product.push_back(blowup_product(s, rates));
  }
  const std::size_t m = std::min(last, sweep.size());
  const std::vector<double> e(rc.eps.end() - static_cast<std::ptrdiff_t>(m), rc.eps.end());
  const std::vector<double> P(rc.product.end() - static_cast<std::ptrdiff_t>(m), rc.product.end());
  rc.fit = fit_rate_model(e, P);
  rc.predicted = rates.limit.at(0);
  rc.ratio = rc.fit.limit / rc.predicted;
  const std::size_t n = rc.product.size();
  auto dist = [&](std::size_t i) { return std::fabs(rc.product[i] - rc.predicted); };
  rc.distance_decreasing = n >= 3 && dist(n - 1) < dist(n - 2) && dist(n - 2) < dist(n - 3);
  return rc;
}

struct OuterProfile {
  double v_error = 0.0;       ///< sup |sup_u v - A1 G| / (A1 sup G) over [r_lo, r_hi]
  double v_multiplier = 0.0;  ///< least-squares c in sup_u v ~ c G
  double u_error = 0.0;       ///< same for the regime's u-profile
  double u_multiplier = 0.0;
};

/// Outer profiles at a single blow-up point at the centre of the unit ball.
inline OuterProfile outer_profile_check(const BvpSolution& sol, const GreensBundle& bundle, const RateRecord& rates,
                                        double r_lo = 0.3, double r_hi = 0.9, int samples = 61) {
  const int N = sol.exp.N;
  const double M = sol.sup_u;
  double uscale = std::pow(M, rates.u_exponent);
  if (rates.u_log_corrected) uscale /= std::log(M);
  std::vector<double> rs, G, W, V, U;
  for (int i = 0; i < samples; ++i) {
    const double rr = r_lo + (r_hi - r_lo) * i / (samples - 1);
    Vec x = Vec::Zero(N);
    x[0] = rr;
    const BvpSolution::Point pt = sol.at(rr);
    rs.push_back(rr);
    G.push_back(green(bundle, x, Vec::Zero(N)));
    W.push_back(rates.regime == Regime::sub ? wtg_center(bundle, rr) : G.back());
    V.push_back(M * pt.v);
    U.push_back(uscale * pt.u);
  }
  auto check = [&](const std::vector<double>& f, const std::vector<double>& shape, double coef, double& err, double& mult) {
    double num = 0.0, den = 0.0, smax = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      num += f[i] * shape[i];
      den += shape[i] * shape[i];
      smax = std::max(smax, std::fabs(shape[i]));
    }
    mult = num / den;
    err = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) err = std::max(err, std::fabs(f[i] - coef * shape[i]));
    err /= std::fabs(coef) * smax;
  };
  OuterProfile out;
  check(V, G, rates.v_coefficient, out.v_error, out.v_multiplier);
  check(U, W, rates.u_coefficient, out.u_error, out.u_multiplier);
  return out;
}

struct DecayEnvelope {
  double C_v = 0.0;  ///< max of v / (lambda^{beta-(N-2)} r^{2-N}) over 0 < r <= r_max
  double C_u = 0.0;  ///< same for the regime's u-envelope
};

inline DecayEnvelope decay_envelope(const BvpSolution& sol, double r_max = 1.0 / 3.0) {
  const int N = sol.exp.N;
  const double L = sol.lambda, al = sol.exp.alpha_eps, be = sol.exp.beta_eps, p = sol.exp.p;
  const Regime reg = sol.exp.regime();
  DecayEnvelope env;
  for (std::size_t j = 1; j < sol.r.size() && sol.r[j] <= r_max; ++j) {
    const double rr = sol.r[j];
    env.C_v = std::max(env.C_v, sol.v[j] / (std::pow(L, be - (N - 2)) * std::pow(rr, 2 - N)));
    double bound;
    if (reg == Regime::super) bound = std::pow(L, al - (N - 2)) * std::pow(rr, 2 - N);
    else if (reg == Regime::serrin) bound = std::pow(L, al - (N - 2)) * std::pow(rr, 2 - N) * std::log(L * rr + 2.0);
    else bound = std::pow(L, al + 2 - (N - 2) * p) * std::pow(rr, 2 - (N - 2) * p);
    env.C_u = std::max(env.C_u, sol.u[j] / bound);
  }
  return env;
}

/// True when each of the last `last` values lies within rel_tol of their mean.
inline bool sweep_stable(const std::vector<double>& values, std::size_t last = 3, double rel_tol = 0.2) {
  if (values.size() < last || last == 0) throw InsufficientData("not enough sweep points for a stability check");
  const auto first = values.end() - static_cast<std::ptrdiff_t>(last);
  double mean = 0.0;
  for (auto it = first; it != values.end(); ++it) mean += *it;
  mean /= static_cast<double>(last);
  for (auto it = first; it != values.end(); ++it)
    if (!(std::fabs(*it - mean) <= rel_tol * std::fabs(mean))) return false;
  return true;
}

}  // namespace lane_emden
