#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lane_emden/bubble.hpp"
#include "lane_emden/errors.hpp"
#include "lane_emden/exponents.hpp"
#include "lane_emden/greens.hpp"
#include "lane_emden/numerics.hpp"

namespace lane_emden {

/// The reduced function of (d~_1..d~_k, x_1..x_k) with its regime constant C0.
struct ReducedEnergy {
  ExponentPair exp;
  BubbleConstants constants;
  GreensBundle bundle;
  Regime regime = Regime::super;
  double C0 = 0.0;
  double a_Np = 0.0, b_Np = 0.0;  ///< tail constants of U and V
  VolumeQuadrature quad;          ///< sub regime only

  int N() const { return exp.N; }
  double alpha0() const { return exp.alpha0(); }
  double beta0() const { return exp.beta0(); }
};

inline ReducedEnergy make_reduced_energy(const RadialProfile& prof, const BubbleConstants& c,
                                         const BallDomain& domain) {
  ReducedEnergy re;
  re.exp = prof.exponents();
  re.constants = c;
  re.bundle = make_greens_bundle(re.exp, domain);
  re.regime = prof.regime;
  re.a_Np = prof.a();
  re.b_Np = prof.b();
  const int N = prof.N;
  const double p = prof.p;
  const double E = c.S_power();
  switch (re.regime) {
    case Regime::super: re.C0 = E / (c.A1 * c.require_A2()); break;
    case Regime::serrin: re.C0 = E / (sphere_area(N) * std::pow(re.b_Np, p) * c.A1); break;
    case Regime::sub: re.C0 = (p + 1.0) * E / std::pow(c.A1, p + 1.0); break;
  }
  return re;
}

inline ReducedEnergy make_reduced_energy(const RadialProfile& prof, const BubbleConstants& c) {
  return make_reduced_energy(prof, c, unit_ball(prof.N));
}

// ---------------------------------------------------------------------------
// Packing (d~, x) into one vector: the k scales first, then the k points.
// ---------------------------------------------------------------------------

inline Eigen::VectorXd pack(const Configuration& c) {
  const std::size_t k = c.k();
  const int N = k ? static_cast<int>(c.points[0].size()) : 0;
  Eigen::VectorXd z(k * (N + 1));
  for (std::size_t i = 0; i < k; ++i) {
    z[i] = c.deltas[i];
    z.segment(k + i * N, N) = c.points[i];
  }
  return z;
}

inline Configuration unpack(const Eigen::VectorXd& z, std::size_t k, int N) {
  if (z.size() != static_cast<Eigen::Index>(k * (N + 1))) throw DomainError("parameter vector has the wrong length");
  Configuration c;
  for (std::size_t i = 0; i < k; ++i) {
    c.deltas.push_back(z[i]);
    c.points.push_back(z.segment(k + i * N, N));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline double upsilon(const ReducedEnergy& re, const Configuration& c) {
  c.validate(re.bundle.domain);
  const GreensBundle& b = re.bundle;
  const double a = re.alpha0(), be = re.beta0();
  double log_sum = 0.0;
  for (double d : c.deltas) log_sum += std::log(d);
  double val = 0.0;
  if (re.regime == Regime::sub) {
    for (std::size_t i = 0; i < c.k(); ++i)
      val += std::pow(c.deltas[i], a) * config_potentials(b, c, c.points[i], i, re.quad).wth_i;
  } else {
    for (std::size_t i = 0; i < c.k(); ++i) {
      val += std::pow(c.deltas[i], re.N() - 2) * robin(b, c.points[i]);
      for (std::size_t j = 0; j < c.k(); ++j) {
        if (j == i) continue;
        const double w = std::pow(c.deltas[i], be) * std::pow(c.deltas[j], a) +
                         std::pow(c.deltas[i], a) * std::pow(c.deltas[j], be);
        val -= 0.5 * w * green(b, c.points[i], c.points[j]);
      }
    }
  }
  return val - re.C0 * log_sum;
}

/// Central differences of upsilon; scales move by h d~_j, points by h times the radius.
inline Eigen::VectorXd grad_upsilon_fd(const ReducedEnergy& re, const Configuration& c, double h = 1e-4) {
  const std::size_t k = c.k();
  const int N = re.N();
  const Eigen::VectorXd z = pack(c);
  Eigen::VectorXd g(z.size());
  for (Eigen::Index m = 0; m < z.size(); ++m) {
    const double step = h * (m < static_cast<Eigen::Index>(k) ? z[m] : re.bundle.domain.radius);
    Eigen::VectorXd zp = z, zm = z;
    zp[m] += step;
    zm[m] -= step;
    g[m] = (upsilon(re, unpack(zp, k, N)) - upsilon(re, unpack(zm, k, N))) / (2.0 * step);
  }
  return g;
}

/// Gradient in (d~_1..d~_k, x_1..x_k). Closed form for p >= N/(N-2), differences of upsilon below.
inline Eigen::VectorXd grad_upsilon(const ReducedEnergy& re, const Configuration& c) {
  c.validate(re.bundle.domain);
  if (re.regime == Regime::sub) return grad_upsilon_fd(re, c);
  const GreensBundle& b = re.bundle;
  const std::size_t k = c.k();
  const int N = re.N();
  const double a = re.alpha0(), be = re.beta0();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(k * (N + 1));
  for (std::size_t j = 0; j < k; ++j) {
    const double dj = c.deltas[j];
    double gd = (N - 2) * std::pow(dj, N - 3) * robin(b, c.points[j]) - re.C0 / dj;
    Vec gx = std::pow(dj, N - 2) * grad_robin(b, c.points[j]);
    for (std::size_t i = 0; i < k; ++i) {
      if (i == j) continue;
      const double di = c.deltas[i];
      const double G = green(b, c.points[j], c.points[i]);
      gd -= (a * std::pow(dj, a - 1) * std::pow(di, be) + be * std::pow(dj, be - 1) * std::pow(di, a)) * G;
      gx -= (std::pow(di, be) * std::pow(dj, a) + std::pow(di, a) * std::pow(dj, be)) *
            grad_green(b, c.points[j], c.points[i]);
    }
    g[j] = gd;
    g.segment(k + j * N, N) = gx;
  }
  return g;
}

/// Symmetrised central-difference Jacobian of grad_upsilon.
inline Eigen::MatrixXd hessian_upsilon(const ReducedEnergy& re, const Configuration& c, double h) {
  const std::size_t k = c.k();
  const int N = re.N();
  const Eigen::VectorXd z = pack(c);
  Eigen::MatrixXd H(z.size(), z.size());
  for (Eigen::Index m = 0; m < z.size(); ++m) {
    const double step = h * (m < static_cast<Eigen::Index>(k) ? z[m] : re.bundle.domain.radius);
    Eigen::VectorXd zp = z, zm = z;
    zp[m] += step;
    zm[m] -= step;
    H.col(m) = (grad_upsilon(re, unpack(zp, k, N)) - grad_upsilon(re, unpack(zm, k, N))) / (2.0 * step);
  }
  return 0.5 * (H + H.transpose());
}

// ---------------------------------------------------------------------------
// Critical points
// ---------------------------------------------------------------------------

struct CriticalOptions {
  double tol = -1.0;         ///< on the Euclidean gradient norm; default 1e-10 C0
  double rho_tilde = 0.05;   ///< admissible set: d~ in (rho, 1/rho), boundary distance and separation >= rho
  int max_iter = 60;
  double hessian_step = -1;  ///< relative step; default 1e-6 closed form, 1e-3 by differences
  double degenerate_ratio = 1e-9;
};

struct CriticalPointReport {
  Configuration config;
  double grad_norm = 0.0;
  int hessian_det_sign = 0;
  Eigen::VectorXd hessian_eigenvalues;
  int iterations = 0;
  bool converged = false;
};

inline bool admissible(const ReducedEnergy& re, const Configuration& c, double rho) {
  const BallDomain& d = re.bundle.domain;
  for (std::size_t i = 0; i < c.k(); ++i) {
    if (!(c.deltas[i] > rho && c.deltas[i] < 1.0 / rho)) return false;
    if (!(d.radius - (c.points[i] - d.origin()).norm() >= rho)) return false;
    for (std::size_t j = 0; j < i; ++j)
      if (!((c.points[i] - c.points[j]).norm() >= rho)) return false;
  }
  return true;
}

namespace detail {

/// Clips scales and pulls points back inside; true when anything moved.
inline bool project_admissible(const ReducedEnergy& re, Configuration& c, double rho) {
  const BallDomain& d = re.bundle.domain;
  bool moved = false;
  const double lo = rho * (1.0 + 1e-9), hi = (1.0 / rho) * (1.0 - 1e-9);
  for (std::size_t i = 0; i < c.k(); ++i) {
    const double dd = std::clamp(c.deltas[i], lo, hi);
    moved |= dd != c.deltas[i];
    c.deltas[i] = dd;
    const Vec rel = c.points[i] - d.origin();
    const double rmax = d.radius - rho * (1.0 + 1e-9);
    if (rel.norm() > rmax) {
      c.points[i] = d.origin() + rel * (rmax / rel.norm());
      moved = true;
    }
  }
  return moved;
}

}  // namespace detail

/// Damped Newton on grad_upsilon kept inside the admissible set.
inline CriticalPointReport find_critical(const ReducedEnergy& re, const Configuration& start,
                                         const CriticalOptions& opt = {}) {
  start.validate(re.bundle.domain);
  if (!admissible(re, start, opt.rho_tilde)) throw DomainError("starting configuration is not admissible");
  const std::size_t k = start.k();
  const int N = re.N();
  const double hH = opt.hessian_step > 0 ? opt.hessian_step : (re.regime == Regime::sub ? 1e-3 : 1e-6);
  const double tol = opt.tol > 0 ? opt.tol : 1e-10 * re.C0;

  CriticalPointReport rep;
  Configuration c = start;
  Eigen::VectorXd g = grad_upsilon(re, c);
  int pinned = 0;
  for (int it = 0;; ++it) {
    rep.grad_norm = g.norm();
    if (!std::isfinite(rep.grad_norm)) throw NoConvergence("gradient is not finite");
    if (rep.grad_norm <= tol) {
      rep.iterations = it;
      break;
    }
    if (it >= opt.max_iter) throw NoConvergence("gradient norm stalled at " + std::to_string(rep.grad_norm));
    const Eigen::MatrixXd H = hessian_upsilon(re, c, hH);
    const Eigen::VectorXd dz = solve_linear(H, -g);
    const Eigen::VectorXd z = pack(c);
    double t = 1.0;
    bool accepted = false, moved = false;
    Configuration trial;
    Eigen::VectorXd gt;
    for (int bt = 0; bt < 30; ++bt, t *= 0.5) {
      trial = unpack(z + t * dz, k, N);
      moved = detail::project_admissible(re, trial, opt.rho_tilde);
      if (!admissible(re, trial, opt.rho_tilde)) continue;
      gt = grad_upsilon(re, trial);
      if (gt.allFinite() && gt.norm() < (1.0 - 1e-4 * t) * rep.grad_norm) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (moved) throw LeftAdmissibleSet("Newton iterates are pushed out of the admissible set");
      throw NoConvergence("line search failed at gradient norm " + std::to_string(rep.grad_norm));
    }
    pinned = moved ? pinned + 1 : 0;
    if (pinned >= 3) throw LeftAdmissibleSet("Newton iterates stay on the boundary of the admissible set");
    c = trial;
    g = gt;
  }
  rep.config = c;
  rep.converged = true;
  const Eigen::MatrixXd H = hessian_upsilon(re, c, hH);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  rep.hessian_eigenvalues = es.eigenvalues();
  const double big = es.eigenvalues().cwiseAbs().maxCoeff();
  int sign = 1;
  for (Eigen::Index m = 0; m < H.rows(); ++m) {
    const double ev = es.eigenvalues()[m];
    if (!(std::fabs(ev) > opt.degenerate_ratio * big)) {
      sign = 0;
      break;
    }
    if (ev < 0) sign = -sign;
  }
  rep.hessian_det_sign = sign;
  return rep;
}

/// Closed-form stationary point of the k = 1 function at the centre of the ball (p >= N/(N-2)).
inline double k1_center_scale(const ReducedEnergy& re) {
  if (re.regime == Regime::sub) throw WrongRegime("closed-form d* needs p >= N/(N-2)");
  const int N = re.N();
  return std::pow(re.C0 / ((N - 2) * robin(re.bundle, re.bundle.domain.origin())), 1.0 / (N - 2));
}

// ---------------------------------------------------------------------------
// Blow-up parameters and predicted rates
// ---------------------------------------------------------------------------

/// mu for a given eps and scale d~: the power law below the Serrin exponent, the Lambert-W law at it,
/// and eps^{1/(N-2)} above.
inline double mu_schedule(const ReducedEnergy& re, double eps, double d_tilde) {
  if (!(eps > 0.0) || !(d_tilde > 0.0)) throw DomainError("mu_schedule needs eps > 0 and d~ > 0");
  const int N = re.N();
  const double p = re.exp.p;
  switch (re.regime) {
    case Regime::super: return std::pow(eps, 1.0 / (N - 2)) * d_tilde;
    case Regime::serrin: {
      const double x = -(N - 2) * eps;
      if (x < -std::exp(-1.0)) throw DomainError("-(N-2) eps lies below -1/e");
      return std::pow(x / lambert_wm1(x), 1.0 / (N - 2)) * d_tilde;
    }
    case Regime::sub: {
      if (p >= (N - 1.0) / (N - 2))
        throw UnprintedBranch("no schedule is stated for p in [(N-1)/(N-2), N/(N-2))");
      if (p <= std::max(1.0, 3.0 / (N - 2)))
        throw UnprintedBranch("no schedule is stated for p <= max(1, 3/(N-2))");
      return std::pow(eps, 1.0 / ((N - 2) * p - 2)) * d_tilde;
    }
  }
  return 0.0;
}

/// Limits of the blow-up products and the outer-profile coefficients.
///  sub:    eps u(x_i)^{p+1}                         -> limit[i]
///  serrin: eps |u|^{N/(N-2)+1} / log |u|            -> limit[0]
///  super:  eps |u|^{N/((N-2)p-2)+1}                 -> limit[0]
///  all:    |u| v(x)                                 -> v_coefficient sum_i delta_i^{N/(q0+1)} G(x, xi_i)
///  sub:    |u|^p u(x)                               -> u_coefficient wtg_{delta,xi}(x)
///  serrin: |u|^{N/(N-2)} u(x) / log |u|             -> u_coefficient G(x, xi_0)
///  super:  |u|^{N/((N-2)p-2)} u(x)                  -> u_coefficient G(x, xi_0)
struct RateRecord {
  Regime regime = Regime::super;
  double product_exponent = 0.0;
  bool log_corrected = false;
  std::vector<double> limit;
  std::vector<double> delta;  ///< delta_i = d~_i / d~_1
  double v_coefficient = 0.0;
  double u_coefficient = 0.0;
  double u_exponent = 0.0;
  bool u_log_corrected = false;
  /// b_{N,p} / (gamma_N A1) - 1: the v-profile coefficient against the tail of V.
  double v_tail_consistency = 0.0;
  /// max_i / min_i of delta_i^{N/(q0+1)} wth_i(xi_i) minus one (sub regime, vanishes at k = 1).
  double spread = 0.0;
};

inline RateRecord predicted_rates(const ReducedEnergy& re, const CriticalPointReport& crit) {
  if (!crit.converged) throw DomainError("predicted rates need a converged critical point");
  const Configuration& c = crit.config;
  const int N = re.N();
  const double p = re.exp.p, q0 = re.exp.q0;
  const BubbleConstants& K = re.constants;
  const double E = K.S_power();  // S^{p(q0+1)/(pq0-1)}
  RateRecord r;
  r.regime = re.regime;
  r.v_coefficient = K.A1;
  r.v_tail_consistency = re.b_Np / (re.bundle.gamma_N * K.A1) - 1.0;
  for (double d : c.deltas) r.delta.push_back(d / c.deltas[0]);
  if (re.regime != Regime::sub && c.k() != 1)
    throw DomainError("for p >= N/(N-2) blow-up happens at a single point");
  switch (re.regime) {
    case Regime::super: {
      if (!K.A2) throw MissingConstant("A2 diverges");
      r.product_exponent = N / ((N - 2) * p - 2) + 1.0;
      r.limit = {(N - 2) * K.A1 * *K.A2 / E * robin(re.bundle, c.points[0])};
      r.u_coefficient = *K.A2;
      r.u_exponent = N / ((N - 2) * p - 2);
      break;
    }
    case Regime::serrin: {
      const double bp = std::pow(re.b_Np, double(N) / (N - 2));
      r.product_exponent = double(N) / (N - 2) + 1.0;
      r.log_corrected = r.u_log_corrected = true;
      r.limit = {(p + 1) * sphere_area(N) * bp * K.A1 / E * robin(re.bundle, c.points[0])};
      r.u_coefficient = (p + 1) / (N - 2) * sphere_area(N) * bp;
      r.u_exponent = double(N) / (N - 2);
      break;
    }
    case Regime::sub: {
      r.product_exponent = p + 1.0;
      const double a = N / (q0 + 1.0);
      Configuration dc = c;
      dc.deltas = r.delta;
      double lo = INFINITY, hi = -INFINITY;
      for (std::size_t i = 0; i < c.k(); ++i) {
        const double w = config_potentials(re.bundle, dc, dc.points[i], i, re.quad).wth_i;
        r.limit.push_back(a * std::pow(K.A1, p + 1) / E * std::pow(r.delta[i], -a * p) * w);
        const double m = std::pow(r.delta[i], a) * w;
        lo = std::min(lo, m);
        hi = std::max(hi, m);
      }
      r.spread = hi / lo - 1.0;
      r.u_coefficient = std::pow(K.A1, p);
      r.u_exponent = p;
      break;
    }
  }
  return r;
}

}  // namespace lane_emden
