#pragma once

/// The standard bubble (U, V): the radial entire ground state of
///   -Delta U = V^p,  -Delta V = U^{q0},  U(0) = 1,
/// computed by shooting on s = V(0), together with its decay constants and
/// the integral constants A1, A2, A3 and S.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lane_emden/errors.hpp"
#include "lane_emden/exponents.hpp"
#include "lane_emden/numerics.hpp"

namespace lane_emden {

struct BubbleOptions {
  double R_max = 1e4;
  double shoot_tol = 1e-14;  ///< relative bracket width on s = V(0)
  double ode_rtol = 1e-13;
  double r0 = 1e-6;          ///< series start radius
  int panels_per_decade = 20;
  int order = 20;            ///< Gauss-Legendre points per panel
};

/// Leading tail law r^{sigma} f(r) = c0 + c1 h^{order} with h = 1/r, or
/// r^{N-2} f(r) = c0 log r + c1 in the logarithmic case.
struct TailLaw {
  double sigma = 0.0;
  double order = 0.0;
  double c0 = 0.0;
  double c1 = 0.0;
  bool logarithmic = false;
  double residual = 0.0;

  double value(double r) const {
    if (logarithmic) return std::pow(r, -sigma) * (c0 * std::log(r) + c1);
    return std::pow(r, -sigma) * (c0 + c1 * std::pow(r, -order));
  }
  double derivative(double r) const {
    if (logarithmic) return std::pow(r, -sigma - 1.0) * (c0 - sigma * (c0 * std::log(r) + c1));
    return std::pow(r, -sigma - 1.0) * (-sigma * c0 - (sigma + order) * c1 * std::pow(r, -order));
  }
};

struct BubbleValue {
  double U = 0.0, V = 0.0, dU = 0.0, dV = 0.0;
};

/// The bubble sampled on a log-spaced Gauss-Legendre grid.
struct RadialProfile {
  int N = 0;
  double p = 0.0;
  double q0 = 0.0;
  Regime regime = Regime::sub;
  double s = 0.0;  ///< V(0)
  BubbleOptions options;
  Grid1D grid;
  /// Knots: r0, the grid nodes, R_max. Values at the knots.
  std::vector<double> r, U, V, dU, dV;
  TailLaw tail_U, tail_V;

  double a() const { return tail_U.c0; }
  double b() const { return tail_V.c0; }
  double R_max() const { return r.back(); }
  ExponentPair exponents() const { return make_exponents(N, p, 0.0); }

  /// Values at radius rr >= 0: series below r0, quintic Hermite inside, tail law beyond R_max.
  BubbleValue at(double rr) const {
    BubbleValue out;
    if (rr <= r.front()) {
      const double sp = std::pow(s, p);
      out.U = 1.0 - sp * rr * rr / (2.0 * N);
      out.dU = -sp * rr / N;
      out.V = s - rr * rr / (2.0 * N);
      out.dV = -rr / N;
      return out;
    }
    if (rr >= r.back()) {
      out.U = tail_U.value(rr);
      out.dU = tail_U.derivative(rr);
      out.V = tail_V.value(rr);
      out.dV = tail_V.derivative(rr);
      return out;
    }
    std::size_t j = static_cast<std::size_t>(std::upper_bound(r.begin(), r.end(), rr) - r.begin()) - 1;
    const double h = r[j + 1] - r[j];
    const double t = (rr - r[j]) / h;
    const double t2 = t * t, t3 = t2 * t, t4 = t3 * t, t5 = t4 * t;
    // Quintic Hermite basis: values, first and second derivatives at both ends.
    const double H[6] = {1 - 10 * t3 + 15 * t4 - 6 * t5, t - 6 * t3 + 8 * t4 - 3 * t5,
                         0.5 * (t2 - 3 * t3 + 3 * t4 - t5), 0.5 * (t3 - 2 * t4 + t5),
                         -4 * t3 + 7 * t4 - 3 * t5, 10 * t3 - 15 * t4 + 6 * t5};
    // The derivative gets its own quintic Hermite on the first three derivatives so that it is C2 too.
    auto herm = [&](bool of_U, double& val, double& der) {
      const std::vector<double>& f = of_U ? U : V;
      const std::vector<double>& df = of_U ? dU : dV;
      const double d2a = second_derivative(of_U, j), d2b = second_derivative(of_U, j + 1);
      const double d3a = third_derivative(of_U, j), d3b = third_derivative(of_U, j + 1);
      const double c[6] = {f[j], h * df[j], h * h * d2a, h * h * d2b, h * df[j + 1], f[j + 1]};
      const double e[6] = {df[j], h * d2a, h * h * d3a, h * h * d3b, h * d2b, df[j + 1]};
      val = der = 0.0;
      for (int m = 0; m < 6; ++m) {
        val += H[m] * c[m];
        der += H[m] * e[m];
      }
    };
    herm(true, out.U, out.dU);
    herm(false, out.V, out.dV);
    return out;
  }

  /// Second radial derivative at knot j from the ODE itself.
  double second_derivative(bool of_U, std::size_t j) const {
    if (of_U) return -(N - 1) / r[j] * dU[j] - std::pow(std::max(V[j], 0.0), p);
    return -(N - 1) / r[j] * dV[j] - std::pow(std::max(U[j], 0.0), q0);
  }

  /// Third radial derivative at knot j, from differentiating the ODE.
  double third_derivative(bool of_U, std::size_t j) const {
    const double rr = r[j];
    if (of_U)
      return (N - 1) / (rr * rr) * dU[j] - (N - 1) / rr * second_derivative(true, j) -
             p * std::pow(std::max(V[j], 0.0), p - 1) * dV[j];
    return (N - 1) / (rr * rr) * dV[j] - (N - 1) / rr * second_derivative(false, j) -
           q0 * std::pow(std::max(U[j], 0.0), q0 - 1) * dU[j];
  }
};

struct BubbleConstants {
  double A1 = 0.0;
  std::optional<double> A2;  ///< finite only in the super regime
  double A3 = 0.0;
  double S = 0.0;            ///< from the L^{q0+1} norm of U
  double S_alt = 0.0;        ///< from the L^{(p+1)/p} norm of Delta U
  double int_U_q0p1 = 0.0;   ///< integral of U^{q0+1}
  double int_V_pp1 = 0.0;    ///< integral of V^{p+1}
  double psi0_moment = 0.0;  ///< integral of U^{q0} Psi^0 (vanishes)
  double A1_identity = 0.0;  ///< -q0 integral of U^{q0-1} Psi^1 x_1
  double A3_expected = 0.0;  ///< N/(q0+1)^2 integral of U^{q0+1}
  std::optional<double> kappa0;

  double require_A2() const {
    if (!A2) throw DivergentIntegral("A2 = integral of V^p diverges unless p > N/(N-2)");
    return *A2;
  }
  /// S^{p(q0+1)/(pq0-1)} = integral of U^{q0+1}.
  double S_power() const { return int_U_q0p1; }
};

namespace detail {

struct Shooter {
  int N;
  double p, q;
  BubbleOptions opt;

  State start(double s) const {
    const double r0 = opt.r0, sp = std::pow(s, p);
    return {1.0 - sp * r0 * r0 / (2.0 * N), -sp * r0 / N, s - r0 * r0 / (2.0 * N), -r0 / N};
  }

  OdeRhs rhs() const {
    const int n = N;
    const double pp = p, qq = q;
    return [n, pp, qq](double r, const double* y, double* dy) {
      dy[0] = y[1];
      dy[1] = -(n - 1) / r * y[1] - std::pow(std::max(y[2], 0.0), pp);
      dy[2] = y[3];
      dy[3] = -(n - 1) / r * y[3] - std::pow(std::max(y[0], 0.0), qq);
    };
  }

  OdeOptions ode() const {
    OdeOptions o;
    o.rtol = opt.ode_rtol;
    o.atol = opt.ode_rtol * 1e-16;
    return o;
  }

  Trajectory run(double s, double R, bool stop_on_crossing) const {
    OdeStop stop;
    if (stop_on_crossing) stop = [](double, const double* y) { return y[0] <= 0.0 || y[2] <= 0.0; };
    return integrate_ode(rhs(), opt.r0, R, start(s), ode(), stop);
  }

  /// +1: U vanishes first (s too large); -1: V vanishes first (s too small); 0: neither.
  int classify(double s, double R) const {
    Trajectory t = run(s, R, true);
    if (!t.stopped()) return 0;
    const std::size_t last = t.nodes().size() - 1;
    const double Ue = t.node_value(last, 0), Ve = t.node_value(last, 2);
    if (Ue <= 0.0 && Ve > 0.0) return 1;
    if (Ve <= 0.0 && Ue > 0.0) return -1;
    const double a = t.nodes()[last - 1], b = t.nodes()[last];
    auto zero_of = [&](std::size_t i) {
      return bisect([&](double r) { return t.component(r, i); }, a, b, 1e-15 * b).value;
    };
    return zero_of(0) <= zero_of(2) ? 1 : -1;
  }
};

}  // namespace detail

/// Fits the tail laws of U and V over the last decade of the profile.
inline std::pair<TailLaw, TailLaw> fit_decay_constants(const RadialProfile& prof) {
  const double R = prof.R_max();
  if (R < 1e3 * (1.0 - 1e-12)) throw TailNotResolved("profile must extend to R_max >= 1e3");
  const int N = prof.N;
  const double p = prof.p, q0 = prof.q0;
  const double sigmaU = prof.regime == Regime::sub ? (N - 2) * p - 2.0 : double(N - 2);

  std::vector<std::pair<double, double>> sv, su;
  for (std::size_t i = 0; i < prof.r.size(); ++i) {
    const double rr = prof.r[i];
    if (rr < R / 10.0) continue;
    if (!(prof.U[i] > 0.0) || !(prof.V[i] > 0.0)) throw TailNotResolved("profile not positive in the tail");
    sv.push_back({1.0 / rr, std::pow(rr, N - 2) * prof.V[i]});
    if (prof.regime == Regime::serrin)
      su.push_back({1.0 / std::log(rr), std::pow(rr, N - 2) * prof.U[i] / std::log(rr)});
    else
      su.push_back({1.0 / rr, std::pow(rr, sigmaU) * prof.U[i]});
  }
  if (sv.size() < 4) throw TailNotResolved("too few samples in the last decade");

  TailLaw tv;
  tv.sigma = N - 2;
  tv.order = sigmaU * q0 - N;
  auto fv = fit_extrapolation(sv, tv.order);
  tv.c0 = fv.limit;
  tv.c1 = fv.coefficient;
  tv.residual = fv.residual;

  TailLaw tu;
  tu.sigma = sigmaU;
  if (prof.regime == Regime::serrin) {
    tu.logarithmic = true;
    tu.order = 1.0;
    auto fu = fit_extrapolation(su, 1.0);
    tu.c0 = fu.limit;
    tu.c1 = fu.coefficient;
    tu.residual = fu.residual;
  } else {
    tu.order = prof.regime == Regime::super ? (N - 2) * p - N : N - (N - 2) * p;
    auto fu = fit_extrapolation(su, tu.order);
    tu.c0 = fu.limit;
    tu.c1 = fu.coefficient;
    tu.residual = fu.residual;
  }
  if (!(tv.c0 > 0.0) || !(tu.c0 > 0.0)) throw TailNotResolved("fitted decay constants are not positive");
  if (tv.residual > 0.01 * tv.c0 || tu.residual > 0.01 * tu.c0)
    throw TailNotResolved("tail fit residual exceeds 1% of the decay constant");
  return {tu, tv};
}

/// Computes the standard bubble for (N, p) by shooting on V(0).
inline RadialProfile solve_ground_state(const ExponentPair& e, const BubbleOptions& opt = {}) {
  if (e.eps != 0.0) throw InvalidExponent("the bubble is defined at eps = 0");
  if (!(opt.R_max >= 1e3)) throw DomainError("R_max must be at least 1e3");
  if (!(opt.shoot_tol > 0.0)) throw DomainError("shooting tolerance must be positive");
  detail::Shooter sh{e.N, e.p, e.q0, opt};
  const double R_class = opt.R_max * 1e2;

  // Log-spaced scan over s in [1e-4, 1e4].
  double lo = 0.0, hi = 0.0;
  int prev = 0;
  double prev_s = 0.0;
  bool found = false, exact = false;
  for (int k = 0; k <= 32; ++k) {
    const double s = std::pow(10.0, -4.0 + 0.25 * k);
    const int c = sh.classify(s, R_class);
    if (c == 0) {
      lo = hi = s;
      found = exact = true;
      break;
    }
    if (k > 0 && prev == -1 && c == 1) {
      lo = prev_s;
      hi = s;
      found = true;
      break;
    }
    prev = c;
    prev_s = s;
  }
  if (!found) throw BracketNotFound("no change of shooting outcome for V(0) in [1e-4, 1e4]");

  int iters = 0;
  while (!exact && hi - lo > opt.shoot_tol * hi) {
    if (++iters > 200) throw NoConvergence("shooting bisection stalled");
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const int c = sh.classify(mid, R_class);
    if (c == 0) {
      lo = hi = mid;
      break;
    }
    (c < 0 ? lo : hi) = mid;
  }

  // Keep the candidate that stays positive up to R_max.
  std::optional<Trajectory> traj;
  double s_final = 0.0;
  for (double s : {0.5 * (lo + hi), lo, hi}) {
    Trajectory t = sh.run(s, opt.R_max, true);
    if (!t.stopped()) {
      traj = std::move(t);
      s_final = s;
      break;
    }
  }
  if (!traj) throw NoConvergence("no shooting candidate stays positive up to R_max; reduce R_max");

  RadialProfile prof;
  prof.N = e.N;
  prof.p = e.p;
  prof.q0 = e.q0;
  prof.regime = e.regime();
  prof.s = s_final;
  prof.options = opt;
  const int decades = static_cast<int>(std::ceil(std::log10(opt.R_max / opt.r0) - 1e-9));
  prof.grid = Grid1D::composite(geometric_breaks(opt.r0, opt.R_max, decades * opt.panels_per_decade), opt.order);
  prof.r.reserve(prof.grid.size() + 2);
  prof.r.push_back(opt.r0);
  for (double x : prof.grid.nodes) prof.r.push_back(x);
  prof.r.push_back(opt.R_max);
  for (double x : prof.r) {
    State y = (*traj)(x);
    prof.U.push_back(y[0]);
    prof.dU.push_back(y[1]);
    prof.V.push_back(y[2]);
    prof.dV.push_back(y[3]);
  }
  auto [tu, tv] = fit_decay_constants(prof);
  prof.tail_U = tu;
  prof.tail_V = tv;
  return prof;
}

inline RadialProfile solve_ground_state(int N, double p, const BubbleOptions& opt = {}) {
  return solve_ground_state(make_exponents(N, p, 0.0), opt);
}

namespace detail {

/// |S^{N-1}| times the integral of f r^{N-1} over the grid, plus the power tail
/// f(R) R^N / (-(N + decay)) for f ~ r^{decay} beyond R_max.
template <class F>
double radial_integral(const RadialProfile& prof, F&& f, double decay) {
  const int N = prof.N;
  double s = 0.0;
  for (std::size_t i = 0; i < prof.grid.size(); ++i) {
    const double rr = prof.r[i + 1];
    s += prof.grid.weights[i] * f(i + 1) * std::pow(rr, N - 1);
  }
  const double R = prof.R_max();
  if (N + decay < 0.0) s += f(prof.r.size() - 1) * std::pow(R, N) / (-(N + decay));
  return sphere_area(N) * s;
}

}  // namespace detail

inline BubbleConstants compute_constants(const RadialProfile& prof) {
  const int N = prof.N;
  const double p = prof.p, q0 = prof.q0;
  const double sigmaU = prof.regime == Regime::sub ? (N - 2) * p - 2.0 : double(N - 2);
  const double sigmaV = N - 2;
  auto U = [&](std::size_t i) { return prof.U[i]; };
  auto V = [&](std::size_t i) { return prof.V[i]; };
  auto psi0 = [&](std::size_t i) { return prof.r[i] * prof.dU[i] + N * prof.U[i] / (q0 + 1.0); };

  BubbleConstants c;
  c.A1 = detail::radial_integral(prof, [&](std::size_t i) { return std::pow(U(i), q0); }, -sigmaU * q0);
  if (prof.regime == Regime::super) {
    c.A2 = detail::radial_integral(prof, [&](std::size_t i) { return std::pow(V(i), p); }, -sigmaV * p);
    c.kappa0 = (N - 2) * p - N;
  }
  c.int_U_q0p1 =
      detail::radial_integral(prof, [&](std::size_t i) { return std::pow(U(i), q0 + 1.0); }, -sigmaU * (q0 + 1));
  c.int_V_pp1 =
      detail::radial_integral(prof, [&](std::size_t i) { return std::pow(V(i), p + 1.0); }, -sigmaV * (p + 1));
  c.A3 = detail::radial_integral(
      prof, [&](std::size_t i) { return std::pow(U(i), q0) * std::log(U(i)) * psi0(i); }, -sigmaU * (q0 + 1));
  c.psi0_moment =
      detail::radial_integral(prof, [&](std::size_t i) { return std::pow(U(i), q0) * psi0(i); }, -sigmaU * (q0 + 1));
  // Psi^1 x_1 = U'(r) x_1^2 / r averages to r U'(r) / N over spheres.
  c.A1_identity = -q0 / N *
                  detail::radial_integral(
                      prof, [&](std::size_t i) { return std::pow(U(i), q0 - 1.0) * prof.dU[i] * prof.r[i]; },
                      -sigmaU * q0);
  c.A3_expected = N / ((q0 + 1.0) * (q0 + 1.0)) * c.int_U_q0p1;
  const double E = c.int_U_q0p1;
  c.S = std::pow(E, (p * q0 - 1.0) / (p * (q0 + 1.0)));
  c.S_alt = c.int_V_pp1 / std::pow(E, (p + 1.0) / (p * (q0 + 1.0)));
  return c;
}

/// Scaled and translated bubble U_{mu,xi}, V_{mu,xi} at x.
template <class Point>
std::pair<double, double> eval_bubble(const RadialProfile& prof, double mu, const Point& xi, const Point& x) {
  if (!(mu > 0.0)) throw DomainError("mu must be positive");
  double r2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) r2 += (x[i] - xi[i]) * (x[i] - xi[i]);
  const BubbleValue b = prof.at(std::sqrt(r2) / mu);
  return {std::pow(mu, -prof.N / (prof.q0 + 1.0)) * b.U, std::pow(mu, -prof.N / (prof.p + 1.0)) * b.V};
}

/// Kernels of the linearised system: l = 0 is the dilation mode, l >= 1 the translations.
template <class Point>
std::pair<double, double> eval_kernels(const RadialProfile& prof, double mu, const Point& xi, std::size_t l,
                                       const Point& x) {
  if (!(mu > 0.0)) throw DomainError("mu must be positive");
  if (l > x.size()) throw DomainError("kernel index out of range");
  const int N = prof.N;
  std::vector<double> y(x.size());
  double r2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = (x[i] - xi[i]) / mu;
    r2 += y[i] * y[i];
  }
  const double r = std::sqrt(r2);
  const BubbleValue b = prof.at(r);
  const double su = std::pow(mu, -N / (prof.q0 + 1.0)), sv = std::pow(mu, -N / (prof.p + 1.0));
  if (l == 0) {
    return {su * (r * b.dU + N * b.U / (prof.q0 + 1.0)), sv * (r * b.dV + N * b.V / (prof.p + 1.0))};
  }
  const double dir = r > 0.0 ? y[l - 1] / r : 0.0;
  return {su / mu * b.dU * dir, sv / mu * b.dV * dir};
}

}  // namespace lane_emden
