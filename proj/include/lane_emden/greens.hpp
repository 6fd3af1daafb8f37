#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "lane_emden/errors.hpp"
#include "lane_emden/exponents.hpp"
#include "lane_emden/numerics.hpp"

namespace lane_emden {

using Vec = Eigen::VectorXd;

/// A ball in R^N. An empty center means the origin.
struct BallDomain {
  int N = 4;
  double radius = 1.0;
  Vec center;

  Vec origin() const { return center.size() ? center : Vec::Zero(N); }

  Vec to_unit(const Vec& x) const {
    if (x.size() != N) throw DomainError("point has dimension " + std::to_string(x.size()) + ", expected " + std::to_string(N));
    return (x - origin()) / radius;
  }

  bool interior(const Vec& x) const { return to_unit(x).norm() < 1.0; }
};

inline BallDomain unit_ball(int N) { return BallDomain{N, 1.0, Vec::Zero(N)}; }

struct GreensBundle {
  BallDomain domain;
  ExponentPair exp;
  double gamma_N = 0.0;
  double gamma_tilde_1 = 0.0;           ///< sub regime only
  std::optional<double> gamma_tilde_2;  ///< p in [(N-1)/(N-2), N/(N-2))

  int N() const { return exp.N; }
  double p() const { return exp.p; }
  /// (N-2)p, the singular power of G^p.
  double s() const { return (exp.N - 2) * exp.p; }
  bool sub() const { return exp.regime() == Regime::sub; }
  void require_sub(const char* what) const {
    if (!sub()) throw WrongRegime(std::string(what) + " needs p < N/(N-2)");
  }
};

inline GreensBundle make_greens_bundle(const ExponentPair& e, BallDomain d) {
  if (d.N != e.N) throw DomainError("domain dimension does not match the exponents");
  if (!(d.radius > 0.0)) throw DomainError("ball radius must be positive");
  if (!d.center.size()) d.center = Vec::Zero(d.N);
  GreensBundle b;
  b.domain = d;
  b.exp = e;
  const int N = e.N;
  const double p = e.p, s = (N - 2) * p;
  b.gamma_N = 1.0 / ((N - 2) * sphere_area(N));
  if (b.sub()) {
    b.gamma_tilde_1 = std::pow(b.gamma_N, p) / ((s - 2.0) * (N - s));
    if (p >= (N - 1.0) / (N - 2)) b.gamma_tilde_2 = p * std::pow(b.gamma_N, p - 1) / ((s - 2.0 * (N - 1)) * (N - s));
  }
  return b;
}

inline GreensBundle make_greens_bundle(const ExponentPair& e) { return make_greens_bundle(e, unit_ball(e.N)); }

/// Blow-up scales and centres (delta_i, xi_i).
struct Configuration {
  std::vector<double> deltas;
  std::vector<Vec> points;

  std::size_t k() const { return deltas.size(); }

  void validate(const BallDomain& d) const {
    if (deltas.size() != points.size() || deltas.empty()) throw DomainError("configuration needs matching deltas and points");
    for (std::size_t i = 0; i < k(); ++i) {
      if (!(deltas[i] > 0.0)) throw DomainError("deltas must be positive");
      if (!d.interior(points[i])) throw DomainError("configuration point outside the open ball");
      for (std::size_t j = 0; j < i; ++j)
        if ((points[i] - points[j]).norm() == 0.0) throw DomainError("configuration points must be distinct");
    }
  }
};

// ---------------------------------------------------------------------------
// Closed forms on the unit ball
// ---------------------------------------------------------------------------

namespace detail {

/// |x|^2 |xi|^2 - 2 x.xi + 1 = (|xi| |x - xi*|)^2.
inline double image_q(const Vec& x, const Vec& xi) { return x.squaredNorm() * xi.squaredNorm() - 2.0 * x.dot(xi) + 1.0; }

inline double unit_H(int N, double g, const Vec& x, const Vec& xi) { return g * std::pow(image_q(x, xi), 0.5 * (2 - N)); }

inline double unit_G(int N, double g, const Vec& x, const Vec& xi) {
  return g * (std::pow((x - xi).squaredNorm(), 0.5 * (2 - N)) - std::pow(image_q(x, xi), 0.5 * (2 - N)));
}

inline Vec unit_grad_G(int N, double g, const Vec& x, const Vec& xi) {
  const Vec d = x - xi;
  const double r2 = d.squaredNorm(), q = image_q(x, xi);
  return g * ((2.0 - N) * std::pow(r2, -0.5 * N) * d - 0.5 * (2.0 - N) * std::pow(q, -0.5 * N) * (2.0 * xi.squaredNorm() * x - 2.0 * xi));
}

}  // namespace detail

inline double green(const GreensBundle& b, const Vec& x, const Vec& xi) {
  const Vec ux = b.domain.to_unit(x), uxi = b.domain.to_unit(xi);
  if ((ux - uxi).norm() == 0.0) throw OnDiagonal("G(x, xi) is singular at x = xi");
  return std::pow(b.domain.radius, 2 - b.N()) * detail::unit_G(b.N(), b.gamma_N, ux, uxi);
}

/// Regular part H(x, xi) = gamma_N |x - xi|^{2-N} - G(x, xi).
inline double green_regular(const GreensBundle& b, const Vec& x, const Vec& xi) {
  return std::pow(b.domain.radius, 2 - b.N()) * detail::unit_H(b.N(), b.gamma_N, b.domain.to_unit(x), b.domain.to_unit(xi));
}

/// Gradient of G in its first argument.
inline Vec grad_green(const GreensBundle& b, const Vec& x, const Vec& xi) {
  const Vec ux = b.domain.to_unit(x), uxi = b.domain.to_unit(xi);
  if ((ux - uxi).norm() == 0.0) throw OnDiagonal("grad G(x, xi) is singular at x = xi");
  return std::pow(b.domain.radius, 1 - b.N()) * detail::unit_grad_G(b.N(), b.gamma_N, ux, uxi);
}

inline double robin(const GreensBundle& b, const Vec& xi) {
  const Vec u = b.domain.to_unit(xi);
  const double t = 1.0 - u.squaredNorm();
  if (!(t > 0.0)) throw DomainError("Robin function needs an interior point");
  return std::pow(b.domain.radius, 2 - b.N()) * b.gamma_N * std::pow(t, 2 - b.N());
}

inline Vec grad_robin(const GreensBundle& b, const Vec& xi) {
  const Vec u = b.domain.to_unit(xi);
  const double t = 1.0 - u.squaredNorm();
  if (!(t > 0.0)) throw DomainError("Robin function needs an interior point");
  const int N = b.N();
  return std::pow(b.domain.radius, 1 - N) * 2.0 * (N - 2) * b.gamma_N * std::pow(t, 1 - N) * u;
}

/// A_i = delta_i^{N/(q0+1)} tau(xi_i) - sum_{j != i} delta_j^{N/(q0+1)} G(xi_i, xi_j).
inline double a_coefficient(const GreensBundle& b, const Configuration& c, std::size_t i) {
  const double e = b.N() / (b.exp.q0 + 1.0);
  double a = std::pow(c.deltas[i], e) * robin(b, c.points[i]);
  for (std::size_t j = 0; j < c.k(); ++j)
    if (j != i) a -= std::pow(c.deltas[j], e) * green(b, c.points[i], c.points[j]);
  return a;
}

// ---------------------------------------------------------------------------
// Radial potential of G(., 0)^p
// ---------------------------------------------------------------------------

namespace detail {

/// ((1-u)^p - 1)/u, finite as u -> 0.
inline double power_difference_quotient(double p, double u) {
  if (std::fabs(u) < 1e-8) return -p * (1.0 - 0.5 * (p - 1.0) * u);
  return std::expm1(p * std::log1p(-u)) / u;
}

/// t^{N-1} (G(t,0)^p - gamma^p t^{-s}) on the unit ball.
inline double center_remainder_moment(const GreensBundle& b, double t) {
  const int N = b.N();
  return std::pow(b.gamma_N, b.p()) * std::pow(t, 2 * N - 3 - b.s()) *
         power_difference_quotient(b.p(), std::pow(t, N - 2));
}

/// Radial solution of -Delta w = G(.,0)^p - gamma^p |.|^{-s} with w(1) = 0, on the unit ball.
inline double center_remainder_potential(const GreensBundle& b, double r, double tol = 1e-13) {
  const int N = b.N();
  double out = 0.0;
  if (r > 0.0)
    out += (std::pow(r, 2 - N) - 1.0) * integrate_adaptive([&](double t) { return center_remainder_moment(b, t); }, 0.0, r, tol).value;
  if (r < 1.0)
    out += integrate_adaptive(
               [&](double t) {
                 // t^{N-1} R(t) (t^{2-N} - 1)
                 const double u = std::pow(t, N - 2);
                 return std::pow(b.gamma_N, b.p()) * std::pow(t, N - 1 - b.s()) * (1.0 - u) *
                        power_difference_quotient(b.p(), u);
               },
               r, 1.0, tol)
               .value;
  return out / (N - 2);
}

}  // namespace detail

/// Radial solution of -Delta w = G(., 0)^p, w = 0 on the boundary, at distance r from the centre.
/// The power-law part gamma_tilde_1 r^{2-(N-2)p} is split off analytically.
inline double wtg_center(const GreensBundle& b, double r) {
  b.require_sub("wtg_center");
  const double R = b.domain.radius, t = r / R;
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("radius outside the ball");
  if (t == 0.0) return std::numeric_limits<double>::infinity();
  const double w = b.gamma_tilde_1 * (std::pow(t, 2.0 - b.s()) - 1.0) + detail::center_remainder_potential(b, t);
  return std::pow(R, 2.0 - b.s()) * w;
}

/// The singular expansion subtracted from wtg near its pole, at distance r (unit ball, xi = 0).
namespace detail {
inline double center_singular_part(const GreensBundle& b, double t) {
  double v = b.gamma_tilde_1 * std::pow(t, 2.0 - b.s());
  if (b.gamma_tilde_2) v -= *b.gamma_tilde_2 * b.gamma_N * std::pow(t, b.N() - b.s());
  return v;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Sphere and ball quadrature in the span of the special points
// ---------------------------------------------------------------------------

namespace detail {

/// Orthonormal basis of the span of a point set (unit coordinates).
struct SpanBasis {
  std::vector<Vec> e;
  int m() const { return static_cast<int>(e.size()); }
  std::vector<double> coords(const Vec& v) const {
    std::vector<double> c(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) c[i] = e[i].dot(v);
    return c;
  }
};

inline SpanBasis span_basis(const std::vector<Vec>& pts) {
  SpanBasis B;
  for (const Vec& v : pts) {
    if (B.m() == v.size()) break;
    Vec w = v;
    for (int pass = 0; pass < 2; ++pass)
      for (const Vec& e : B.e) w -= e.dot(w) * e;
    if (w.norm() > 1e-12 * std::max(1.0, v.norm())) B.e.push_back(w / w.norm());
  }
  return B;
}

/// Tensor rule for directions on S^{N-1}, reduced to coordinates in an m-dimensional span.
/// The first polar angle uses the supplied breakpoints; the rest use `panels` uniform panels.
struct DirectionRule {
  int m = 0;
  std::vector<double> coords;  ///< m entries per direction
  std::vector<double> weights;
  std::size_t size() const { return weights.size(); }
  const double* omega(std::size_t i) const { return coords.data() + i * static_cast<std::size_t>(m); }
};

inline DirectionRule direction_rule(int N, int m, const std::vector<double>& theta1_breaks, int panels, int order) {
  DirectionRule R;
  R.m = m;
  if (m == 0) {
    R.weights.push_back(sphere_area(N));
    return R;
  }
  const bool full = (m == N);
  const int polar = full ? N - 2 : m;
  std::vector<Grid1D> rules;
  for (int j = 0; j < polar; ++j) {
    if (j == 0) rules.push_back(Grid1D::composite(theta1_breaks, order));
    else rules.push_back(Grid1D::composite(uniform_breaks(0.0, kPi, panels), order));
  }
  if (full) rules.push_back(Grid1D::composite(uniform_breaks(0.0, 2.0 * kPi, 2 * panels), order));
  const double base = full ? 1.0 : sphere_area(N - m);
  std::vector<std::size_t> idx(rules.size(), 0);
  std::vector<double> c(static_cast<std::size_t>(m));
  while (true) {
    double w = base, sp = 1.0;
    for (int j = 0; j < polar; ++j) {
      const double th = rules[j].nodes[idx[j]];
      w *= rules[j].weights[idx[j]] * std::pow(std::sin(th), N - 2 - j);
      c[j] = sp * std::cos(th);
      sp *= std::sin(th);
    }
    if (full) {
      const double ph = rules.back().nodes[idx.back()];
      w *= rules.back().weights[idx.back()];
      c[N - 2] = sp * std::cos(ph);
      c[N - 1] = sp * std::sin(ph);
    }
    R.weights.push_back(w);
    R.coords.insert(R.coords.end(), c.begin(), c.end());
    std::size_t d = 0;
    while (d < rules.size() && ++idx[d] == rules[d].size()) idx[d++] = 0;
    if (d == rules.size()) break;
  }
  return R;
}

/// Geometry of y relative to a list of special points P_j, passed to integrands.
struct BallPoint {
  double yy;          ///< |y|^2
  const double* ydp;  ///< y . P_j
  const double* d2;   ///< |y - P_j|^2
};

/// The special points with their span coordinates and pairwise data.
struct PointSet {
  int N = 0;
  std::vector<Vec> P;
  SpanBasis basis;
  std::vector<std::vector<double>> Pc;  ///< span coordinates
  std::vector<double> PP;               ///< |P_j|^2

  PointSet(int n, std::vector<Vec> pts, const std::vector<Vec>& axis_first = {}) : N(n), P(std::move(pts)) {
    std::vector<Vec> order = axis_first;
    order.insert(order.end(), P.begin(), P.end());
    basis = span_basis(order);
    for (const Vec& v : P) {
      Pc.push_back(basis.coords(v));
      PP.push_back(v.squaredNorm());
    }
  }
};

/// Polar integral of f(y) over y = c + rho omega, rho in [0, rho_max(omega)], with the rho^{N-1} Jacobian.
/// The radial variable is graded as rho^(1/grade) toward the centre and cubically toward rho_max.
template <class F, class RhoMax>
double polar_integral(const PointSet& S, const Vec& c, const DirectionRule& dirs, RhoMax&& rho_max, int grade,
                      int radial_order, int radial_panels, F&& f) {
  const int N = S.N, m = dirs.m;
  const std::size_t np = S.P.size();
  const std::vector<double> cc = S.basis.coords(c);
  const double c2 = c.squaredNorm();
  std::vector<double> cdp(np), cd2(np);
  for (std::size_t j = 0; j < np; ++j) {
    cdp[j] = c.dot(S.P[j]);
    cd2[j] = (c - S.P[j]).squaredNorm();
  }
  auto [gx, gw] = gauss_legendre_rule(radial_order);
  std::vector<double> odp(np), ydp(np), d2(np);
  double total = 0.0;
  for (std::size_t di = 0; di < dirs.size(); ++di) {
    const double* om = dirs.omega(di);
    double oc = 0.0;
    for (int a = 0; a < m; ++a) oc += om[a] * cc[a];
    for (std::size_t j = 0; j < np; ++j) {
      double v = 0.0;
      for (int a = 0; a < m; ++a) v += om[a] * S.Pc[j][a];
      odp[j] = v;
    }
    const double rm = rho_max(oc);
    if (!(rm > 0.0)) continue;
    double acc = 0.0;
    auto node = [&](double rho, double jac) {
      const double yy = c2 + 2.0 * rho * oc + rho * rho;
      for (std::size_t j = 0; j < np; ++j) {
        ydp[j] = cdp[j] + rho * odp[j];
        d2[j] = cd2[j] + 2.0 * rho * (oc - odp[j]) + rho * rho;
      }
      acc += jac * std::pow(rho, N - 1) * f(BallPoint{yy, ydp.data(), d2.data()});
    };
    const double half = 0.5 * rm;
    for (int pn = 0; pn < radial_panels; ++pn) {
      const double ta = double(pn) / radial_panels, tb = double(pn + 1) / radial_panels;
      for (std::size_t i = 0; i < gx.size(); ++i) {
        const double t = ta + 0.5 * (gx[i] + 1.0) * (tb - ta), w = 0.5 * gw[i] * (tb - ta);
        // Inner half: rho = half t^grade.
        node(half * std::pow(t, grade), w * half * grade * std::pow(t, grade - 1));
      }
    }
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double t = 0.5 * (gx[i] + 1.0), w = 0.5 * gw[i];
      // Outer half: rho = rm - half (1-t)^3.
      node(rm - half * std::pow(1.0 - t, 3), w * 3.0 * half * (1.0 - t) * (1.0 - t));
    }
    total += dirs.weights[di] * acc;
  }
  return total;
}

/// Distance from c to the unit sphere along a unit direction with c.omega = oc.
inline double boundary_distance(double c2, double oc) { return -oc + std::sqrt(oc * oc + 1.0 - c2); }

inline int radial_grade(double beta) {
  return std::clamp(static_cast<int>(std::ceil(3.0 / std::max(beta, 1e-3))), 2, 30);
}

}  // namespace detail

struct VolumeQuadrature {
  int angle_panels = 1;
  int order = 10;
  int radial_order = 15;
  int radial_panels = 2;
  double rel_tol = 0.02;
};

namespace detail {

/// Integral over the unit ball of f, singular at the points with indices `centers` within the point set.
/// Each centre a takes the share chi_a = |y-c_a|^{-K} / sum_b |y-c_b|^{-K} of the integrand and is integrated
/// in polar coordinates about c_a out to the sphere. The partition is scale invariant, so nearby centres are
/// resolved as well as distant ones. The error estimate compares with a refined rule.
template <class F>
QuadResult ball_integral(const PointSet& S, const std::vector<std::size_t>& centers, double beta,
                         const VolumeQuadrature& q, F&& f) {
  const int N = S.N, m = S.basis.m();
  const int grade = radial_grade(beta);
  const double K = std::ceil(N - beta) + 4.0;
  auto run = [&](int panels, int order, int radial, int rpanels) {
    const DirectionRule dirs = direction_rule(N, m, uniform_breaks(0.0, kPi, panels), panels, order);
    double total = 0.0;
    for (std::size_t a = 0; a < centers.size(); ++a) {
      const Vec& c = S.P[centers[a]];
      const double c2 = c.squaredNorm();
      total += polar_integral(S, c, dirs, [&](double oc) { return boundary_distance(c2, oc); }, grade, radial, rpanels,
                              [&](const BallPoint& y) {
                                const double da = y.d2[centers[a]];
                                double den = 1.0;
                                for (std::size_t b = 0; b < centers.size(); ++b)
                                  if (b != a) den += std::pow(da / y.d2[centers[b]], 0.5 * K);
                                return f(y) / den;
                              });
    }
    return total;
  };
  const double coarse = run(q.angle_panels, q.order, q.radial_order, q.radial_panels);
  const double fine = run(q.angle_panels + q.angle_panels / 2 + 1, q.order, q.radial_order + 10, q.radial_panels + 1);
  const double err = std::fabs(fine - coarse);
  if (!std::isfinite(fine) || err > q.rel_tol * std::fabs(fine))
    throw QuadratureNotConverged("volume integral error estimate " + std::to_string(err) + " for value " + std::to_string(fine));
  return {fine, err};
}

/// G(y, P_j) on the unit ball from BallPoint data.
inline double ball_G(int N, double g, const BallPoint& y, const PointSet& S, std::size_t j) {
  const double q = y.yy * S.PP[j] - 2.0 * y.ydp[j] + 1.0;
  return g * (std::pow(y.d2[j], 0.5 * (2 - N)) - std::pow(q, 0.5 * (2 - N)));
}

/// Harmonic extension into the unit ball of boundary data g(z) given through a BallPoint on the sphere,
/// evaluated at x. Composite Gauss-Legendre in reduced angles, refined until successive levels agree.
template <class Data>
double poisson_extension(int N, const Vec& x, const std::vector<Vec>& pts, Data&& data, double tol) {
  const double rx = x.norm();
  std::vector<Vec> axis;
  if (rx > 0.0) axis.push_back(x / rx);
  PointSet S(N, pts, axis);
  const int m = S.basis.m();
  const Vec zero = Vec::Zero(N);
  const double delta = std::max(1.0 - rx, 1e-12);
  const double area = sphere_area(N);
  auto level = [&](int L) {
    std::vector<double> br{0.0};
    // Panels clustered at the Poisson peak (theta1 = 0) when x is near the sphere.
    for (double t = 0.5 * delta; t < kPi / 4; t *= 2.0) br.push_back(t);
    const int nu = 1 << L;
    const double a = br.back();
    for (int i = 1; i <= nu; ++i) br.push_back(a + (kPi - a) * i / nu);
    std::vector<double> refined{0.0};
    for (std::size_t i = 1; i < br.size(); ++i)
      for (int j = 1; j <= (1 << (L > 2 ? L - 2 : 0)); ++j)
        refined.push_back(br[i - 1] + (br[i] - br[i - 1]) * j / (1 << (L > 2 ? L - 2 : 0)));
    const DirectionRule dirs = direction_rule(N, m, refined, nu, 10);
    const std::size_t np = S.P.size();
    std::vector<double> ydp(np), d2(np);
    double total = 0.0;
    for (std::size_t di = 0; di < dirs.size(); ++di) {
      const double* om = dirs.omega(di);
      double ox = 0.0;
      for (int a2 = 0; a2 < m; ++a2) ox += om[a2] * S.basis.e[a2].dot(x);
      for (std::size_t j = 0; j < np; ++j) {
        double v = 0.0;
        for (int a2 = 0; a2 < m; ++a2) v += om[a2] * S.Pc[j][a2];
        ydp[j] = v;
        d2[j] = 1.0 - 2.0 * v + S.PP[j];
      }
      const double kx = 1.0 - 2.0 * ox + rx * rx;
      const double poisson = (1.0 - rx * rx) / (area * std::pow(kx, 0.5 * N));
      total += dirs.weights[di] * poisson * data(BallPoint{1.0, ydp.data(), d2.data()}, S);
    }
    return total;
  };
  (void)zero;
  double prev = level(1);
  for (int L = 2; L <= 7; ++L) {
    const double cur = level(L);
    if (std::fabs(cur - prev) <= tol * std::max(1.0, std::fabs(cur))) return cur;
    prev = cur;
  }
  throw QuadratureNotConverged("Poisson integral did not settle");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Harmonic extensions
// ---------------------------------------------------------------------------

/// Harmonic in x with boundary data gamma_N |z - xi|^{2-(N-2)p} (sub) or gamma_N log|z - xi| / |z - xi|^{N-2} (Serrin).
inline double hat_h(const GreensBundle& b, const Vec& x, const Vec& xi, double tol = 1e-12) {
  if (b.exp.regime() == Regime::super) throw WrongRegime("hat_h needs p <= N/(N-2)");
  const int N = b.N();
  const double R = b.domain.radius;
  const Vec ux = b.domain.to_unit(x), uxi = b.domain.to_unit(xi);
  if (!(ux.norm() < 1.0) || !(uxi.norm() < 1.0)) throw DomainError("hat_h needs interior points");
  const bool serrin = b.exp.regime() == Regime::serrin;
  const double g = b.gamma_N, s = b.s();
  auto data = [&](const detail::BallPoint& z, const detail::PointSet&) {
    if (serrin) return g * 0.5 * std::log(z.d2[0]) * std::pow(z.d2[0], 0.5 * (2 - N));
    return g * std::pow(z.d2[0], 0.5 * (2.0 - s));
  };
  const double v = detail::poisson_extension(N, ux, {uxi}, data, tol);
  if (serrin) return std::pow(R, 2 - N) * (v + std::log(R) * detail::unit_H(N, g, ux, uxi));
  return std::pow(R, 2.0 - s) * v;
}

/// Harmonic in x with boundary data |z - xi|^{N-(N-2)p}.
inline double bar_h(const GreensBundle& b, const Vec& x, const Vec& xi, double tol = 1e-12) {
  b.require_sub("bar_h");
  if (!b.gamma_tilde_2) throw WrongRegime("bar_h needs p >= (N-1)/(N-2)");
  const int N = b.N();
  const Vec ux = b.domain.to_unit(x), uxi = b.domain.to_unit(xi);
  if (!(ux.norm() < 1.0) || !(uxi.norm() < 1.0)) throw DomainError("bar_h needs interior points");
  const double e = N - b.s();
  auto data = [&](const detail::BallPoint& z, const detail::PointSet&) { return std::pow(z.d2[0], 0.5 * e); };
  return std::pow(b.domain.radius, e) * detail::poisson_extension(N, ux, {uxi}, data, tol);
}

/// gamma_N |x - xi|^{2-(N-2)p} - hat_h(x, xi).
inline double hat_g(const GreensBundle& b, const Vec& x, const Vec& xi) {
  b.require_sub("hat_g");
  const double r = (x - xi).norm();
  if (r == 0.0) throw OnDiagonal("hat_g is singular at x = xi");
  return b.gamma_N * std::pow(r, 2.0 - b.s()) - hat_h(b, x, xi);
}

// ---------------------------------------------------------------------------
// Regularised potentials
// ---------------------------------------------------------------------------

/// theta~(xi): the C^1 regular part of wtg(., xi) evaluated on the diagonal.
/// At the centre it is gamma_tilde_1 minus the remainder potential at 0. Elsewhere
/// (gamma_tilde_1/gamma_N) hat_h(xi, xi) minus the Green potential of G(., xi)^p - gamma_N^p |. - xi|^{-s}.
inline QuadResult wth_theta_estimate(const GreensBundle& b, const Vec& xi, const VolumeQuadrature& q = {}) {
  b.require_sub("wth_theta");
  const int N = b.N();
  const double R = b.domain.radius, s = b.s(), g = b.gamma_N, p = b.p();
  const Vec u = b.domain.to_unit(xi);
  if (!(u.norm() < 1.0)) throw DomainError("wth_theta needs an interior point");
  const double scale = std::pow(R, 2.0 - s);
  if (u.norm() == 0.0) return {scale * (b.gamma_tilde_1 - detail::center_remainder_potential(b, 0.0)), 0.0};
  detail::PointSet S(N, {u});
  const double gp = std::pow(g, p);
  auto integrand = [&](const detail::BallPoint& y) {
    const double r2 = y.d2[0];
    const double q2 = y.yy * S.PP[0] - 2.0 * y.ydp[0] + 1.0;
    // G = g r^{2-N} (1 - w) with w = (r^2/q)^{(N-2)/2}.
    const double w = std::pow(r2 / q2, 0.5 * (N - 2));
    const double G = g * std::pow(r2, 0.5 * (2 - N)) * (1.0 - w);
    const double rem = gp * std::pow(r2, -0.5 * s) * std::expm1(p * std::log1p(-w));
    return G * rem;
  };
  QuadResult vol = detail::ball_integral(S, {0}, N - s, q, integrand);
  const double hh = hat_h(b, u, u);
  return {scale * (b.gamma_tilde_1 / g * hh - vol.value), scale * vol.error};
}

inline double wth_theta(const GreensBundle& b, const Vec& xi, const VolumeQuadrature& q = {}) {
  return wth_theta_estimate(b, xi, q).value;
}

/// Cross-check of theta~(0): evaluate the subtracted singular expansion minus wtg_center at the offsets
/// and extrapolate to zero in the next-order exponent.
inline ExtrapolationFit wth_theta_center_extrapolated(const GreensBundle& b, std::vector<double> offsets = {1e-2, 5e-3, 2.5e-3}) {
  b.require_sub("wth_theta");
  std::vector<std::pair<double, double>> samples;
  for (double h : offsets) {
    const double t = h / b.domain.radius;
    const double v = detail::center_singular_part(b, t) - wtg_center(b, h) * std::pow(b.domain.radius, b.s() - 2.0);
    samples.emplace_back(h, std::pow(b.domain.radius, 2.0 - b.s()) * v);
  }
  const double order = std::min(2.0, b.N() - b.s() + (b.gamma_tilde_2 ? b.N() - 2.0 : 0.0));
  return fit_extrapolation(samples, order);
}

struct ConfigPotentials {
  double wtg = 0.0;    ///< +inf when x is one of the points
  double wth_i = 0.0;  ///< +inf when x is another point xi_j
  double A_i = 0.0;
  double error = 0.0;  ///< quadrature error estimate carried by wtg / wth_i
};

/// wtg_{delta,xi}(x), the local regularisation around xi_i at x, and A_i.
/// With c_j = delta_j^{N/(q0+1)} and F = (sum c_j G(., xi_j))^p,
///   wtg(x) = c_i^p [gamma~1 |x-xi_i|^{2-s} - (gamma~1/gamma_N) hat_h(x, xi_i)] + int G(x,y) (F - c_i^p gamma_N^p |y-xi_i|^{-s}) dy,
/// so the regularisation is evaluated through the subtracted volume integral, also on the diagonal.
inline ConfigPotentials config_potentials(const GreensBundle& b, const Configuration& c, const Vec& x, std::size_t i,
                                          const VolumeQuadrature& q = {}) {
  b.require_sub("config_potentials");
  c.validate(b.domain);
  if (i >= c.k()) throw DomainError("configuration index out of range");
  const int N = b.N();
  const double R = b.domain.radius, s = b.s(), g = b.gamma_N, p = b.p();
  const Vec ux = b.domain.to_unit(x);
  if (!(ux.norm() < 1.0)) throw DomainError("evaluation point outside the open ball");
  const double e = N / (b.exp.q0 + 1.0);
  // On the unit ball G gains R^{N-2}; the potentials then scale back by R^{2-s}.
  std::vector<double> cw(c.k());
  for (std::size_t j = 0; j < c.k(); ++j) cw[j] = std::pow(c.deltas[j], e);
  const double scale = std::pow(R, 2.0 - s);

  ConfigPotentials out;
  out.A_i = a_coefficient(b, c, i);
  const double A_unit = out.A_i * std::pow(R, N - 2.0);

  std::vector<Vec> pts;
  for (const Vec& v : c.points) pts.push_back(b.domain.to_unit(v));
  std::ptrdiff_t hit = -1;
  for (std::size_t j = 0; j < pts.size(); ++j)
    if ((pts[j] - ux).norm() == 0.0) hit = static_cast<std::ptrdiff_t>(j);
  if (hit >= 0 && hit != static_cast<std::ptrdiff_t>(i)) {
    out.wtg = out.wth_i = std::numeric_limits<double>::infinity();
    return out;
  }

  std::vector<Vec> all = pts;
  std::vector<std::size_t> centers(c.k());
  for (std::size_t j = 0; j < c.k(); ++j) centers[j] = j;
  std::size_t xk = i;
  if (hit < 0) {
    all.push_back(ux);
    xk = all.size() - 1;
    centers.push_back(xk);
  }
  detail::PointSet S(N, all);
  const double ci = cw[i], gp = std::pow(g, p);
  auto integrand = [&](const detail::BallPoint& y) {
    const double r2 = y.d2[i];
    const double rn = std::pow(r2, 0.5 * (N - 2));
    // sum_j c_j G_j = c_i g r^{2-N} (1 - w)
    double other = 0.0;
    for (std::size_t j = 0; j < c.k(); ++j)
      if (j != i) other += cw[j] * detail::ball_G(N, g, y, S, j);
    const double qi = y.yy * S.PP[i] - 2.0 * y.ydp[i] + 1.0;
    const double inner = std::pow(qi, 0.5 * (2 - N)) - other / (ci * g);
    const double w = rn * inner;
    const double rem = std::pow(ci, p) * gp * std::pow(r2, 0.5 * (N - 2) - 0.5 * s) * inner *
                       detail::power_difference_quotient(p, w);
    return detail::ball_G(N, g, y, S, xk) * rem;
  };
  const QuadResult vol = detail::ball_integral(S, centers, N - s, q, integrand);
  const double hh = hat_h(b, ux, pts[i]);
  const double cp = std::pow(ci, p);
  // wth_i = c_i^p (gamma~1/gamma) hat_h - gamma~2 A_i c_i^{p-1} r^{N-s} - volume
  double wth = cp * b.gamma_tilde_1 / g * hh - vol.value;
  const double r = (ux - pts[i]).norm();
  if (b.gamma_tilde_2 && r > 0.0) wth -= *b.gamma_tilde_2 * A_unit * std::pow(ci, p - 1) * std::pow(r, N - s);
  out.wth_i = scale * wth;
  out.error = scale * vol.error;
  if (hit >= 0) {
    out.wtg = std::numeric_limits<double>::infinity();
  } else {
    double sing = b.gamma_tilde_1 * cp * std::pow(r, 2.0 - s);
    if (b.gamma_tilde_2) sing -= *b.gamma_tilde_2 * A_unit * std::pow(ci, p - 1) * std::pow(r, N - s);
    out.wtg = scale * sing - out.wth_i;
  }
  return out;
}

}  // namespace lane_emden
