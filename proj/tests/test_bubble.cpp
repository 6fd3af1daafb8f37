#include <catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <map>
#include <random>

#include "lane_emden/bubble.hpp"

using namespace lane_emden;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const RadialProfile& cached_profile(int N, double p) {
  static std::map<std::pair<int, double>, RadialProfile> cache;
  auto key = std::make_pair(N, p);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, solve_ground_state(N, p)).first;
  return it->second;
}

// Classical fourth-order Runge-Kutta with fixed steps, used as an independent re-substitution oracle.
std::array<double, 4> rk4_advance(int N, double p, double q, std::array<double, 4> y, double r0, double r1, int n) {
  auto f = [&](double r, const std::array<double, 4>& s) {
    return std::array<double, 4>{s[1], -(N - 1) / r * s[1] - std::pow(s[2], p), s[3],
                                 -(N - 1) / r * s[3] - std::pow(s[0], q)};
  };
  const double h = (r1 - r0) / n;
  double r = r0;
  for (int i = 0; i < n; ++i) {
    auto k1 = f(r, y);
    std::array<double, 4> t;
    for (int j = 0; j < 4; ++j) t[j] = y[j] + 0.5 * h * k1[j];
    auto k2 = f(r + 0.5 * h, t);
    for (int j = 0; j < 4; ++j) t[j] = y[j] + 0.5 * h * k2[j];
    auto k3 = f(r + 0.5 * h, t);
    for (int j = 0; j < 4; ++j) t[j] = y[j] + h * k3[j];
    auto k4 = f(r + h, t);
    for (int j = 0; j < 4; ++j) y[j] += h / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j]);
    r += h;
  }
  return y;
}

double tail_slope(const RadialProfile& prof, bool of_V) {
  // Least-squares slope of log f against log r over the last decade.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < prof.r.size(); ++i) {
    if (prof.r[i] < prof.R_max() / 10.0) continue;
    double x = std::log(prof.r[i]), y = std::log(of_V ? prof.V[i] : prof.U[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("make_exponents examples", "[bubble][exponents]") {
  auto e = make_exponents(4, 3.0, 0.0);
  REQUIRE_THAT(e.q0, WithinAbs(3.0, 1e-14));
  auto f = make_exponents(4, 2.0, 0.0);
  REQUIRE_THAT(f.q0, WithinAbs(5.0, 1e-13));
  REQUIRE_THAT(f.alpha_eps, WithinAbs(2.0 / 3.0, 1e-14));
  REQUIRE_THAT(f.beta_eps, WithinAbs(4.0 / 3.0, 1e-14));
  auto g = make_exponents(4, 3.0, 0.1);
  REQUIRE_THAT(g.q_eps, WithinAbs(4.0 / 1.1 - 1.0, 1e-13));
  REQUIRE(f.regime() == Regime::serrin);
  REQUIRE(make_exponents(4, 2.5, 0.0).regime() == Regime::super);
  REQUIRE(make_exponents(5, 1.6, 0.0).regime() == Regime::sub);
  REQUIRE(make_exponents(4, 2.0 + 5e-10, 0.0).regime() == Regime::serrin);
}

TEST_CASE("make_exponents rejects inadmissible input", "[bubble][exponents]") {
  REQUIRE_THROWS_AS(make_exponents(4, 0.9, 0.0), InvalidExponent);
  REQUIRE_THROWS_AS(make_exponents(4, 3.5, 0.0), InvalidExponent);
  REQUIRE_THROWS_AS(make_exponents(2, 3.0, 0.0), InvalidExponent);
  REQUIRE_THROWS_AS(make_exponents(4, 2.0, -0.1), InvalidExponent);
  REQUIRE_THROWS_AS(make_exponents(4, 2.0, 5.0), InvalidExponent);
}

TEST_CASE("exponent algebra holds on random admissible pairs", "[bubble][exponents][property]") {
  std::mt19937 rng(11);
  for (int t = 0; t < 200; ++t) {
    int N = 4 + static_cast<int>(rng() % 4);
    double lo = 2.0 / (N - 2), hi = (N + 2.0) / (N - 2);
    double p = lo + (hi - lo) * (0.02 + 0.96 * std::uniform_real_distribution<double>(0, 1)(rng));
    double eps = 0.05 * std::uniform_real_distribution<double>(0, 1)(rng);
    auto e = make_exponents(N, p, eps);
    REQUIRE_THAT(1.0 / (p + 1) + 1.0 / (e.q_eps + 1), WithinAbs((N - 2 + eps) / N, 1e-14));
    REQUIRE_THAT(1.0 / (p + 1) + 1.0 / (e.q0 + 1), WithinAbs((N - 2.0) / N, 1e-14));
    REQUIRE_THAT(e.alpha_eps, WithinRel(2 * (p + 1) / (p * e.q_eps - 1), 1e-14));
    REQUIRE_THAT(e.beta_eps, WithinRel(2 * (e.q_eps + 1) / (p * e.q_eps - 1), 1e-14));
    REQUIRE_THAT(e.q0 - e.q_eps, WithinRel(q_gap(e), 1e-9));
    // ((N-2)p-2)(q0+1) = N(p+1)
    REQUIRE_THAT(e.sigma_sub() * (e.q0 + 1), WithinRel(N * (p + 1), 1e-13));
    auto e0 = make_exponents(N, p, 0.0);
    REQUIRE_THAT(e0.alpha_eps, WithinRel(e0.alpha0(), 1e-13));
    REQUIRE_THAT(e0.beta_eps, WithinRel(e0.beta0(), 1e-13));
  }
}

TEST_CASE("scaling relations for small eps", "[bubble][exponents][property]") {
  // The relations hold exactly when beta0 = N/(p+1) < (N-2)p-2, i.e. above the positive
  // root of (N-2)p^2 + (N-4)p - (N+2); below it the second inequality fails.
  for (int N : {4, 5, 6}) {
    double root = (-(N - 4.0) + std::sqrt((N - 4.0) * (N - 4.0) + 4.0 * (N - 2) * (N + 2))) / (2.0 * (N - 2));
    for (double p = 2.0 / (N - 2) + 0.01; p < (N + 2.0) / (N - 2); p += 0.01) {
      if (std::fabs(p - root) < 0.005) continue;
      auto e = make_exponents(N, p, 1e-6);
      REQUIRE(e.scaling_relations_hold() == (p > root));
      REQUIRE(e.sigma_sub() * e.beta_eps > (N - 2) * e.alpha_eps);
      REQUIRE(e.q0 * e.sigma_sub() > N + 2 - 1e-9);
    }
  }
}

TEST_CASE("symmetric point gives U = V", "[bubble][ground_state]") {
  const auto& prof = cached_profile(4, 3.0);
  // Independent scalar shooting for -Delta w = w^3 with w(0)=1 against the closed form.
  auto rhs = [](double r, const double* y, double* dy) {
    dy[0] = y[1];
    dy[1] = -3.0 / r * y[1] - y[0] * y[0] * y[0];
  };
  const double r0 = 1e-6;
  auto w = integrate_ode(rhs, r0, 50.0, {1.0 - r0 * r0 / 8.0, -r0 / 4.0}, OdeOptions{1e-12, 1e-20});
  double diff_uv = 0.0, diff_w = 0.0, diff_talenti = 0.0;
  for (std::size_t i = 0; i < prof.r.size(); ++i) {
    double r = prof.r[i];
    diff_uv = std::max(diff_uv, std::fabs(prof.U[i] - prof.V[i]));
    diff_talenti = std::max(diff_talenti, std::fabs(prof.U[i] - 1.0 / (1.0 + r * r / 8.0)));
    if (r <= 50.0) diff_w = std::max(diff_w, std::fabs(prof.U[i] - w.component(std::max(r, r0), 0)));
  }
  REQUIRE(diff_uv <= 1e-6);
  REQUIRE(diff_w <= 1e-6);
  REQUIRE(diff_talenti <= 1e-6);
  REQUIRE_THAT(prof.s, WithinAbs(1.0, 1e-6));
}

TEST_CASE("ground state is positive, decreasing and solves the ODE", "[bubble][ground_state]") {
  const auto& prof = cached_profile(4, 2.0);
  for (std::size_t i = 1; i < prof.r.size(); ++i) {
    REQUIRE(prof.U[i] > 0.0);
    REQUIRE(prof.V[i] > 0.0);
    REQUIRE(prof.dU[i] < 0.0);
    REQUIRE(prof.dV[i] < 0.0);
  }
  REQUIRE_THAT(prof.U.front(), WithinAbs(1.0, 1e-10));
  // Re-substitute node states into an independent RK4 at twice the node density.
  const double q0 = prof.q0;
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < prof.r.size(); i += 7) {
    std::array<double, 4> y{prof.U[i], prof.dU[i], prof.V[i], prof.dV[i]};
    auto z = rk4_advance(4, 2.0, q0, y, prof.r[i], prof.r[i + 1], 2);
    const double h = prof.r[i + 1] - prof.r[i];
    // Defect of the stored next state, per unit step and scaled by the local size of the terms.
    const double scaleU = std::fabs(prof.dU[i]) / prof.r[i] + std::pow(prof.V[i], 2.0);
    const double scaleV = std::fabs(prof.dV[i]) / prof.r[i] + std::pow(prof.U[i], q0);
    worst = std::max(worst, std::fabs(z[1] - prof.dU[i + 1]) / (h * scaleU));
    worst = std::max(worst, std::fabs(z[3] - prof.dV[i + 1]) / (h * scaleV));
  }
  REQUIRE(worst <= 1e-7);
}

TEST_CASE("tail slopes follow the decay table", "[bubble][ground_state]") {
  const auto& p18 = cached_profile(5, 1.8);
  double sv = tail_slope(p18, true);
  REQUIRE(sv >= -3.03);
  REQUIRE(sv <= -2.97);
  REQUIRE_THAT(tail_slope(p18, false), WithinRel(-3.0, 0.01));
  REQUIRE_THAT(tail_slope(cached_profile(5, 1.4), false), WithinRel(-(3 * 1.4 - 2), 0.01));
  REQUIRE_THAT(tail_slope(cached_profile(4, 2.5), false), WithinRel(-2.0, 0.01));
}

TEST_CASE("decay constants satisfy the regime relations", "[bubble][decay]") {
  {
    const auto& prof = cached_profile(5, 1.6);
    const double a = prof.a(), b = prof.b(), p = 1.6;
    REQUIRE_THAT(std::pow(b, p), WithinRel(a * (3 * p - 2) * (5 - 3 * p), 0.01));
  }
  {
    const auto& prof = cached_profile(4, 2.0);
    REQUIRE_THAT(std::pow(prof.b(), 2.0), WithinRel(2.0 * prof.a(), 0.01));
  }
  {
    const auto& prof = cached_profile(4, 2.5);
    auto c = compute_constants(prof);
    REQUIRE_THAT(prof.a() * c.A1, WithinRel(prof.b() * c.require_A2(), 0.01));
  }
  RadialProfile shortp = cached_profile(4, 2.5);
  shortp.r.back() = 500.0;
  REQUIRE_THROWS_AS(fit_decay_constants(shortp), TailNotResolved);
}

TEST_CASE("bubble constants satisfy their integral identities", "[bubble][constants]") {
  for (auto [N, p] : {std::pair{4, 1.8}, std::pair{4, 2.0}, std::pair{4, 2.5}, std::pair{5, 1.6}}) {
    const auto& prof = cached_profile(N, p);
    auto c = compute_constants(prof);
    const double q0 = prof.q0;
    const double gammaN = 1.0 / ((N - 2) * sphere_area(N));
    REQUIRE(c.A1 > 0.0);
    REQUIRE(c.A3 > 0.0);
    REQUIRE(c.S > 0.0);
    REQUIRE_THAT(c.S_alt, WithinRel(c.S, 0.005));
    REQUIRE_THAT(c.A3, WithinRel(N / ((q0 + 1) * (q0 + 1)) * c.int_U_q0p1, 0.005));
    REQUIRE(std::fabs(c.psi0_moment) <= 0.005 * c.A1);
    REQUIRE_THAT(c.A1_identity, WithinRel(c.A1, 0.01));
    REQUIRE_THAT(prof.b(), WithinRel(gammaN * c.A1, 0.01));
    if (prof.regime == Regime::super) {
      REQUIRE(*c.A2 > 0.0);
      REQUIRE_THAT(prof.a(), WithinRel(gammaN * *c.A2, 0.01));
    } else {
      REQUIRE_THROWS_AS(c.require_A2(), DivergentIntegral);
    }
  }
}

TEST_CASE("constants are stable under a tighter shooting tolerance", "[bubble][constants][property]") {
  const auto& base = cached_profile(4, 2.5);
  BubbleOptions o;
  o.shoot_tol = 0.5 * base.options.shoot_tol;
  o.ode_rtol = 0.5 * base.options.ode_rtol;
  auto tight = solve_ground_state(4, 2.5, o);
  auto c1 = compute_constants(base), c2 = compute_constants(tight);
  REQUIRE_THAT(tight.a(), WithinRel(base.a(), 0.002));
  REQUIRE_THAT(tight.b(), WithinRel(base.b(), 0.002));
  REQUIRE_THAT(c2.A1, WithinRel(c1.A1, 0.002));
  REQUIRE_THAT(c2.A3, WithinRel(c1.A3, 0.002));
  REQUIRE_THAT(c2.S, WithinRel(c1.S, 0.002));
}

TEST_CASE("global Pohozaev boundary terms vanish at R_max", "[bubble][constants]") {
  const auto& prof = cached_profile(4, 2.5);
  auto c = compute_constants(prof);
  const int N = 4;
  const double p = prof.p, q0 = prof.q0, R = prof.R_max();
  const std::size_t k = prof.r.size() - 1;
  const double area = sphere_area(N) * std::pow(R, N - 1);
  const double boundary = std::fabs(R * area * prof.dU[k] * prof.dV[k]) +
                          R * area * (std::pow(prof.V[k], p + 1) / (p + 1) + std::pow(prof.U[k], q0 + 1) / (q0 + 1)) +
                          N * area * std::fabs(prof.V[k] * prof.dU[k] / (p + 1) + prof.U[k] * prof.dV[k] / (q0 + 1));
  const double bulk = c.int_V_pp1 / (p + 1) + c.int_U_q0p1 / (q0 + 1);
  // The boundary flux decays like R^{-(N-2)} relative to the bulk for this pair.
  REQUIRE(boundary / bulk <= 1e-4 * std::max(1.0, R * R * 1e-8 * 1e4));
}

TEST_CASE("eval_bubble normalisation and scaling", "[bubble][eval]") {
  const auto& prof = cached_profile(4, 2.0);
  std::array<double, 4> zero{0, 0, 0, 0};
  auto [u0, v0] = eval_bubble(prof, 1.0, zero, zero);
  REQUIRE_THAT(u0, WithinAbs(1.0, 1e-10));
  REQUIRE_THAT(v0, WithinAbs(prof.s, 1e-10));
  const double mu = 0.37;
  for (double y : {0.0, 0.3, 2.0, 17.0, 900.0, 2e4}) {
    std::array<double, 4> x{mu * y, 0, 0, 0};
    auto [u, v] = eval_bubble(prof, mu, zero, x);
    auto ref = prof.at(y);
    REQUIRE_THAT(u * std::pow(mu, 4.0 / (prof.q0 + 1)), WithinRel(ref.U, 1e-14));
    REQUIRE_THAT(v * std::pow(mu, 4.0 / (prof.p + 1)), WithinRel(ref.V, 1e-14));
  }
  // Interpolant agrees with a direct re-integration between knots.
  const std::size_t j = prof.r.size() / 2;
  const double rm = 0.5 * (prof.r[j] + prof.r[j + 1]);
  std::array<double, 4> y{prof.U[j], prof.dU[j], prof.V[j], prof.dV[j]};
  auto z = rk4_advance(4, 2.0, prof.q0, y, prof.r[j], rm, 64);
  REQUIRE_THAT(prof.at(rm).U, WithinRel(z[0], 1e-11));
  REQUIRE_THAT(prof.at(rm).dV, WithinRel(z[3], 1e-9));
  REQUIRE_THROWS_AS(eval_bubble(prof, 0.0, zero, zero), DomainError);
}

TEST_CASE("energy of the scaled bubble is independent of mu", "[bubble][eval]") {
  const auto& prof = cached_profile(4, 2.5);
  auto c = compute_constants(prof);
  std::array<double, 4> zero{0, 0, 0, 0};
  for (double mu : {0.1, 1.0, 3.0}) {
    auto grid = Grid1D::composite(geometric_breaks(1e-6 * mu, 1e4 * mu, 200), 20);
    double s = grid.integrate([&](double r) {
      std::array<double, 4> x{r, 0, 0, 0};
      return std::pow(eval_bubble(prof, mu, zero, x).first, prof.q0 + 1) * r * r * r;
    });
    REQUIRE_THAT(sphere_area(4) * s, WithinRel(c.int_U_q0p1, 1e-6));
  }
}

TEST_CASE("linearised kernels", "[bubble][kernels]") {
  const auto& prof = cached_profile(4, 2.5);
  const double mu = 0.8, p = prof.p, q0 = prof.q0;
  std::array<double, 4> xi{0.1, -0.2, 0.0, 0.05};
  std::array<double, 4> on_x2{xi[0], xi[1] + 0.7, xi[2], xi[3]};
  REQUIRE_THAT(eval_kernels(prof, mu, xi, 1, on_x2).first, WithinAbs(0.0, 1e-15));
  std::array<double, 4> zero{0, 0, 0, 0};
  REQUIRE_THAT(eval_kernels(prof, 1.0, zero, 0, zero).first, WithinAbs(4.0 / (q0 + 1), 1e-12));

  // Finite-difference Laplacian: Delta Psi + p V^{p-1} Phi = 0 and Delta Phi + q0 U^{q0-1} Psi = 0.
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    std::array<double, 4> x{xi[0] + u(rng), xi[1] + u(rng), xi[2] + u(rng), xi[3] + u(rng)};
    for (std::size_t l = 0; l <= 4; ++l) {
      const double h = 2e-3;
      double lapPsi = 0.0, lapPhi = 0.0;
      auto k0 = eval_kernels(prof, mu, xi, l, x);
      for (std::size_t d = 0; d < 4; ++d) {
        double acc[2] = {0, 0};
        const double w[5] = {-1.0 / 12, 4.0 / 3, -5.0 / 2, 4.0 / 3, -1.0 / 12};
        for (int m = -2; m <= 2; ++m) {
          auto xx = x;
          xx[d] += m * h;
          auto k = eval_kernels(prof, mu, xi, l, xx);
          acc[0] += w[m + 2] * k.first;
          acc[1] += w[m + 2] * k.second;
        }
        lapPsi += acc[0] / (h * h);
        lapPhi += acc[1] / (h * h);
      }
      auto [U, V] = eval_bubble(prof, mu, xi, x);
      const double r1 = lapPsi + p * std::pow(V, p - 1) * k0.second;
      const double r2 = lapPhi + q0 * std::pow(U, q0 - 1) * k0.first;
      const double s1 = std::fabs(lapPsi) + std::fabs(p * std::pow(V, p - 1) * k0.second) + 1e-3;
      const double s2 = std::fabs(lapPhi) + std::fabs(q0 * std::pow(U, q0 - 1) * k0.first) + 1e-3;
      worst = std::max({worst, std::fabs(r1) / s1, std::fabs(r2) / s2});
    }
  }
  REQUIRE(worst <= 1e-5);
}
