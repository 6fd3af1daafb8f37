#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "lane_emden/greens.hpp"

using namespace lane_emden;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Vec random_interior(std::mt19937& rng, int N, double rmax) {
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec v(N);
  for (int i = 0; i < N; ++i) v[i] = n01(rng);
  return v / v.norm() * rmax * std::pow(u(rng), 1.0 / N);
}

Vec axis(int N, std::initializer_list<double> head) {
  Vec v = Vec::Zero(N);
  int i = 0;
  for (double h : head) v[i++] = h;
  return v;
}

// Five-point finite-difference Laplacian.
template <class F>
double fd_laplacian(F&& f, const Vec& x, double h) {
  double lap = 0.0;
  const double w[5] = {-1.0 / 12, 4.0 / 3, -5.0 / 2, 4.0 / 3, -1.0 / 12};
  for (int d = 0; d < x.size(); ++d)
    for (int m = -2; m <= 2; ++m) {
      Vec y = x;
      y[d] += m * h;
      lap += w[m + 2] * f(y);
    }
  return lap / (h * h);
}

}  // namespace

TEST_CASE("bundle constants", "[greens]") {
  for (auto [N, p] : {std::pair{4, 1.4}, std::pair{4, 1.7}, std::pair{5, 1.2}, std::pair{5, 1.6}}) {
    auto b = make_greens_bundle(make_exponents(N, p, 0.0));
    const double s = (N - 2) * p;
    REQUIRE_THAT(b.gamma_N * (N - 2) * sphere_area(N), WithinRel(1.0, 1e-15));
    REQUIRE_THAT(b.gamma_tilde_1 * (s - 2) * (N - s), WithinRel(std::pow(b.gamma_N, p), 1e-14));
    REQUIRE(b.gamma_tilde_2.has_value() == (p >= (N - 1.0) / (N - 2)));
    if (b.gamma_tilde_2)
      REQUIRE_THAT(*b.gamma_tilde_2 * (s - 2 * (N - 1)) * (N - s), WithinRel(p * std::pow(b.gamma_N, p - 1), 1e-14));
  }
  REQUIRE_THAT(make_greens_bundle(make_exponents(4, 2.5, 0.0)).gamma_N, WithinRel(1.0 / (4 * kPi * kPi), 1e-15));
}

TEST_CASE("Green function of the ball", "[greens]") {
  std::mt19937 rng(3);
  for (int N : {4, 5, 6}) {
    auto b = make_greens_bundle(make_exponents(N, 2.0 / (N - 2) + 0.5, 0.0));
    for (int t = 0; t < 100; ++t) {
      Vec x = random_interior(rng, N, 0.99), y = random_interior(rng, N, 0.99);
      const double g = green(b, x, y);
      REQUIRE_THAT(g, WithinRel(green(b, y, x), 1e-13));
      REQUIRE(g > 0.0);
      REQUIRE(g < b.gamma_N * std::pow((x - y).norm(), 2 - N));
      REQUIRE_THAT(g + green_regular(b, x, y), WithinRel(b.gamma_N * std::pow((x - y).norm(), 2 - N), 1e-13));
    }
    Vec xi = axis(N, {0.2, -0.1});
    Vec x = axis(N, {1.0 - 1e-8});
    REQUIRE(green(b, x, xi) < 1e-5);
    REQUIRE_THROWS_AS(green(b, xi, xi), OnDiagonal);
  }
}

TEST_CASE("Green gradient and Robin function", "[greens]") {
  const int N = 5;
  auto b = make_greens_bundle(make_exponents(N, 1.6, 0.0));
  std::mt19937 rng(9);
  for (int t = 0; t < 20; ++t) {
    Vec x = random_interior(rng, N, 0.8), y = random_interior(rng, N, 0.8);
    Vec g = grad_green(b, x, y);
    for (int d = 0; d < N; ++d) {
      Vec e = Vec::Zero(N);
      e[d] = 1e-6;
      const double fd = (green(b, x + e, y) - green(b, x - e, y)) / 2e-6;
      REQUIRE_THAT(g[d], WithinAbs(fd, 1e-6 * (1.0 + std::fabs(fd))));
    }
    Vec gr = grad_robin(b, x);
    for (int d = 0; d < N; ++d) {
      Vec e = Vec::Zero(N);
      e[d] = 1e-6;
      const double fd = (robin(b, x + e) - robin(b, x - e)) / 2e-6;
      REQUIRE_THAT(gr[d], WithinAbs(fd, 1e-6 * (1.0 + std::fabs(fd))));
    }
  }
  const Vec zero = Vec::Zero(N);
  REQUIRE(robin(b, zero) == b.gamma_N);
  const Vec near = axis(N, {0.99});
  REQUIRE_THAT(robin(b, near) / robin(b, zero), WithinRel(std::pow(1 - 0.99 * 0.99, 2 - N), 1e-13));
  Vec fdg(N);
  for (int d = 0; d < N; ++d) {
    Vec e = Vec::Zero(N);
    e[d] = 1e-5;
    fdg[d] = (robin(b, e) - robin(b, -e)) / 2e-5;
  }
  REQUIRE(fdg.norm() <= 1e-10);
  // Convex along radii.
  for (double r = 0.0; r < 0.9; r += 0.1) {
    const double h = 1e-3;
    REQUIRE(robin(b, axis(N, {r + h})) - 2 * robin(b, axis(N, {r})) + robin(b, axis(N, {r - h})) > 0.0);
  }
}

TEST_CASE("scaled and shifted ball", "[greens]") {
  const int N = 4;
  BallDomain d{N, 2.0, axis(N, {0.5, 0.5})};
  auto b = make_greens_bundle(make_exponents(N, 1.4, 0.0), d);
  auto u = make_greens_bundle(make_exponents(N, 1.4, 0.0));
  Vec x = axis(N, {0.9, 0.1}), y = axis(N, {0.2, 1.1});
  Vec ux = d.to_unit(x), uy = d.to_unit(y);
  REQUIRE_THAT(green(b, x, y), WithinRel(0.25 * green(u, ux, uy), 1e-13));
  REQUIRE_THAT(robin(b, x), WithinRel(0.25 * robin(u, ux), 1e-13));
  REQUIRE_THAT(wth_theta(b, d.origin()), WithinRel(std::pow(2.0, 2 - 2 * 1.4) * wth_theta(u, Vec::Zero(N)), 1e-12));
}

TEST_CASE("radial potential of G^p", "[greens][wtg]") {
  for (auto [N, p] : {std::pair{4, 1.4}, std::pair{4, 1.7}, std::pair{5, 1.2}, std::pair{5, 1.6}}) {
    auto b = make_greens_bundle(make_exponents(N, p, 0.0));
    const double s = (N - 2) * p;
    REQUIRE_THAT(wtg_center(b, 1.0), WithinAbs(0.0, 1e-14));
    for (double r = 0.1; r <= 0.9 + 1e-12; r += 0.1) {
      const double h = 3e-3 * std::min(r, 1.0 - r);
      const double w0 = wtg_center(b, r), wp = wtg_center(b, r + h), wm = wtg_center(b, r - h);
      const double w2p = wtg_center(b, r + 2 * h), w2m = wtg_center(b, r - 2 * h);
      const double d2 = (-w2p + 16 * wp - 30 * w0 + 16 * wm - w2m) / (12 * h * h);
      const double d1 = (-w2p + 8 * wp - 8 * wm + w2m) / (12 * h);
      const double gp = std::pow(b.gamma_N * (std::pow(r, 2 - N) - 1.0), p);
      REQUIRE_THAT(-(d2 + (N - 1) / r * d1), WithinRel(gp, 1e-6));
    }
    // Leading singularity; on the second branch the r^{N-s} term is part of the singular expansion.
    auto sing = [&](double r) {
      double v = b.gamma_tilde_1 * std::pow(r, 2 - s);
      if (b.gamma_tilde_2) v -= *b.gamma_tilde_2 * b.gamma_N * std::pow(r, N - s);
      return v;
    };
    const double d3 = wtg_center(b, 1e-3) - sing(1e-3);
    const double d4 = wtg_center(b, 1e-4) - sing(1e-4);
    REQUIRE_THAT(d4, WithinRel(d3, 0.05));
  }
  REQUIRE_THROWS_AS(wtg_center(make_greens_bundle(make_exponents(4, 2.0, 0.0)), 0.5), WrongRegime);
}

TEST_CASE("regular part theta", "[greens][theta]") {
  for (auto [N, p] : {std::pair{4, 1.4}, std::pair{4, 1.7}, std::pair{5, 1.2}, std::pair{5, 1.6}}) {
    auto b = make_greens_bundle(make_exponents(N, p, 0.0));
    const Vec zero = Vec::Zero(N);
    const double th0 = wth_theta(b, zero);
    auto e1 = wth_theta_center_extrapolated(b);
    auto e2 = wth_theta_center_extrapolated(b, {5e-3, 2.5e-3, 1.25e-3});
    REQUIRE_THAT(e1.limit, WithinRel(th0, 1e-6));
    REQUIRE_THAT(e2.limit, WithinRel(e1.limit, 0.01));
    REQUIRE(th0 > 0.0);
    // Volume quadrature off the centre joins the radial value continuously.
    REQUIRE_THAT(wth_theta(b, axis(N, {1e-3})), WithinRel(th0, 1e-5));
    Vec xi = axis(N, {0.3, 0.1});
    const double t = wth_theta(b, xi);
    REQUIRE(t > 0.0);
    REQUIRE_THAT(wth_theta(b, Vec(-xi)), WithinAbs(t, 1e-8 * t));
    REQUIRE(wth_theta(b, axis(N, {0.05})) > 0.0);
  }
  REQUIRE_THROWS_AS(wth_theta(make_greens_bundle(make_exponents(4, 2.5, 0.0)), Vec::Zero(4)), WrongRegime);
}

TEST_CASE("harmonic extensions", "[greens][harmonic]") {
  for (auto [N, p] : {std::pair{4, 1.7}, std::pair{5, 1.6}}) {
    auto b = make_greens_bundle(make_exponents(N, p, 0.0));
    const Vec zero = Vec::Zero(N);
    for (Vec x : {zero, axis(N, {0.5}), axis(N, {0.3, -0.6}), axis(N, {0.0, 0.0, 0.9})}) {
      REQUIRE_THAT(hat_h(b, x, zero), WithinAbs(b.gamma_N, 1e-8 * b.gamma_N));
      REQUIRE_THAT(bar_h(b, x, zero), WithinAbs(1.0, 1e-8));
    }
    const Vec xi = axis(N, {0.2, 0.3});
    // Harmonicity by finite differences.
    for (Vec x : {axis(N, {0.1, -0.2}), axis(N, {-0.4, 0.1, 0.2})}) {
      const double sh = std::fabs(hat_h(b, x, xi)), sb = std::fabs(bar_h(b, x, xi));
      REQUIRE(std::fabs(fd_laplacian([&](const Vec& y) { return hat_h(b, y, xi); }, x, 1e-2)) <= 1e-5 * sh);
      REQUIRE(std::fabs(fd_laplacian([&](const Vec& y) { return bar_h(b, y, xi); }, x, 1e-2)) <= 1e-5 * sb);
      REQUIRE(std::fabs(fd_laplacian([&](const Vec& y) { return green_regular(b, y, xi); }, x, 1e-2)) <=
              1e-5 * green_regular(b, x, xi));
    }
    // Mean value over an interior sphere about the centre, by a Monte Carlo-free symmetric rule.
    {
      const double rho = 0.5;
      double avg = 0.0;
      int n = 0;
      for (int d = 0; d < N; ++d)
        for (double sgn : {-1.0, 1.0}) {
          Vec x = Vec::Zero(N);
          x[d] = sgn * rho;
          avg += hat_h(b, x, xi);
          ++n;
        }
      // The 2N-point cubature is exact for harmonic polynomials up to degree 3; tolerance covers the rest.
      REQUIRE_THAT(avg / n, WithinRel(hat_h(b, zero, xi), 2e-3));
    }
    // hat_g vanishes on the boundary.
    const Vec xb = axis(N, {0.0, 1.0 - 1e-6});
    const double gb = b.gamma_N * std::pow((xb - xi).norm(), 2 - (N - 2) * p);
    REQUIRE(std::fabs(hat_g(b, xb, xi)) <= 1e-4 * gb);
  }
  auto serrin = make_greens_bundle(make_exponents(4, 2.0, 0.0));
  REQUIRE_THAT(hat_h(serrin, axis(4, {0.4}), Vec::Zero(4)), WithinAbs(0.0, 1e-12));
  REQUIRE_THROWS_AS(hat_h(make_greens_bundle(make_exponents(4, 2.5, 0.0)), Vec::Zero(4), Vec::Zero(4)), WrongRegime);
  REQUIRE_THROWS_AS(bar_h(make_greens_bundle(make_exponents(4, 1.4, 0.0)), Vec::Zero(4), Vec::Zero(4)), WrongRegime);
}

TEST_CASE("configuration potentials", "[greens][config]") {
  for (auto [N, p] : {std::pair{4, 1.4}, std::pair{5, 1.6}}) {
    auto b = make_greens_bundle(make_exponents(N, p, 0.0));
    const double q0 = b.exp.q0, e = N / (q0 + 1.0);
    const Vec zero = Vec::Zero(N);
    Configuration one{{1.0}, {zero}};
    auto c0 = config_potentials(b, one, zero, 0);
    REQUIRE_THAT(c0.wth_i, WithinRel(wth_theta(b, zero), 1e-6));
    REQUIRE(std::isinf(c0.wtg));
    Configuration od{{1.7}, {axis(N, {0.2, 0.3})}};
    REQUIRE(config_potentials(b, od, zero, 0).A_i == std::pow(1.7, e) * robin(b, od.points[0]));
    // k=1 off the pole agrees with the radial potential.
    const Vec x = axis(N, {0.4, 0.2});
    REQUIRE_THAT(config_potentials(b, one, x, 0).wtg, WithinRel(wtg_center(b, x.norm()), 1e-5));
    // Homogeneity in delta.
    Configuration two{{1.0, 0.7}, {axis(N, {0.4, 0.2}), axis(N, {-0.3, 0.0, 0.25})}};
    Configuration twos{{2.0, 1.4}, two.points};
    const Vec w = axis(N, {0.0, -0.5});
    auto a = config_potentials(b, two, w, 1), as = config_potentials(b, twos, w, 1);
    REQUIRE_THAT(as.wtg, WithinRel(std::pow(2.0, N * p / (q0 + 1)) * a.wtg, 1e-12));
    // The regularisation is continuous at its own pole.
    auto diag = config_potentials(b, two, two.points[0], 0);
    Vec near = two.points[0];
    near[0] += 1e-4;
    REQUIRE_THAT(config_potentials(b, two, near, 0).wth_i, WithinRel(diag.wth_i, 1e-3));
    REQUIRE(diag.error <= 0.02 * std::fabs(diag.wth_i));
  }
  auto super = make_greens_bundle(make_exponents(4, 2.5, 0.0));
  Configuration c{{1.0}, {Vec::Zero(4)}};
  REQUIRE_THROWS_AS(config_potentials(super, c, Vec::Zero(4), 0), WrongRegime);
}
