#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "lane_emden/bvp.hpp"
#include "lane_emden/io.hpp"

namespace lane_emden::acceptance {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool pass = false;
  Json detail = Json::object();
};

/// A regime sweep with everything the rate and profile criteria need.
struct RegimeSweep {
  int N = 0;
  double p = 0.0;
  RadialProfile prof;
  ReducedEnergy re;
  CriticalPointReport crit;
  RateRecord rates;
  std::vector<BvpSolution> sweep;
  double seconds = 0.0;  ///< wall time of the sweep itself, not part of any JSON
};

struct SweepPlan {
  double eps_max = 1e-1;
  double eps_min = 1e-5;
  int points = 12;
};

inline RegimeSweep run_regime_sweep(int N, double p, const SweepPlan& plan = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  RegimeSweep s;
  s.N = N;
  s.p = p;
  s.prof = solve_ground_state(N, p);
  s.re = make_reduced_energy(s.prof, compute_constants(s.prof));
  Configuration start{{1.0}, {Vec::Zero(N)}};
  start.points[0][0] = 0.05;
  s.crit = find_critical(s.re, start);
  s.rates = predicted_rates(s.re, s.crit);
  s.sweep = continuation_sweep(N, p, log_schedule(plan.eps_max, plan.eps_min, plan.points), s.prof);
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return s;
}

inline std::string sweep_label(const RegimeSweep& s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s N=%d p=%.6g", regime_name(s.re.regime), s.N, s.p);
  return buf;
}

// ---------------------------------------------------------------------------
// 1-3: bubble and Green-function identities
// ---------------------------------------------------------------------------

/// Three p per regime for N = 4 and N = 5; the Serrin regime has the single exponent N/(N-2).
inline std::vector<std::pair<int, double>> identity_pairs() {
  return {{4, 1.6}, {4, 1.7}, {4, 1.8}, {4, 2.0}, {4, 2.2}, {4, 2.5}, {4, 2.8},
          {5, 1.2}, {5, 1.4}, {5, 1.6}, {5, 5.0 / 3.0}, {5, 1.8}, {5, 2.0}, {5, 2.2}};
}

inline CriterionResult bubble_identities() {
  CriterionResult r{1, "bubble identities", true, {}};
  Json rows = Json::array();
  for (auto [N, p] : identity_pairs()) {
    const RadialProfile prof = solve_ground_state(N, p);
    const BubbleConstants K = compute_constants(prof);
    const double a = prof.a(), b = prof.b(), q0 = prof.q0;
    Json row{{"N", N}, {"p", p}, {"regime", regime_name(prof.regime)}};
    bool ok = true;
    switch (prof.regime) {
      case Regime::sub: {
        const double rel = std::fabs(std::pow(b, p) / (a * ((N - 2) * p - 2) * (N - (N - 2) * p)) - 1.0);
        row["decay_relation_rel"] = rel;
        ok = ok && rel <= 0.01;
        break;
      }
      case Regime::serrin: {
        const double rel = std::fabs(std::pow(b, p) / ((N - 2) * a) - 1.0);
        row["decay_relation_rel"] = rel;
        ok = ok && rel <= 0.01;
        break;
      }
      case Regime::super: {
        const double rel = std::fabs(a * K.A1 / (b * K.require_A2()) - 1.0);
        row["decay_relation_rel"] = rel;
        ok = ok && rel <= 0.01;
        break;
      }
    }
    const double s_rel = std::fabs(K.S_alt / K.S - 1.0);
    const double a3_rel = std::fabs(K.A3 / (N / ((q0 + 1) * (q0 + 1)) * K.int_U_q0p1) - 1.0);
    const double psi0 = std::fabs(K.psi0_moment) / K.A1;
    row["S_rel"] = s_rel;
    row["A3_rel"] = a3_rel;
    row["psi0_over_A1"] = psi0;
    ok = ok && s_rel <= 0.005 && a3_rel <= 0.005 && psi0 <= 0.005;
    row["pass"] = ok;
    r.pass = r.pass && ok;
    rows.push_back(row);
  }
  r.detail["cases"] = rows;
  return r;
}

inline CriterionResult symmetric_point() {
  CriterionResult r{2, "symmetric-point reduction", false, {}};
  const int N = 4;
  const double p = 3.0;
  const RadialProfile prof = solve_ground_state(N, p);
  // Independent scalar shot for -Delta w = w^p, w(0) = 1.
  const double r0 = 1e-6, r_end = 50.0;
  OdeRhs f = [p](double rr, const double* y, double* dy) {
    dy[0] = y[1];
    dy[1] = -(N - 1) / rr * y[1] - std::pow(std::max(y[0], 0.0), p);
  };
  OdeOptions o;
  o.rtol = 1e-12;
  o.atol = 1e-20;
  const Trajectory w = integrate_ode(f, r0, r_end, State{1.0 - r0 * r0 / (2.0 * N), -r0 / N}, o);
  double uv = 0.0, uw = 0.0;
  for (std::size_t i = 0; i < prof.r.size(); ++i) {
    uv = std::max(uv, std::fabs(prof.U[i] - prof.V[i]));
    if (prof.r[i] <= r_end) {
      const double wi = w.component(std::max(prof.r[i], r0), 0);
      uw = std::max({uw, std::fabs(prof.U[i] - wi), std::fabs(prof.V[i] - wi)});
    }
  }
  r.detail = Json{{"N", N}, {"p", p}, {"sup_U_minus_V", uv}, {"sup_against_scalar", uw}};
  r.pass = uv <= 1e-6 && uw <= 1e-6;
  return r;
}

inline CriterionResult greens_trivial_values() {
  CriterionResult r{3, "Green-function trivial values", true, {}};
  Json rows = Json::array();
  for (auto [N, p] : std::vector<std::pair<int, double>>{{4, 1.7}, {5, 1.6}, {4, 2.0}, {5, 5.0 / 3.0}}) {
    const GreensBundle b = make_greens_bundle(make_exponents(N, p, 0.0));
    const Vec zero = Vec::Zero(N);
    const double tau_err = std::fabs(robin(b, zero) - b.gamma_N) / b.gamma_N;
    const double hat_target = b.sub() ? b.gamma_N : 0.0;
    double hat_err = 0.0, bar_err = 0.0;
    for (double t : {0.0, 0.3, 0.6, 0.9}) {
      Vec x = Vec::Zero(N);
      x[0] = t;
      if (N > 2) x[1] = -0.5 * t;
      if (x.norm() >= 1.0) x *= 0.95 / x.norm();
      hat_err = std::max(hat_err, std::fabs(hat_h(b, x, zero) - hat_target) / b.gamma_N);
      if (b.gamma_tilde_2) bar_err = std::max(bar_err, std::fabs(bar_h(b, x, zero) - 1.0));
    }
    const bool ok = tau_err <= 1e-12 && hat_err <= 1e-8 && bar_err <= 1e-8;
    rows.push_back(Json{{"N", N}, {"p", p}, {"regime", regime_name(b.exp.regime())}, {"tau0_rel", tau_err},
                        {"hat_h_err", hat_err}, {"bar_h_checked", b.gamma_tilde_2.has_value()}, {"bar_h_err", bar_err},
                        {"pass", ok}});
    r.pass = r.pass && ok;
  }
  r.detail["cases"] = rows;
  return r;
}

// ---------------------------------------------------------------------------
// 4-5: reduced energy
// ---------------------------------------------------------------------------

/// Admissible random configuration with k points, from a fixed-seed generator.
inline Configuration random_configuration(std::mt19937_64& rng, int N, std::size_t k) {
  auto unit = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  for (;;) {
    Configuration c;
    for (std::size_t i = 0; i < k; ++i) {
      c.deltas.push_back(0.3 + 1.7 * unit());
      Vec x(N);
      for (int m = 0; m < N; ++m) x[m] = unit() - 0.5;
      if (x.norm() > 0.8) x *= 0.8 / x.norm();
      c.points.push_back(x);
    }
    bool separated = true;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < i; ++j) separated = separated && (c.points[i] - c.points[j]).norm() > 0.2;
    if (separated) return c;
  }
}

inline CriterionResult reduced_k1_oracle() {
  CriterionResult r{4, "reduced-energy k=1 oracle", true, {}};
  Json rows = Json::array();
  for (auto [N, p] : std::vector<std::pair<int, double>>{{4, 2.5}, {4, 2.2}, {5, 2.0}}) {
    const RadialProfile prof = solve_ground_state(N, p);
    const ReducedEnergy re = make_reduced_energy(prof, compute_constants(prof));
    const double d_closed = std::pow(re.C0 / ((N - 2) * robin(re.bundle, Vec::Zero(N))), 1.0 / (N - 2));
    Configuration start{{0.7 * d_closed}, {Vec::Zero(N)}};
    start.points[0][0] = 0.1;
    const CriticalPointReport c = find_critical(re, start);
    const double d_err = std::fabs(c.config.deltas[0] / d_closed - 1.0);
    const double x_err = c.config.points[0].norm();
    const bool ok = c.converged && d_err <= 1e-6 && x_err <= 1e-6;
    rows.push_back(Json{{"N", N}, {"p", p}, {"d_closed", d_closed}, {"d_star", c.config.deltas[0]},
                        {"d_rel_err", d_err}, {"x_norm", x_err}, {"pass", ok}});
    r.pass = r.pass && ok;
  }
  r.detail["critical_points"] = rows;

  const RadialProfile prof = solve_ground_state(4, 2.5);
  const ReducedEnergy re = make_reduced_energy(prof, compute_constants(prof));
  std::mt19937_64 rng(20240611);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Configuration c = random_configuration(rng, 4, 1 + trial % 3);
    const Eigen::VectorXd ga = grad_upsilon(re, c), gf = grad_upsilon_fd(re, c, 1e-5);
    worst = std::max(worst, (ga - gf).norm() / ga.norm());
  }
  r.detail["gradient_configs"] = 20;
  r.detail["gradient_worst_rel"] = worst;
  r.pass = r.pass && worst <= 1e-6;
  return r;
}

inline CriterionResult lambert_schedule() {
  CriterionResult r{5, "Lambert schedule", false, {}};
  const int N = 4;
  const RadialProfile prof = solve_ground_state(N, 2.0);
  const ReducedEnergy re = make_reduced_energy(prof, compute_constants(prof));
  double worst = 0.0;
  const std::vector<double> eps = log_schedule(1e-2, 1e-8, 25);
  for (double e : eps) {
    const double mu = mu_schedule(re, e, 1.0);
    worst = std::max(worst, std::fabs(std::pow(mu, N - 2) * std::log(mu) + e) / e);
  }
  r.detail = Json{{"N", N}, {"p", 2.0}, {"points", eps.size()}, {"worst_rel_residual", worst}};
  r.pass = worst <= 1e-10;
  return r;
}

// ---------------------------------------------------------------------------
// 6-11: radial solutions
// ---------------------------------------------------------------------------

inline CriterionResult pohozaev(const std::vector<const RegimeSweep*>& sweeps) {
  CriterionResult r{6, "Pohozaev identity", true, {}};
  Json rows = Json::array();
  for (const RegimeSweep* s : sweeps) {
    double worst = 0.0, weakest = INFINITY;
    for (const BvpSolution& sol : s->sweep) {
      worst = std::max(worst, pohozaev_residual(sol, 0.5));
      weakest = std::min(weakest, pohozaev_residual(sol, 0.5, 1.01));
    }
    const bool ok = worst <= 1e-6 && weakest >= 1e-3;
    rows.push_back(Json{{"sweep", sweep_label(*s)}, {"max_residual", worst}, {"min_perturbed_residual", weakest},
                        {"solutions_pass", worst <= 1e-6}, {"perturbation_pass", weakest >= 1e-3}});
    r.pass = r.pass && ok;
  }
  r.detail["sweeps"] = rows;
  return r;
}

inline CriterionResult profile_convergence(const std::vector<const RegimeSweep*>& sweeps) {
  CriterionResult r{7, "rescaled profile convergence", true, {}};
  Json rows = Json::array();
  for (const RegimeSweep* s : sweeps) {
    std::vector<double> d;
    for (const BvpSolution& sol : s->sweep) d.push_back(rescaled_profile_distance(sol, s->prof));
    bool monotone = true;
    for (std::size_t i = 1; i < d.size(); ++i) monotone = monotone && d[i] < d[i - 1];
    const bool ok = monotone && d.back() <= 0.05;
    rows.push_back(Json{{"sweep", sweep_label(*s)}, {"distances", d}, {"monotone", monotone}, {"pass", ok}});
    r.pass = r.pass && ok;
  }
  r.detail["sweeps"] = rows;
  return r;
}

inline Json rate_detail(const RegimeSweep& s, const RateCheck& rc) {
  return Json{{"sweep", sweep_label(s)},
              {"eps", rc.eps},
              {"product", rc.product},
              {"predicted", rc.predicted},
              {"extrapolated", rc.fit.limit},
              {"fit_sigma", rc.fit.sigma},
              {"ratio", rc.ratio},
              {"distance_decreasing", rc.distance_decreasing}};
}

/// Criteria 8 and 9: extrapolated limit within 15% plus the monotone trend.
inline CriterionResult rate_within(int id, const std::string& title, const RegimeSweep& s) {
  CriterionResult r{id, title, false, {}};
  const RateCheck rc = blowup_rate_check(s.sweep, s.rates);
  r.detail = rate_detail(s, rc);
  r.pass = std::fabs(rc.ratio - 1.0) <= 0.15 && rc.distance_decreasing;
  return r;
}

inline CriterionResult serrin_trend(const RegimeSweep& s) {
  CriterionResult r{10, "Serrin log-corrected trend", false, {}};
  const RateCheck rc = blowup_rate_check(s.sweep, s.rates);
  r.detail = rate_detail(s, rc);
  r.pass = s.rates.log_corrected && rc.distance_decreasing;
  return r;
}

inline CriterionResult outer_profiles(const std::vector<const RegimeSweep*>& sweeps) {
  CriterionResult r{11, "outer profiles and decay envelopes", true, {}};
  Json rows = Json::array();
  for (const RegimeSweep* s : sweeps) {
    const OuterProfile last = outer_profile_check(s->sweep.back(), s->re.bundle, s->rates);
    std::vector<double> cv, cu;
    for (const BvpSolution& sol : s->sweep) {
      const DecayEnvelope env = decay_envelope(sol);
      cv.push_back(env.C_v);
      cu.push_back(env.C_u);
    }
    const double mult_rel = std::fabs(last.v_multiplier / s->re.constants.A1 - 1.0);
    const bool sv = sweep_stable(cv), su = sweep_stable(cu);
    const bool ok = mult_rel <= 0.05 && sv && su;
    rows.push_back(Json{{"sweep", sweep_label(*s)},
                        {"v_multiplier", last.v_multiplier},
                        {"A1", s->re.constants.A1},
                        {"v_multiplier_rel", mult_rel},
                        {"u_multiplier_over_predicted", last.u_multiplier / s->rates.u_coefficient},
                        {"C_v", cv},
                        {"C_u", cu},
                        {"C_v_stable", sv},
                        {"C_u_stable", su},
                        {"pass", ok}});
    r.pass = r.pass && ok;
  }
  r.detail["sweeps"] = rows;
  return r;
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"bubble", "reduced", "super", "sub", "serrin", "all"};
  return names;
}

/// Default pair of each regime suite.
inline std::pair<int, double> default_pair(const std::string& suite) {
  if (suite == "super") return {4, 2.5};
  if (suite == "sub") return {5, 1.6};
  if (suite == "serrin") return {4, 2.0};
  throw DomainError("suite '" + suite + "' has no default (N, p)");
}

struct SuiteOptions {
  std::optional<int> N;
  std::optional<double> p;
  SweepPlan plan;
  /// Called after each criterion with its wall time; not part of the results.
  std::function<void(const CriterionResult&, double)> on_result;
  /// Called after each regime sweep with its wall time.
  std::function<void(const RegimeSweep&)> on_sweep;
};

inline std::vector<CriterionResult> run_suite(const std::string& suite, const SuiteOptions& opt = {}) {
  bool known = false;
  for (const std::string& n : suite_names()) known = known || n == suite;
  if (!known) throw DomainError("unknown suite '" + suite + "'");
  const bool regime_suite = suite == "super" || suite == "sub" || suite == "serrin";
  if (!regime_suite && (opt.N || opt.p)) throw DomainError("--N/--p apply only to the super, sub and serrin suites");

  std::vector<CriterionResult> out;
  auto timed = [&](const std::function<CriterionResult()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    out.push_back(f());
    if (opt.on_result) opt.on_result(out.back(), std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  };
  if (suite == "bubble" || suite == "all") {
    timed(bubble_identities);
    timed(symmetric_point);
    timed(greens_trivial_values);
  }
  if (suite == "reduced" || suite == "all") {
    timed(reduced_k1_oracle);
    timed(lambert_schedule);
  }
  if (suite == "bubble" || suite == "reduced") return out;

  std::map<std::string, RegimeSweep> sweeps;
  const std::vector<std::string> regimes =
      suite == "all" ? std::vector<std::string>{"super", "sub", "serrin"} : std::vector<std::string>{suite};
  for (const std::string& name : regimes) {
    auto [N, p] = default_pair(name);
    if (regime_suite) {
      N = opt.N.value_or(N);
      p = opt.p.value_or(p);
      if (regime_name(classify_regime(N, p)) != name)
        throw WrongRegime("N=" + std::to_string(N) + ", p=" + format_number(p) + " is not in the " + name + " regime");
    }
    sweeps.emplace(name, run_regime_sweep(N, p, opt.plan));
    if (opt.on_sweep) opt.on_sweep(sweeps.at(name));
  }
  std::vector<const RegimeSweep*> all;
  for (const std::string& name : regimes) all.push_back(&sweeps.at(name));

  timed([&] { return pohozaev(all); });
  timed([&] { return profile_convergence(all); });
  if (sweeps.count("super")) timed([&] { return rate_within(8, "super-regime blow-up rate", sweeps.at("super")); });
  if (sweeps.count("sub")) timed([&] { return rate_within(9, "sub-regime blow-up rate", sweeps.at("sub")); });
  if (sweeps.count("serrin")) timed([&] { return serrin_trend(sweeps.at("serrin")); });
  timed([&] { return outer_profiles(all); });
  return out;
}

inline Json suite_json(const std::string& suite, const std::vector<CriterionResult>& results) {
  Json crit = Json::array();
  bool all = true;
  for (const CriterionResult& r : results) {
    crit.push_back(Json{{"id", r.id}, {"title", r.title}, {"pass", r.pass}, {"detail", r.detail}});
    all = all && r.pass;
  }
  return Json{{"schema", kSchemaVersion}, {"suite", suite}, {"all_pass", all}, {"criteria", crit}};
}

}  // namespace lane_emden::acceptance
