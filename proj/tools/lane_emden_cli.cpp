// Command-line front end: bubble solves, constant tables, Green-function
// values, reduced-energy searches, BVP sweeps and the acceptance suites.
//
// Exit status: 0 success, 1 verify checks failed, 2 configuration error,
// 3 numerical failure (the failing stage is named on stderr).

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "lane_emden/acceptance.hpp"

namespace fs = std::filesystem;
using namespace lane_emden;

namespace {

std::string g_stage = "startup";

fs::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("LANE_EMDEN_OUT"); env && *env) return env;
  return ".";
}

std::string tag(int N, double p) { return "N" + std::to_string(N) + "_p" + format_number(p); }

void write(const fs::path& path, const std::string& text) {
  atomic_write(path, text);
  std::cout << path.string() << "\n";
}

Vec parse_point(const std::vector<double>& xs, int N, const char* name) {
  if (xs.empty()) return Vec::Zero(N);
  if (static_cast<int>(xs.size()) != N)
    throw DomainError(std::string(name) + " needs " + std::to_string(N) + " coordinates");
  return Eigen::Map<const Vec>(xs.data(), N);
}

Json point_json(const Vec& x) { return std::vector<double>(x.data(), x.data() + x.size()); }

Configuration load_configuration(const fs::path& path, int N) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const Json::exception& e) {
    throw DomainError("seed-config: " + std::string(e.what()));
  }
  Configuration c;
  try {
    c.deltas = j.at("deltas").get<std::vector<double>>();
    for (const Json& pt : j.at("points")) c.points.push_back(parse_point(pt.get<std::vector<double>>(), N, "seed-config point"));
  } catch (const Json::exception& e) {
    throw DomainError("seed-config needs 'deltas' and 'points': " + std::string(e.what()));
  }
  c.validate(unit_ball(N));
  return c;
}

// k equal scales on a circle of radius 0.4; the single-point start sits slightly off centre.
Configuration default_seed(int N, std::size_t k) {
  Configuration c;
  for (std::size_t i = 0; i < k; ++i) {
    Vec x = Vec::Zero(N);
    if (k == 1) {
      x[0] = 0.05;
    } else {
      const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
      x[0] = 0.4 * std::cos(t);
      x[1] = 0.4 * std::sin(t);
    }
    c.deltas.push_back(1.0);
    c.points.push_back(x);
  }
  return c;
}

Regime regime_flag_value(const std::string& s) {
  if (s == "sub") return Regime::sub;
  if (s == "serrin") return Regime::serrin;
  if (s == "super") return Regime::super;
  throw DomainError("--regime must be sub, serrin or super");
}

struct Common {
  int N = 4;
  double p = 2.0;
  std::string out;
  BubbleOptions bubble;
};

void add_common(CLI::App* app, Common& c, bool with_p = true) {
  app->add_option("--N", c.N, "dimension")->required()->check(CLI::Range(3, 12));
  if (with_p) app->add_option("--p", c.p, "exponent p")->required();
  app->add_option("--out", c.out, "output directory (default $LANE_EMDEN_OUT or .)");
  app->add_option("--ode-rtol", c.bubble.ode_rtol, "bubble ODE relative tolerance");
  app->add_option("--shoot-tol", c.bubble.shoot_tol, "bubble shooting tolerance");
}

RadialProfile bubble_for(const Common& c, double p) {
  g_stage = "bubble N=" + std::to_string(c.N) + " p=" + format_number(p);
  return solve_ground_state(c.N, p, c.bubble);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lane-Emden systems: bubbles, Green functions, reduced energy and radial blow-up"};
  app.require_subcommand(1);

  Common bub;
  CLI::App* bubble = app.add_subcommand("bubble", "solve the ground state; write profile CSV, header and constants JSON");
  add_common(bubble, bub);

  Common cst;
  std::vector<double> p_list;
  CLI::App* constants = app.add_subcommand("constants", "constants over a list of p");
  add_common(constants, cst, false);
  constants->add_option("--p", p_list, "exponents p")->required()->expected(1, -1);

  Common grn;
  std::vector<double> gx, gxi;
  CLI::App* greens = app.add_subcommand("greens", "Green function, regular part and Robin function at (x, xi)");
  add_common(greens, grn);
  greens->add_option("--x", gx, "evaluation point")->expected(1, -1);
  greens->add_option("--xi", gxi, "pole (default origin)")->expected(1, -1);

  Common red;
  std::size_t k = 1;
  std::string seed_path, regime_flag;
  CriticalOptions copt;
  CLI::App* reduced = app.add_subcommand("reduced", "critical point of the reduced energy and predicted rates");
  add_common(reduced, red);
  reduced->add_option("--k", k, "number of blow-up points")->check(CLI::Range(1, 8));
  reduced->add_option("--seed-config", seed_path, "JSON {deltas, points} starting configuration");
  reduced->add_option("--regime", regime_flag, "expected regime (sub, serrin, super)");
  reduced->add_option("--rho", copt.rho_tilde, "admissible-set margin");
  reduced->add_option("--max-iter", copt.max_iter, "Newton iteration limit");

  Common swp;
  std::vector<double> eps_list;
  acceptance::SweepPlan plan;
  CLI::App* sweep = app.add_subcommand("sweep", "radial BVP sweep in eps; CSV plus summary JSON");
  add_common(sweep, swp);
  sweep->add_option("--eps", eps_list, "explicit decreasing eps schedule")->expected(1, -1);
  sweep->add_option("--eps-max", plan.eps_max, "largest eps of the log schedule");
  sweep->add_option("--eps-min", plan.eps_min, "smallest eps of the log schedule");
  sweep->add_option("--points", plan.points, "points of the log schedule");

  std::string suite = "all", vout;
  std::optional<int> vN;
  std::optional<double> vp;
  CLI::App* verify = app.add_subcommand("verify", "run an acceptance suite and write verify.json");
  verify->add_option("--suite", suite, "bubble, reduced, super, sub, serrin or all")
      ->check(CLI::IsMember(acceptance::suite_names()));
  verify->add_option("--N", vN, "dimension override for a regime suite");
  verify->add_option("--p", vp, "exponent override for a regime suite");
  verify->add_option("--out", vout, "output directory (default $LANE_EMDEN_OUT or .)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*bubble) {
      const RadialProfile prof = bubble_for(bub, bub.p);
      g_stage = "constants";
      const BubbleConstants K = compute_constants(prof);
      const fs::path dir = output_dir(bub.out);
      const std::string t = tag(bub.N, bub.p);
      write(dir / ("profile_" + t + ".csv"), profile_table(prof).text());
      write(dir / ("profile_" + t + ".json"), json_text(profile_header(prof)));
      write(dir / ("constants_" + t + ".json"), json_text(constants_json(prof, K)));
    } else if (*constants) {
      CsvTable table{{"N", "p", "q0", "A1", "A2", "A3", "S", "S_alt", "a", "b", "int_U_q0p1", "int_V_pp1"}, {}};
      Json rows = Json::array();
      for (double p : p_list) {
        const RadialProfile prof = bubble_for(cst, p);
        g_stage = "constants N=" + std::to_string(cst.N) + " p=" + format_number(p);
        const BubbleConstants K = compute_constants(prof);
        // A2 exists only in the super regime; the CSV keeps a numeric column with 0 there.
        table.rows.push_back({double(cst.N), p, prof.q0, K.A1, K.A2.value_or(0.0), K.A3, K.S, K.S_alt, prof.a(), prof.b(),
                              K.int_U_q0p1, K.int_V_pp1});
        rows.push_back(constants_json(prof, K));
      }
      const fs::path dir = output_dir(cst.out);
      write(dir / ("constants_N" + std::to_string(cst.N) + ".csv"), table.text());
      write(dir / ("constants_N" + std::to_string(cst.N) + ".json"),
            json_text(Json{{"schema", kSchemaVersion}, {"N", cst.N}, {"rows", rows}}));
    } else if (*greens) {
      g_stage = "greens";
      const GreensBundle b = make_greens_bundle(make_exponents(grn.N, grn.p, 0.0));
      const Vec xi = parse_point(gxi, grn.N, "--xi");
      Vec x = parse_point(gx, grn.N, "--x");
      if (gx.empty()) x[0] = 0.5;
      const double tol = 1e-12;
      Json j{{"schema", kSchemaVersion}, {"N", grn.N}, {"p", grn.p}, {"regime", regime_name(b.exp.regime())},
             {"gamma_N", b.gamma_N}, {"x", point_json(x)}, {"xi", point_json(xi)},
             {"G", green(b, x, xi)}, {"H", green_regular(b, x, xi)}, {"tau", robin(b, xi)}};
      if (b.exp.regime() != Regime::super) {
        j["hat_h"] = hat_h(b, x, xi, tol);
        if (b.gamma_tilde_2) j["bar_h"] = bar_h(b, x, xi, tol);
        j["h_tolerance"] = tol;
      }
      if (b.sub()) {
        g_stage = "greens sub-regime potentials";
        const QuadResult th = wth_theta_estimate(b, xi);
        j["wth_theta"] = th.value;
        j["wth_theta_error"] = th.error;
        if (xi.norm() == 0.0) j["wtg_center"] = wtg_center(b, x.norm());
      }
      write(output_dir(grn.out) / ("greens_" + tag(grn.N, grn.p) + ".json"), json_text(j));
    } else if (*reduced) {
      const Regime actual = classify_regime(red.N, red.p);
      if (!regime_flag.empty() && regime_flag_value(regime_flag) != actual)
        throw WrongRegime("N=" + std::to_string(red.N) + ", p=" + format_number(red.p) + " is in the " +
                          regime_name(actual) + " regime, not " + regime_flag);
      Configuration start = seed_path.empty() ? default_seed(red.N, k) : load_configuration(seed_path, red.N);
      if (!seed_path.empty() && reduced->count("--k") && start.k() != k)
        throw DomainError("--k does not match the number of points in --seed-config");
      const RadialProfile prof = bubble_for(red, red.p);
      g_stage = "constants";
      const ReducedEnergy re = make_reduced_energy(prof, compute_constants(prof));
      g_stage = "find_critical k=" + std::to_string(start.k());
      const CriticalPointReport crit = find_critical(re, start, copt);
      std::optional<RateRecord> rates;
      if (crit.converged) {
        g_stage = "predicted_rates";
        rates = predicted_rates(re, crit);
      }
      Json j = critical_report_json(re, crit, rates);
      if (start.k() == 1 && actual == Regime::super) j["d_closed_form"] = k1_center_scale(re);
      write(output_dir(red.out) / ("reduced_" + tag(red.N, red.p) + "_k" + std::to_string(start.k()) + ".json"),
            json_text(j));
      if (!crit.converged) throw NoConvergence("find_critical did not converge");
    } else if (*sweep) {
      const std::vector<double> eps =
          eps_list.empty() ? log_schedule(plan.eps_max, plan.eps_min, plan.points) : eps_list;
      const RadialProfile prof = bubble_for(swp, swp.p);
      g_stage = "reduced energy";
      const ReducedEnergy re = make_reduced_energy(prof, compute_constants(prof));
      const CriticalPointReport crit = find_critical(re, default_seed(swp.N, 1));
      const RateRecord rates = predicted_rates(re, crit);
      g_stage = "continuation sweep";
      const std::vector<BvpSolution> sols = continuation_sweep(swp.N, swp.p, eps, prof);
      g_stage = "sweep diagnostics";
      const fs::path dir = output_dir(swp.out);
      write(dir / ("sweep_" + tag(swp.N, swp.p) + ".csv"), sweep_table(sols, prof, re, rates).text());
      Json summary = sols.size() >= 4 ? sweep_summary_json(sols, rates, blowup_rate_check(sols, rates))
                                      : Json{{"schema", kSchemaVersion}, {"points", sols.size()}};
      summary["rates"] = rates_json(rates);
      write(dir / ("sweep_" + tag(swp.N, swp.p) + ".json"), json_text(summary));
    } else if (*verify) {
      acceptance::SuiteOptions opt;
      opt.N = vN;
      opt.p = vp;
      opt.on_result = [](const acceptance::CriterionResult& r, double) {
        g_stage = "verify after criterion " + std::to_string(r.id);
        std::cerr << (r.pass ? "PASS " : "FAIL ") << r.id << " " << r.title << "\n";
      };
      g_stage = "verify " + suite;
      const auto results = acceptance::run_suite(suite, opt);
      const Json j = acceptance::suite_json(suite, results);
      write(output_dir(vout) / "verify.json", json_text(j));
      return j.at("all_pass").get<bool>() ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error in stage '" << g_stage << "': " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
