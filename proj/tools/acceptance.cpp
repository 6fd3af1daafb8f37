// Acceptance runner: one PASS/FAIL line per criterion. Wall-time budgets are
// part of each verdict. Criterion 12 runs the CLI's verify twice and compares bytes.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <sys/wait.h>

#include "lane_emden/acceptance.hpp"

#ifndef LANE_EMDEN_CLI_PATH
#error "LANE_EMDEN_CLI_PATH must name the lane_emden_cli executable"
#endif

namespace fs = std::filesystem;
using namespace lane_emden;

namespace {

// Seconds. Criterion 6 is budgeted per sweep point, 7 per regime sweep, 8 and 9 per sweep.
constexpr double kBudget1 = 60, kBudget2 = 10, kBudget3 = 10, kBudget4 = 30, kBudget5 = 1;
constexpr double kNoBudget = 1e9;
constexpr double kBudget6PerPoint = 60, kBudget7PerSweep = 15 * 60, kBudgetRateSweep = 20 * 60;

struct Line {
  bool pass;
  double seconds;
  double budget;
  std::string title;
  std::string note;
};

void print(int id, const Line& l) {
  const bool ok = l.pass && l.seconds <= l.budget;
  char budget[32] = "no budget";
  if (l.budget < kNoBudget) std::snprintf(budget, sizeof budget, "budget %.0f s", l.budget);
  std::printf("criterion %2d %s  %-38s %9.2f s (%s)%s%s\n", id, ok ? "PASS" : "FAIL", l.title.c_str(), l.seconds,
              budget, l.note.empty() ? "" : "  ", l.note.c_str());
  std::fflush(stdout);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + LANE_EMDEN_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria 1-12"};
  std::string det_suite = "all";
  std::string work = (fs::temp_directory_path() / "lane_emden_acceptance").string();
  std::string json_out;
  app.add_option("--determinism-suite", det_suite, "suite that criterion 12 runs twice")
      ->check(CLI::IsMember(acceptance::suite_names()));
  app.add_option("--work", work, "scratch directory for criterion 12");
  app.add_option("--json", json_out, "also write the suite results here");
  CLI11_PARSE(app, argc, argv);

  std::map<int, Line> lines;
  std::map<std::string, double> sweep_seconds;
  double slowest_point = 0.0, slowest_sweep = 0.0;

  acceptance::SuiteOptions opt;
  opt.on_sweep = [&](const acceptance::RegimeSweep& s) {
    const std::string label = acceptance::sweep_label(s);
    sweep_seconds[label] = s.seconds;
    slowest_point = std::max(slowest_point, s.seconds / static_cast<double>(s.sweep.size()));
    slowest_sweep = std::max(slowest_sweep, s.seconds);
    std::printf("  sweep %-28s %zu points in %.1f s\n", label.c_str(), s.sweep.size(), s.seconds);
    std::fflush(stdout);
  };
  opt.on_result = [&](const acceptance::CriterionResult& r, double t) {
    Line l{r.pass, t, 0.0, r.title, {}};
    switch (r.id) {
      case 1: l.budget = kBudget1; break;
      case 2: l.budget = kBudget2; break;
      case 3: l.budget = kBudget3; break;
      case 4: l.budget = kBudget4; break;
      case 5: l.budget = kBudget5; break;
      case 6:
        // Sweep time per point plus the identity evaluation per point.
        l.seconds = slowest_point + t / 3.0;
        l.budget = kBudget6PerPoint;
        for (const Json& s : r.detail.at("sweeps"))
          if (!s.at("perturbation_pass").get<bool>() || !s.at("solutions_pass").get<bool>())
            l.note = "perturbed residual below 1e-3 (see ledger)";
        break;
      case 7:
        l.seconds = slowest_sweep + t;
        l.budget = kBudget7PerSweep;
        break;
      case 8:
      case 9:
      case 10: {
        const std::string label = r.detail.at("sweep").get<std::string>();
        l.seconds = sweep_seconds.at(label) + t;
        l.budget = kBudgetRateSweep;
        char buf[96];
        std::snprintf(buf, sizeof buf, "ratio %.4f, distance decreasing %s", r.detail.at("ratio").get<double>(),
                      r.detail.at("distance_decreasing").get<bool>() ? "yes" : "no");
        l.note = buf;
        break;
      }
      default:
        l.budget = kNoBudget;
    }
    lines[r.id] = l;
    print(r.id, l);
  };

  int failures = 0;
  try {
    const auto results = acceptance::run_suite("all", opt);
    if (!json_out.empty()) atomic_write(json_out, json_text(acceptance::suite_json("all", results)));
  } catch (const Error& e) {
    std::printf("suite aborted: %s\n", e.what());
    return 3;
  }

  // 12: determinism of the CLI verify output.
  {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path a = fs::path(work) / "run_a", b = fs::path(work) / "run_b";
    fs::remove_all(a);
    fs::remove_all(b);
    const int ca = run_cli("verify --suite " + det_suite + " --out \"" + a.string() + "\"");
    const int cb = run_cli("verify --suite " + det_suite + " --out \"" + b.string() + "\"");
    bool same = false;
    std::string note = "suite " + det_suite + ", exit codes " + std::to_string(ca) + "/" + std::to_string(cb);
    if (fs::exists(a / "verify.json") && fs::exists(b / "verify.json")) {
      const std::string ta = read_text(a / "verify.json"), tb = read_text(b / "verify.json");
      same = !ta.empty() && ta == tb;
      note += ", " + std::to_string(ta.size()) + " bytes";
    }
    // Exit 1 only reports failed checks; the output must exist and match.
    const bool ran = (ca == 0 || ca == 1) && ca == cb;
    lines[12] = Line{same && ran, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), kNoBudget,
                     "verify determinism", note};
    print(12, lines[12]);
  }

  for (const auto& [id, l] : lines) failures += !(l.pass && l.seconds <= l.budget);
  std::printf("%d of %zu criteria passed\n", static_cast<int>(lines.size()) - failures, lines.size());
  return failures ? 1 : 0;
}
