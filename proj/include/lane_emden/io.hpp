#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lane_emden/bubble.hpp"
#include "lane_emden/bvp.hpp"
#include "lane_emden/errors.hpp"
#include "lane_emden/reduced_energy.hpp"

namespace lane_emden {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// %.17g; NaN and infinities are refused rather than written.
inline std::string format_number(double x) {
  if (!std::isfinite(x)) throw NonFiniteOutput("refusing to write a non-finite number");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {

inline void dump_json(const Json& j, std::string& out, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad + Json(it.key()).dump() + ": ";
        dump_json(it.value(), out, indent, depth + 1);
      }
      out += "\n" + close + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      bool flat = true;
      for (const Json& e : j) flat = flat && !e.is_structured();
      if (flat) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          dump_json(j[i], out, indent, depth + 1);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        dump_json(j[i], out, indent, depth + 1);
      }
      out += "\n" + close + "]";
      return;
    }
    case Json::value_t::number_float:
      out += format_number(j.get<double>());
      return;
    default:
      out += j.dump();
  }
}

}  // namespace detail

/// Deterministic JSON text: insertion-ordered keys, 17 significant digits, trailing newline.
inline std::string json_text(const Json& j) {
  std::string out;
  detail::dump_json(j, out, 2, 0);
  out += "\n";
  return out;
}

/// Writes to a sibling temporary and renames it over the target.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DomainError("cannot open " + tmp.string() + " for writing");
    os << content;
    os.flush();
    if (!os) throw DomainError("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DomainError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::string text() const {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
    out += "\n";
    for (const auto& row : rows) {
      if (row.size() != header.size()) throw DomainError("csv row width does not match the header");
      for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + format_number(row[i]);
      out += "\n";
    }
    return out;
  }

  static CsvTable parse(const std::string& text) {
    CsvTable t;
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw DomainError("empty csv");
    std::istringstream hs(line);
    for (std::string cell; std::getline(hs, cell, ',');) t.header.push_back(cell);
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::vector<double> row;
      std::istringstream ls(line);
      for (std::string cell; std::getline(ls, cell, ',');) {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw DomainError("malformed csv cell '" + cell + "'");
      }
      if (row.size() != t.header.size()) throw DomainError("csv row width does not match the header");
      t.rows.push_back(std::move(row));
    }
    return t;
  }
};

// ---------------------------------------------------------------------------
// Bubble profile and constants
// ---------------------------------------------------------------------------

inline CsvTable profile_table(const RadialProfile& prof) {
  CsvTable t{{"r", "U", "V", "dU", "dV"}, {}};
  for (std::size_t i = 0; i < prof.r.size(); ++i) t.rows.push_back({prof.r[i], prof.U[i], prof.V[i], prof.dU[i], prof.dV[i]});
  return t;
}

inline Json profile_header(const RadialProfile& prof) {
  const BubbleOptions& o = prof.options;
  return Json{{"schema", kSchemaVersion},
              {"N", prof.N},
              {"p", prof.p},
              {"q0", prof.q0},
              {"regime", regime_name(prof.regime)},
              {"s", prof.s},
              {"a", prof.a()},
              {"a_fit_residual", prof.tail_U.residual},
              {"b", prof.b()},
              {"b_fit_residual", prof.tail_V.residual},
              {"R_max", o.R_max},
              {"tolerances",
               {{"shoot_tol", o.shoot_tol}, {"ode_rtol", o.ode_rtol}, {"r0", o.r0},
                {"panels_per_decade", o.panels_per_decade}, {"order", o.order}}}};
}

/// Rebuilds a profile from its header and CSV; the quadrature grid and tail laws are recomputed.
inline RadialProfile load_profile(const Json& header, const std::string& csv) {
  if (header.value("schema", 0) != kSchemaVersion) throw DomainError("unsupported profile schema");
  RadialProfile prof;
  prof.N = header.at("N").get<int>();
  prof.p = header.at("p").get<double>();
  const ExponentPair e = make_exponents(prof.N, prof.p, 0.0);
  prof.q0 = e.q0;
  prof.regime = e.regime();
  prof.s = header.at("s").get<double>();
  const Json& tol = header.at("tolerances");
  prof.options.R_max = header.at("R_max").get<double>();
  prof.options.shoot_tol = tol.at("shoot_tol").get<double>();
  prof.options.ode_rtol = tol.at("ode_rtol").get<double>();
  prof.options.r0 = tol.at("r0").get<double>();
  prof.options.panels_per_decade = tol.at("panels_per_decade").get<int>();
  prof.options.order = tol.at("order").get<int>();
  const BubbleOptions& o = prof.options;
  const int decades = static_cast<int>(std::ceil(std::log10(o.R_max / o.r0) - 1e-9));
  prof.grid = Grid1D::composite(geometric_breaks(o.r0, o.R_max, decades * o.panels_per_decade), o.order);
  const CsvTable t = CsvTable::parse(csv);
  if (t.header != std::vector<std::string>{"r", "U", "V", "dU", "dV"}) throw DomainError("profile csv needs columns r,U,V,dU,dV");
  if (t.rows.size() != prof.grid.size() + 2) throw DomainError("profile csv does not match the grid in its header");
  for (const auto& row : t.rows) {
    prof.r.push_back(row[0]);
    prof.U.push_back(row[1]);
    prof.V.push_back(row[2]);
    prof.dU.push_back(row[3]);
    prof.dV.push_back(row[4]);
  }
  auto [tu, tv] = fit_decay_constants(prof);
  prof.tail_U = tu;
  prof.tail_V = tv;
  return prof;
}

inline Json constants_json(const RadialProfile& prof, const BubbleConstants& K) {
  Json j{{"schema", kSchemaVersion}, {"N", prof.N}, {"p", prof.p}, {"q0", prof.q0}, {"regime", regime_name(prof.regime)}};
  j["A1"] = K.A1;
  j["A1_identity"] = K.A1_identity;
  if (K.A2) j["A2"] = *K.A2;
  else j["A2"] = nullptr;
  j["A3"] = K.A3;
  j["A3_expected"] = K.A3_expected;
  j["S"] = K.S;
  j["S_alt"] = K.S_alt;
  j["S_rel_diff"] = std::fabs(K.S - K.S_alt) / K.S;
  j["a"] = prof.a();
  j["a_fit_residual"] = prof.tail_U.residual;
  j["b"] = prof.b();
  j["b_fit_residual"] = prof.tail_V.residual;
  j["int_U_q0p1"] = K.int_U_q0p1;
  j["int_V_pp1"] = K.int_V_pp1;
  j["psi0_moment"] = K.psi0_moment;
  return j;
}

// ---------------------------------------------------------------------------
// Reduced energy
// ---------------------------------------------------------------------------

inline Json rates_json(const RateRecord& r) {
  return Json{{"regime", regime_name(r.regime)},
              {"product_exponent", r.product_exponent},
              {"log_corrected", r.log_corrected},
              {"limit", r.limit},
              {"delta", r.delta},
              {"v_coefficient", r.v_coefficient},
              {"u_coefficient", r.u_coefficient},
              {"u_exponent", r.u_exponent},
              {"u_log_corrected", r.u_log_corrected},
              {"v_tail_consistency", r.v_tail_consistency},
              {"spread", r.spread}};
}

inline Json critical_report_json(const ReducedEnergy& re, const CriticalPointReport& c,
                                 const std::optional<RateRecord>& rates) {
  Json x = Json::array();
  for (const Vec& pt : c.config.points) x.push_back(std::vector<double>(pt.data(), pt.data() + pt.size()));
  Json j{{"schema", kSchemaVersion},
         {"N", re.N()},
         {"p", re.exp.p},
         {"k", c.config.k()},
         {"regime", regime_name(re.regime)},
         {"C0", re.C0},
         {"d_star", c.config.deltas},
         {"x_star", x},
         {"grad_norm", c.grad_norm},
         {"hess_sign", c.hessian_det_sign},
         {"hessian_eigenvalues", std::vector<double>(c.hessian_eigenvalues.data(),
                                                     c.hessian_eigenvalues.data() + c.hessian_eigenvalues.size())},
         {"iterations", c.iterations},
         {"converged", c.converged}};
  if (rates) j["rates"] = rates_json(*rates);
  return j;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

inline CsvTable sweep_table(const std::vector<BvpSolution>& sweep, const RadialProfile& prof, const ReducedEnergy& re,
                            const RateRecord& rates) {
  CsvTable t{{"eps", "sup_u", "lambda", "P", "pohozaev_residual", "profile_distance", "outer_check"}, {}};
  for (const BvpSolution& s : sweep)
    t.rows.push_back({s.exp.eps, s.sup_u, s.lambda, blowup_product(s, rates), pohozaev_residual(s, 0.5),
                      rescaled_profile_distance(s, prof), outer_profile_check(s, re.bundle, rates).v_error});
  return t;
}

inline Json sweep_summary_json(const std::vector<BvpSolution>& sweep, const RateRecord& rates, const RateCheck& rc) {
  const BvpSolution& last = sweep.back();
  return Json{{"schema", kSchemaVersion},
              {"N", last.exp.N},
              {"p", last.exp.p},
              {"regime", regime_name(rates.regime)},
              {"points", sweep.size()},
              {"eps_min", last.exp.eps},
              {"product_exponent", rates.product_exponent},
              {"log_corrected", rates.log_corrected},
              {"predicted_limit", rc.predicted},
              {"extrapolated_limit", rc.fit.limit},
              {"fit_sigma", rc.fit.sigma},
              {"fit_residual", rc.fit.residual},
              {"ratio", rc.ratio},
              {"distance_decreasing", rc.distance_decreasing}};
}

}  // namespace lane_emden
