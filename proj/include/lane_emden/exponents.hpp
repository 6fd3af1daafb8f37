#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "lane_emden/errors.hpp"

namespace lane_emden {

/// Position of p relative to the Serrin exponent N/(N-2).
enum class Regime { sub, serrin, super };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::sub: return "sub";
    case Regime::serrin: return "serrin";
    case Regime::super: return "super";
  }
  return "unknown";
}

inline Regime parse_regime(const std::string& s) {
  if (s == "sub") return Regime::sub;
  if (s == "serrin") return Regime::serrin;
  if (s == "super") return Regime::super;
  throw DomainError("unknown regime '" + s + "'");
}

/// |p - N/(N-2)| below this counts as the Serrin exponent.
inline constexpr double kSerrinBand = 1e-9;

inline Regime classify_regime(int N, double p) {
  const double ps = double(N) / (N - 2);
  if (std::fabs(p - ps) <= kSerrinBand) return Regime::serrin;
  return p > ps ? Regime::super : Regime::sub;
}

/// The exponent pair (p, q_eps) and its scaling exponents.
struct ExponentPair {
  int N = 0;
  double p = 0.0;
  double eps = 0.0;
  double q_eps = 0.0;
  double q0 = 0.0;
  double alpha_eps = 0.0;
  double beta_eps = 0.0;

  Regime regime() const { return classify_regime(N, p); }
  double serrin_p() const { return double(N) / (N - 2); }
  /// N/(q0+1) = 2(p+1)/(p q0 - 1), the scaling exponent of U at eps = 0.
  double alpha0() const { return double(N) / (q0 + 1.0); }
  double beta0() const { return double(N) / (p + 1.0); }
  /// (N-2)p - 2: the decay rate of U in the sub regime.
  double sigma_sub() const { return (N - 2) * p - 2.0; }
  double kappa0() const { return (N - 2) * p - N; }

  /// max{alpha,beta} < min{N-2,(N-2)p-2} and ((N-2)p-2) beta > (N-2) alpha.
  bool scaling_relations_hold() const {
    const double lo = std::min<double>(N - 2, sigma_sub());
    return std::max(alpha_eps, beta_eps) < lo && sigma_sub() * beta_eps > (N - 2) * alpha_eps;
  }
};

/// q solving 1/(p+1) + 1/(q+1) = (N-2+eps)/N.
inline double q_from_relation(int N, double p, double eps) {
  return N / ((N - 2 + eps) - N / (p + 1.0)) - 1.0;
}

inline ExponentPair make_exponents(int N, double p, double eps) {
  if (N < 3) throw InvalidExponent("dimension must be at least 3");
  const double lo = 2.0 / (N - 2), hi = (N + 2.0) / (N - 2);
  if (!(p > lo && p <= hi * (1.0 + 1e-15)))
    throw InvalidExponent("p must lie in (" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw InvalidExponent("eps must be finite and non-negative");
  ExponentPair e;
  e.N = N;
  e.p = p;
  e.eps = eps;
  e.q0 = q_from_relation(N, p, 0.0);
  e.q_eps = q_from_relation(N, p, eps);
  if (!(e.q_eps > 0.0) || !std::isfinite(e.q_eps) || !(p * e.q_eps > 1.0))
    throw InvalidExponent("eps too large: q_eps leaves the admissible range");
  e.alpha_eps = 2.0 * (p + 1.0) / (p * e.q_eps - 1.0);
  e.beta_eps = 2.0 * (e.q_eps + 1.0) / (p * e.q_eps - 1.0);
  return e;
}

/// q0 - q_eps = eps (q0+1)^2 / (N + eps (q0+1)).
inline double q_gap(const ExponentPair& e) {
  return e.eps * (e.q0 + 1.0) * (e.q0 + 1.0) / (e.N + e.eps * (e.q0 + 1.0));
}

}  // namespace lane_emden
