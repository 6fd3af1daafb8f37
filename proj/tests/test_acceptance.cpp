#include <catch_amalgamated.hpp>

#include "lane_emden/acceptance.hpp"

using namespace lane_emden;
using namespace lane_emden::acceptance;

TEST_CASE("random configurations are reproducible and admissible", "[acceptance]") {
  std::mt19937_64 a(7), b(7);
  for (std::size_t k = 1; k <= 3; ++k) {
    const Configuration ca = random_configuration(a, 4, k), cb = random_configuration(b, 4, k);
    REQUIRE(ca.k() == k);
    REQUIRE(ca.deltas == cb.deltas);
    for (std::size_t i = 0; i < k; ++i) {
      REQUIRE(ca.points[i] == cb.points[i]);
      REQUIRE(ca.points[i].norm() <= 0.8 + 1e-15);
      REQUIRE(ca.deltas[i] >= 0.3);
      REQUIRE(ca.deltas[i] <= 2.0);
      for (std::size_t j = 0; j < i; ++j) REQUIRE((ca.points[i] - ca.points[j]).norm() > 0.2);
    }
    REQUIRE_NOTHROW(ca.validate(unit_ball(4)));
  }
}

TEST_CASE("suite selection and regime overrides", "[acceptance]") {
  REQUIRE_THROWS_AS(run_suite("nonsense"), DomainError);
  SuiteOptions o;
  o.N = 4;
  REQUIRE_THROWS_AS(run_suite("bubble", o), DomainError);
  SuiteOptions wrong;
  wrong.N = 4;
  wrong.p = 1.8;
  REQUIRE_THROWS_AS(run_suite("super", wrong), WrongRegime);
  REQUIRE(default_pair("sub") == std::pair<int, double>{5, 1.6});
  REQUIRE_THROWS_AS(default_pair("all"), DomainError);
}

TEST_CASE("reduced suite output is stable", "[acceptance]") {
  std::vector<int> ids;
  SuiteOptions o;
  o.on_result = [&](const CriterionResult& r, double t) {
    ids.push_back(r.id);
    REQUIRE(t >= 0.0);
  };
  const auto first = run_suite("reduced", o);
  REQUIRE(ids == std::vector<int>{4, 5});
  const std::string a = json_text(suite_json("reduced", first));
  const std::string b = json_text(suite_json("reduced", run_suite("reduced")));
  REQUIRE(a == b);
  const Json j = Json::parse(a);
  REQUIRE(j.at("schema") == kSchemaVersion);
  REQUIRE(j.at("criteria").size() == 2);
  REQUIRE(j.at("all_pass").get<bool>());
}
