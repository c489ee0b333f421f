#include "doctest.h"

#include "ga/checks.hpp"
#include "ga/types.hpp"

using namespace ga::checks;

TEST_CASE("all suites pass at default thresholds for several seeds") {
  for (std::uint64_t seed : {0ULL, 1ULL, 77ULL}) {
    const auto reports = run_checks({}, seed);
    CHECK(reports.size() == known_suites().size());
    for (const auto& r : reports) {
      INFO("suite " << r.suite << " seed " << seed);
      CHECK(r.pass);
      CHECK(r.cases > 0);
      CHECK_FALSE(r.properties.empty());
      for (const auto& p : r.properties) {
        INFO(p.name << " deviation " << p.deviation << " threshold " << p.threshold);
        CHECK(p.pass);
        CHECK(p.threshold >= 0.0);
      }
    }
  }
}

TEST_CASE("reports are deterministic for a fixed seed") {
  for (const auto& name : known_suites()) {
    const auto a = to_json(run_suite(name, 5));
    const auto b = to_json(run_suite(name, 5));
    CHECK(a.dump() == b.dump());
    CHECK_FALSE(a.contains("wall_time_s"));
  }
  CHECK(to_json(run_suite(known_suites().front(), 5), true).contains("wall_time_s"));
}

TEST_CASE("zero tolerance exposes rounding and reports a witness") {
  bool any_fail = false;
  for (const auto& name : known_suites()) {
    const CheckReport r = run_suite(name, 9, 0.0);
    for (const auto& p : r.properties) {
      if (p.comparison == Comparison::AtMost) CHECK(p.threshold == 0.0);
      if (!p.pass) {
        any_fail = true;
        CHECK_FALSE(p.witness.empty());
        CHECK_FALSE(r.pass);
      }
    }
  }
  CHECK(any_fail);
}

TEST_CASE("unknown suite") {
  try {
    run_suite("nope", 1);
    FAIL("expected UnknownSuite");
  } catch (const ga::Error& e) {
    CHECK(e.code() == ga::Errc::UnknownSuite);
    CHECK(std::string(e.what()).find("nope") != std::string::npos);
  }
  CHECK_THROWS_AS(run_checks({"gauge", "nope"}, 1), ga::Error);
}

TEST_CASE("suite subset runs in the requested order") {
  const auto reports = run_checks({"cycle-sum", "gauge"}, 3);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].suite == "cycle-sum");
  CHECK(reports[1].suite == "gauge");
}
