#pragma once

// Seeded invariant suites behind `ga check` and the pipeline "checks" list.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace ga::checks {

enum class Comparison { AtMost, AtLeast };

struct PropertyResult {
  std::string name;
  double deviation = 0.0;  // worst observed value (max for AtMost, min for AtLeast)
  double threshold = 0.0;
  Comparison comparison = Comparison::AtMost;
  bool pass = true;
  std::string witness;  // where the worst value was observed
};

struct CheckReport {
  std::string suite;
  int cases = 0;
  std::vector<PropertyResult> properties;
  std::vector<std::string> notes;  // informational, never affects pass
  bool pass = true;
  double wall_time_s = 0.0;
};

const std::vector<std::string>& known_suites();

/// Runs one suite. `tol`, when set, replaces every at-most threshold.
/// Throws Error(UnknownSuite) for names outside known_suites().
CheckReport run_suite(const std::string& name, std::uint64_t seed, std::optional<double> tol = std::nullopt);

/// Runs the named suites in order (all suites when `names` is empty).
std::vector<CheckReport> run_checks(const std::vector<std::string>& names, std::uint64_t seed,
                                    std::optional<double> tol = std::nullopt);

/// Report JSON; wall time is included only when `timing` is set so that
/// reports for a fixed seed are byte-identical.
nlohmann::json to_json(const CheckReport& report, bool timing = false);

}  // namespace ga::checks
