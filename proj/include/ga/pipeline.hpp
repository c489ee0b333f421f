#pragma once

// Config-driven runner behind `ga run`.
//
// {
//   "version": "1",
//   "seed": 7,
//   "inputs": {"S": <matrix> | {"file": "s.json"} | [v0, v1, ...] | 3.5},
//   "carriers": {"X": ["a", "b"]},
//   "refinements": {"rho": {"fine": "X", "coarse": "Xc", "map": [0, 0]}},
//   "stages": [{"op": "assemble_kernel", "score": "S", "out": "K"}, ...],
//   "checks": ["gauge", "sinkhorn"]
// }
//
// File references are resolved against the config's directory.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ga/types.hpp"

namespace ga {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumeric = 3, kExitInvariant = 4 };

/// 2 for malformed or inconsistent input, 3 for numeric failures.
int exit_code_for(Errc code);

struct PipelineResult {
  int exit_code = kExitOk;
  nlohmann::json report;
};

const std::vector<std::string>& pipeline_operations();

/// Runs a pipeline config. GA_SEED, when set, overrides the config seed.
/// With `out_dir`, every stage output is written to `<out_dir>/<name>.json`
/// and the report to `<out_dir>/report.json`.
PipelineResult run_pipeline(const std::filesystem::path& config,
                            const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace ga
