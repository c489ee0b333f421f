#pragma once

// JSON encodings of matrices, masks and module objects (double precision).
//
// Matrices: {"shape": [rows, cols], "rows": [[...], ...]} or a bare nested
// array. Score matrices may carry the token "-inf" for hard exclusions and an
// optional 0/1 "mask". All emitted matrices are row-major objects.

#include <filesystem>
#include <string>

#include "json.hpp"

#include "ga/anchor.hpp"
#include "ga/gauge.hpp"
#include "ga/lowrank.hpp"
#include "ga/operator.hpp"
#include "ga/score.hpp"
#include "ga/staged.hpp"

namespace ga::io {

using json = nlohmann::json;

/// Reads and parses a JSON file; parse failures become ConfigInvalid with the
/// line and column of the offending byte.
json read_json_file(const std::filesystem::path& path);

// `where` is a JSON path used in ConfigInvalid diagnostics, e.g.
// "stages[2].kernel".
double number_from_json(const json& j, const std::string& where);
Index integer_from_json(const json& j, const std::string& where);
Vec<double> vector_from_json(const json& j, const std::string& where);
Mat<double> matrix_from_json(const json& j, const std::string& where);
Mask mask_from_json(const json& j, const std::string& where);
MaskedScore<double> masked_from_json(const json& j, const std::string& where);
/// Nonnegative matrix; the mask is the explicit "mask" when present and the
/// strict support otherwise.
EvidenceKernel<double> kernel_from_json(const json& j, const std::string& where);

bool is_matrix_json(const json& j);

AttentionParams<double> attention_from_json(const json& j, const std::string& where);
FfnParams<double> ffn_from_json(const json& j, const std::string& where);
StagedConfig<double> staged_config_from_json(const json& j, const std::string& where);
Activation activation_from_string(const std::string& s, const std::string& where);
/// {"n": int, "edges": [[u, v], ...], "A": [...], "phi": [...]}; "phi" optional.
GaugeGraph<double> gauge_graph_from_json(const json& j, const std::string& where);

json to_json(const Mat<double>& m);
json to_json(const Vec<double>& v);
json to_json(const Mask& m);
json to_json(const MaskedScore<double>& s);
json to_json(const EvidenceKernel<double>& k);
json to_json(const ConditionalFamily<double>& pi);
json to_json(const TransportPlan<double>& p);
json to_json(const LowRankChart<double>& c);
json to_json(const CenteredDecomposition<double>& d);
json to_json(const StageTrace<double>& t);
json to_json(const GaugeGraph<double>& g);

/// Required member lookup with a ConfigInvalid diagnostic.
const json& member(const json& j, const std::string& key, const std::string& where);

}  // namespace ga::io
