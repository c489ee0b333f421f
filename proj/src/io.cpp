#include "ga/io.hpp"

#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace ga::io {

namespace {

[[noreturn]] void invalid(const std::string& where, const std::string& what) {
  throw Error(Errc::ConfigInvalid, (where.empty() ? std::string("<root>") : where) + ": " + what);
}

std::string at(const std::string& where, std::size_t i) { return where + "[" + std::to_string(i) + "]"; }

bool is_neg_inf_token(const json& j) { return j.is_string() && j.get<std::string>() == "-inf"; }

// Rows of a matrix object or a bare nested array; checks declared shape.
const json& matrix_rows(const json& j, const std::string& where, Index& rows, Index& cols) {
  const json* body = &j;
  std::string rows_where = where;
  if (j.is_object()) {
    body = &member(j, "rows", where);
    rows_where = where + ".rows";
  }
  if (!body->is_array()) invalid(rows_where, "expected an array of rows");
  rows = static_cast<Index>(body->size());
  cols = rows > 0 ? static_cast<Index>((*body)[0].is_array() ? (*body)[0].size() : 0) : 0;
  for (std::size_t i = 0; i < body->size(); ++i) {
    const json& r = (*body)[i];
    if (!r.is_array()) invalid(at(rows_where, i), "expected a row array");
    if (static_cast<Index>(r.size()) != cols) invalid(at(rows_where, i), "ragged row");
  }
  if (j.is_object() && j.contains("shape")) {
    const json& s = j["shape"];
    if (!s.is_array() || s.size() != 2) invalid(where + ".shape", "expected [rows, cols]");
    const Index r = integer_from_json(s[0], where + ".shape[0]");
    const Index c = integer_from_json(s[1], where + ".shape[1]");
    // an empty row list still carries its column count in "shape"
    if (rows == 0) cols = c;
    if (r != rows || c != cols)
      invalid(where + ".shape", "declared " + shape_string(r, c) + " but rows are " + shape_string(rows, cols));
  }
  return *body;
}

json matrix_object(Index rows, Index cols, const std::function<json(Index, Index)>& entry) {
  json out = json::object();
  out["shape"] = {rows, cols};
  json body = json::array();
  for (Index i = 0; i < rows; ++i) {
    json row = json::array();
    for (Index j = 0; j < cols; ++j) row.push_back(entry(i, j));
    body.push_back(std::move(row));
  }
  out["rows"] = std::move(body);
  return out;
}

}  // namespace

const json& member(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object()) invalid(where, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) invalid(where, "missing required field '" + key + "'");
  return *it;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigInvalid, "cannot open '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(Errc::ConfigInvalid, path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) +
                                         ": malformed JSON");
  }
}

double number_from_json(const json& j, const std::string& where) {
  if (!j.is_number()) invalid(where, "expected a number");
  return j.get<double>();
}

Index integer_from_json(const json& j, const std::string& where) {
  if (!j.is_number_integer()) invalid(where, "expected an integer");
  return j.get<Index>();
}

Vec<double> vector_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) invalid(where, "expected an array of numbers");
  Vec<double> v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = number_from_json(j[i], at(where, i));
  return v;
}

bool is_matrix_json(const json& j) {
  if (j.is_object()) return j.contains("rows");
  return j.is_array() && !j.empty() && j[0].is_array();
}

Mat<double> matrix_from_json(const json& j, const std::string& where) {
  const MaskedScore<double> s = masked_from_json(j, where);
  if (!s.is_full()) invalid(where, "hard exclusions are not allowed here");
  return s.values;
}

Mask mask_from_json(const json& j, const std::string& where) {
  Index rows = 0;
  Index cols = 0;
  const json& body = matrix_rows(j, where, rows, cols);
  Mask m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index c = 0; c < cols; ++c) {
      const json& e = body[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
      if (e.is_boolean()) {
        m(i, c) = e.get<bool>();
      } else if (e.is_number_integer() && (e.get<int>() == 0 || e.get<int>() == 1)) {
        m(i, c) = e.get<int>() == 1;
      } else {
        invalid(at(at(where, static_cast<std::size_t>(i)), static_cast<std::size_t>(c)), "mask entries must be 0/1");
      }
    }
  return m;
}

MaskedScore<double> masked_from_json(const json& j, const std::string& where) {
  Index rows = 0;
  Index cols = 0;
  const json& body = matrix_rows(j, where, rows, cols);
  MaskedScore<double> s{Mat<double>::Zero(rows, cols), full_mask(rows, cols)};
  for (Index i = 0; i < rows; ++i)
    for (Index c = 0; c < cols; ++c) {
      const json& e = body[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
      const std::string w = at(at(where, static_cast<std::size_t>(i)), static_cast<std::size_t>(c));
      if (is_neg_inf_token(e)) {
        s.mask(i, c) = false;
      } else {
        s.values(i, c) = number_from_json(e, w);
      }
    }
  if (j.is_object() && j.contains("mask")) {
    const Mask explicit_mask = mask_from_json(j["mask"], where + ".mask");
    if (explicit_mask.rows() != rows || explicit_mask.cols() != cols) invalid(where + ".mask", "shape mismatch");
    s.mask = s.mask && explicit_mask;
    for (Index i = 0; i < rows; ++i)
      for (Index c = 0; c < cols; ++c)
        if (!s.mask(i, c)) s.values(i, c) = 0.0;
  }
  return s;
}

EvidenceKernel<double> kernel_from_json(const json& j, const std::string& where) {
  MaskedScore<double> s = masked_from_json(j, where);
  if ((s.values.array() < 0.0).any()) invalid(where, "kernel entries must be nonnegative");
  EvidenceKernel<double> k;
  if (j.is_object() && (j.contains("mask") || !s.is_full())) {
    k = {s.values, s.mask};
  } else {
    k = EvidenceKernel<double>::from_values(s.values);
  }
  if (!k.support_matches_mask()) invalid(where, "kernel must be > 0 exactly on its mask");
  return k;
}

Activation activation_from_string(const std::string& s, const std::string& where) {
  if (s == "relu") return Activation::Relu;
  if (s == "gelu") return Activation::Gelu;
  if (s == "tanh") return Activation::Tanh;
  invalid(where, "unknown activation '" + s + "' (relu, gelu, tanh)");
}

AttentionParams<double> attention_from_json(const json& j, const std::string& where) {
  AttentionParams<double> p;
  p.W_Q = matrix_from_json(member(j, "W_Q", where), where + ".W_Q");
  p.W_K = matrix_from_json(member(j, "W_K", where), where + ".W_K");
  p.W_V = matrix_from_json(member(j, "W_V", where), where + ".W_V");
  if (j.contains("tau")) p.tau = number_from_json(j["tau"], where + ".tau");
  if (!(p.tau > 0.0)) invalid(where + ".tau", "temperature must be > 0");
  if (j.contains("key_bias")) p.key_bias = vector_from_json(j["key_bias"], where + ".key_bias");
  if (j.contains("prior")) p.prior = matrix_from_json(j["prior"], where + ".prior");
  if (j.contains("mask")) p.mask = mask_from_json(j["mask"], where + ".mask");
  if (j.contains("score_scale")) p.score_scale = number_from_json(j["score_scale"], where + ".score_scale");
  return p;
}

FfnParams<double> ffn_from_json(const json& j, const std::string& where) {
  FfnParams<double> p;
  p.W1 = matrix_from_json(member(j, "W1", where), where + ".W1");
  p.b1 = vector_from_json(member(j, "b1", where), where + ".b1");
  p.W2 = matrix_from_json(member(j, "W2", where), where + ".W2");
  p.b2 = vector_from_json(member(j, "b2", where), where + ".b2");
  if (j.contains("activation")) {
    if (!j["activation"].is_string()) invalid(where + ".activation", "expected a string");
    p.activation = activation_from_string(j["activation"].get<std::string>(), where + ".activation");
  }
  try {
    p.validate();
  } catch (const Error& e) {
    invalid(where, e.what());
  }
  return p;
}

StagedConfig<double> staged_config_from_json(const json& j, const std::string& where) {
  StagedConfig<double> cfg;
  if (!j.is_object()) invalid(where, "expected an object");
  const auto str = [&](const json& v, const std::string& w) {
    if (!v.is_string()) invalid(w, "expected a string");
    return v.get<std::string>();
  };
  if (j.contains("memory")) {
    const std::string m = str(j["memory"], where + ".memory");
    if (m == "markov") {
      cfg.memory = MemoryKind::Markov;
    } else if (m == "full_history") {
      cfg.memory = MemoryKind::FullHistory;
    } else {
      invalid(where + ".memory", "expected 'markov' or 'full_history'");
    }
  }
  if (j.contains("chart")) {
    const json& c = j["chart"];
    const std::string w = where + ".chart";
    const std::string kind = c.is_string() ? c.get<std::string>() : str(member(c, "kind", w), w + ".kind");
    if (kind == "identity") {
      cfg.chart.kind = ChartKind::Identity;
    } else if (kind == "rms_norm") {
      cfg.chart.kind = ChartKind::RmsNorm;
    } else if (kind == "layer_norm") {
      cfg.chart.kind = ChartKind::LayerNorm;
    } else {
      invalid(w, "expected identity, rms_norm or layer_norm");
    }
    if (c.is_object() && c.contains("eps")) cfg.chart.eps = number_from_json(c["eps"], w + ".eps");
  }
  if (j.contains("comp")) {
    const json& c = j["comp"];
    const std::string w = where + ".comp";
    const std::string kind = c.is_string() ? c.get<std::string>() : str(member(c, "kind", w), w + ".kind");
    if (kind == "additive") {
      cfg.comp.kind = CompKind::Additive;
    } else if (kind == "gated") {
      cfg.comp.kind = CompKind::Gated;
      cfg.comp.gate_weights = matrix_from_json(member(c, "gate_weights", w), w + ".gate_weights");
      if (c.contains("gate_bias")) cfg.comp.gate_bias = vector_from_json(c["gate_bias"], w + ".gate_bias");
    } else if (kind == "postnorm") {
      cfg.comp.kind = CompKind::PostNorm;
    } else {
      invalid(w, "expected additive, gated or postnorm");
    }
    if (c.is_object() && c.contains("eps")) cfg.comp.eps = number_from_json(c["eps"], w + ".eps");
  }
  if (j.contains("zero_update_on_empty")) {
    if (!j["zero_update_on_empty"].is_boolean()) invalid(where + ".zero_update_on_empty", "expected a boolean");
    cfg.zero_update_on_empty = j["zero_update_on_empty"].get<bool>();
  }
  if (j.contains("readout")) {
    const json& r = j["readout"];
    const std::string w = where + ".readout";
    Readout<double> readout;
    const json& alpha = member(r, "alpha", w);
    if (!alpha.is_array()) invalid(w + ".alpha", "expected one list of gate vectors per stage");
    for (std::size_t t = 0; t < alpha.size(); ++t) {
      if (!alpha[t].is_array()) invalid(at(w + ".alpha", t), "expected a list of gate vectors");
      std::vector<Vec<double>> row;
      for (std::size_t k = 0; k < alpha[t].size(); ++k)
        row.push_back(vector_from_json(alpha[t][k], at(at(w + ".alpha", t), k)));
      readout.alpha.push_back(std::move(row));
    }
    if (r.contains("phi")) {
      const json& phi = r["phi"];
      if (!phi.is_array()) invalid(w + ".phi", "expected one list of maps per stage");
      for (std::size_t t = 0; t < phi.size(); ++t) {
        std::vector<std::optional<Mat<double>>> row;
        for (std::size_t k = 0; k < phi[t].size(); ++k) {
          const json& e = phi[t][k];
          if (e.is_null() || (e.is_string() && e.get<std::string>() == "identity")) {
            row.emplace_back(std::nullopt);
          } else {
            row.emplace_back(matrix_from_json(e, at(at(w + ".phi", t), k)));
          }
        }
        readout.phi.push_back(std::move(row));
      }
    }
    cfg.readout = std::move(readout);
  }
  if (cfg.readout.has_value() != (cfg.memory == MemoryKind::FullHistory))
    invalid(where, "'readout' must be given exactly when memory is full_history");
  return cfg;
}

GaugeGraph<double> gauge_graph_from_json(const json& j, const std::string& where) {
  GaugeGraph<double> g;
  g.vertices = integer_from_json(member(j, "n", where), where + ".n");
  if (g.vertices < 0) invalid(where + ".n", "expected a nonnegative vertex count");
  const json& edges = member(j, "edges", where);
  if (!edges.is_array()) invalid(where + ".edges", "expected an array of [u, v] pairs");
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const std::string w = at(where + ".edges", e);
    if (!edges[e].is_array() || edges[e].size() != 2) invalid(w, "expected [u, v]");
    g.edges.emplace_back(integer_from_json(edges[e][0], w + "[0]"), integer_from_json(edges[e][1], w + "[1]"));
  }
  g.edge_potential = vector_from_json(member(j, "A", where), where + ".A");
  if (j.contains("phi")) g.vertex_potential = vector_from_json(j["phi"], where + ".phi");
  try {
    g.validate();
  } catch (const Error& e) {
    invalid(where, e.what());
  }
  return g;
}

json to_json(const Mat<double>& m) {
  return matrix_object(m.rows(), m.cols(), [&](Index i, Index j) { return json(m(i, j)); });
}

json to_json(const Vec<double>& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json to_json(const Mask& m) {
  return matrix_object(m.rows(), m.cols(), [&](Index i, Index j) { return json(m(i, j) ? 1 : 0); });
}

json to_json(const MaskedScore<double>& s) {
  return matrix_object(s.rows(), s.cols(),
                       [&](Index i, Index j) { return s.mask(i, j) ? json(s.values(i, j)) : json("-inf"); });
}

json to_json(const EvidenceKernel<double>& k) {
  json out = to_json(k.values);
  out["mask"] = to_json(k.mask);
  return out;
}

json to_json(const ConditionalFamily<double>& pi) {
  json out = to_json(pi.values);
  out["mask"] = to_json(pi.mask);
  return out;
}

json to_json(const TransportPlan<double>& p) {
  return {{"plan", to_json(p.values)},         {"mask", to_json(p.mask)},
          {"row_marginal", to_json(p.row_marginal)}, {"col_marginal", to_json(p.col_marginal)},
          {"converged", p.converged},          {"iterations", p.iterations},
          {"error", p.error}};
}

json to_json(const LowRankChart<double>& c) {
  json out = {{"rank", c.rank},
              {"Q", to_json(c.Q)},
              {"L", to_json(c.L)},
              {"residual", c.frobenius_residual},
              {"degenerate_truncation", c.degenerate_truncation}};
  if (c.key_bias.size() > 0) out["b"] = to_json(c.key_bias);
  return out;
}

json to_json(const CenteredDecomposition<double>& d) {
  return {{"grand_mean", d.grand_mean},     {"row_means", to_json(d.row_means)},
          {"col_means", to_json(d.col_means)}, {"interaction", to_json(d.interaction)},
          {"key_bias", to_json(d.key_bias)}};
}

json to_json(const StageTrace<double>& t) {
  json records = json::array();
  for (const auto& r : t.records) records.push_back(to_json(r));
  json masks = json::array();
  for (const auto& m : t.masks) masks.push_back(to_json(m));
  json kernels = json::array();
  for (const auto& k : t.working_kernels) kernels.push_back(to_json(k.values));
  return {{"records", std::move(records)},
          {"masks", std::move(masks)},
          {"working_kernels", std::move(kernels)},
          {"carriers", t.carriers}};
}

json to_json(const GaugeGraph<double>& g) {
  json edges = json::array();
  for (const auto& [u, v] : g.edges) edges.push_back({u, v});
  json out = {{"n", g.vertices}, {"edges", std::move(edges)}, {"A", to_json(g.edge_potential)}};
  if (g.vertex_potential) out["phi"] = to_json(*g.vertex_potential);
  return out;
}

}  // namespace ga::io
