#include "ga/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <variant>

#include "ga/carrier.hpp"
#include "ga/checks.hpp"
#include "ga/io.hpp"

namespace ga {

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::Infeasible:
    case Errc::NotConverged:
    case Errc::NoConvergence:
    case Errc::EmptyRow:
    case Errc::EmptyCol:
    case Errc::ZeroMarginal:
    case Errc::ZeroRowMass:
    case Errc::NonPositiveLinkValue:
    case Errc::SingularChartMap:
      return kExitNumeric;
    default:
      return kExitConfig;
  }
}

namespace {

using io::json;
using Value = std::variant<double, Vec<double>, Mat<double>, MaskedScore<double>, EvidenceKernel<double>,
                           ConditionalFamily<double>, TransportPlan<double>, LowRankChart<double>,
                           CenteredDecomposition<double>>;

const char* kind_name(const Value& v) {
  static const char* names[] = {"number", "vector", "matrix", "score", "kernel",
                                "conditional", "plan", "chart", "decomposition"};
  return names[v.index()];
}

[[noreturn]] void invalid(const std::string& where, const std::string& what) {
  throw Error(Errc::ConfigInvalid, where + ": " + what);
}

struct OpSpec {
  std::vector<std::string> required;
  std::vector<std::string> optional;
};

const std::map<std::string, OpSpec>& op_table() {
  static const std::map<std::string, OpSpec> t{
      {"assemble_kernel", {{"score"}, {"prior"}}},
      {"gibbs_row_anchor", {{"score"}, {"prior"}}},
      {"row_anchor", {{"kernel"}, {}}},
      {"conditional_update", {{"conditional", "values"}, {}}},
      {"sinkhorn_balanced", {{"kernel", "mu_out", "mu_in"}, {}}},
      {"sinkhorn_unbalanced", {{"kernel", "mu_out", "mu_in"}, {}}},
      {"plan_update", {{"plan", "values"}, {}}},
      {"plan_to_conditional", {{"plan"}, {"mu_out"}}},
      {"center_scores", {{"scores"}, {}}},
      {"double_center", {{"scores"}, {}}},
      {"weighted_row_center", {{"scores", "weights"}, {}}},
      {"score_normal_form", {{"scores"}, {}}},
      {"extract_qk", {{"matrix"}, {}}},
      {"truncate", {{"matrix"}, {}}},
      {"scale_kernel", {{"kernel", "a", "b"}, {}}},
      {"pushforward_kernel", {{"kernel"}, {}}},
      {"attention", {{"embeddings"}, {}}},
      {"ffn", {{"records"}, {}}},
      {"score_from_work", {{"work"}, {"mask"}}},
      {"generalized_kl", {{"a", "b"}, {}}},
      {"cycle_sum", {{}, {}}},
  };
  return t;
}

Value value_from_json(const json& j, const std::string& where) {
  if (j.is_number()) return io::number_from_json(j, where);
  if (io::is_matrix_json(j)) {
    MaskedScore<double> s = io::masked_from_json(j, where);
    if (s.is_full() && !(j.is_object() && j.contains("mask"))) return std::move(s.values);
    return s;
  }
  if (j.is_array()) return io::vector_from_json(j, where);
  invalid(where, "expected a number, a vector, a matrix or {\"file\": path}");
}

json value_to_json(const Value& v) {
  return std::visit(
      [](const auto& x) -> json {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, double>) {
          return x;
        } else {
          return io::to_json(x);
        }
      },
      v);
}

class Runner {
 public:
  Runner(json config, std::filesystem::path base) : cfg_(std::move(config)), base_(std::move(base)) {}

  void load() {
    if (!cfg_.is_object()) invalid("<root>", "expected an object");
    const json& version = io::member(cfg_, "version", "<root>");
    if (!version.is_string()) invalid("version", "expected a string");
    if (cfg_.contains("seed")) seed_ = static_cast<std::uint64_t>(io::integer_from_json(cfg_["seed"], "seed"));
    if (const char* env = std::getenv("GA_SEED")) {
      try {
        std::size_t used = 0;
        seed_ = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument(env);
      } catch (const std::exception&) {
        invalid("GA_SEED", "expected a nonnegative integer, got '" + std::string(env) + "'");
      }
    }
    load_inputs();
    load_carriers();
    validate_stages();
    if (cfg_.contains("checks")) {
      const json& c = cfg_["checks"];
      if (!c.is_array()) invalid("checks", "expected an array of suite names");
      for (std::size_t i = 0; i < c.size(); ++i) {
        if (!c[i].is_string()) invalid("checks[" + std::to_string(i) + "]", "expected a suite name");
        checks_.push_back(c[i].get<std::string>());
      }
    }
  }

  void execute(json& stage_log) {
    const json& stages = cfg_["stages"];
    for (std::size_t i = 0; i < stages.size(); ++i) {
      current_ = static_cast<Index>(i);
      const json& s = stages[i];
      where_ = "stages[" + std::to_string(i) + "]";
      json entry = {{"index", i}, {"op", s["op"]}, {"out", s["out"]}};
      json summary = json::object();
      Value out = run_stage(s, summary);
      entry["kind"] = kind_name(out);
      entry["summary"] = std::move(summary);
      const std::string name = s["out"].get<std::string>();
      store_[name] = std::move(out);
      order_.push_back(name);
      stage_log.push_back(std::move(entry));
      if (const auto* p = std::get_if<TransportPlan<double>>(&store_[name]); p && !p->converged)
        throw Error(Errc::NotConverged, where_ + ": transport solver stopped after " + std::to_string(p->iterations) +
                                            " iterations without converging");
    }
    current_ = -1;
  }

  json outputs() const {
    json out = json::object();
    for (const auto& name : order_) out[name] = value_to_json(store_.at(name));
    return out;
  }

  std::uint64_t seed() const { return seed_; }
  const std::vector<std::string>& checks() const { return checks_; }
  Index current_stage() const { return current_; }
  const std::vector<std::string>& order() const { return order_; }

 private:
  void load_inputs() {
    if (!cfg_.contains("inputs")) return;
    const json& inputs = cfg_["inputs"];
    if (!inputs.is_object()) invalid("inputs", "expected an object of named inputs");
    for (const auto& [name, j] : inputs.items()) {
      const std::string where = "inputs." + name;
      if (j.is_object() && j.contains("file")) {
        if (!j["file"].is_string()) invalid(where + ".file", "expected a path string");
        const std::filesystem::path path = base_ / j["file"].get<std::string>();
        if (!std::filesystem::exists(path))
          invalid(where, "missing input '" + name + "': file '" + path.string() + "' not found");
        store_[name] = value_from_json(io::read_json_file(path), where);
      } else {
        store_[name] = value_from_json(j, where);
      }
    }
  }

  void load_carriers() {
    if (cfg_.contains("carriers")) {
      const json& cs = cfg_["carriers"];
      if (!cs.is_object()) invalid("carriers", "expected an object of label arrays");
      for (const auto& [id, labels] : cs.items()) {
        if (!labels.is_array()) invalid("carriers." + id, "expected an array of labels");
        std::vector<std::string> l;
        for (const auto& e : labels) {
          if (!e.is_string()) invalid("carriers." + id, "labels must be strings");
          l.push_back(e.get<std::string>());
        }
        try {
          carriers_.emplace(id, Carrier(id, l));
        } catch (const Error& e) {
          invalid("carriers." + id, e.what());
        }
      }
    }
    if (cfg_.contains("refinements")) {
      const json& rs = cfg_["refinements"];
      if (!rs.is_object()) invalid("refinements", "expected an object");
      for (const auto& [name, r] : rs.items()) {
        const std::string where = "refinements." + name;
        const json& fine = io::member(r, "fine", where);
        const json& coarse = io::member(r, "coarse", where);
        if (!fine.is_string() || !coarse.is_string()) invalid(where, "'fine' and 'coarse' must be carrier ids");
        const auto f = carriers_.find(fine.get<std::string>());
        const auto c = carriers_.find(coarse.get<std::string>());
        if (f == carriers_.end()) invalid(where + ".fine", "unknown carrier '" + fine.get<std::string>() + "'");
        if (c == carriers_.end()) invalid(where + ".coarse", "unknown carrier '" + coarse.get<std::string>() + "'");
        const json& map = io::member(r, "map", where);
        if (!map.is_array()) invalid(where + ".map", "expected an integer array");
        std::vector<Index> m;
        for (std::size_t i = 0; i < map.size(); ++i)
          m.push_back(io::integer_from_json(map[i], where + ".map[" + std::to_string(i) + "]"));
        try {
          refinements_.emplace(name, RefinementMap(f->second, c->second, m));
        } catch (const Error& e) {
          if (e.code() == Errc::CarrierMismatch) throw;
          invalid(where, e.what());
        }
      }
    }
  }

  void validate_stages() {
    const json& stages = io::member(cfg_, "stages", "<root>");
    if (!stages.is_array()) invalid("stages", "expected an array");
    std::set<std::string> known;
    for (const auto& [name, v] : store_) known.insert(name);
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const std::string where = "stages[" + std::to_string(i) + "]";
      const json& s = stages[i];
      const json& op = io::member(s, "op", where);
      if (!op.is_string()) invalid(where + ".op", "expected an operation name");
      const auto spec = op_table().find(op.get<std::string>());
      if (spec == op_table().end()) {
        std::string list;
        for (const auto& [n, _] : op_table()) list += (list.empty() ? "" : ", ") + n;
        invalid(where + ".op", "unknown operation '" + op.get<std::string>() + "' (known: " + list + ")");
      }
      const auto check_ref = [&](const std::string& field) {
        const json& r = s[field];
        if (!r.is_string()) invalid(where + "." + field, "expected the name of an input or earlier output");
        if (!known.count(r.get<std::string>()))
          invalid(where + "." + field, "missing input '" + r.get<std::string>() + "'");
      };
      for (const auto& f : spec->second.required) {
        (void)io::member(s, f, where);
        check_ref(f);
      }
      for (const auto& f : spec->second.optional)
        if (s.contains(f)) check_ref(f);
      if (op == "pushforward_kernel") {
        for (const char* f : {"rows", "cols"}) {
          const json& r = io::member(s, f, where);
          if (!r.is_string() || !refinements_.count(r.get<std::string>()))
            invalid(where + "." + f, "expected the name of a declared refinement");
        }
      }
      const json& out = io::member(s, "out", where);
      if (!out.is_string() || out.get<std::string>().empty()) invalid(where + ".out", "expected an output name");
      known.insert(out.get<std::string>());
    }
  }

  const Value& ref(const json& s, const std::string& field) const {
    return store_.at(s[field].get<std::string>());
  }

  [[noreturn]] void wrong_kind(const json& s, const std::string& field, const std::string& expected) const {
    invalid(where_ + "." + field, "'" + s[field].get<std::string>() + "' is a " + kind_name(ref(s, field)) +
                                      ", expected " + expected);
  }

  Mat<double> matrix(const json& s, const std::string& field) const {
    const Value& v = ref(s, field);
    if (const auto* m = std::get_if<Mat<double>>(&v)) return *m;
    if (const auto* sc = std::get_if<MaskedScore<double>>(&v); sc && sc->is_full()) return sc->values;
    wrong_kind(s, field, "a finite matrix");
  }

  MaskedScore<double> score(const json& s, const std::string& field) const {
    const Value& v = ref(s, field);
    if (const auto* sc = std::get_if<MaskedScore<double>>(&v)) return *sc;
    if (const auto* m = std::get_if<Mat<double>>(&v)) return MaskedScore<double>::full(*m);
    wrong_kind(s, field, "a score matrix");
  }

  EvidenceKernel<double> kernel(const json& s, const std::string& field) const {
    const Value& v = ref(s, field);
    if (const auto* k = std::get_if<EvidenceKernel<double>>(&v)) return *k;
    if (const auto* m = std::get_if<Mat<double>>(&v)) {
      if ((m->array() < 0.0).any()) invalid(where_ + "." + field, "kernel entries must be nonnegative");
      return EvidenceKernel<double>::from_values(*m);
    }
    wrong_kind(s, field, "a kernel");
  }

  TransportPlan<double> plan(const json& s, const std::string& field) const {
    const Value& v = ref(s, field);
    if (const auto* p = std::get_if<TransportPlan<double>>(&v)) return *p;
    if (const auto* k = std::get_if<EvidenceKernel<double>>(&v)) return TransportPlan<double>::from_values(k->values, k->mask);
    if (const auto* m = std::get_if<Mat<double>>(&v)) {
      if ((m->array() < 0.0).any()) invalid(where_ + "." + field, "plan entries must be nonnegative");
      return TransportPlan<double>::from_values(*m, Mask(m->array() > 0.0));
    }
    wrong_kind(s, field, "a plan");
  }

  ConditionalFamily<double> conditional(const json& s, const std::string& field) const {
    const Value& v = ref(s, field);
    if (const auto* c = std::get_if<ConditionalFamily<double>>(&v)) return *c;
    wrong_kind(s, field, "a conditional family");
  }

  Vec<double> vector(const json& s, const std::string& field) const {
    const Value& v = ref(s, field);
    if (const auto* x = std::get_if<Vec<double>>(&v)) return *x;
    if (const auto* m = std::get_if<Mat<double>>(&v); m && (m->rows() == 1 || m->cols() == 1))
      return Eigen::Map<const Vec<double>>(m->data(), m->size());
    wrong_kind(s, field, "a vector");
  }

  double number(const json& s, const std::string& key, double fallback) const {
    return s.contains(key) ? io::number_from_json(s[key], where_ + "." + key) : fallback;
  }

  Index integer(const json& s, const std::string& key) const {
    return io::integer_from_json(io::member(s, key, where_), where_ + "." + key);
  }

  std::string text(const json& s, const std::string& key, const std::string& fallback) const {
    if (!s.contains(key)) return fallback;
    if (!s[key].is_string()) invalid(where_ + "." + key, "expected a string");
    return s[key].get<std::string>();
  }

  Link<double> link(const json& s) const {
    if (!s.contains("link")) return Link<double>::exponential(number(s, "tau", 1.0));
    const json& l = s["link"];
    const std::string w = where_ + ".link";
    const std::string kind = l.is_string() ? l.get<std::string>() : text(l, "kind", "exponential");
    const double param = l.is_object() && l.contains("parameter") ? io::number_from_json(l["parameter"], w + ".parameter")
                                                                  : 1.0;
    if (kind == "exponential") {
      const double tau = l.is_object() && l.contains("tau") ? io::number_from_json(l["tau"], w + ".tau") : param;
      if (!(tau > 0.0)) invalid(w + ".tau", "temperature must be > 0");
      return Link<double>::exponential(tau);
    }
    if (kind == "softplus") return Link<double>::softplus();
    if (kind == "square_plus_one") return Link<double>::square_plus_one();
    if (kind == "exp_with_slope") return Link<double>::exp_with_slope(param);
    invalid(w, "unknown link '" + kind + "' (exponential, softplus, square_plus_one, exp_with_slope)");
  }

  BaselinePrior<double> prior(const json& s, Index rows, Index cols) const {
    if (!s.contains("prior")) return BaselinePrior<double>::ones(rows, cols);
    return {matrix(s, "prior")};
  }

  SinkhornOptions sinkhorn_options(const json& s) const {
    SinkhornOptions opt;
    opt.tol = number(s, "tol", opt.tol);
    if (s.contains("max_iter")) opt.max_iter = static_cast<int>(integer(s, "max_iter"));
    return opt;
  }

  Value run_stage(const json& s, json& summary) {
    const std::string op = s["op"].get<std::string>();
    if (op == "assemble_kernel") {
      const MaskedScore<double> sc = score(s, "score");
      return assemble_kernel(sc, prior(s, sc.rows(), sc.cols()), link(s));
    }
    if (op == "gibbs_row_anchor") {
      const MaskedScore<double> sc = score(s, "score");
      const double tau = number(s, "tau", 1.0);
      if (!(tau > 0.0)) invalid(where_ + ".tau", "temperature must be > 0");
      return gibbs_row_anchor(sc, prior(s, sc.rows(), sc.cols()), tau);
    }
    if (op == "row_anchor") return row_anchor(kernel(s, "kernel"));
    if (op == "conditional_update") return conditional_update(conditional(s, "conditional"), matrix(s, "values"));
    if (op == "sinkhorn_balanced" || op == "sinkhorn_unbalanced") {
      const EvidenceKernel<double> k = kernel(s, "kernel");
      const Marginals<double> m{vector(s, "mu_out"), vector(s, "mu_in")};
      TransportPlan<double> p =
          op == "sinkhorn_balanced"
              ? sinkhorn_balanced(k, m, sinkhorn_options(s))
              : sinkhorn_unbalanced(k, m, number(s, "lambda_out", 1.0), number(s, "lambda_in", 1.0),
                                    sinkhorn_options(s));
      summary = {{"converged", p.converged}, {"iterations", p.iterations}, {"error", p.error}};
      return p;
    }
    if (op == "plan_update") return plan_update(plan(s, "plan"), matrix(s, "values"));
    if (op == "plan_to_conditional") {
      const TransportPlan<double> p = plan(s, "plan");
      return plan_to_conditional(p, s.contains("mu_out") ? vector(s, "mu_out") : p.row_marginal);
    }
    if (op == "center_scores") {
      const std::string mode = text(s, "mode", "double");
      CenterMode m = CenterMode::Double;
      if (mode == "row") {
        m = CenterMode::Row;
      } else if (mode == "col") {
        m = CenterMode::Col;
      } else if (mode != "double") {
        invalid(where_ + ".mode", "expected row, col or double");
      }
      return center_scores(score(s, "scores"), m);
    }
    if (op == "double_center") return double_center(score(s, "scores"));
    if (op == "weighted_row_center") return weighted_row_center(score(s, "scores"), matrix(s, "weights"));
    if (op == "score_normal_form" || op == "extract_qk") {
      const Index r = integer(s, "rank");
      LowRankChart<double> c = op == "score_normal_form" ? score_normal_form(score(s, "scores"), r)
                                                         : extract_qk(matrix(s, "matrix"), r);
      summary = {{"rank", c.rank},
                 {"residual", c.frobenius_residual},
                 {"degenerate_truncation", c.degenerate_truncation}};
      return c;
    }
    if (op == "truncate") {
      const Truncation<double> t = truncate(matrix(s, "matrix"), integer(s, "rank"));
      summary = {{"residual", t.residual}, {"degenerate", t.degenerate}};
      return t.approx;
    }
    if (op == "scale_kernel") return scale_kernel(kernel(s, "kernel"), vector(s, "a"), vector(s, "b"));
    if (op == "pushforward_kernel") {
      return pushforward_kernel(kernel(s, "kernel"), refinements_.at(s["rows"].get<std::string>()),
                                refinements_.at(s["cols"].get<std::string>()));
    }
    if (op == "attention") {
      const AttentionParams<double> p = io::attention_from_json(io::member(s, "params", where_), where_ + ".params");
      const AttentionResult<double> r = attention(matrix(s, "embeddings"), p);
      summary = {{"weights", io::to_json(r.weights)}};
      return r.out;
    }
    if (op == "ffn") {
      const FfnParams<double> p = io::ffn_from_json(io::member(s, "params", where_), where_ + ".params");
      return ffn_forward_rows(matrix(s, "records"), p);
    }
    if (op == "score_from_work") {
      const Mat<double> w = matrix(s, "work");
      const Mask mask = s.contains("mask") ? Mask(matrix(s, "mask").array() != 0.0) : full_mask(w.rows(), w.cols());
      return score_from_work(w, mask);
    }
    if (op == "cycle_sum") {
      const json& gj = io::member(s, "graph", where_);
      const GaugeGraph<double> g =
          gj.is_object() && gj.contains("file")
              ? io::gauge_graph_from_json(io::read_json_file(base_ / text(gj, "file", "")), where_ + ".graph")
              : io::gauge_graph_from_json(gj, where_ + ".graph");
      const json& cj = io::member(s, "cycle", where_);
      if (!cj.is_array()) invalid(where_ + ".cycle", "expected an array of edge indices");
      std::vector<Index> cycle;
      for (std::size_t k = 0; k < cj.size(); ++k)
        cycle.push_back(io::integer_from_json(cj[k], where_ + ".cycle[" + std::to_string(k) + "]"));
      const double direct = cycle_sum(g, cycle);
      // with a vertex potential, also report the gauge-transformed holonomy
      if (g.vertex_potential) summary = {{"gauge_transformed", cycle_sum(gauge_transform(g), cycle)}};
      return direct;
    }
    if (op == "generalized_kl") {
      const Value& a = ref(s, "a");
      if (std::holds_alternative<Vec<double>>(a)) return generalized_kl(vector(s, "a"), vector(s, "b"));
      return generalized_kl(matrix(s, "a"), matrix(s, "b"));
    }
    invalid(where_ + ".op", "unhandled operation '" + op + "'");
  }

  json cfg_;
  std::filesystem::path base_;
  std::uint64_t seed_ = 0;
  std::map<std::string, Value> store_;
  std::vector<std::string> order_;
  std::map<std::string, Carrier> carriers_;
  std::map<std::string, RefinementMap> refinements_;
  std::vector<std::string> checks_;
  std::string where_;
  Index current_ = -1;
};

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::ConfigInvalid, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

}  // namespace

const std::vector<std::string>& pipeline_operations() {
  static const std::vector<std::string> ops = [] {
    std::vector<std::string> out;
    for (const auto& [name, spec] : op_table()) out.push_back(name);
    return out;
  }();
  return ops;
}

PipelineResult run_pipeline(const std::filesystem::path& config, const std::optional<std::filesystem::path>& out_dir) {
  PipelineResult result;
  json& report = result.report;
  report = {{"version", "1"}, {"status", "ok"}, {"exit_code", 0}, {"seed", nullptr},
            {"stages", json::array()}, {"outputs", json::object()}, {"checks", json::array()}, {"error", nullptr}};
  std::optional<Runner> runner;
  try {
    runner.emplace(io::read_json_file(config), config.parent_path());
    runner->load();
    report["seed"] = runner->seed();
    runner->execute(report["stages"]);
    report["outputs"] = runner->outputs();
    bool all_pass = true;
    // an absent or empty list runs nothing here, unlike `ga check`
    const std::vector<checks::CheckReport> reports =
        runner->checks().empty() ? std::vector<checks::CheckReport>{}
                                 : checks::run_checks(runner->checks(), runner->seed());
    for (const auto& r : reports) {
      report["checks"].push_back(checks::to_json(r));
      all_pass = all_pass && r.pass;
    }
    if (!all_pass) {
      result.exit_code = kExitInvariant;
      report["status"] = "invariant_failure";
    }
  } catch (const Error& e) {
    result.exit_code = exit_code_for(e.code());
    report["status"] = result.exit_code == kExitNumeric ? "numeric_failure" : "config_error";
    json err = {{"code", to_string(e.code())}, {"message", e.what()}};
    if (runner && runner->current_stage() >= 0) err["stage"] = runner->current_stage();
    report["error"] = std::move(err);
    if (runner) report["outputs"] = runner->outputs();
  }
  report["exit_code"] = result.exit_code;

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    for (const auto& [name, value] : report["outputs"].items()) write_json(*out_dir / (name + ".json"), value);
    write_json(*out_dir / "report.json", report);
  }
  return result;
}

}  // namespace ga
