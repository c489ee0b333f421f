// ga: pipeline runner, invariant checks and single-operation utilities.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ga/checks.hpp"
#include "ga/ga.hpp"
#include "ga/io.hpp"
#include "ga/pipeline.hpp"

namespace {

using ga::io::json;
using ga::io::member;

constexpr double kFfnTolerance = 1e-10;

void emit(const json& j) { std::cout << j.dump(2) << '\n'; }

int cmd_run(const std::string& config, const std::string& out) {
  const ga::PipelineResult r =
      ga::run_pipeline(config, out.empty() ? std::nullopt : std::optional<std::filesystem::path>(out));
  emit(r.report);
  return r.exit_code;
}

int cmd_check(const std::vector<std::string>& suites, std::uint64_t seed, std::optional<double> tol, bool timing) {
  const auto reports = ga::checks::run_checks(suites, seed, tol);
  json out = {{"seed", seed}, {"suites", json::array()}};
  bool pass = true;
  for (const auto& r : reports) {
    out["suites"].push_back(ga::checks::to_json(r, timing));
    pass = pass && r.pass;
  }
  out["pass"] = pass;
  emit(out);
  return pass ? ga::kExitOk : ga::kExitInvariant;
}

json head_json(const ga::AttentionResult<double>& r) {
  return {{"scores", ga::io::to_json(r.scores)}, {"weights", ga::io::to_json(r.weights)}, {"out", ga::io::to_json(r.out)}};
}

int cmd_attn(const std::string& path) {
  const json in = ga::io::read_json_file(path);
  const ga::Mat<double> e = ga::io::matrix_from_json(member(in, "embeddings", "<root>"), "embeddings");
  const bool zero_on_empty = in.value("zero_on_empty", false);
  if (in.contains("heads")) {
    const json& hs = in["heads"];
    if (!hs.is_array() || hs.empty()) throw ga::Error(ga::Errc::ConfigInvalid, "heads: expected a nonempty array");
    std::vector<ga::AttentionParams<double>> heads;
    json out = {{"heads", json::array()}};
    for (std::size_t h = 0; h < hs.size(); ++h) {
      heads.push_back(ga::io::attention_from_json(hs[h], "heads[" + std::to_string(h) + "]"));
      out["heads"].push_back(head_json(ga::attention(e, heads.back(), zero_on_empty)));
    }
    const ga::Mat<double> w_o = ga::io::matrix_from_json(member(in, "W_O", "<root>"), "W_O");
    out["out"] = ga::io::to_json(ga::multi_head(e, heads, w_o));
    emit(out);
    return ga::kExitOk;
  }
  const auto p = ga::io::attention_from_json(member(in, "params", "<root>"), "params");
  emit(head_json(ga::attention(e, p, zero_on_empty)));
  return ga::kExitOk;
}

int cmd_chart(const std::string& path) {
  const json in = ga::io::read_json_file(path);
  const ga::MaskedScore<double> s = ga::io::masked_from_json(member(in, "scores", "<root>"), "scores");
  const ga::Index r = ga::io::integer_from_json(member(in, "rank", "<root>"), "rank");
  emit(ga::io::to_json(ga::score_normal_form(s, r)));
  return ga::kExitOk;
}

int cmd_anchor(const std::string& path) {
  const json in = ga::io::read_json_file(path);
  const ga::EvidenceKernel<double> k = ga::io::kernel_from_json(member(in, "kernel", "<root>"), "kernel");
  const std::string mode = in.value("mode", std::string("balanced"));
  if (mode == "row") {
    emit({{"mode", mode}, {"weights", ga::io::to_json(ga::row_anchor(k))}});
    return ga::kExitOk;
  }
  if (mode != "balanced" && mode != "unbalanced")
    throw ga::Error(ga::Errc::ConfigInvalid, "mode: expected balanced, unbalanced or row");
  ga::SinkhornOptions opt;
  if (in.contains("tol")) opt.tol = ga::io::number_from_json(in["tol"], "tol");
  if (in.contains("max_iter")) opt.max_iter = static_cast<int>(ga::io::integer_from_json(in["max_iter"], "max_iter"));
  const ga::Marginals<double> m{ga::io::vector_from_json(member(in, "mu_out", "<root>"), "mu_out"),
                                ga::io::vector_from_json(member(in, "mu_in", "<root>"), "mu_in")};
  ga::TransportPlan<double> plan;
  if (mode == "balanced") {
    plan = ga::sinkhorn_balanced(k, m, opt);
  } else {
    const double lo = in.contains("lambda_out") ? ga::io::number_from_json(in["lambda_out"], "lambda_out") : 1.0;
    const double li = in.contains("lambda_in") ? ga::io::number_from_json(in["lambda_in"], "lambda_in") : 1.0;
    plan = ga::sinkhorn_unbalanced(k, m, lo, li, opt);
  }
  json out = ga::io::to_json(plan);
  out["mode"] = mode;
  emit(out);
  return plan.converged ? ga::kExitOk : ga::kExitNumeric;
}

int cmd_stage_run(const std::string& path) {
  const json in = ga::io::read_json_file(path);
  const ga::Mat<double> records = ga::io::matrix_from_json(member(in, "records", "<root>"), "records");
  const ga::StagedConfig<double> cfg =
      in.contains("config") ? ga::io::staged_config_from_json(in["config"], "config") : ga::StagedConfig<double>{};
  const std::string carrier = in.value("carrier", std::string("X"));
  const json& stages = member(in, "stages", "<root>");
  if (!stages.is_array()) throw ga::Error(ga::Errc::ConfigInvalid, "stages: expected an array");
  std::vector<ga::ScheduleStep<double>> schedule;
  std::string current = carrier;
  for (std::size_t t = 0; t < stages.size(); ++t) {
    const std::string w = "stages[" + std::to_string(t) + "]";
    ga::ScheduleStep<double> step;
    step.block.attention = ga::io::attention_from_json(member(stages[t], "attention", w), w + ".attention");
    step.block.ffn = ga::io::ffn_from_json(member(stages[t], "ffn", w), w + ".ffn");
    if (stages[t].contains("coarsen")) {
      const json& c = stages[t]["coarsen"];
      const std::string cw = w + ".coarsen";
      std::vector<ga::Index> map;
      const json& mj = member(c, "map", cw);
      if (!mj.is_array()) throw ga::Error(ga::Errc::ConfigInvalid, cw + ".map: expected an integer array");
      for (std::size_t i = 0; i < mj.size(); ++i)
        map.push_back(ga::io::integer_from_json(mj[i], cw + ".map[" + std::to_string(i) + "]"));
      ga::Index size = 0;
      for (ga::Index v : map) size = std::max(size, v + 1);
      if (c.contains("coarse_size")) size = ga::io::integer_from_json(c["coarse_size"], cw + ".coarse_size");
      const std::string coarse = c.value("coarse", current + "'");
      step.coarsen = ga::RefinementMap(current, coarse, std::move(map), size);
      current = coarse;
    }
    schedule.push_back(std::move(step));
  }
  const ga::StageTrace<double> trace = ga::run_schedule(records, schedule, cfg, carrier);
  json out = {{"trace", ga::io::to_json(trace)}};

  bool fixed = true;
  for (const auto& m : trace.masks) fixed = fixed && m.rows() == records.rows();
  if (fixed) {
    const ga::DepMode mode = cfg.memory == ga::MemoryKind::Markov ? ga::DepMode::Markov : ga::DepMode::Full;
    const ga::InfluenceData inf = ga::influence_relation(trace.masks, mode);
    json pre = json::array();
    for (ga::Index t = 0; t <= inf.stages(); ++t) {
      json row = json::array();
      for (ga::Index x = 0; x < records.rows(); ++x) row.push_back(ga::predecessor_set(inf, x, t));
      pre.push_back(std::move(row));
    }
    out["influence"] = {{"mode", mode == ga::DepMode::Markov ? "markov" : "full"}, {"predecessors", std::move(pre)}};
  } else {
    out["influence"] = nullptr;  // coarsened schedules change the carrier size
  }
  emit(out);
  return ga::kExitOk;
}

int cmd_ffn_check(const std::string& path) {
  const json in = ga::io::read_json_file(path);
  const ga::FfnParams<double> p = ga::io::ffn_from_json(member(in, "params", "<root>"), "params");
  ga::Mat<double> xs;
  if (in.contains("records")) {
    xs = ga::io::matrix_from_json(in["records"], "records");
  } else {
    const ga::Vec<double> x = ga::io::vector_from_json(member(in, "x", "<root>"), "x");
    xs = x.transpose();
  }
  ga::Mat<double> direct(xs.rows(), p.d_model());
  ga::Mat<double> form(xs.rows(), p.d_model());
  double dev = 0.0;
  for (ga::Index i = 0; i < xs.rows(); ++i) {
    const ga::FfnForms<double> f = ga::ffn_as_ga(ga::Vec<double>(xs.row(i).transpose()), p);
    direct.row(i) = f.direct.transpose();
    form.row(i) = f.ga_form.transpose();
    dev = std::max(dev, (f.direct - f.ga_form).cwiseAbs().maxCoeff());
  }
  const bool pass = dev <= kFfnTolerance;
  emit({{"direct", ga::io::to_json(direct)},
        {"ga_form", ga::io::to_json(form)},
        {"max_deviation", dev},
        {"threshold", kFfnTolerance},
        {"pass", pass}});
  return pass ? ga::kExitOk : ga::kExitInvariant;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometric attention toolkit"};
  app.require_subcommand(1);

  std::string config;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "Execute a pipeline config");
  run->add_option("config", config, "Pipeline JSON")->required();
  run->add_option("--out", out_dir, "Directory for stage outputs and report.json");

  std::vector<std::string> suites;
  std::uint64_t seed = 0;
  std::optional<double> tol;
  bool timing = false;
  auto* check = app.add_subcommand("check", "Run seeded invariant suites");
  check->add_option("--suite", suites, "Suite name (repeatable; default all)");
  check->add_option("--seed", seed, "RNG seed");
  check->add_option("--tol", tol, "Override every at-most threshold");
  check->add_flag("--timing", timing, "Include wall time in the report");

  std::string input;
  auto* attn = app.add_subcommand("attn", "Attention weights and outputs");
  auto* chart = app.add_subcommand("chart", "Row-anchored score normal form");
  auto* anchor = app.add_subcommand("anchor", "Row anchor or entropic transport plan");
  auto* stage = app.add_subcommand("stage-run", "Run a staged schedule and report influence");
  auto* ffn = app.add_subcommand("ffn-check", "Compare direct and plan-update FFN forms");
  for (auto* sub : {attn, chart, anchor, stage, ffn}) sub->add_option("input", input, "Input JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ga::kExitConfig;
  }

  try {
    if (*run) return cmd_run(config, out_dir);
    if (*check) return cmd_check(suites, seed, tol, timing);
    if (*attn) return cmd_attn(input);
    if (*chart) return cmd_chart(input);
    if (*anchor) return cmd_anchor(input);
    if (*stage) return cmd_stage_run(input);
    if (*ffn) return cmd_ffn_check(input);
  } catch (const ga::Error& e) {
    emit({{"error", {{"code", ga::to_string(e.code())}, {"message", e.what()}}}});
    std::cerr << "ga: " << e.what() << '\n';
    return ga::exit_code_for(e.code());
  } catch (const json::exception& e) {
    std::cerr << "ga: " << e.what() << '\n';
    return ga::kExitConfig;
  }
  return ga::kExitConfig;
}
