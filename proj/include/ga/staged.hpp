#pragma once

// Depth as staged composition: Mem / Chart / Upd / Comp, stagewise influence
// relations and the exact influence barrier.

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ga/carrier.hpp"
#include "ga/operator.hpp"
#include "ga/types.hpp"

namespace ga {

enum class MemoryKind { Markov, FullHistory };
enum class ChartKind { Identity, RmsNorm, LayerNorm };
enum class CompKind { Additive, Gated, PostNorm };

template <typename Scalar = double>
struct ChartSpec {
  ChartKind kind = ChartKind::RmsNorm;
  Scalar eps = Scalar(1e-6);
};

/// Gated: H + sigmoid([H, Delta] G + g) (.) Delta with G of shape 2d x d.
/// PostNorm: RMS-normalize H + Delta.
template <typename Scalar = double>
struct CompSpec {
  CompKind kind = CompKind::Additive;
  Mat<Scalar> gate_weights;
  Vec<Scalar> gate_bias;
  Scalar eps = Scalar(1e-6);
};

/// Linear full-history readout: alpha[t][k] is an n-vector of row gates and
/// phi[t][k] an optional n_t x n_k carrier map (absent = identity).
template <typename Scalar = double>
struct Readout {
  std::vector<std::vector<Vec<Scalar>>> alpha;
  std::vector<std::vector<std::optional<Mat<Scalar>>>> phi;
};

template <typename Scalar = double>
struct StagedConfig {
  MemoryKind memory = MemoryKind::Markov;
  ChartSpec<Scalar> chart;
  CompSpec<Scalar> comp;
  std::optional<Readout<Scalar>> readout;
  // Rows with no admissible key produce a zero update instead of EmptyRow.
  bool zero_update_on_empty = false;

  void validate() const {
    require(readout.has_value() == (memory == MemoryKind::FullHistory), Errc::InvalidArgument,
            "a readout is required exactly when memory is full_history");
  }
};

template <typename Scalar = double>
struct BlockParams {
  AttentionParams<Scalar> attention;
  FfnParams<Scalar> ffn;
};

template <typename Scalar>
Mat<Scalar> apply_chart(const Mat<Scalar>& h, const ChartSpec<Scalar>& chart) {
  if (chart.kind == ChartKind::Identity) return h;
  Mat<Scalar> out(h.rows(), h.cols());
  for (Index i = 0; i < h.rows(); ++i) {
    if (chart.kind == ChartKind::RmsNorm) {
      const Scalar rms = std::sqrt(h.row(i).squaredNorm() / Scalar(h.cols()) + chart.eps);
      out.row(i) = h.row(i) / rms;
    } else {
      const Scalar mean = h.row(i).mean();
      const auto centered = (h.row(i).array() - mean).matrix();
      const Scalar sd = std::sqrt(centered.squaredNorm() / Scalar(h.cols()) + chart.eps);
      out.row(i) = centered / sd;
    }
  }
  return out;
}

template <typename Scalar>
Mat<Scalar> compose(const Mat<Scalar>& h, const Mat<Scalar>& delta, const CompSpec<Scalar>& comp) {
  require(h.rows() == delta.rows() && h.cols() == delta.cols(), Errc::ShapeMismatch,
          "update shape " + shape_string(delta.rows(), delta.cols()) + " differs from state " +
              shape_string(h.rows(), h.cols()));
  switch (comp.kind) {
    case CompKind::Additive: return h + delta;
    case CompKind::Gated: {
      const Index d = h.cols();
      require(comp.gate_weights.rows() == 2 * d && comp.gate_weights.cols() == d, Errc::ShapeMismatch,
              "gate weights must be 2d x d");
      Mat<Scalar> joined(h.rows(), 2 * d);
      joined << h, delta;
      Mat<Scalar> z = joined * comp.gate_weights;
      if (comp.gate_bias.size() != 0) {
        require(comp.gate_bias.size() == d, Errc::ShapeMismatch, "gate bias must have length d");
        z.rowwise() += comp.gate_bias.transpose();
      }
      const Mat<Scalar> gate = (Scalar(1) / (Scalar(1) + (-z.array()).exp())).matrix();
      return h + gate.cwiseProduct(delta);
    }
    case CompKind::PostNorm: return apply_chart(Mat<Scalar>(h + delta), ChartSpec<Scalar>{ChartKind::RmsNorm, comp.eps});
  }
  return h + delta;
}

/// Two sublayers under one interface: R1 = Comp(H, Attn(Chart(H))),
/// R' = Comp(R1, FFN(Chart(R1))). Additive comp with a norm chart is PreNorm.
template <typename Scalar>
Mat<Scalar> run_block(const Mat<Scalar>& h, const AttentionParams<Scalar>& attn, const FfnParams<Scalar>& ffn,
                      const StagedConfig<Scalar>& cfg) {
  require(attn.W_V.cols() == h.cols(), Errc::ShapeMismatch, "attention value width must equal d_model");
  const Mat<Scalar> delta_attn = attention(apply_chart(h, cfg.chart), attn, cfg.zero_update_on_empty).out;
  const Mat<Scalar> r1 = compose(h, delta_attn, cfg.comp);
  const Mat<Scalar> delta_ffn = ffn_forward_rows(apply_chart(r1, cfg.chart), ffn);
  return compose(r1, delta_ffn, cfg.comp);
}

/// sum_k alpha_k (.) Phi_k(R_k), row-gated.
template <typename Scalar>
Mat<Scalar> full_history_readout(const std::vector<Mat<Scalar>>& records, const std::vector<Vec<Scalar>>& alpha,
                                 const std::vector<std::optional<Mat<Scalar>>>& phi) {
  require(!records.empty(), Errc::InvalidArgument, "empty record history");
  require(alpha.size() == records.size(), Errc::ShapeMismatch,
          "readout gates cover " + std::to_string(alpha.size()) + " of " + std::to_string(records.size()) +
              " records");
  require(phi.empty() || phi.size() == records.size(), Errc::ShapeMismatch, "readout maps do not cover history");
  const Index n = alpha.front().size();
  const Index d = records.back().cols();
  Mat<Scalar> out = Mat<Scalar>::Zero(n, d);
  for (std::size_t k = 0; k < records.size(); ++k) {
    const bool mapped = !phi.empty() && phi[k].has_value();
    const Mat<Scalar> placed = mapped ? Mat<Scalar>(*phi[k] * records[k]) : records[k];
    require(placed.rows() == n && placed.cols() == d && alpha[k].size() == n, Errc::ShapeMismatch,
            "history entry " + std::to_string(k) + " does not fit the stage carrier", static_cast<Index>(k));
    for (Index i = 0; i < n; ++i) out.row(i) += alpha[k](i) * placed.row(i);
  }
  return out;
}

template <typename Scalar>
Mat<Scalar> memory_state(const std::vector<Mat<Scalar>>& history, const StagedConfig<Scalar>& cfg) {
  if (cfg.memory == MemoryKind::Markov) return history.back();
  const std::size_t t = history.size() - 1;
  const Readout<Scalar>& r = *cfg.readout;
  require(t < r.alpha.size(), Errc::ShapeMismatch, "readout has no gates for stage " + std::to_string(t));
  static const std::vector<std::optional<Mat<Scalar>>> none;
  return full_history_readout(history, r.alpha[t], t < r.phi.size() ? r.phi[t] : none);
}

template <typename Scalar = double>
struct StageTrace {
  std::vector<Mat<Scalar>> records;  // R_0 .. R_T, after any pooling
  std::vector<Mask> masks;           // admissible relation used at stage t
  std::vector<EvidenceKernel<Scalar>> working_kernels;
  std::vector<std::string> carriers;  // carrier id of each record
};

/// Fixed-carrier staged run of `blocks.size()` stages.
template <typename Scalar>
StageTrace<Scalar> run_stages(const Mat<Scalar>& initial, const std::vector<BlockParams<Scalar>>& blocks,
                              const StagedConfig<Scalar>& cfg) {
  cfg.validate();
  StageTrace<Scalar> trace;
  trace.records.push_back(initial);
  trace.carriers.emplace_back("X");
  for (const auto& block : blocks) {
    const Index n = trace.records.back().rows();
    const Mask mask = block.attention.mask.size() == 0 ? full_mask(n, n) : block.attention.mask;
    trace.masks.push_back(mask);
    trace.working_kernels.push_back(EvidenceKernel<Scalar>{mask.template cast<Scalar>().matrix(), mask});
    trace.records.push_back(run_block(memory_state(trace.records, cfg), block.attention, block.ffn, cfg));
    trace.carriers.emplace_back("X");
  }
  return trace;
}

enum class DepMode { Markov, Full };

struct InfluenceData {
  DepMode mode = DepMode::Markov;
  // relations[t](x, u) == true  <=>  (x <- u) in Inf_t
  std::vector<Mask> relations;

  Index size() const { return relations.empty() ? 0 : relations.front().rows(); }
  Index stages() const { return static_cast<Index>(relations.size()); }
};

/// Markov: Inf_t is the stage-t admissible relation. Full: complete relation.
inline InfluenceData influence_relation(const std::vector<Mask>& masks, DepMode mode) {
  InfluenceData inf;
  inf.mode = mode;
  for (std::size_t t = 0; t < masks.size(); ++t) {
    const Mask& m = masks[t];
    require(m.rows() == m.cols(), Errc::NonSquareMask,
            "stage " + std::to_string(t) + " mask is " + shape_string(m.rows(), m.cols()), static_cast<Index>(t));
    require(t == 0 || m.rows() == masks.front().rows(), Errc::ShapeMismatch, "stage masks change size");
    inf.relations.push_back(mode == DepMode::Markov ? m : full_mask(m.rows(), m.cols()));
  }
  return inf;
}

/// Inf_{t-1} o ... o Inf_0 as a boolean matrix; identity for t = 0.
inline Mask composed_influence(const InfluenceData& inf, Index t) {
  require(t >= 0 && t <= inf.stages(), Errc::IndexOutOfRange, "stage count " + std::to_string(t), t);
  const Index n = inf.size();
  Mask reach = Mask::Constant(n, n, false);
  for (Index i = 0; i < n; ++i) reach(i, i) = true;
  for (Index s = t - 1; s >= 0; --s) {
    // (x <- u) iff exists y, (x <- y) in reach and (y <- u) in Inf_s
    const Mask& rel = inf.relations[static_cast<std::size_t>(s)];
    Mask next = Mask::Constant(n, n, false);
    for (Index x = 0; x < n; ++x)
      for (Index y = 0; y < n; ++y)
        if (reach(x, y)) next.row(x) = next.row(x) || rel.row(y);
    reach = std::move(next);
  }
  return reach;
}

/// Pre_t(x) by iterated boolean vector-matrix products, sorted ascending.
inline std::vector<Index> predecessor_set(const InfluenceData& inf, Index x, Index t) {
  require(t >= 0 && t <= inf.stages(), Errc::IndexOutOfRange, "stage " + std::to_string(t), t);
  require(x >= 0 && x < inf.size(), Errc::IndexOutOfRange, "carrier index " + std::to_string(x), x);
  const Index n = inf.size();
  Eigen::Array<bool, 1, Eigen::Dynamic> frontier = Eigen::Array<bool, 1, Eigen::Dynamic>::Constant(n, false);
  frontier(x) = true;
  for (Index s = t - 1; s >= 0; --s) {
    const Mask& rel = inf.relations[static_cast<std::size_t>(s)];
    Eigen::Array<bool, 1, Eigen::Dynamic> next = Eigen::Array<bool, 1, Eigen::Dynamic>::Constant(n, false);
    for (Index y = 0; y < n; ++y)
      if (frontier(y)) next = next || rel.row(y);
    frontier = std::move(next);
  }
  std::vector<Index> out;
  for (Index u = 0; u < n; ++u)
    if (frontier(u)) out.push_back(u);
  return out;
}

template <typename Scalar = double>
struct StagedRun {
  Mat<Scalar> initial;
  std::vector<BlockParams<Scalar>> blocks;
  StagedConfig<Scalar> config;
};

/// Dual run: R_0 versus R_0 with `delta` added to row u. True iff the
/// stage-t record at x is bitwise identical in both runs.
template <typename Scalar>
bool barrier_check(const StagedRun<Scalar>& run, Index x, Index t, Index u, const Vec<Scalar>& delta) {
  require(t >= 0 && t <= static_cast<Index>(run.blocks.size()), Errc::IndexOutOfRange, "stage", t);
  require(x >= 0 && x < run.initial.rows() && u >= 0 && u < run.initial.rows(), Errc::IndexOutOfRange,
          "carrier index out of range");
  require(delta.size() == run.initial.cols(), Errc::ShapeMismatch, "perturbation width differs from d_model");
  const std::vector<BlockParams<Scalar>> prefix(run.blocks.begin(), run.blocks.begin() + t);
  Mat<Scalar> perturbed = run.initial;
  perturbed.row(u) += delta.transpose();
  const Mat<Scalar> a = run_stages(run.initial, prefix, run.config).records.back();
  const Mat<Scalar> b = run_stages(perturbed, prefix, run.config).records.back();
  return (a.row(x).array() == b.row(x).array()).all();
}

/// Bucket means of record rows under a coarse-graining.
template <typename Scalar>
Mat<Scalar> mean_pool(const Mat<Scalar>& records, const RefinementMap& rho) {
  require(records.rows() == rho.fine_size(), Errc::CarrierMismatch, "record rows differ from refinement domain");
  Mat<Scalar> out = Mat<Scalar>::Zero(rho.coarse_size(), records.cols());
  Vec<Scalar> counts = Vec<Scalar>::Zero(rho.coarse_size());
  for (Index i = 0; i < records.rows(); ++i) {
    out.row(rho(i)) += records.row(i);
    counts(rho(i)) += Scalar(1);
  }
  for (Index c = 0; c < out.rows(); ++c) out.row(c) /= counts(c);
  return out;
}

template <typename Scalar = double>
struct ScheduleStep {
  BlockParams<Scalar> block;  // an empty attention mask means "use the working mask"
  std::optional<RefinementMap> coarsen;
};

/// Scale-walk: runs the stages in order; after a step with `coarsen`, the
/// working admissibility kernel is pushed forward and records are
/// mean-pooled into the coarse buckets.
template <typename Scalar>
StageTrace<Scalar> run_schedule(const Mat<Scalar>& initial, const std::vector<ScheduleStep<Scalar>>& schedule,
                                const StagedConfig<Scalar>& cfg, const std::string& carrier = "X") {
  cfg.validate();
  StageTrace<Scalar> trace;
  trace.records.push_back(initial);
  trace.carriers.push_back(carrier);
  const Index n0 = initial.rows();
  Mask working = full_mask(n0, n0);
  for (std::size_t t = 0; t < schedule.size(); ++t) {
    const ScheduleStep<Scalar>& step = schedule[t];
    const Index n = trace.records.back().rows();
    AttentionParams<Scalar> attn = step.block.attention;
    if (attn.mask.size() == 0) attn.mask = working;
    require(attn.mask.rows() == n && attn.mask.cols() == n, Errc::CarrierMismatch,
            "stage " + std::to_string(t) + " mask does not match carrier size " + std::to_string(n),
            static_cast<Index>(t));
    const EvidenceKernel<Scalar> kernel{attn.mask.template cast<Scalar>().matrix(), attn.mask};
    trace.masks.push_back(attn.mask);
    trace.working_kernels.push_back(kernel);
    Mat<Scalar> next = run_block(memory_state(trace.records, cfg), attn, step.block.ffn, cfg);
    std::string id = trace.carriers.back();
    if (step.coarsen) {
      const RefinementMap& rho = *step.coarsen;
      require(rho.fine() == id && rho.fine_size() == n, Errc::CarrierMismatch,
              "refinement '" + rho.fine() + "->" + rho.coarse() + "' does not start at carrier '" + id + "'",
              static_cast<Index>(t));
      working = pushforward_kernel(kernel, rho, rho).mask;
      next = mean_pool(next, rho);
      id = rho.coarse();
    } else {
      working = attn.mask;
    }
    trace.records.push_back(std::move(next));
    trace.carriers.push_back(id);
  }
  return trace;
}

}  // namespace ga
