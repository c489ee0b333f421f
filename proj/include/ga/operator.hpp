#pragma once

// Update operators: plan/conditional updates, attention, FFN and mixtures.

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ga/anchor.hpp"
#include "ga/carrier.hpp"
#include "ga/score.hpp"
#include "ga/types.hpp"

namespace ga {

/// Values on the key carrier, one row per key.
template <typename Scalar = double>
using ValueField = Mat<Scalar>;

/// Linear maps T_{y->x} applied to v(y) before aggregation at x.
template <typename Scalar = double>
class AlignmentMaps {
 public:
  static constexpr std::size_t kMaxEntries = 1'000'000;

  AlignmentMaps() = default;

  static AlignmentMaps identity() { return {}; }

  static AlignmentMaps per_edge(std::map<std::pair<Index, Index>, Mat<Scalar>> table) {
    std::size_t entries = 0;
    for (const auto& [edge, t] : table) {
      require(t.rows() == t.cols(), Errc::ShapeMismatch, "alignment maps must be square");
      entries += static_cast<std::size_t>(t.size());
    }
    require(entries <= kMaxEntries, Errc::AlignmentTooLarge,
            "per-edge alignment table holds " + std::to_string(entries) + " entries (limit 1e6)");
    AlignmentMaps m;
    m.table_ = std::move(table);
    m.per_edge_ = true;
    return m;
  }

  bool is_identity() const { return !per_edge_; }

  const Mat<Scalar>& at(Index x, Index y) const {
    const auto it = table_.find({x, y});
    require(it != table_.end(), Errc::MissingAlignment,
            "no alignment map for pair (" + std::to_string(x) + ", " + std::to_string(y) + ")", x);
    return it->second;
  }

 private:
  std::map<std::pair<Index, Index>, Mat<Scalar>> table_;
  bool per_edge_ = false;
};

namespace detail {

// out(x) = sum over admissible y of W(x,y) T_{y->x} v(y). Only admissible
// entries are read.
template <typename Scalar>
Mat<Scalar> apply_weights(const Mat<Scalar>& w, const Mask& mask, const ValueField<Scalar>& v,
                          const AlignmentMaps<Scalar>& t) {
  require(v.rows() == w.cols(), Errc::ShapeMismatch,
          "value field has " + std::to_string(v.rows()) + " rows, operator expects " + std::to_string(w.cols()));
  require_shape(mask, w.rows(), w.cols(), "operator mask");
  Mat<Scalar> out = Mat<Scalar>::Zero(w.rows(), v.cols());
  for (Index x = 0; x < w.rows(); ++x) {
    for (Index y = 0; y < w.cols(); ++y) {
      if (!mask(x, y)) continue;
      if (t.is_identity()) {
        out.row(x) += w(x, y) * v.row(y);
      } else {
        const Mat<Scalar>& map = t.at(x, y);
        require(map.cols() == v.cols(), Errc::ShapeMismatch, "alignment map width differs from value dimension");
        out.row(x) += w(x, y) * (map * v.row(y).transpose()).transpose();
      }
    }
  }
  return out;
}

}  // namespace detail

template <typename Scalar>
Mat<Scalar> plan_update(const TransportPlan<Scalar>& plan, const ValueField<Scalar>& v,
                        const AlignmentMaps<Scalar>& t = {}) {
  return detail::apply_weights(plan.values, plan.mask, v, t);
}

template <typename Scalar>
Mat<Scalar> plan_update(const EvidenceKernel<Scalar>& k, const ValueField<Scalar>& v,
                        const AlignmentMaps<Scalar>& t = {}) {
  return detail::apply_weights(k.values, k.mask, v, t);
}

template <typename Scalar>
Mat<Scalar> conditional_update(const ConditionalFamily<Scalar>& pi, const ValueField<Scalar>& v,
                               const AlignmentMaps<Scalar>& t = {}) {
  return detail::apply_weights(pi.values, pi.mask, v, t);
}

/// Queries/keys/values by right-multiplication of row embeddings. Empty
/// key_bias means zero, empty prior means all ones, empty mask means full.
/// `score_scale` defaults to 1/sqrt(d_k); it is redundant with tau and both
/// are kept.
template <typename Scalar = double>
struct AttentionParams {
  Mat<Scalar> W_Q;  // d_model x d_k
  Mat<Scalar> W_K;  // d_model x d_k
  Mat<Scalar> W_V;  // d_model x d_v
  Scalar tau = Scalar(1);
  Vec<Scalar> key_bias;
  Mat<Scalar> prior;
  Mask mask;
  std::optional<Scalar> score_scale;

  Scalar scale() const { return score_scale.value_or(Scalar(1) / std::sqrt(Scalar(W_Q.cols()))); }
};

template <typename Scalar = double>
struct AttentionResult {
  MaskedScore<Scalar> scores;
  ConditionalFamily<Scalar> weights;
  Mat<Scalar> out;
};

/// Scores S(i,j) = scale q_i.k_j + b(j) on the mask.
template <typename Scalar>
MaskedScore<Scalar> attention_scores(const Mat<Scalar>& embeddings, const AttentionParams<Scalar>& p) {
  const Index n = embeddings.rows();
  require(p.W_Q.rows() == embeddings.cols() && p.W_K.rows() == embeddings.cols() &&
              p.W_V.rows() == embeddings.cols(),
          Errc::ShapeMismatch, "projection matrices must have d_model rows");
  require(p.W_Q.cols() == p.W_K.cols(), Errc::ShapeMismatch, "W_Q and W_K must share d_k");
  require(p.key_bias.size() == 0 || p.key_bias.size() == n, Errc::ShapeMismatch, "key bias length must be n");
  const Mask mask = p.mask.size() == 0 ? full_mask(n, n) : p.mask;
  require_shape(mask, n, n, "attention mask");
  const Mat<Scalar> q = embeddings * p.W_Q;
  const Mat<Scalar> k = embeddings * p.W_K;
  const Scalar scale = p.scale();
  MaskedScore<Scalar> s{Mat<Scalar>::Zero(n, n), mask};
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      if (!mask(i, j)) continue;
      s.values(i, j) = scale * q.row(i).dot(k.row(j));
      if (p.key_bias.size() != 0) s.values(i, j) += p.key_bias(j);
    }
  return s;
}

/// Row-anchored Gibbs attention: softmax over S/tau + log prior restricted
/// to the mask, then a conditional update of the projected values. With
/// `zero_on_empty`, rows without admissible keys produce a zero update.
template <typename Scalar>
AttentionResult<Scalar> attention(const Mat<Scalar>& embeddings, const AttentionParams<Scalar>& p,
                                  bool zero_on_empty = false) {
  const Index n = embeddings.rows();
  AttentionResult<Scalar> r;
  r.scores = attention_scores(embeddings, p);
  const BaselinePrior<Scalar> prior =
      p.prior.size() == 0 ? BaselinePrior<Scalar>::ones(n, n) : BaselinePrior<Scalar>{p.prior};
  r.weights = gibbs_row_anchor(r.scores, prior, p.tau, zero_on_empty);
  r.out = conditional_update(r.weights, Mat<Scalar>(embeddings * p.W_V));
  return r;
}

/// Concatenated head outputs times W_O.
template <typename Scalar>
Mat<Scalar> multi_head(const Mat<Scalar>& embeddings, const std::vector<AttentionParams<Scalar>>& heads,
                       const Mat<Scalar>& w_o) {
  require(!heads.empty(), Errc::InvalidArgument, "no attention heads");
  Index width = 0;
  for (const auto& h : heads) width += h.W_V.cols();
  require(w_o.rows() == width, Errc::ShapeMismatch,
          "W_O has " + std::to_string(w_o.rows()) + " rows, heads produce " + std::to_string(width));
  Mat<Scalar> concat(embeddings.rows(), width);
  Index col = 0;
  for (const auto& h : heads) {
    const Mat<Scalar> out = attention(embeddings, h).out;
    concat.middleCols(col, out.cols()) = out;
    col += out.cols();
  }
  return concat * w_o;
}

enum class Activation { Relu, Gelu, Tanh };

template <typename Scalar>
Scalar activate(Activation a, Scalar x) {
  switch (a) {
    case Activation::Relu: return x > Scalar(0) ? x : Scalar(0);
    case Activation::Gelu: return Scalar(0.5) * x * (Scalar(1) + std::erf(x / std::sqrt(Scalar(2))));
    case Activation::Tanh: return std::tanh(x);
  }
  return x;
}

template <typename Scalar = double>
struct FfnParams {
  Mat<Scalar> W1;  // d_ff x d_model
  Vec<Scalar> b1;  // d_ff
  Mat<Scalar> W2;  // d_model x d_ff
  Vec<Scalar> b2;  // d_model
  Activation activation = Activation::Relu;

  Index d_model() const { return W1.cols(); }
  Index d_ff() const { return W1.rows(); }

  void validate() const {
    require(b1.size() == d_ff() && W2.rows() == d_model() && W2.cols() == d_ff() && b2.size() == d_model(),
            Errc::ShapeMismatch, "inconsistent FFN parameter shapes");
  }
};

template <typename Scalar>
Vec<Scalar> ffn_hidden(const Vec<Scalar>& x, const FfnParams<Scalar>& p) {
  p.validate();
  require(x.size() == p.d_model(), Errc::ShapeMismatch, "FFN input length differs from d_model");
  Vec<Scalar> h = p.W1 * x + p.b1;
  for (Index j = 0; j < h.size(); ++j) h(j) = activate(p.activation, h(j));
  return h;
}

/// W2 phi(W1 x + b1) + b2
template <typename Scalar>
Vec<Scalar> ffn_forward(const Vec<Scalar>& x, const FfnParams<Scalar>& p) {
  return p.W2 * ffn_hidden(x, p) + p.b2;
}

/// Row-wise FFN over a record.
template <typename Scalar>
Mat<Scalar> ffn_forward_rows(const Mat<Scalar>& records, const FfnParams<Scalar>& p) {
  Mat<Scalar> out(records.rows(), p.d_model());
  for (Index i = 0; i < records.rows(); ++i)
    out.row(i) = ffn_forward(Vec<Scalar>(records.row(i).transpose()), p).transpose();
  return out;
}

template <typename Scalar = double>
struct FfnForms {
  Vec<Scalar> direct;
  Vec<Scalar> ga_form;
  EvidenceKernel<Scalar> kernel;  // 1 x 2 d_ff over the signed hidden carrier
  ValueField<Scalar> values;      // 2 d_ff x d_model: +w_j then -w_j
};

/// Evaluates the FFN directly and as a plan update over the signed hidden
/// carrier (+, j) | (-, j) with weights max(+-phi, 0) and values +-w_j.
template <typename Scalar>
FfnForms<Scalar> ffn_as_ga(const Vec<Scalar>& x, const FfnParams<Scalar>& p) {
  FfnForms<Scalar> f;
  const Vec<Scalar> h = ffn_hidden(x, p);
  f.direct = p.W2 * h + p.b2;
  const Index d_ff = p.d_ff();
  Mat<Scalar> k(1, 2 * d_ff);
  f.values.resize(2 * d_ff, p.d_model());
  for (Index j = 0; j < d_ff; ++j) {
    k(0, j) = std::max(h(j), Scalar(0));
    k(0, d_ff + j) = std::max(-h(j), Scalar(0));
    f.values.row(j) = p.W2.col(j).transpose();
    f.values.row(d_ff + j) = -p.W2.col(j).transpose();
  }
  f.kernel = EvidenceKernel<Scalar>::from_values(std::move(k));
  f.ga_form = plan_update(f.kernel, f.values).row(0).transpose() + p.b2;
  return f;
}

template <typename Scalar = double>
struct ConditionalMixture {
  Mat<Scalar> out;
  ConditionalFamily<Scalar> flattened;  // n_x x sum of branch widths, branch-major
  ValueField<Scalar> flattened_values;
  BranchCarrier carrier;
};

/// Gate-weighted sum of conditional updates, plus the single conditional
/// family on the branch-union carrier that reproduces it.
template <typename Scalar>
ConditionalMixture<Scalar> gated_mixture_conditional(
    const Mat<Scalar>& gates, const std::vector<std::pair<ConditionalFamily<Scalar>, ValueField<Scalar>>>& branches) {
  const Index n = gates.rows();
  const Index nb = static_cast<Index>(branches.size());
  require(nb > 0 && gates.cols() == nb, Errc::ShapeMismatch, "gate matrix needs one column per branch");
  for (Index x = 0; x < n; ++x) {
    require((gates.row(x).array() >= Scalar(0)).all() && std::abs(gates.row(x).sum() - Scalar(1)) <= Scalar(1e-12),
            Errc::GateNotStochastic, "gate row " + std::to_string(x) + " is not a distribution", x);
  }
  std::vector<std::pair<std::string, Carrier>> tagged;
  Index width = 0;
  const Index d = branches.front().second.cols();
  for (Index b = 0; b < nb; ++b) {
    const auto& [pi, v] = branches[static_cast<std::size_t>(b)];
    require(pi.rows() == n && v.rows() == pi.cols() && v.cols() == d, Errc::ShapeMismatch,
            "branch " + std::to_string(b) + " has inconsistent shapes", b);
    tagged.emplace_back("b" + std::to_string(b), Carrier::indexed("branch" + std::to_string(b), pi.cols()));
    width += pi.cols();
  }
  BranchCarrier carrier = branch_union(std::move(tagged));

  ConditionalMixture<Scalar> m{Mat<Scalar>::Zero(n, d),
                               {Mat<Scalar>::Zero(n, width), Mask::Constant(n, width, false)},
                               ValueField<Scalar>(width, d),
                               std::move(carrier)};
  for (Index b = 0; b < nb; ++b) {
    const auto& [pi, v] = branches[static_cast<std::size_t>(b)];
    const Index off = m.carrier.offset(b);
    const Mat<Scalar> update = conditional_update(pi, v);
    for (Index x = 0; x < n; ++x) {
      m.out.row(x) += gates(x, b) * update.row(x);
      for (Index y = 0; y < pi.cols(); ++y) {
        m.flattened.values(x, off + y) = gates(x, b) * pi.values(x, y);
        m.flattened.mask(x, off + y) = pi.mask(x, y);
      }
    }
    m.flattened_values.middleRows(off, v.rows()) = v;
  }
  return m;
}

template <typename Scalar = double>
struct PlanMixture {
  Mat<Scalar> out;
  EvidenceKernel<Scalar> flattened;  // K(x,(b,y)) = beta(x,b) K_b(x,y)
  ValueField<Scalar> flattened_values;
  BranchCarrier carrier;
};

/// Nonnegative-gated sum of plan updates, plus the flattened kernel that
/// reproduces it as one plan update.
template <typename Scalar>
PlanMixture<Scalar> gated_mixture_plan(
    const Mat<Scalar>& gates, const std::vector<std::pair<EvidenceKernel<Scalar>, ValueField<Scalar>>>& branches) {
  const Index n = gates.rows();
  const Index nb = static_cast<Index>(branches.size());
  require(nb > 0 && gates.cols() == nb, Errc::ShapeMismatch, "gate matrix needs one column per branch");
  require((gates.array() >= Scalar(0)).all(), Errc::NegativeGate, "plan mixture gates must be nonnegative");
  std::vector<std::pair<std::string, Carrier>> tagged;
  Index width = 0;
  const Index d = branches.front().second.cols();
  for (Index b = 0; b < nb; ++b) {
    const auto& [k, v] = branches[static_cast<std::size_t>(b)];
    require(k.rows() == n && v.rows() == k.cols() && v.cols() == d, Errc::ShapeMismatch,
            "branch " + std::to_string(b) + " has inconsistent shapes", b);
    tagged.emplace_back("b" + std::to_string(b), Carrier::indexed("branch" + std::to_string(b), k.cols()));
    width += k.cols();
  }
  BranchCarrier carrier = branch_union(std::move(tagged));

  Mat<Scalar> flat = Mat<Scalar>::Zero(n, width);
  PlanMixture<Scalar> m{Mat<Scalar>::Zero(n, d), {}, ValueField<Scalar>(width, d), std::move(carrier)};
  for (Index b = 0; b < nb; ++b) {
    const auto& [k, v] = branches[static_cast<std::size_t>(b)];
    const Index off = m.carrier.offset(b);
    const Mat<Scalar> update = plan_update(k, v);
    for (Index x = 0; x < n; ++x) {
      m.out.row(x) += gates(x, b) * update.row(x);
      for (Index y = 0; y < k.cols(); ++y)
        if (k.mask(x, y)) flat(x, off + y) = gates(x, b) * k.values(x, y);
    }
    m.flattened_values.middleRows(off, v.rows()) = v;
  }
  // A zero gate removes the branch pairs from the support.
  m.flattened = EvidenceKernel<Scalar>::from_values(std::move(flat));
  return m;
}

template <typename Scalar = double>
struct IntegralView {
  // mu_x as (y, mass) atoms over the admissible support of row x
  std::vector<std::vector<std::pair<Index, Scalar>>> measures;
  Vec<Scalar> total_mass;
  Mat<Scalar> integrals;       // int v d mu_x
  std::vector<bool> normalizable;
  Mat<Scalar> normalized;      // int v d pi_x on rows with positive mass, 0 elsewhere
};

template <typename Scalar>
IntegralView<Scalar> integral_view(const EvidenceKernel<Scalar>& k, const ValueField<Scalar>& v) {
  IntegralView<Scalar> view;
  view.measures.resize(static_cast<std::size_t>(k.rows()));
  for (Index x = 0; x < k.rows(); ++x)
    for (Index y = 0; y < k.cols(); ++y)
      if (k.mask(x, y)) view.measures[static_cast<std::size_t>(x)].emplace_back(y, k.values(x, y));
  view.total_mass = row_mass(k);
  view.integrals = plan_update(k, v);
  view.normalizable.resize(static_cast<std::size_t>(k.rows()));
  view.normalized = Mat<Scalar>::Zero(k.rows(), v.cols());
  ConditionalFamily<Scalar> pi{Mat<Scalar>::Zero(k.rows(), k.cols()), k.mask};
  for (Index x = 0; x < k.rows(); ++x) {
    const bool ok = view.total_mass(x) > Scalar(0);
    view.normalizable[static_cast<std::size_t>(x)] = ok;
    if (ok)
      for (Index y = 0; y < k.cols(); ++y)
        if (k.mask(x, y)) pi.values(x, y) = k.values(x, y) / view.total_mass(x);
  }
  view.normalized = conditional_update(pi, v);
  return view;
}

}  // namespace ga
