#include "ga/checks.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <chrono>
#include <deque>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "ga/ga.hpp"
#include "ga/sampling.hpp"

namespace ga::checks {

namespace {

using sample::Rng;
using M = Mat<double>;
using V = Vec<double>;

// Worst-case accumulator for one property. `exists` properties pass when
// some instance clears the bar, the others need every instance to.
class Tracker {
 public:
  Tracker(std::string name, double threshold, Comparison cmp = Comparison::AtMost, bool exists = false) {
    r_.name = std::move(name);
    r_.threshold = threshold;
    r_.comparison = cmp;
    track_max_ = cmp == Comparison::AtMost || exists;
    r_.deviation = track_max_ ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
  }

  void observe(double value, const std::string& witness) {
    if (nan_) return;
    if (std::isnan(value)) {
      nan_ = true;
      r_.witness = witness + " (NaN)";
      return;
    }
    const bool worse = track_max_ ? value > r_.deviation : value < r_.deviation;
    if (worse) {
      r_.deviation = value;
      r_.witness = witness;
    }
  }

  PropertyResult finish(std::optional<double> tol) const {
    PropertyResult out = r_;
    if (tol && out.comparison == Comparison::AtMost) out.threshold = *tol;
    if (!std::isfinite(out.deviation) && !nan_) out.deviation = 0.0;  // nothing observed
    if (nan_) {
      out.deviation = std::numeric_limits<double>::quiet_NaN();
      out.pass = false;
    } else if (out.comparison == Comparison::AtMost) {
      out.pass = out.deviation <= out.threshold;
    } else {
      out.pass = out.deviation >= out.threshold;
    }
    return out;
  }

 private:
  PropertyResult r_;
  bool track_max_ = true;
  bool nan_ = false;
};

struct SuiteState {
  int cases = 0;
  std::deque<Tracker> props;  // stable references across add()
  std::vector<std::string> notes;

  Tracker& add(std::string name, double threshold, Comparison cmp = Comparison::AtMost, bool exists = false) {
    props.emplace_back(std::move(name), threshold, cmp, exists);
    return props.back();
  }
};

std::string tag(int c, const std::string& extra = {}) {
  std::string s = "case " + std::to_string(c);
  if (!extra.empty()) s += " (" + extra + ")";
  return s;
}

double max_abs(const M& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

MaskedScore<double> random_masked(Rng& rng, const Mask& mask, double lo, double hi) {
  M v = sample::matrix(rng, mask.rows(), mask.cols(), lo, hi);
  for (Index j = 0; j < v.cols(); ++j)
    for (Index i = 0; i < v.rows(); ++i)
      if (!mask(i, j)) v(i, j) = 0.0;
  return {v, mask};
}

V positive_vector(Rng& rng, Index n, double spread) {
  return sample::vector(rng, n, -spread, spread).array().exp().matrix();
}

// ---------------------------------------------------------------- gauge

void suite_gauge(Rng& rng, SuiteState& st) {
  auto& shift = st.add("row shift leaves anchored weights unchanged", 1e-12);
  auto& scaling = st.add("left kernel scaling leaves anchored weights unchanged", 1e-12);
  auto& gibbs = st.add("log-domain Gibbs anchor matches direct normalization", 1e-12);
  auto& recover = st.add("row-equivalence recovers the left scaling (relative)", 1e-10);
  for (int c = 0; c < 100; ++c, ++st.cases) {
    const Index n = sample::integer(rng, 1, 64);
    const Index m = sample::integer(rng, 1, 64);
    const double density = sample::uniform(rng, 0.2, 1.0);
    const Mask mask = sample::mask(rng, n, m, density);
    const MaskedScore<double> s = random_masked(rng, mask, -3.0, 3.0);
    const BaselinePrior<double> prior{sample::matrix(rng, n, m, 0.5, 2.0)};
    const double tau = sample::uniform(rng, 0.3, 2.0);
    const auto link = Link<double>::exponential(tau);
    const std::string w = tag(c, shape_string(n, m));

    MaskedScore<double> shifted = s;
    shifted.values.colwise() += sample::vector(rng, n, -5.0, 5.0);
    const EvidenceKernel<double> k = assemble_kernel(s, prior, link);
    const ConditionalFamily<double> pi = row_anchor(k);
    shift.observe(max_abs(pi.values - row_anchor(assemble_kernel(shifted, prior, link)).values), w);
    gibbs.observe(max_abs(pi.values - gibbs_row_anchor(s, prior, tau).values), w);

    const V a = positive_vector(rng, n, 2.0);
    const EvidenceKernel<double> k2 = scale_kernel(k, a, V::Ones(m).eval());
    scaling.observe(max_abs(pi.values - row_anchor(k2).values), w);
    const auto rec = row_equivalent(k, k2, 1e-10);
    recover.observe(rec ? ((*rec - a).array().abs() / a.array()).maxCoeff() : 1.0, w);
  }
}

// ---------------------------------------------------------------- sinkhorn

void suite_sinkhorn(Rng& rng, SuiteState& st) {
  auto& marg = st.add("balanced plan marginal error (L1 rows + cols)", 1e-8);
  auto& conv = st.add("balanced runs that failed to converge", 0.0);
  auto& support = st.add("plan mass outside the admissible relation", 0.0);
  auto& scaling = st.add("diagonal kernel scaling leaves the balanced plan unchanged", 1e-6);
  auto& optimal = st.add("KL gain of feasible 2x2 cycle perturbations over the plan", 1e-12);
  int perturbations = 0;
  for (int c = 0; c < 30; ++c, ++st.cases) {
    const Index n = sample::integer(rng, 1, 64);
    const Index m = sample::integer(rng, 1, 64);
    const Mask mask = sample::mask(rng, n, m, sample::uniform(rng, 0.3, 1.0), true, true);
    const EvidenceKernel<double> k = sample::kernel(rng, mask);
    M target = sample::kernel(rng, mask).values;
    target /= target.sum();
    const Marginals<double> mu{target.rowwise().sum(), target.colwise().sum().transpose()};
    const std::string w = tag(c, shape_string(n, m));

    const TransportPlan<double> plan = sinkhorn_balanced(k, mu);
    conv.observe(plan.converged ? 0.0 : 1.0, w);
    const double err = (plan.values.rowwise().sum() - mu.mu_out).cwiseAbs().sum() +
                       (plan.values.colwise().sum().transpose() - mu.mu_in).cwiseAbs().sum();
    marg.observe(err, w);
    double outside = 0.0;
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < n; ++i)
        if (!mask(i, j)) outside += std::abs(plan.values(i, j));
    support.observe(outside, w);

    const EvidenceKernel<double> ks = scale_kernel(k, positive_vector(rng, n, 1.0), positive_vector(rng, m, 1.0));
    scaling.observe(max_abs(plan.values - sinkhorn_balanced(ks, mu).values), w);

    const double base = generalized_kl(plan.values, k.values);
    int done = 0;
    for (int attempt = 0; attempt < 20000 && done < 100 && n > 1 && m > 1; ++attempt) {
      const Index i1 = sample::integer(rng, 0, n - 1);
      const Index i2 = sample::integer(rng, 0, n - 1);
      const Index j1 = sample::integer(rng, 0, m - 1);
      const Index j2 = sample::integer(rng, 0, m - 1);
      if (i1 == i2 || j1 == j2 || !mask(i1, j1) || !mask(i2, j2) || !mask(i1, j2) || !mask(i2, j1)) continue;
      const bool up = sample::uniform(rng, 0.0, 1.0) < 0.5;
      const double room = up ? std::min(plan.values(i1, j2), plan.values(i2, j1))
                             : std::min(plan.values(i1, j1), plan.values(i2, j2));
      const double eps = (up ? 1.0 : -1.0) * sample::uniform(rng, 0.05, 0.5) * room;
      M other = plan.values;
      other(i1, j1) += eps;
      other(i2, j2) += eps;
      other(i1, j2) -= eps;
      other(i2, j1) -= eps;
      optimal.observe(std::max(0.0, base - generalized_kl(other, k.values)), w);
      ++done;
    }
    perturbations += done;
  }
  st.notes.push_back(std::to_string(perturbations) + " feasible cycle perturbations evaluated");

  // Hall-violating supports must be reported, not returned.
  auto& infeasible = st.add("infeasible supports raise Infeasible", 1.0, Comparison::AtLeast);
  for (int c = 0; c < 10; ++c, ++st.cases) {
    const Index n = sample::integer(rng, 3, 6);
    const Index m = sample::integer(rng, 2, 6);
    Mask mask = sample::mask(rng, n, m, 0.7, true, true);
    mask.row(0).setConstant(false);
    mask.row(1).setConstant(false);
    mask(0, 0) = mask(1, 0) = true;
    for (Index j = 1; j < m; ++j)
      if (!mask.col(j).any()) mask(sample::integer(rng, 2, n - 1), j) = true;
    const EvidenceKernel<double> k = sample::kernel(rng, mask);
    V mu_out = V::Constant(n, 1.0);
    V mu_in = V::Constant(m, 1.0);
    mu_in(0) = 0.1;  // rows 0 and 1 need 2 units through column 0
    mu_in *= mu_out.sum() / mu_in.sum();
    double hit = 0.0;
    try {
      (void)sinkhorn_balanced(k, Marginals<double>{mu_out, mu_in});
    } catch (const Error& e) {
      hit = e.code() == Errc::Infeasible ? 1.0 : 0.0;
    }
    infeasible.observe(hit, tag(c, shape_string(n, m)));
  }

  auto& stationary = st.add("unbalanced plan stationarity (max gradient on support)", 1e-8);
  auto& uopt = st.add("unbalanced objective gain of multiplicative perturbations (relative)", 1e-12);
  auto& counter = st.add("unbalanced conditionals move under diagonal kernel scaling", 1e-6, Comparison::AtLeast, true);
  SinkhornOptions opt;
  opt.tol = 1e-13;
  opt.max_iter = 200000;
  for (int c = 0; c < 20; ++c, ++st.cases) {
    const Index n = sample::integer(rng, 1, 16);
    const Index m = sample::integer(rng, 1, 16);
    const Mask mask = sample::mask(rng, n, m, sample::uniform(rng, 0.4, 1.0), true, true);
    const EvidenceKernel<double> k = sample::kernel(rng, mask);
    const Marginals<double> mu{sample::vector(rng, n, 0.5, 2.0), sample::vector(rng, m, 0.5, 2.0)};
    const double lo = sample::uniform(rng, 0.5, 5.0);
    const double li = sample::uniform(rng, 0.5, 5.0);
    const std::string w = tag(c, shape_string(n, m));
    const TransportPlan<double> plan = sinkhorn_unbalanced(k, mu, lo, li, opt);
    const V rows = plan.values.rowwise().sum();
    const V cols = plan.values.colwise().sum().transpose();
    double grad = 0.0;
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < n; ++i)
        if (mask(i, j))
          grad = std::max(grad, std::abs(std::log(plan.values(i, j) / k.values(i, j)) +
                                         lo * std::log(rows(i) / mu.mu_out(i)) + li * std::log(cols(j) / mu.mu_in(j))));
    stationary.observe(plan.converged ? grad : std::numeric_limits<double>::infinity(), w);
    const double f = unbalanced_objective(plan.values, k, mu, lo, li);
    for (int p = 0; p < 100; ++p) {
      M other = plan.values;
      for (Index j = 0; j < m; ++j)
        for (Index i = 0; i < n; ++i) other(i, j) *= std::exp(sample::uniform(rng, -0.05, 0.05));
      uopt.observe(std::max(0.0, f - unbalanced_objective(other, k, mu, lo, li)) / std::max(1.0, std::abs(f)), w);
    }
    const EvidenceKernel<double> ks = scale_kernel(k, positive_vector(rng, n, 1.0), positive_vector(rng, m, 1.0));
    const TransportPlan<double> moved = sinkhorn_unbalanced(ks, mu, lo, li, opt);
    const M a = plan_to_conditional(plan, rows).values;
    const M b = plan_to_conditional(moved, moved.values.rowwise().sum().eval()).values;
    counter.observe(max_abs(a - b), w);
  }
}

// ---------------------------------------------------------------- eckart-young

void suite_eckart_young(Rng& rng, SuiteState& st) {
  auto& identity = st.add("truncation residual^2 equals discarded sigma^2 (relative)", 1e-8);
  auto& beats = st.add("random rank-r factorizations beating the truncation (relative gap)", 0.0);
  auto& recon = st.add("SVD reconstruction error (relative max entry)", 1e-8);
  auto& orth = st.add("singular vector orthonormality error", 1e-10);
  auto& reference = st.add("singular values against a reference SVD (relative)", 1e-10);
  for (int c = 0; c < 20; ++c, ++st.cases) {
    const Index rows = sample::integer(rng, 1, 12);
    const Index cols = sample::integer(rng, 1, 12);
    const Index r = sample::integer(rng, 1, std::min(rows, cols));
    const M mat = sample::matrix(rng, rows, cols);
    const double scale = std::max(mat.norm(), std::numeric_limits<double>::min());
    const std::string w = tag(c, shape_string(rows, cols) + ", r=" + std::to_string(r));

    const SvdResult<double> d = svd(mat);
    recon.observe(max_abs(d.reconstruct() - mat) / std::max(1.0, max_abs(mat)), w);
    orth.observe(std::max(max_abs(d.U.transpose() * d.U - M::Identity(d.U.cols(), d.U.cols())),
                          max_abs(d.V.transpose() * d.V - M::Identity(d.V.cols(), d.V.cols()))),
                 w);
    const V ref = Eigen::JacobiSVD<M>(mat).singularValues();
    reference.observe((d.sigma - ref).cwiseAbs().maxCoeff() / std::max(ref(0), 1e-300), w);

    const Truncation<double> t = truncate(mat, r);
    const double tail = d.sigma.tail(d.sigma.size() - r).squaredNorm();
    identity.observe(std::abs(t.residual * t.residual - tail) / (scale * scale), w);

    const LowRankChart<double> chart = extract_qk(mat, r);
    for (int p = 0; p < 200; ++p) {
      M a;
      M b;
      if (p % 2 == 0) {
        a = sample::matrix(rng, rows, r);
        b = sample::matrix(rng, cols, r);
        const double s = std::sqrt(scale / std::max((a * b.transpose()).norm(), 1e-300));
        a *= s;
        b *= s;
      } else {
        a = chart.Q + 0.01 * sample::matrix(rng, rows, r);
        b = chart.L + 0.01 * sample::matrix(rng, cols, r);
      }
      beats.observe(std::max(0.0, t.residual - (mat - a * b.transpose()).norm()) / scale, w);
    }
  }
}

// ---------------------------------------------------------------- ffn

void suite_ffn(Rng& rng, SuiteState& st) {
  auto& dev = st.add("direct FFN vs signed-carrier plan update", 1e-10);
  auto& both = st.add("hidden units with mass on both signed copies", 0.0);
  const Activation acts[] = {Activation::Relu, Activation::Gelu, Activation::Tanh};
  const char* names[] = {"relu", "gelu", "tanh"};
  for (int c = 0; c < 100; ++c, ++st.cases) {
    const Index dm = sample::integer(rng, 1, 16);
    const Index dff = sample::integer(rng, 1, 64);
    FfnParams<double> p{sample::matrix(rng, dff, dm), sample::vector(rng, dff), sample::matrix(rng, dm, dff),
                        sample::vector(rng, dm), acts[c % 3]};
    const V x = sample::vector(rng, dm, -2.0, 2.0);
    const FfnForms<double> f = ffn_as_ga(x, p);
    const std::string w = tag(c, std::string(names[c % 3]) + ", d_model=" + std::to_string(dm) +
                                     ", d_ff=" + std::to_string(dff));
    dev.observe((f.direct - f.ga_form).cwiseAbs().maxCoeff(), w);
    double count = 0.0;
    for (Index j = 0; j < dff; ++j)
      if (f.kernel.values(0, j) > 0.0 && f.kernel.values(0, dff + j) > 0.0) count += 1.0;
    both.observe(count, w);
  }
}

// ---------------------------------------------------------------- mixture

ConditionalFamily<double> random_conditional(Rng& rng, Index n, Index m) {
  return row_anchor(sample::kernel(rng, sample::mask(rng, n, m, sample::uniform(rng, 0.3, 1.0))));
}

void suite_mixture(Rng& rng, SuiteState& st) {
  auto& cond = st.add("conditional mixture equals flattened conditional update", 1e-12);
  auto& naive = st.add("conditional mixture against explicit triple loop", 1e-12);
  auto& stoch = st.add("flattened conditional row-sum error", 1e-12);
  auto& plan = st.add("plan mixture equals flattened plan update", 1e-12);
  auto& residual = st.add("residual composition as a two-branch plan mixture", 1e-12);
  auto& disint = st.add("plan update equals marginal times conditional update", 1e-12);
  for (int c = 0; c < 50; ++c, ++st.cases) {
    const Index nb = sample::integer(rng, 1, 4);
    const Index n = sample::integer(rng, 1, 10);
    const Index d = sample::integer(rng, 1, 5);
    const std::string w = tag(c, "B=" + std::to_string(nb) + ", n=" + std::to_string(n));

    std::vector<std::pair<ConditionalFamily<double>, ValueField<double>>> cb;
    std::vector<std::pair<EvidenceKernel<double>, ValueField<double>>> pb;
    for (Index b = 0; b < nb; ++b) {
      const Index m = sample::integer(rng, 1, 10);
      cb.emplace_back(random_conditional(rng, n, m), sample::matrix(rng, m, d));
      pb.emplace_back(sample::kernel(rng, sample::mask(rng, n, m, 0.6, false)), sample::matrix(rng, m, d));
    }
    const M gates = sample::stochastic_rows(rng, n, nb);
    const ConditionalMixture<double> cm = gated_mixture_conditional(gates, cb);
    cond.observe(max_abs(cm.out - conditional_update(cm.flattened, cm.flattened_values)), w);
    M loop = M::Zero(n, d);
    for (Index x = 0; x < n; ++x)
      for (Index b = 0; b < nb; ++b) {
        const auto& [pi, v] = cb[static_cast<std::size_t>(b)];
        for (Index y = 0; y < pi.cols(); ++y)
          for (Index k = 0; k < d; ++k) loop(x, k) += gates(x, b) * pi.values(x, y) * v(y, k);
      }
    naive.observe(max_abs(cm.out - loop), w);
    stoch.observe((cm.flattened.values.rowwise().sum().array() - 1.0).abs().maxCoeff(), w);

    const M beta = sample::matrix(rng, n, nb, 0.0, 2.0);
    const PlanMixture<double> pm = gated_mixture_plan(beta, pb);
    plan.observe(max_abs(pm.out - plan_update(pm.flattened, pm.flattened_values)), w);

    const M h = sample::matrix(rng, n, d);
    const ConditionalFamily<double> attn = random_conditional(rng, n, n);
    const M v = sample::matrix(rng, n, d);
    const M identity = M::Identity(n, n);
    std::vector<std::pair<EvidenceKernel<double>, ValueField<double>>> two{
        {EvidenceKernel<double>::from_values(identity), h},
        {EvidenceKernel<double>{attn.values, attn.values.array() > 0.0}, v}};
    const PlanMixture<double> rm = gated_mixture_plan(M::Ones(n, 2).eval(), two);
    residual.observe(max_abs(rm.out - (h + conditional_update(attn, v))), w);

    const EvidenceKernel<double> pk = sample::kernel(rng, sample::mask(rng, n, n, 0.5));
    const TransportPlan<double> tp = TransportPlan<double>::from_values(pk.values, pk.mask);
    const V mu = tp.row_marginal;
    const M lhs = plan_update(tp, v);
    const M rhs = mu.asDiagonal() * conditional_update(plan_to_conditional(tp, mu), v);
    disint.observe(max_abs(lhs - rhs), w);
  }
}

// ---------------------------------------------------------------- barrier

StagedRun<double> random_run(Rng& rng, Index n, Index stages, Index d) {
  StagedRun<double> run;
  run.initial = sample::matrix(rng, n, d);
  const ChartKind charts[] = {ChartKind::Identity, ChartKind::RmsNorm, ChartKind::LayerNorm};
  const CompKind comps[] = {CompKind::Additive, CompKind::Gated, CompKind::PostNorm};
  run.config.chart.kind = charts[sample::integer(rng, 0, 2)];
  run.config.comp.kind = comps[sample::integer(rng, 0, 2)];
  if (run.config.comp.kind == CompKind::Gated) {
    run.config.comp.gate_weights = sample::matrix(rng, 2 * d, d);
    run.config.comp.gate_bias = sample::vector(rng, d);
  }
  const Activation acts[] = {Activation::Relu, Activation::Gelu, Activation::Tanh};
  for (Index t = 0; t < stages; ++t) {
    BlockParams<double> b;
    const Index dk = sample::integer(rng, 1, 3);
    const Index dff = sample::integer(rng, 2, 6);
    b.attention.W_Q = sample::matrix(rng, d, dk);
    b.attention.W_K = sample::matrix(rng, d, dk);
    b.attention.W_V = sample::matrix(rng, d, d);
    b.attention.mask = sample::mask(rng, n, n, sample::uniform(rng, 0.1, 0.5), true, false, true);
    b.ffn = {sample::matrix(rng, dff, d), sample::vector(rng, dff), sample::matrix(rng, d, dff),
             sample::vector(rng, d), acts[sample::integer(rng, 0, 2)]};
    run.blocks.push_back(std::move(b));
  }
  return run;
}

// u reaches x through t stages by explicit walk enumeration.
bool path_exists(const std::vector<Mask>& masks, Index x, Index u, Index t) {
  if (t == 0) return x == u;
  const Mask& rel = masks[static_cast<std::size_t>(t - 1)];
  for (Index y = 0; y < rel.cols(); ++y)
    if (rel(x, y) && path_exists(masks, y, u, t - 1)) return true;
  return false;
}

void suite_barrier(Rng& rng, SuiteState& st) {
  auto& leaks = st.add("records changed by perturbations outside the predecessor set", 0.0);
  auto& pre = st.add("predecessor sets disagreeing with walk enumeration", 0.0);
  long checked = 0;
  long inside = 0;
  long inside_moved = 0;
  for (int c = 0; c < 50; ++c, ++st.cases) {
    const Index n = sample::integer(rng, 2, 8);
    const Index stages = sample::integer(rng, 1, 4);
    const StagedRun<double> run = random_run(rng, n, stages, sample::integer(rng, 2, 4));
    std::vector<Mask> masks;
    for (const auto& b : run.blocks) masks.push_back(b.attention.mask);
    const InfluenceData inf = influence_relation(masks, DepMode::Markov);
    const std::string w = tag(c, "n=" + std::to_string(n) + ", T=" + std::to_string(stages));
    double leak_count = 0.0;
    double pre_count = 0.0;
    for (Index t = 1; t <= stages; ++t) {
      for (Index x = 0; x < n; ++x) {
        const std::vector<Index> p = predecessor_set(inf, x, t);
        for (Index u = 0; u < n; ++u) {
          const bool in = std::find(p.begin(), p.end(), u) != p.end();
          if (in != path_exists(masks, x, u, t)) pre_count += 1.0;
          const V delta = sample::vector(rng, run.initial.cols(), -1.0, 1.0);
          const bool same = barrier_check(run, x, t, u, delta);
          if (in) {
            ++inside;
            if (!same) ++inside_moved;
          } else {
            ++checked;
            if (!same) leak_count += 1.0;
          }
        }
      }
    }
    leaks.observe(leak_count, w);
    pre.observe(pre_count, w);
  }
  st.notes.push_back(std::to_string(checked) + " (x, t, u) triples outside the predecessor set checked");
  st.notes.push_back(std::to_string(inside_moved) + " of " + std::to_string(inside) +
                     " perturbations inside the predecessor set changed the record");
}

// ---------------------------------------------------------------- composition

void suite_composition(Rng&, SuiteState& st) {
  std::vector<double> grid(25);
  for (int i = 0; i < 25; ++i) grid[static_cast<std::size_t>(i)] = -3.0 + 6.0 * i / 24.0;
  const std::span<const double> g(grid);
  auto& expo = st.add("exponential links: multiplicative law violation", 1e-12);
  for (double tau : {0.5, 1.0, 2.0}) {
    const auto r = check_link_compositionality(Link<double>::exponential(tau), g, 1e-12);
    expo.observe(r.max_violation, "tau=" + std::to_string(tau));
    ++st.cases;
  }
  auto& slope = st.add("exp-with-slope link: multiplicative law violation", 1e-12);
  const auto rs = check_link_compositionality(Link<double>::exp_with_slope(1.5), g, 1e-12);
  slope.observe(rs.max_violation, "slope=1.5");
  ++st.cases;
  auto& sq = st.add("square-plus-one link: multiplicative law violation", 0.1, Comparison::AtLeast, true);
  const auto rq = check_link_compositionality(Link<double>::square_plus_one(), g, 1e-12);
  sq.observe(rq.max_violation,
             "w1=" + std::to_string(rq.witness.first) + ", w2=" + std::to_string(rq.witness.second));
  ++st.cases;
  auto& sp = st.add("softplus link: multiplicative law violation", 0.1, Comparison::AtLeast, true);
  const auto rp = check_link_compositionality(Link<double>::softplus(), g, 1e-12);
  sp.observe(rp.max_violation,
             "w1=" + std::to_string(rp.witness.first) + ", w2=" + std::to_string(rp.witness.second));
  ++st.cases;
}

// ---------------------------------------------------------------- cycle-sum

void suite_cycle_sum(Rng& rng, SuiteState& st) {
  auto& inv = st.add("cycle sums unchanged by a gauge transform", 1e-12);
  auto& exact = st.add("cycle sums of a pure coboundary", 1e-12);
  for (int c = 0; c < 30; ++c, ++st.cases) {
    const Index nv = sample::integer(rng, 2, 12);
    GaugeGraph<double> g;
    g.vertices = nv;
    std::map<std::pair<Index, Index>, Index> index;
    const auto edge = [&](Index u, Index v) {
      const auto it = index.find({u, v});
      if (it != index.end()) return it->second;
      const Index e = static_cast<Index>(g.edges.size());
      g.edges.emplace_back(u, v);
      index[{u, v}] = e;
      return e;
    };
    std::vector<std::vector<Index>> cycles;
    for (int k = 0; k < 10; ++k) {
      const Index len = sample::integer(rng, 1, 8);
      std::vector<Index> walk;
      for (Index i = 0; i < len; ++i) walk.push_back(sample::integer(rng, 0, nv - 1));
      std::vector<Index> cyc;
      for (std::size_t i = 0; i < walk.size(); ++i) cyc.push_back(edge(walk[i], walk[(i + 1) % walk.size()]));
      cycles.push_back(cyc);
    }
    for (int extra = 0; extra < static_cast<int>(nv); ++extra)
      edge(sample::integer(rng, 0, nv - 1), sample::integer(rng, 0, nv - 1));
    g.edge_potential = sample::vector(rng, static_cast<Index>(g.edges.size()));
    g.vertex_potential = sample::vector(rng, nv, -2.0, 2.0);
    const GaugeGraph<double> moved = gauge_transform(g);
    GaugeGraph<double> pure = g;
    pure.edge_potential = coboundary(g);
    const std::string w = tag(c, std::to_string(nv) + " vertices, " + std::to_string(g.edges.size()) + " edges");
    for (const auto& cyc : cycles) {
      inv.observe(std::abs(cycle_sum(moved, cyc) - cycle_sum(g, cyc)), w);
      exact.observe(std::abs(cycle_sum(pure, cyc)), w);
    }
  }
}

// ---------------------------------------------------------------- attention

void suite_attention(Rng& rng, SuiteState& st) {
  auto& direct = st.add("attention output vs explicit masked softmax", 1e-12);
  auto& reduce = st.add("attention weights vs exponential-link kernel row anchor", 1e-12);
  auto& temp = st.add("temperature absorbed into the score scale", 1e-12);
  for (int c = 0; c < 50; ++c, ++st.cases) {
    const Index n = sample::integer(rng, 1, 12);
    const Index d = sample::integer(rng, 1, 8);
    const Index dk = sample::integer(rng, 1, 8);
    const Index dv = sample::integer(rng, 1, 8);
    AttentionParams<double> p;
    p.W_Q = sample::matrix(rng, d, dk);
    p.W_K = sample::matrix(rng, d, dk);
    p.W_V = sample::matrix(rng, d, dv);
    p.tau = sample::uniform(rng, 0.5, 2.0);
    p.key_bias = sample::vector(rng, n);
    p.prior = sample::matrix(rng, n, n, 0.5, 2.0);
    p.mask = sample::mask(rng, n, n, sample::uniform(rng, 0.2, 1.0));
    const M e = sample::matrix(rng, n, d);
    const std::string w = tag(c, "n=" + std::to_string(n) + ", d_k=" + std::to_string(dk));
    const AttentionResult<double> r = attention(e, p);

    const M q = e * p.W_Q;
    const M k = e * p.W_K;
    const M v = e * p.W_V;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    M out = M::Zero(n, dv);
    for (Index x = 0; x < n; ++x) {
      double peak = -std::numeric_limits<double>::infinity();
      std::vector<double> logit(static_cast<std::size_t>(n));
      for (Index y = 0; y < n; ++y) {
        if (!p.mask(x, y)) continue;
        double dot = 0.0;
        for (Index a = 0; a < dk; ++a) dot += q(x, a) * k(y, a);
        logit[static_cast<std::size_t>(y)] = (scale * dot + p.key_bias(y)) / p.tau + std::log(p.prior(x, y));
        peak = std::max(peak, logit[static_cast<std::size_t>(y)]);
      }
      double z = 0.0;
      for (Index y = 0; y < n; ++y)
        if (p.mask(x, y)) z += std::exp(logit[static_cast<std::size_t>(y)] - peak);
      for (Index y = 0; y < n; ++y)
        if (p.mask(x, y)) out.row(x) += std::exp(logit[static_cast<std::size_t>(y)] - peak) / z * v.row(y);
    }
    direct.observe(max_abs(r.out - out), w);

    const EvidenceKernel<double> kern =
        assemble_kernel(r.scores, BaselinePrior<double>{p.prior}, Link<double>::exponential(p.tau));
    reduce.observe(max_abs(r.weights.values - row_anchor(kern).values), w);

    AttentionParams<double> unit = p;
    unit.tau = 1.0;
    unit.score_scale = scale / p.tau;
    unit.key_bias = p.key_bias / p.tau;
    temp.observe(max_abs(r.weights.values - attention(e, unit).weights.values), w);
  }
}

// ---------------------------------------------------------------- centering

void suite_centering(Rng& rng, SuiteState& st) {
  auto& sums = st.add("double-centered row and column sums", 1e-10);
  auto& recon = st.add("decomposition reconstructs the scores", 1e-12);
  auto& unary = st.add("interaction unchanged by unary shifts", 1e-10);
  auto& sep = st.add("separable scores have zero interaction", 1e-10);
  auto& wsum = st.add("weighted-centered weighted row sums", 1e-12);
  auto& wshift = st.add("weighted centering unchanged by row shifts", 1e-12);
  auto& unique = st.add("nonzero row shift breaks the weighted zero-mean constraint", 1e-6, Comparison::AtLeast);
  for (int c = 0; c < 50; ++c, ++st.cases) {
    const Index n = sample::integer(rng, 1, 12);
    const Index m = sample::integer(rng, 1, 12);
    const M s = sample::matrix(rng, n, m, -3.0, 3.0);
    const V u = sample::vector(rng, n, -5.0, 5.0);
    const V v = sample::vector(rng, m, -5.0, 5.0);
    const std::string w = tag(c, shape_string(n, m));
    const CenteredDecomposition<double> d = double_center(s);
    sums.observe(std::max(d.interaction.rowwise().sum().cwiseAbs().maxCoeff(),
                          d.interaction.colwise().sum().cwiseAbs().maxCoeff()),
                 w);
    recon.observe(max_abs(d.reconstruct() - s), w);
    M moved = s;
    moved.colwise() += u;
    moved.rowwise() += v.transpose();
    unary.observe(max_abs(double_center(moved).interaction - d.interaction), w);
    M separable(n, m);
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < n; ++i) separable(i, j) = u(i) + v(j);
    sep.observe(max_abs(double_center(separable).interaction), w);

    const Mask support = sample::mask(rng, n, m, sample::uniform(rng, 0.3, 1.0));
    M weights = M::Zero(n, m);
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < n; ++i)
        if (support(i, j)) weights(i, j) = sample::uniform(rng, 0.05, 1.0);
    const MaskedScore<double> full = MaskedScore<double>::full(s);
    const MaskedScore<double> wc = weighted_row_center(full, weights);
    wsum.observe(weighted_row_sums(wc, weights).cwiseAbs().maxCoeff(), w);
    const MaskedScore<double> wc2 = weighted_row_center(MaskedScore<double>::full(moved - v.transpose().replicate(n, 1)),
                                                        weights);
    wshift.observe(max_abs(wc.values - wc2.values), w);
    MaskedScore<double> off = wc;
    for (Index i = 0; i < n; ++i) {
      const double alpha = (sample::uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0) * sample::uniform(rng, 0.5, 1.0);
      off.values.row(i).array() += alpha;
    }
    unique.observe(weighted_row_sums(off, weights).cwiseAbs().minCoeff(), w);
  }
}

// ---------------------------------------------------------------- pushforward

void suite_pushforward(Rng& rng, SuiteState& st) {
  auto& mass = st.add("total mass change under pushforward (relative)", 1e-12);
  auto& support = st.add("coarse support entries disagreeing with fine admissibility", 0.0);
  auto& entries = st.add("coarse entries vs explicit bucket sums (relative)", 1e-12);
  auto& functor = st.add("pushforward along composed maps equals iterated pushforward (relative)", 1e-12);
  for (int c = 0; c < 30; ++c, ++st.cases) {
    const Index nx = sample::integer(rng, 1, 12);
    const Index ny = sample::integer(rng, 1, 12);
    const Index cx = sample::integer(rng, 1, nx);
    const Index cy = sample::integer(rng, 1, ny);
    const EvidenceKernel<double> k =
        sample::kernel(rng, sample::mask(rng, nx, ny, sample::uniform(rng, 0.1, 1.0), false));
    const RefinementMap rx("X", "Xc", sample::surjection(rng, nx, cx), cx);
    const RefinementMap ry("Y", "Yc", sample::surjection(rng, ny, cy), cy);
    const EvidenceKernel<double> p = pushforward_kernel(k, rx, ry);
    const std::string w = tag(c, shape_string(nx, ny) + " -> " + shape_string(cx, cy));
    const double total = k.values.sum();
    mass.observe(total > 0.0 ? std::abs(p.values.sum() - total) / total : std::abs(p.values.sum()), w);

    M bucket = M::Zero(cx, cy);
    Mask reach = Mask::Constant(cx, cy, false);
    for (Index i = 0; i < nx; ++i)
      for (Index j = 0; j < ny; ++j)
        if (k.mask(i, j)) {
          bucket(rx(i), ry(j)) += k.values(i, j);
          reach(rx(i), ry(j)) = true;
        }
    support.observe(static_cast<double>((reach != p.mask).count()), w);
    const double peak = std::max(max_abs(bucket), std::numeric_limits<double>::min());
    entries.observe(max_abs(p.values - bucket) / peak, w);

    const Index ccx = sample::integer(rng, 1, cx);
    const Index ccy = sample::integer(rng, 1, cy);
    const RefinementMap sx("Xc", "Xcc", sample::surjection(rng, cx, ccx), ccx);
    const RefinementMap sy("Yc", "Ycc", sample::surjection(rng, cy, ccy), ccy);
    const M twice = pushforward_kernel(p, sx, sy).values;
    const M once = pushforward_kernel(k, compose_refinement(sx, rx), compose_refinement(sy, ry)).values;
    functor.observe(max_abs(twice - once) / std::max(max_abs(once), std::numeric_limits<double>::min()), w);
  }
}

// ---------------------------------------------------------------- chart

void suite_chart(Rng& rng, SuiteState& st) {
  auto& product = st.add("chart map preserves the score product", 1e-8);
  auto& weights = st.add("chart map preserves anchored weights", 1e-8);
  auto& normal = st.add("full-rank normal form reproduces row-centered scores", 1e-10);
  auto& singular = st.add("singular chart maps rejected", 1.0, Comparison::AtLeast);
  for (int c = 0; c < 50; ++c, ++st.cases) {
    const Index rows = sample::integer(rng, 1, 12);
    const Index cols = sample::integer(rng, 1, 12);
    const Index r = sample::integer(rng, 1, std::min(rows, cols));
    const M s = sample::matrix(rng, rows, cols, -2.0, 2.0);
    const std::string w = tag(c, shape_string(rows, cols) + ", r=" + std::to_string(r));
    const LowRankChart<double> chart = extract_qk(s, r);
    const M a = sample::well_conditioned(rng, r);
    const auto [q2, l2] = reparameterize_chart(chart.Q, chart.L, a);
    const M before = chart.Q * chart.L.transpose();
    const M after = q2 * l2.transpose();
    product.observe(max_abs(before - after), w);
    const auto prior = BaselinePrior<double>::ones(rows, cols);
    weights.observe(max_abs(gibbs_row_anchor(MaskedScore<double>::full(before), prior, 1.0).values -
                            gibbs_row_anchor(MaskedScore<double>::full(after), prior, 1.0).values),
                    w);

    const LowRankChart<double> nf = score_normal_form(s, std::min(rows, cols));
    M centered = s;
    centered.colwise() -= s.rowwise().mean();
    normal.observe(max_abs(nf.scores() - centered), w);

    M bad = a;
    bad.col(sample::integer(rng, 0, r - 1)).setZero();
    double rejected = 0.0;
    try {
      (void)reparameterize_chart(chart.Q, chart.L, bad);
    } catch (const Error& e) {
      rejected = e.code() == Errc::SingularChartMap ? 1.0 : 0.0;
    }
    singular.observe(rejected, w);
  }
}

using SuiteFn = void (*)(Rng&, SuiteState&);

const std::vector<std::pair<std::string, SuiteFn>>& registry() {
  static const std::vector<std::pair<std::string, SuiteFn>> r{
      {"gauge", suite_gauge},           {"sinkhorn", suite_sinkhorn},   {"eckart-young", suite_eckart_young},
      {"ffn", suite_ffn},               {"mixture", suite_mixture},     {"barrier", suite_barrier},
      {"composition", suite_composition}, {"cycle-sum", suite_cycle_sum}, {"attention", suite_attention},
      {"centering", suite_centering},   {"pushforward", suite_pushforward}, {"chart", suite_chart},
  };
  return r;
}

}  // namespace

const std::vector<std::string>& known_suites() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, fn] : registry()) out.push_back(name);
    return out;
  }();
  return names;
}

namespace {

auto find_suite(const std::string& name) {
  const auto& reg = registry();
  const auto it = std::find_if(reg.begin(), reg.end(), [&](const auto& e) { return e.first == name; });
  if (it == reg.end()) {
    std::string list;
    for (const auto& n : known_suites()) list += (list.empty() ? "" : ", ") + n;
    throw Error(Errc::UnknownSuite, "unknown check suite '" + name + "' (known: " + list + ")");
  }
  return it;
}

}  // namespace

CheckReport run_suite(const std::string& name, std::uint64_t seed, std::optional<double> tol) {
  const auto& reg = registry();
  const auto it = find_suite(name);
  const auto start = std::chrono::steady_clock::now();
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(std::distance(reg.begin(), it))};
  Rng rng(seq);
  SuiteState st;
  it->second(rng, st);
  CheckReport report;
  report.suite = name;
  report.cases = st.cases;
  report.notes = st.notes;
  for (const auto& t : st.props) {
    report.properties.push_back(t.finish(tol));
    report.pass = report.pass && report.properties.back().pass;
  }
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::vector<CheckReport> run_checks(const std::vector<std::string>& names, std::uint64_t seed,
                                    std::optional<double> tol) {
  const std::vector<std::string>& list = names.empty() ? known_suites() : names;
  for (const auto& n : list) (void)find_suite(n);
  std::vector<CheckReport> out;
  for (const auto& n : list) out.push_back(run_suite(n, seed, tol));
  return out;
}

nlohmann::json to_json(const CheckReport& report, bool timing) {
  nlohmann::json props = nlohmann::json::array();
  for (const auto& p : report.properties) {
    nlohmann::json j;
    j["name"] = p.name;
    j["comparison"] = p.comparison == Comparison::AtMost ? "<=" : ">=";
    j["threshold"] = p.threshold;
    if (std::isnan(p.deviation))
      j["deviation"] = nullptr;
    else
      j["deviation"] = p.deviation;
    j["pass"] = p.pass;
    j["witness"] = p.witness;
    props.push_back(std::move(j));
  }
  nlohmann::json out;
  out["suite"] = report.suite;
  out["cases"] = report.cases;
  out["pass"] = report.pass;
  out["properties"] = std::move(props);
  out["notes"] = report.notes;
  if (timing) out["wall_time_s"] = report.wall_time_s;
  return out;
}

}  // namespace ga::checks
