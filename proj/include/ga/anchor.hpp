#pragma once

// Anchors: row-conditional normalization and entropic transport plans.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ga/score.hpp"
#include "ga/types.hpp"

namespace ga {

/// Row-stochastic family on the mask (rows with an empty mask are all zero).
template <typename Scalar = double>
struct ConditionalFamily {
  Mat<Scalar> values;
  Mask mask;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }
};

template <typename Scalar = double>
struct TransportPlan {
  Mat<Scalar> values;
  Mask mask;
  Vec<Scalar> row_marginal;
  Vec<Scalar> col_marginal;
  bool converged = false;
  int iterations = 0;
  // L1 row error + L1 column error against the targets (balanced) or the
  // sup-norm of the last log-scaling change (unbalanced).
  Scalar error = Scalar(0);

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  static TransportPlan from_values(Mat<Scalar> v, Mask mask) {
    TransportPlan p{std::move(v), std::move(mask), {}, {}, true, 0, Scalar(0)};
    p.row_marginal = p.values.rowwise().sum();
    p.col_marginal = p.values.colwise().sum().transpose();
    return p;
  }
};

template <typename Scalar = double>
struct Marginals {
  Vec<Scalar> mu_out;
  Vec<Scalar> mu_in;

  bool balanced(Scalar rel_tol = Scalar(1e-9)) const {
    return std::abs(mu_out.sum() - mu_in.sum()) <= rel_tol * mu_out.sum();
  }
};

struct SinkhornOptions {
  double tol = 1e-9;
  int max_iter = 10000;
  // Infeasible when the error shrinks by less than stall_factor over
  // stall_window iterations while still above starvation * total mass.
  int stall_window = 100;
  double stall_factor = 0.999;
  double starvation = 1e-6;
};

namespace detail {

template <typename Scalar>
Scalar log_sum_exp(const std::vector<Scalar>& terms) {
  if (terms.empty()) return -std::numeric_limits<Scalar>::infinity();
  const Scalar peak = *std::max_element(terms.begin(), terms.end());
  Scalar acc(0);
  for (Scalar t : terms) acc += std::exp(t - peak);
  return peak + std::log(acc);
}

inline void require_rows_nonempty(const Mask& mask) {
  for (Index i = 0; i < mask.rows(); ++i)
    require(mask.row(i).any(), Errc::EmptyRow, "row " + std::to_string(i) + " has no admissible entry", i);
}

inline void require_cols_nonempty(const Mask& mask) {
  for (Index j = 0; j < mask.cols(); ++j)
    require(mask.col(j).any(), Errc::EmptyCol, "column " + std::to_string(j) + " has no admissible entry", j);
}

template <typename Scalar>
void check_marginals(const Marginals<Scalar>& m, Index rows, Index cols) {
  require(m.mu_out.size() == rows && m.mu_in.size() == cols, Errc::ShapeMismatch,
          "marginal lengths do not match kernel shape " + shape_string(rows, cols));
  require((m.mu_out.array() > Scalar(0)).all() && (m.mu_in.array() > Scalar(0)).all(), Errc::InvalidArgument,
          "marginals must be strictly positive");
}

template <typename Scalar>
Mat<Scalar> masked_log(const EvidenceKernel<Scalar>& k) {
  Mat<Scalar> out = Mat<Scalar>::Constant(k.rows(), k.cols(), -std::numeric_limits<Scalar>::infinity());
  for (Index j = 0; j < k.cols(); ++j)
    for (Index i = 0; i < k.rows(); ++i)
      if (k.mask(i, j)) {
        require(k.values(i, j) > Scalar(0), Errc::InvalidArgument, "kernel must be positive on its mask", i);
        out(i, j) = std::log(k.values(i, j));
      }
  return out;
}

// log of (K diag(e^lb)) 1, restricted to the mask.
template <typename Scalar>
Vec<Scalar> row_lse(const Mat<Scalar>& log_k, const Mask& mask, const Vec<Scalar>& lb) {
  Vec<Scalar> out(log_k.rows());
  std::vector<Scalar> terms;
  for (Index i = 0; i < log_k.rows(); ++i) {
    terms.clear();
    for (Index j = 0; j < log_k.cols(); ++j)
      if (mask(i, j)) terms.push_back(log_k(i, j) + lb(j));
    out(i) = log_sum_exp(terms);
  }
  return out;
}

template <typename Scalar>
Vec<Scalar> col_lse(const Mat<Scalar>& log_k, const Mask& mask, const Vec<Scalar>& la) {
  Vec<Scalar> out(log_k.cols());
  std::vector<Scalar> terms;
  for (Index j = 0; j < log_k.cols(); ++j) {
    terms.clear();
    for (Index i = 0; i < log_k.rows(); ++i)
      if (mask(i, j)) terms.push_back(log_k(i, j) + la(i));
    out(j) = log_sum_exp(terms);
  }
  return out;
}

template <typename Scalar>
TransportPlan<Scalar> materialize(const Mat<Scalar>& log_k, const Mask& mask, const Vec<Scalar>& la,
                                  const Vec<Scalar>& lb) {
  Mat<Scalar> v = Mat<Scalar>::Zero(log_k.rows(), log_k.cols());
  for (Index j = 0; j < v.cols(); ++j)
    for (Index i = 0; i < v.rows(); ++i)
      if (mask(i, j)) v(i, j) = std::exp(log_k(i, j) + la(i) + lb(j));
  return TransportPlan<Scalar>::from_values(std::move(v), mask);
}

}  // namespace detail

/// pi(y|x) = K(x,y) / Z(x). Throws EmptyRow when a row has no mass.
template <typename Scalar>
ConditionalFamily<Scalar> row_anchor(const EvidenceKernel<Scalar>& k) {
  require_shape(k.mask, k.rows(), k.cols(), "kernel mask");
  const Vec<Scalar> z = row_mass(k);
  ConditionalFamily<Scalar> pi{Mat<Scalar>::Zero(k.rows(), k.cols()), k.mask};
  for (Index i = 0; i < k.rows(); ++i) {
    require(z(i) > Scalar(0), Errc::EmptyRow, "row " + std::to_string(i) + " has zero mass", i);
    for (Index j = 0; j < k.cols(); ++j)
      if (k.mask(i, j)) pi.values(i, j) = k.values(i, j) / z(i);
  }
  return pi;
}

/// Row anchor of the Gibbs kernel prior * exp(S / tau), evaluated in the log
/// domain with per-row max subtraction over admissible entries. When
/// `zero_on_empty` is set, rows without admissible entries come back all
/// zero instead of throwing.
template <typename Scalar>
ConditionalFamily<Scalar> gibbs_row_anchor(const MaskedScore<Scalar>& score, const BaselinePrior<Scalar>& prior,
                                           Scalar tau, bool zero_on_empty = false) {
  require(tau > Scalar(0), Errc::InvalidArgument, "temperature must be > 0");
  require_shape(score.mask, score.rows(), score.cols(), "score mask");
  require_shape(prior.values, score.rows(), score.cols(), "baseline prior");
  prior.validate();
  ConditionalFamily<Scalar> pi{Mat<Scalar>::Zero(score.rows(), score.cols()), score.mask};
  std::vector<Scalar> logits(static_cast<std::size_t>(score.cols()));
  for (Index i = 0; i < score.rows(); ++i) {
    Scalar peak = -std::numeric_limits<Scalar>::infinity();
    bool any = false;
    for (Index j = 0; j < score.cols(); ++j) {
      if (!score.mask(i, j)) continue;
      const Scalar l = score.values(i, j) / tau + std::log(prior.values(i, j));
      logits[static_cast<std::size_t>(j)] = l;
      peak = any ? std::max(peak, l) : l;
      any = true;
    }
    if (!any) {
      require(zero_on_empty, Errc::EmptyRow, "row " + std::to_string(i) + " has no admissible entry", i);
      continue;
    }
    Scalar total(0);
    for (Index j = 0; j < score.cols(); ++j)
      if (score.mask(i, j)) total += (pi.values(i, j) = std::exp(logits[static_cast<std::size_t>(j)] - peak));
    for (Index j = 0; j < score.cols(); ++j)
      if (score.mask(i, j)) pi.values(i, j) /= total;
  }
  return pi;
}

/// Generalized KL divergence of nonnegative arrays; +inf when A has mass
/// where B has none.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar generalized_kl(const Eigen::DenseBase<DerivedA>& a, const Eigen::DenseBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  require(a.rows() == b.rows() && a.cols() == b.cols(), Errc::ShapeMismatch,
          "KL arguments " + shape_string(a.rows(), a.cols()) + " vs " + shape_string(b.rows(), b.cols()));
  Scalar total(0);
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i) {
      const Scalar x = a(i, j);
      const Scalar y = b(i, j);
      require(x >= Scalar(0) && y >= Scalar(0), Errc::InvalidArgument, "KL arguments must be nonnegative");
      if (x > Scalar(0)) {
        if (y == Scalar(0)) return std::numeric_limits<Scalar>::infinity();
        total += x * std::log(x / y) - x + y;
      } else {
        total += y;
      }
    }
  return total;
}

/// Balanced entropic anchor: the KL projection of K onto couplings with the
/// given marginals, supported on the kernel mask. Log-domain Sinkhorn.
template <typename Scalar>
TransportPlan<Scalar> sinkhorn_balanced(const EvidenceKernel<Scalar>& k, const Marginals<Scalar>& m,
                                        const SinkhornOptions& opt = {}) {
  detail::check_marginals(m, k.rows(), k.cols());
  require_shape(k.mask, k.rows(), k.cols(), "kernel mask");
  detail::require_rows_nonempty(k.mask);
  detail::require_cols_nonempty(k.mask);
  require(m.balanced(), Errc::Infeasible, "target marginals carry different total mass");

  const Mat<Scalar> log_k = detail::masked_log(k);
  const Vec<Scalar> log_out = m.mu_out.array().log();
  const Vec<Scalar> log_in = m.mu_in.array().log();
  const Scalar mass = m.mu_out.sum();
  Vec<Scalar> la = Vec<Scalar>::Zero(k.rows());
  Vec<Scalar> lb = Vec<Scalar>::Zero(k.cols());
  std::vector<Scalar> history;
  history.reserve(static_cast<std::size_t>(opt.max_iter));

  const auto marginal_error = [&]() {
    const TransportPlan<Scalar> p = detail::materialize(log_k, k.mask, la, lb);
    return (p.row_marginal - m.mu_out).template lpNorm<1>() + (p.col_marginal - m.mu_in).template lpNorm<1>();
  };

  Scalar err = marginal_error();
  int it = 0;
  bool converged = err <= Scalar(opt.tol);
  while (!converged && it < opt.max_iter) {
    ++it;
    la = log_out - detail::row_lse(log_k, k.mask, lb);
    lb = log_in - detail::col_lse(log_k, k.mask, la);
    err = marginal_error();
    history.push_back(err);
    if (err <= Scalar(opt.tol)) {
      converged = true;
      break;
    }
    const auto w = static_cast<std::size_t>(opt.stall_window);
    if (history.size() > w) {
      const Scalar before = history[history.size() - 1 - w];
      require(!(err > Scalar(opt.stall_factor) * before && err > Scalar(opt.starvation) * mass), Errc::Infeasible,
              "marginal error stalled at " + std::to_string(static_cast<double>(err)) +
                  "; the mask admits no coupling with these marginals");
    }
  }
  TransportPlan<Scalar> plan = detail::materialize(log_k, k.mask, la, lb);
  plan.converged = converged;
  plan.iterations = it;
  plan.error = err;
  return plan;
}

/// Damped scaling exponents lambda / (lambda + 1) for the KL-penalized
/// marginals. Convergence is measured on the log scalings; on exhaustion the
/// last iterate is returned with converged = false.
template <typename Scalar>
TransportPlan<Scalar> sinkhorn_unbalanced(const EvidenceKernel<Scalar>& k, const Marginals<Scalar>& m,
                                          Scalar lambda_out, Scalar lambda_in, const SinkhornOptions& opt = {}) {
  detail::check_marginals(m, k.rows(), k.cols());
  require_shape(k.mask, k.rows(), k.cols(), "kernel mask");
  require(k.mask.any(), Errc::InvalidArgument, "kernel mask is empty");
  require(lambda_out > Scalar(0) && lambda_in > Scalar(0), Errc::InvalidArgument, "penalties must be > 0");

  const Mat<Scalar> log_k = detail::masked_log(k);
  const Vec<Scalar> log_out = m.mu_out.array().log();
  const Vec<Scalar> log_in = m.mu_in.array().log();
  const Scalar rho_out = lambda_out / (lambda_out + Scalar(1));
  const Scalar rho_in = lambda_in / (lambda_in + Scalar(1));
  Vec<Scalar> la = Vec<Scalar>::Zero(k.rows());
  Vec<Scalar> lb = Vec<Scalar>::Zero(k.cols());

  // Rows or columns without admissible entries carry no plan mass; their
  // scalings stay at zero.
  const auto damped = [](const Vec<Scalar>& target, const Vec<Scalar>& lse, Scalar rho) {
    Vec<Scalar> out(target.size());
    for (Index i = 0; i < out.size(); ++i) out(i) = std::isfinite(lse(i)) ? rho * (target(i) - lse(i)) : Scalar(0);
    return out;
  };

  Scalar change = std::numeric_limits<Scalar>::infinity();
  int it = 0;
  bool converged = false;
  while (it < opt.max_iter) {
    ++it;
    const Vec<Scalar> la_next = damped(log_out, detail::row_lse(log_k, k.mask, lb), rho_out);
    const Vec<Scalar> lb_next = damped(log_in, detail::col_lse(log_k, k.mask, la_next), rho_in);
    change = std::max((la_next - la).cwiseAbs().maxCoeff(), (lb_next - lb).cwiseAbs().maxCoeff());
    la = la_next;
    lb = lb_next;
    if (change <= Scalar(opt.tol)) {
      converged = true;
      break;
    }
  }
  TransportPlan<Scalar> plan = detail::materialize(log_k, k.mask, la, lb);
  plan.converged = converged;
  plan.iterations = it;
  plan.error = change;
  return plan;
}

/// KL(P||K) + lambda_out KL(P1||mu_out) + lambda_in KL(P^T 1||mu_in).
template <typename Scalar>
Scalar unbalanced_objective(const Mat<Scalar>& plan, const EvidenceKernel<Scalar>& k, const Marginals<Scalar>& m,
                            Scalar lambda_out, Scalar lambda_in) {
  const Vec<Scalar> rows = plan.rowwise().sum();
  const Vec<Scalar> cols = plan.colwise().sum().transpose();
  return generalized_kl(plan, k.values) + lambda_out * generalized_kl(rows, m.mu_out) +
         lambda_in * generalized_kl(cols, m.mu_in);
}

/// pi(y|x) = P(x,y) / mu_out(x).
template <typename Scalar>
ConditionalFamily<Scalar> plan_to_conditional(const TransportPlan<Scalar>& plan, const Vec<Scalar>& mu_out) {
  require(mu_out.size() == plan.rows(), Errc::ShapeMismatch, "mu_out length differs from plan rows");
  ConditionalFamily<Scalar> pi{Mat<Scalar>::Zero(plan.rows(), plan.cols()), plan.mask};
  for (Index i = 0; i < plan.rows(); ++i) {
    require(mu_out(i) > Scalar(0), Errc::ZeroMarginal, "mu_out is not positive at row " + std::to_string(i), i);
    pi.values.row(i) = plan.values.row(i) / mu_out(i);
  }
  return pi;
}

}  // namespace ga
