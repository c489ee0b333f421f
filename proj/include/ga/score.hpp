#pragma once

// Masked proto-scores, baseline priors, links and evidence-kernel assembly.

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>

#include "ga/types.hpp"

namespace ga {

/// Dense score array plus the admissible relation. Entries under a false mask
/// are never read; hard exclusions live in the mask, not as -inf values.
template <typename Scalar = double>
struct MaskedScore {
  Mat<Scalar> values;
  Mask mask;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  static MaskedScore full(Mat<Scalar> v) {
    Mask m = full_mask(v.rows(), v.cols());
    return {std::move(v), std::move(m)};
  }

  bool is_full() const { return mask.all(); }

  void validate() const {
    require_shape(mask, values.rows(), values.cols(), "score mask");
    for (Index i = 0; i < rows(); ++i)
      for (Index j = 0; j < cols(); ++j)
        require(!mask(i, j) || std::isfinite(values(i, j)), Errc::InvalidArgument,
                "admissible score entries must be finite", i);
  }
};

/// Strictly positive context-independent prior.
template <typename Scalar = double>
struct BaselinePrior {
  Mat<Scalar> values;

  static BaselinePrior ones(Index rows, Index cols) { return {Mat<Scalar>::Ones(rows, cols)}; }

  void validate() const {
    require((values.array() > Scalar(0)).all(), Errc::InvalidArgument,
            "baseline prior entries must be > 0");
  }
};

enum class LinkKind { Exponential, Softplus, SquarePlusOne, ExpWithSlope };

/// Finite score -> positive evidence factor. Custom links are a fixed set of
/// named built-ins.
template <typename Scalar = double>
struct Link {
  LinkKind kind = LinkKind::Exponential;
  // temperature for Exponential, slope for ExpWithSlope, unused otherwise
  Scalar parameter = Scalar(1);

  static Link exponential(Scalar tau) {
    require(tau > Scalar(0) && std::isfinite(tau), Errc::InvalidArgument, "temperature must be > 0");
    return {LinkKind::Exponential, tau};
  }
  static Link softplus() { return {LinkKind::Softplus, Scalar(1)}; }
  static Link square_plus_one() { return {LinkKind::SquarePlusOne, Scalar(1)}; }
  static Link exp_with_slope(Scalar slope) { return {LinkKind::ExpWithSlope, slope}; }

  Scalar raw(Scalar s) const {
    using std::exp;
    using std::log1p;
    switch (kind) {
      case LinkKind::Exponential: return exp(s / parameter);
      case LinkKind::Softplus: return s > Scalar(30) ? s + log1p(exp(-s)) : log1p(exp(s));
      case LinkKind::SquarePlusOne: return Scalar(1) + s * s;
      case LinkKind::ExpWithSlope: return exp(parameter * s);
    }
    return Scalar(0);
  }

  /// Evaluates and enforces positivity (underflow counts as a violation).
  Scalar operator()(Scalar s) const {
    const Scalar v = raw(s);
    require(v > Scalar(0) && std::isfinite(v), Errc::NonPositiveLinkValue,
            "link value " + std::to_string(static_cast<double>(v)) + " at score " +
                std::to_string(static_cast<double>(s)));
    return v;
  }

  std::string name() const {
    switch (kind) {
      case LinkKind::Exponential: return "exponential";
      case LinkKind::Softplus: return "softplus";
      case LinkKind::SquarePlusOne: return "square-plus-one";
      case LinkKind::ExpWithSlope: return "exp-with-slope";
    }
    return "unknown";
  }
};

/// Nonnegative kernel whose support is exactly its mask.
template <typename Scalar = double>
struct EvidenceKernel {
  Mat<Scalar> values;
  Mask mask;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  /// Mask inferred from strict positivity.
  static EvidenceKernel from_values(Mat<Scalar> v) {
    Mask m = (v.array() > Scalar(0));
    return {std::move(v), std::move(m)};
  }

  bool support_matches_mask() const {
    if (mask.rows() != values.rows() || mask.cols() != values.cols()) return false;
    for (Index i = 0; i < rows(); ++i)
      for (Index j = 0; j < cols(); ++j)
        if ((values(i, j) > Scalar(0)) != mask(i, j) || values(i, j) < Scalar(0)) return false;
    return true;
  }

  void validate() const {
    require_shape(mask, values.rows(), values.cols(), "kernel mask");
    require(support_matches_mask(), Errc::InvalidArgument,
            "kernel values must be > 0 exactly on the mask and 0 elsewhere");
  }
};

template <typename Scalar>
EvidenceKernel<Scalar> assemble_kernel(const MaskedScore<Scalar>& score, const BaselinePrior<Scalar>& prior,
                                       const Link<Scalar>& link) {
  require_shape(score.mask, score.rows(), score.cols(), "score mask");
  require_shape(prior.values, score.rows(), score.cols(), "baseline prior");
  prior.validate();
  EvidenceKernel<Scalar> k{Mat<Scalar>::Zero(score.rows(), score.cols()), score.mask};
  for (Index j = 0; j < score.cols(); ++j)
    for (Index i = 0; i < score.rows(); ++i) {
      if (!score.mask(i, j)) continue;
      const Scalar v = prior.values(i, j) * link(score.values(i, j));
      require(v > Scalar(0) && std::isfinite(v), Errc::NonPositiveLinkValue,
              "kernel entry not representable as a positive finite value", i);
      k.values(i, j) = v;
    }
  return k;
}

template <typename Scalar>
Vec<Scalar> row_mass(const EvidenceKernel<Scalar>& k) {
  Vec<Scalar> z = Vec<Scalar>::Zero(k.rows());
  for (Index i = 0; i < k.rows(); ++i)
    for (Index j = 0; j < k.cols(); ++j)
      if (k.mask(i, j)) z(i) += k.values(i, j);
  return z;
}

/// Negates a work array on its mask.
template <typename Scalar>
MaskedScore<Scalar> score_from_work(const Mat<Scalar>& work, const Mask& mask) {
  require_shape(mask, work.rows(), work.cols(), "work mask");
  MaskedScore<Scalar> s{Mat<Scalar>::Zero(work.rows(), work.cols()), mask};
  for (Index j = 0; j < work.cols(); ++j)
    for (Index i = 0; i < work.rows(); ++i)
      if (mask(i, j)) s.values(i, j) = -work(i, j);
  return s;
}

template <typename Scalar = double>
struct CompositionReport {
  bool pass = true;
  Scalar max_violation = Scalar(0);
  std::pair<Scalar, Scalar> witness{Scalar(0), Scalar(0)};
};

/// Tests the multiplicative law g(w1 + w2) = g(w1) g(w2) for the evidence
/// factor g(w) = psi(-w) over every ordered pair of grid points. The violation
/// is |g(w1+w2) - g(w1) g(w2)| / (1 + |g(w1) g(w2)|).
template <typename Scalar>
CompositionReport<Scalar> check_link_compositionality(const Link<Scalar>& link, std::span<const Scalar> grid,
                                                      Scalar tol) {
  require(!grid.empty(), Errc::InvalidArgument, "compositionality grid is empty");
  const auto g = [&](Scalar w) { return link(-w); };
  CompositionReport<Scalar> report;
  report.witness = {grid.front(), grid.front()};
  for (Scalar w1 : grid) {
    for (Scalar w2 : grid) {
      const Scalar product = g(w1) * g(w2);
      const Scalar violation = std::abs(g(w1 + w2) - product) / (Scalar(1) + std::abs(product));
      if (violation > report.max_violation) {
        report.max_violation = violation;
        report.witness = {w1, w2};
      }
    }
  }
  report.pass = report.max_violation <= tol;
  return report;
}

}  // namespace ga
