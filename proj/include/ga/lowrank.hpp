#pragma once

// SVD, Eckart-Young truncation and dot-product charts of score interactions.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "ga/gauge.hpp"
#include "ga/types.hpp"

namespace ga {

template <typename Scalar = double>
struct SvdResult {
  Mat<Scalar> U;      // n_x x p, orthonormal columns
  Vec<Scalar> sigma;  // p, nonincreasing
  Mat<Scalar> V;      // n_y x p, orthonormal columns
  int sweeps = 0;

  Mat<Scalar> reconstruct() const { return U * sigma.asDiagonal() * V.transpose(); }
};

struct SvdOptions {
  // rotate a column pair while |cos angle| exceeds this
  double orthogonality = 1e-12;
  int max_sweeps = 60;
};

namespace detail {

// One-sided (Hestenes) Jacobi for a tall or square matrix.
template <typename Scalar>
SvdResult<Scalar> jacobi_svd_tall(const Mat<Scalar>& m, const SvdOptions& opt) {
  const Index rows = m.rows();
  const Index n = m.cols();
  Mat<Scalar> a = m;
  Mat<Scalar> v = Mat<Scalar>::Identity(n, n);
  const Scalar fro = m.norm();
  const Scalar negligible = Scalar(1e-14) * fro;
  const Scalar eps = Scalar(opt.orthogonality);

  int sweep = 0;
  bool converged = (fro == Scalar(0)) || n < 2;
  while (!converged) {
    require(sweep < opt.max_sweeps, Errc::NoConvergence,
            "one-sided Jacobi did not converge in " + std::to_string(opt.max_sweeps) + " sweeps");
    ++sweep;
    bool rotated = false;
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const Scalar alpha = a.col(p).squaredNorm();
        const Scalar beta = a.col(q).squaredNorm();
        if (std::sqrt(alpha) <= negligible || std::sqrt(beta) <= negligible) continue;
        const Scalar gamma = a.col(p).dot(a.col(q));
        if (std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const Scalar zeta = (beta - alpha) / (Scalar(2) * gamma);
        const Scalar t = (zeta >= Scalar(0) ? Scalar(1) : Scalar(-1)) /
                         (std::abs(zeta) + std::sqrt(Scalar(1) + zeta * zeta));
        const Scalar c = Scalar(1) / std::sqrt(Scalar(1) + t * t);
        const Scalar s = c * t;
        for (Index i = 0; i < rows; ++i) {
          const Scalar ap = a(i, p);
          const Scalar aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
        for (Index i = 0; i < n; ++i) {
          const Scalar vp = v(i, p);
          const Scalar vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    converged = !rotated;
  }

  Vec<Scalar> norms(n);
  for (Index j = 0; j < n; ++j) norms(j) = a.col(j).norm();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return norms(x) > norms(y); });

  SvdResult<Scalar> out;
  out.sweeps = sweep;
  out.U = Mat<Scalar>::Zero(rows, n);
  out.V.resize(n, n);
  out.sigma.resize(n);
  std::vector<bool> filled(static_cast<std::size_t>(n), false);
  for (Index k = 0; k < n; ++k) {
    const Index j = order[static_cast<std::size_t>(k)];
    out.sigma(k) = norms(j);
    out.V.col(k) = v.col(j);
    if (norms(j) > negligible) {
      out.U.col(k) = a.col(j) / norms(j);
      filled[static_cast<std::size_t>(k)] = true;
    }
  }
  // Complete U for (numerically) zero singular values by Gram-Schmidt on the
  // standard basis vector with the largest residual.
  for (Index k = 0; k < n; ++k) {
    if (filled[static_cast<std::size_t>(k)]) continue;
    Vec<Scalar> best;
    Scalar best_norm(-1);
    for (Index e = 0; e < rows; ++e) {
      Vec<Scalar> cand = Vec<Scalar>::Unit(rows, e);
      for (int pass = 0; pass < 2; ++pass)
        for (Index l = 0; l < n; ++l)
          if (filled[static_cast<std::size_t>(l)]) cand -= out.U.col(l).dot(cand) * out.U.col(l);
      const Scalar nrm = cand.norm();
      if (nrm > best_norm) {
        best_norm = nrm;
        best = cand;
      }
    }
    out.U.col(k) = best / best_norm;
    filled[static_cast<std::size_t>(k)] = true;
  }
  return out;
}

}  // namespace detail

/// Thin SVD (p = min shape) by one-sided Jacobi rotations. Each U column is
/// signed so its largest-magnitude entry is nonnegative.
template <typename Scalar>
SvdResult<Scalar> svd(const Mat<Scalar>& m, const SvdOptions& opt = {}) {
  require(m.allFinite(), Errc::InvalidArgument, "svd input must be finite");
  require(m.rows() > 0 && m.cols() > 0, Errc::ShapeMismatch, "svd of an empty matrix");
  SvdResult<Scalar> out;
  if (m.rows() >= m.cols()) {
    out = detail::jacobi_svd_tall(m, opt);
  } else {
    SvdResult<Scalar> t = detail::jacobi_svd_tall(Mat<Scalar>(m.transpose()), opt);
    out.U = std::move(t.V);
    out.V = std::move(t.U);
    out.sigma = std::move(t.sigma);
    out.sweeps = t.sweeps;
  }
  for (Index k = 0; k < out.U.cols(); ++k) {
    Index arg = 0;
    out.U.col(k).cwiseAbs().maxCoeff(&arg);
    if (out.U(arg, k) < Scalar(0)) {
      out.U.col(k) *= Scalar(-1);
      out.V.col(k) *= Scalar(-1);
    }
  }
  return out;
}

template <typename Scalar = double>
struct Truncation {
  Mat<Scalar> approx;
  Scalar residual = Scalar(0);  // ||M - M_r||_F, measured
  bool degenerate = false;      // sigma_r == sigma_{r+1} > 0: M_r not unique
};

namespace detail {

template <typename Scalar>
bool tie_at_boundary(const Vec<Scalar>& sigma, Index r) {
  if (r <= 0 || r >= sigma.size()) return false;
  const Scalar scale = sigma(0);
  return sigma(r - 1) > Scalar(0) && std::abs(sigma(r - 1) - sigma(r)) <= Scalar(1e-12) * scale;
}

inline void require_rank(Index r, Index rows, Index cols) {
  require(r >= 0 && r <= std::min(rows, cols), Errc::RankOutOfRange,
          "rank " + std::to_string(r) + " outside [0, " + std::to_string(std::min(rows, cols)) + "]");
}

}  // namespace detail

/// Best rank-r approximation in Frobenius norm.
template <typename Scalar>
Truncation<Scalar> truncate(const Mat<Scalar>& m, Index r) {
  detail::require_rank(r, m.rows(), m.cols());
  const SvdResult<Scalar> d = svd(m);
  Truncation<Scalar> out;
  out.approx = d.U.leftCols(r) * d.sigma.head(r).asDiagonal() * d.V.leftCols(r).transpose();
  out.residual = (m - out.approx).norm();
  out.degenerate = detail::tie_at_boundary(d.sigma, r);
  return out;
}

/// Rank-r factors with scores Q L^T; key_bias is set only by the normal form.
template <typename Scalar = double>
struct LowRankChart {
  Mat<Scalar> Q;  // n_x x r
  Mat<Scalar> L;  // n_y x r
  Index rank = 0;
  Scalar frobenius_residual = Scalar(0);
  bool degenerate_truncation = false;
  Vec<Scalar> key_bias;

  /// b(y) + q(x)^T k(y); the bias term is omitted when key_bias is empty.
  Mat<Scalar> scores() const {
    Mat<Scalar> s = Q * L.transpose();
    if (key_bias.size() == s.cols()) s.rowwise() += key_bias.transpose();
    return s;
  }
};

/// Q = U_r Sigma_r^{1/2}, L = V_r Sigma_r^{1/2}.
template <typename Scalar>
LowRankChart<Scalar> extract_qk(const Mat<Scalar>& m, Index r) {
  detail::require_rank(r, m.rows(), m.cols());
  const SvdResult<Scalar> d = svd(m);
  LowRankChart<Scalar> c;
  c.rank = r;
  const Vec<Scalar> root = d.sigma.head(r).cwiseSqrt();
  c.Q = d.U.leftCols(r) * root.asDiagonal();
  c.L = d.V.leftCols(r) * root.asDiagonal();
  c.frobenius_residual = (m - c.Q * c.L.transpose()).norm();
  c.degenerate_truncation = detail::tie_at_boundary(d.sigma, r);
  return c;
}

/// (Q A^T, L A^{-1}); preserves Q L^T for any invertible A.
template <typename Scalar>
std::pair<Mat<Scalar>, Mat<Scalar>> reparameterize_chart(const Mat<Scalar>& q, const Mat<Scalar>& l,
                                                         const Mat<Scalar>& a) {
  require(a.rows() == a.cols() && a.rows() == q.cols() && l.cols() == q.cols(), Errc::ShapeMismatch,
          "chart map must be r x r with r = factor width");
  if (a.rows() == 0) return {q, l};
  const Vec<Scalar> s = svd(a).sigma;
  const Scalar smallest = s(s.size() - 1);
  require(smallest > Scalar(0) && s(0) / smallest < Scalar(1e8), Errc::SingularChartMap,
          "chart map is singular or has condition number >= 1e8");
  const Mat<Scalar> inv = a.partialPivLu().inverse();
  return {q * a.transpose(), l * inv};
}

/// Row-anchored normal form: S - r(x) ~ b(y) + q(x)^T k(y) with b = c - m and
/// (q, k) the rank-r chart of the double-centered interaction.
template <typename Scalar>
LowRankChart<Scalar> score_normal_form(const Mat<Scalar>& s, Index r) {
  const CenteredDecomposition<Scalar> d = double_center(s);
  LowRankChart<Scalar> c = extract_qk(d.interaction, r);
  c.key_bias = d.key_bias;
  return c;
}

template <typename Scalar>
LowRankChart<Scalar> score_normal_form(const MaskedScore<Scalar>& s, Index r) {
  require(s.is_full(), Errc::MaskedInputRejected, "normal form requires a fully finite score array");
  return score_normal_form(s.values, r);
}

}  // namespace ga
