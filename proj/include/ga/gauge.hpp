#pragma once

// Scaling actions, unary score quotients and the discrete gauge graph.

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "ga/score.hpp"
#include "ga/types.hpp"

namespace ga {

/// K'(x,y) = a(x) K(x,y) b(y) on the mask.
template <typename Scalar>
EvidenceKernel<Scalar> scale_kernel(const EvidenceKernel<Scalar>& k, const Vec<Scalar>& a, const Vec<Scalar>& b) {
  require(a.size() == k.rows() && b.size() == k.cols(), Errc::ShapeMismatch,
          "scaling lengths do not match kernel shape " + shape_string(k.rows(), k.cols()));
  require((a.array() > Scalar(0)).all() && (b.array() > Scalar(0)).all(), Errc::NonPositiveScaling,
          "scaling vectors must be strictly positive");
  EvidenceKernel<Scalar> out{Mat<Scalar>::Zero(k.rows(), k.cols()), k.mask};
  for (Index j = 0; j < k.cols(); ++j)
    for (Index i = 0; i < k.rows(); ++i)
      if (k.mask(i, j)) out.values(i, j) = a(i) * k.values(i, j) * b(j);
  return out;
}

/// Returns a with K2 = diag(a) K (relative tolerance per entry), or nullopt
/// when the two kernels are not related by a left scaling.
template <typename Scalar>
std::optional<Vec<Scalar>> row_equivalent(const EvidenceKernel<Scalar>& k, const EvidenceKernel<Scalar>& k2,
                                          Scalar tol) {
  require(k.rows() == k2.rows() && k.cols() == k2.cols(), Errc::ShapeMismatch, "kernel shapes differ");
  require((k.mask == k2.mask).all(), Errc::MaskMismatch, "kernels have different admissible relations");
  const Vec<Scalar> z = row_mass(k);
  const Vec<Scalar> z2 = row_mass(k2);
  Vec<Scalar> a(k.rows());
  for (Index i = 0; i < k.rows(); ++i) {
    require(z(i) > Scalar(0) && z2(i) > Scalar(0), Errc::EmptyRow, "row " + std::to_string(i) + " has no mass", i);
    a(i) = z2(i) / z(i);
    for (Index j = 0; j < k.cols(); ++j) {
      if (!k.mask(i, j)) continue;
      if (std::abs(k2.values(i, j) - a(i) * k.values(i, j)) > tol * std::abs(k2.values(i, j))) return std::nullopt;
    }
  }
  return a;
}

enum class CenterMode { Row, Col, Double };

template <typename Scalar = double>
struct CenteredDecomposition {
  Scalar grand_mean = Scalar(0);
  Vec<Scalar> row_means;
  Vec<Scalar> col_means;
  Mat<Scalar> interaction;
  // c - m: the column field that survives row anchoring
  Vec<Scalar> key_bias;

  /// r(x) + c(y) - m + S_int(x,y)
  Mat<Scalar> reconstruct() const {
    Mat<Scalar> s = interaction;
    for (Index j = 0; j < s.cols(); ++j)
      for (Index i = 0; i < s.rows(); ++i) s(i, j) += row_means(i) + col_means(j) - grand_mean;
    return s;
  }

  /// S - r(x) = b(y) + S_int(x,y)
  Mat<Scalar> row_centered() const {
    Mat<Scalar> s = interaction;
    s.rowwise() += key_bias.transpose();
    return s;
  }
};

/// Two-pass row/column/grand means. Exact in one pass; no balancing loop.
template <typename Scalar>
CenteredDecomposition<Scalar> double_center(const Mat<Scalar>& s) {
  require(s.rows() > 0 && s.cols() > 0, Errc::ShapeMismatch, "cannot center an empty matrix");
  require(s.allFinite(), Errc::MaskedInputRejected, "centering requires a fully finite score array");
  CenteredDecomposition<Scalar> d;
  d.row_means = s.rowwise().mean();
  d.col_means = s.colwise().mean().transpose();
  d.grand_mean = s.mean();
  d.interaction.resize(s.rows(), s.cols());
  for (Index j = 0; j < s.cols(); ++j)
    for (Index i = 0; i < s.rows(); ++i)
      d.interaction(i, j) = s(i, j) - d.row_means(i) - d.col_means(j) + d.grand_mean;
  d.key_bias = d.col_means.array() - d.grand_mean;
  return d;
}

template <typename Scalar>
CenteredDecomposition<Scalar> double_center(const MaskedScore<Scalar>& s) {
  require(s.is_full(), Errc::MaskedInputRejected,
          "arithmetic centering is undefined on a masked score; use weighted_row_center");
  return double_center(s.values);
}

/// Row: S - r(x). Col: S - c(y). Double: S_int.
template <typename Scalar>
Mat<Scalar> center_scores(const Mat<Scalar>& s, CenterMode mode) {
  require(s.allFinite(), Errc::MaskedInputRejected, "centering requires a fully finite score array");
  switch (mode) {
    case CenterMode::Row: {
      Mat<Scalar> out = s;
      out.colwise() -= Vec<Scalar>(s.rowwise().mean());
      return out;
    }
    case CenterMode::Col: {
      Mat<Scalar> out = s;
      out.rowwise() -= s.colwise().mean();
      return out;
    }
    case CenterMode::Double: return double_center(s).interaction;
  }
  return s;
}

template <typename Scalar>
Mat<Scalar> center_scores(const MaskedScore<Scalar>& s, CenterMode mode) {
  require(s.is_full(), Errc::MaskedInputRejected,
          "arithmetic centering is undefined on a masked score; use weighted_row_center");
  return center_scores(s.values, mode);
}

/// S - m_w(x) on supp(w), where m_w is the w-weighted row mean. The result
/// is the unique row-shift representative with zero weighted row sums.
template <typename Scalar>
MaskedScore<Scalar> weighted_row_center(const MaskedScore<Scalar>& s, const Mat<Scalar>& w) {
  require_shape(w, s.rows(), s.cols(), "reference weight");
  MaskedScore<Scalar> out{Mat<Scalar>::Zero(s.rows(), s.cols()), Mask(w.array() > Scalar(0))};
  for (Index i = 0; i < s.rows(); ++i) {
    Scalar mass(0);
    Scalar weighted(0);
    for (Index j = 0; j < s.cols(); ++j) {
      require(w(i, j) >= Scalar(0), Errc::InvalidArgument, "reference weight must be nonnegative", i);
      if (w(i, j) == Scalar(0)) continue;
      require(s.mask(i, j), Errc::MaskMismatch, "reference weight has mass outside the score mask", i);
      mass += w(i, j);
      weighted += w(i, j) * s.values(i, j);
    }
    require(mass > Scalar(0), Errc::ZeroRowMass, "reference weight row " + std::to_string(i) + " has no mass", i);
    const Scalar mean = weighted / mass;
    for (Index j = 0; j < s.cols(); ++j)
      if (out.mask(i, j)) out.values(i, j) = s.values(i, j) - mean;
  }
  return out;
}

/// Sum_y w(x,y) S(x,y) over supp(w) for each row; zero for a weighted-centered S.
template <typename Scalar>
Vec<Scalar> weighted_row_sums(const MaskedScore<Scalar>& s, const Mat<Scalar>& w) {
  require_shape(w, s.rows(), s.cols(), "reference weight");
  Vec<Scalar> out = Vec<Scalar>::Zero(s.rows());
  for (Index i = 0; i < s.rows(); ++i)
    for (Index j = 0; j < s.cols(); ++j)
      if (w(i, j) > Scalar(0)) out(i) += w(i, j) * s.values(i, j);
  return out;
}

/// Directed graph carrying an edge potential (1-cochain) and optionally a
/// vertex potential.
template <typename Scalar = double>
struct GaugeGraph {
  Index vertices = 0;
  std::vector<std::pair<Index, Index>> edges;
  Vec<Scalar> edge_potential;
  std::optional<Vec<Scalar>> vertex_potential;

  void validate() const {
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const auto [u, v] = edges[e];
      require(u >= 0 && u < vertices && v >= 0 && v < vertices, Errc::IndexOutOfRange,
              "edge endpoint out of range", static_cast<Index>(e));
    }
    require(edge_potential.size() == static_cast<Index>(edges.size()), Errc::ShapeMismatch,
            "edge potential length differs from edge count");
    if (vertex_potential)
      require(vertex_potential->size() == vertices, Errc::ShapeMismatch,
              "vertex potential length differs from vertex count");
  }
};

/// (d phi)(u -> v) = phi(v) - phi(u)
template <typename Scalar>
Vec<Scalar> coboundary(const GaugeGraph<Scalar>& g) {
  require(g.vertex_potential.has_value(), Errc::MissingPotential, "graph has no vertex potential");
  g.validate();
  const Vec<Scalar>& phi = *g.vertex_potential;
  Vec<Scalar> d(static_cast<Index>(g.edges.size()));
  for (std::size_t e = 0; e < g.edges.size(); ++e) d(static_cast<Index>(e)) = phi(g.edges[e].second) - phi(g.edges[e].first);
  return d;
}

/// A -> A + d phi, using the graph's vertex potential.
template <typename Scalar>
GaugeGraph<Scalar> gauge_transform(const GaugeGraph<Scalar>& g) {
  GaugeGraph<Scalar> out = g;
  out.edge_potential = g.edge_potential + coboundary(g);
  return out;
}

/// Holonomy of A along a closed directed walk (vertices may repeat).
template <typename Scalar>
Scalar cycle_sum(const GaugeGraph<Scalar>& g, const std::vector<Index>& cycle) {
  g.validate();
  require(!cycle.empty(), Errc::NotACycle, "empty edge sequence");
  const auto edge = [&](std::size_t k) {
    const Index e = cycle[k];
    require(e >= 0 && e < static_cast<Index>(g.edges.size()), Errc::IndexOutOfRange, "edge index", e);
    return g.edges[static_cast<std::size_t>(e)];
  };
  Scalar total(0);
  for (std::size_t k = 0; k < cycle.size(); ++k) {
    const auto next = edge((k + 1) % cycle.size());
    require(edge(k).second == next.first, Errc::NotACycle,
            "edge " + std::to_string(cycle[k]) + " does not end where the next edge starts",
            static_cast<Index>(k));
    total += g.edge_potential(cycle[k]);
  }
  return total;
}

}  // namespace ga
