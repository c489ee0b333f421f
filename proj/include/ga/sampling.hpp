#pragma once

// Seeded random instances for property checks.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "ga/carrier.hpp"
#include "ga/score.hpp"
#include "ga/types.hpp"

namespace ga::sample {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

inline Index integer(Rng& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

inline Mat<double> matrix(Rng& rng, Index rows, Index cols, double lo = -1.0, double hi = 1.0) {
  Mat<double> m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = uniform(rng, lo, hi);
  return m;
}

inline Vec<double> vector(Rng& rng, Index n, double lo = -1.0, double hi = 1.0) {
  Vec<double> v(n);
  for (Index i = 0; i < n; ++i) v(i) = uniform(rng, lo, hi);
  return v;
}

/// Bernoulli(density) mask; optionally forces every row (and column) to hold
/// at least one admissible entry, or the diagonal to be admissible.
inline Mask mask(Rng& rng, Index rows, Index cols, double density, bool nonempty_rows = true,
                 bool nonempty_cols = false, bool diagonal = false) {
  Mask m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = uniform(rng, 0.0, 1.0) < density;
  if (diagonal)
    for (Index i = 0; i < std::min(rows, cols); ++i) m(i, i) = true;
  if (nonempty_rows)
    for (Index i = 0; i < rows; ++i)
      if (!m.row(i).any()) m(i, integer(rng, 0, cols - 1)) = true;
  if (nonempty_cols)
    for (Index j = 0; j < cols; ++j)
      if (!m.col(j).any()) m(integer(rng, 0, rows - 1), j) = true;
  return m;
}

inline EvidenceKernel<double> kernel(Rng& rng, const Mask& m, double lo = 0.1, double hi = 2.0) {
  Mat<double> v = Mat<double>::Zero(m.rows(), m.cols());
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i)
      if (m(i, j)) v(i, j) = uniform(rng, lo, hi);
  return {std::move(v), m};
}

/// Uniformly shuffled surjection {0..fine-1} -> {0..coarse-1}.
inline std::vector<Index> surjection(Rng& rng, Index fine, Index coarse) {
  std::vector<Index> map(static_cast<std::size_t>(fine));
  for (Index i = 0; i < fine; ++i) map[static_cast<std::size_t>(i)] = i < coarse ? i : integer(rng, 0, coarse - 1);
  std::shuffle(map.begin(), map.end(), rng);
  return map;
}

/// Rows drawn uniformly from the simplex interior, renormalized exactly.
inline Mat<double> stochastic_rows(Rng& rng, Index rows, Index cols) {
  Mat<double> g(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) g(i, j) = -std::log(uniform(rng, 1e-3, 1.0));
    g.row(i) /= g.row(i).sum();
  }
  return g;
}

/// Random r x r matrix kept well away from singularity.
inline Mat<double> well_conditioned(Rng& rng, Index r) {
  Mat<double> a = matrix(rng, r, r, -1.0, 1.0);
  for (Index i = 0; i < r; ++i) a(i, i) += (a(i, i) >= 0.0 ? 2.0 : -2.0) * double(r);
  return a;
}

}  // namespace ga::sample
