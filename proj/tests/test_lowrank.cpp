#include "doctest.h"

#include <cmath>

#include "ga/lowrank.hpp"
#include "ga/sampling.hpp"
#include "support/oracles.hpp"

using ga::Errc;
using ga::Index;
using M = ga::Mat<double>;
using V = ga::Vec<double>;

namespace {

void check_svd_invariants(const M& m, const ga::SvdResult<double>& d) {
  const Index p = std::min(m.rows(), m.cols());
  CHECK(d.sigma.size() == p);
  CHECK((d.U.transpose() * d.U - M::Identity(p, p)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((d.V.transpose() * d.V - M::Identity(p, p)).cwiseAbs().maxCoeff() <= 1e-10);
  for (Index k = 1; k < p; ++k) CHECK(d.sigma(k) <= d.sigma(k - 1));
  CHECK((d.sigma.array() >= 0).all());
  CHECK((d.reconstruct() - m).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, m.cwiseAbs().maxCoeff()));
}

}  // namespace

TEST_CASE("svd of small fixed matrices") {
  M d = (M(2, 2) << 3, 0, 0, 1).finished();
  auto r = ga::svd(d);
  CHECK(r.sigma(0) == doctest::Approx(3.0));
  CHECK(r.sigma(1) == doctest::Approx(1.0));
  CHECK((r.U.cwiseAbs() - M::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((r.V.cwiseAbs() - M::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-14);

  auto z = ga::svd(M(M::Zero(3, 2)));
  CHECK(z.sigma.isZero(0.0));
  check_svd_invariants(M::Zero(3, 2), z);
}

TEST_CASE("svd against eigenvalue oracles") {
  std::mt19937_64 rng(20);
  M m = ga::sample::matrix(rng, 8, 5, -2, 2);
  auto d = ga::svd(m);
  check_svd_invariants(m, d);
  const auto power = oracle::power_eigenvalues(m.transpose() * m, 5, 20000);
  for (Index k = 0; k < 5; ++k)
    CHECK(d.sigma(k) == doctest::Approx(std::sqrt(std::max(0.0, power[static_cast<std::size_t>(k)]))).epsilon(1e-6));

  for (int trial = 0; trial < 10; ++trial) {
    const Index rows = ga::sample::integer(rng, 3, 8);
    M s = ga::sample::matrix(rng, rows, 3, -2, 2);
    auto e = ga::svd(s);
    check_svd_invariants(s, e);
    const auto eig = oracle::symmetric3_eigenvalues(oracle::matmul(s.transpose(), s));
    for (Index k = 0; k < 3; ++k)
      CHECK(e.sigma(k) == doctest::Approx(std::sqrt(std::max(0.0, eig[static_cast<std::size_t>(k)]))).epsilon(1e-10));

    M wide = s.transpose();
    check_svd_invariants(wide, ga::svd(wide));
  }
  CHECK_THROWS_AS(ga::svd(M(M::Constant(2, 2, NAN))), ga::Error);
}

TEST_CASE("svd is deterministic and handles rank deficiency") {
  std::mt19937_64 rng(22);
  M a = ga::sample::matrix(rng, 7, 2);
  M b = ga::sample::matrix(rng, 6, 2);
  M m = a * b.transpose();
  auto d1 = ga::svd(m);
  auto d2 = ga::svd(m);
  CHECK(d1.U == d2.U);
  CHECK(d1.sigma == d2.sigma);
  check_svd_invariants(m, d1);
  CHECK(d1.sigma.tail(4).cwiseAbs().maxCoeff() <= 1e-12 * d1.sigma(0));
}

TEST_CASE("truncation") {
  M d = (M(2, 2) << 3, 0, 0, 1).finished();
  auto t = ga::truncate(d, 1);
  CHECK((t.approx - (M(2, 2) << 3, 0, 0, 0).finished()).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK(t.residual == doctest::Approx(1.0));
  auto full = ga::truncate(d, 2);
  CHECK(full.residual <= 1e-14);
  try {
    ga::truncate(d, 3);
    FAIL("expected throw");
  } catch (const ga::Error& e) {
    CHECK(e.code() == Errc::RankOutOfRange);
  }
  CHECK(ga::truncate(M(M::Identity(3, 3)), 1).degenerate);
}

TEST_CASE("Eckart-Young optimality against random factorizations") {
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    const Index rows = ga::sample::integer(rng, 2, 12);
    const Index cols = ga::sample::integer(rng, 2, 12);
    const Index r = ga::sample::integer(rng, 1, std::min(rows, cols));
    M m = ga::sample::matrix(rng, rows, cols, -2, 2);
    auto t = ga::truncate(m, r);
    const auto d = ga::svd(m);
    const double tail = d.sigma.tail(d.sigma.size() - r).squaredNorm();
    CHECK(std::abs(t.residual * t.residual - tail) <= 1e-8 * std::max(1.0, tail));
    for (int f = 0; f < 200; ++f) {
      M a = ga::sample::matrix(rng, rows, r, -2, 2);
      M b = ga::sample::matrix(rng, cols, r, -2, 2);
      CHECK(t.residual <= (m - a * b.transpose()).norm() + 1e-12);
    }
  }
}

TEST_CASE("q/k extraction") {
  V u = (V(3) << 1, -2, 0.5).finished();
  V v = (V(2) << 3, 1).finished();
  M outer = u * v.transpose();
  auto c = ga::extract_qk(outer, 1);
  CHECK((c.Q * c.L.transpose() - outer).cwiseAbs().maxCoeff() <= 1e-12);

  auto four = ga::extract_qk(M(M::Constant(1, 1, 4.0)), 1);
  CHECK(std::abs(four.Q(0, 0)) == doctest::Approx(2.0));
  CHECK(std::abs(four.L(0, 0)) == doctest::Approx(2.0));

  std::mt19937_64 rng(26);
  M m = ga::sample::matrix(rng, 6, 5);
  for (Index r = 0; r <= 5; ++r) {
    auto q = ga::extract_qk(m, r);
    CHECK((q.Q * q.L.transpose() - ga::truncate(m, r).approx).cwiseAbs().maxCoeff() <= 1e-10);
    // symmetric split: column norms of Q and L agree
    for (Index k = 0; k < r; ++k) CHECK(q.Q.col(k).norm() == doctest::Approx(q.L.col(k).norm()).epsilon(1e-10));
  }
}

TEST_CASE("chart reparameterization") {
  std::mt19937_64 rng(28);
  M q = ga::sample::matrix(rng, 5, 3);
  M l = ga::sample::matrix(rng, 4, 3);
  auto [q1, l1] = ga::reparameterize_chart(q, l, M(M::Identity(3, 3)));
  CHECK(q1 == q);
  CHECK((l1 - l).cwiseAbs().maxCoeff() == 0.0);
  auto [q2, l2] = ga::reparameterize_chart(q, l, M(2.0 * M::Identity(3, 3)));
  CHECK((q2 - 2.0 * q).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((l2 - 0.5 * l).cwiseAbs().maxCoeff() <= 1e-15);
  for (int trial = 0; trial < 10; ++trial) {
    M a = ga::sample::well_conditioned(rng, 3);
    auto [qa, la] = ga::reparameterize_chart(q, l, a);
    CHECK((qa * la.transpose() - q * l.transpose()).cwiseAbs().maxCoeff() <= 1e-8);
  }
  M singular = M::Zero(3, 3);
  singular(0, 0) = 1.0;
  try {
    ga::reparameterize_chart(q, l, singular);
    FAIL("expected throw");
  } catch (const ga::Error& e) {
    CHECK(e.code() == Errc::SingularChartMap);
  }
}

TEST_CASE("score normal form") {
  std::mt19937_64 rng(30);
  V alpha = ga::sample::vector(rng, 4);
  V beta = ga::sample::vector(rng, 5);
  M sep = M::Zero(4, 5);
  sep.colwise() += alpha;
  sep.rowwise() += beta.transpose();
  auto z = ga::score_normal_form(sep, 0);
  M row_centered = ga::center_scores(sep, ga::CenterMode::Row);
  CHECK((z.scores() - row_centered).cwiseAbs().maxCoeff() <= 1e-12);

  // key bias plus a zero-sum rank-1 interaction
  V b = ga::sample::vector(rng, 5);
  V u = ga::sample::vector(rng, 4);
  V v = ga::sample::vector(rng, 5);
  u.array() -= u.mean();
  v.array() -= v.mean();
  M s = u * v.transpose();
  s.rowwise() += b.transpose();
  s.colwise() += alpha;
  auto one = ga::score_normal_form(s, 1);
  CHECK((one.scores() - ga::center_scores(s, ga::CenterMode::Row)).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(one.frobenius_residual <= 1e-10);

  M r = ga::sample::matrix(rng, 4, 6, -3, 3);
  auto full = ga::score_normal_form(r, 4);
  CHECK((full.scores() - ga::center_scores(r, ga::CenterMode::Row)).cwiseAbs().maxCoeff() <= 1e-10);

  auto two = ga::score_normal_form(r, 2);
  CHECK((two.scores() - ga::center_scores(r, ga::CenterMode::Row)).norm() ==
        doctest::Approx(two.frobenius_residual).epsilon(1e-9));

  ga::MaskedScore<double> masked{r, ga::full_mask(4, 6)};
  masked.mask(1, 1) = false;
  CHECK_THROWS_AS(ga::score_normal_form(masked, 1), ga::Error);
}
