#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "oracles.hpp"
#include "rankshift/linalg.hpp"

using namespace rankshift;

namespace {

Tensor diag3(double a, double b, double c) {
  Tensor w({3, 3});
  w(0, 0) = a;
  w(1, 1) = b;
  w(2, 2) = c;
  return w;
}

double reconstruction_error(const Tensor& w, const SvdResult& r) {
  Tensor recon({w.rows(), w.cols()});
  for (std::size_t j = 0; j < r.s.size(); ++j) {
    for (std::size_t i = 0; i < w.rows(); ++i) {
      const double us = r.u(i, j) * r.s[j];
      for (std::size_t c = 0; c < w.cols(); ++c) {
        recon(i, c) += us * r.v(c, j);
      }
    }
  }
  recon -= w;
  return recon.frob_norm();
}

double orthonormality_defect(const Tensor& q) {
  Tensor g = matmul_tn(q, q);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
  return g.frob_norm();
}

void check_svd_contract(const Tensor& w) {
  const SvdResult r = svd(w);
  const std::size_t p = std::min(w.rows(), w.cols());
  REQUIRE(r.s.size() == p);
  for (std::size_t i = 0; i < p; ++i) {
    CHECK(r.s[i] >= 0.0);
    if (i) CHECK(r.s[i - 1] >= r.s[i]);
  }
  CHECK(orthonormality_defect(r.u) <= 1e-8 * static_cast<double>(p));
  CHECK(orthonormality_defect(r.v) <= 1e-8 * static_cast<double>(p));
  CHECK(reconstruction_error(w, r) <= 1e-8 * std::max(w.frob_norm(), 1e-30));
}

}  // namespace

TEST_CASE("svd: identity has unit spectrum") {
  const SvdResult r = svd(Tensor::identity(3));
  for (double s : r.s) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("svd: diagonal matrix") {
  const SvdResult r = svd(diag3(3, 2, 1));
  CHECK(r.s[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(r.s[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.s[2] == doctest::Approx(1.0).epsilon(1e-12));
  // U and V are the identity up to (consistent) sign
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double want = i == j ? 1.0 : 0.0;
      CHECK(std::abs(r.u(i, j)) == doctest::Approx(want).epsilon(1e-12));
      CHECK(std::abs(r.v(i, j)) == doctest::Approx(want).epsilon(1e-12));
      CHECK(r.u(i, j) * r.v(i, j) >= -1e-12);
    }
  }
}

TEST_CASE("svd: seeded 5x4 matches Gram eigenvalue oracle") {
  Rng rng(42);
  const Tensor w = oracles::random_matrix(rng, 5, 4);
  const SvdResult r = svd(w);
  const auto expect = oracles::gram_singular_values(w);
  REQUIRE(expect.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(std::abs(r.s[i] - expect[i]) <= 1e-9 * std::max(1.0, expect[0]));
  }
}

TEST_CASE("svd: contract holds on random matrices up to 16x16") {
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + rng.index(16);
    const std::size_t n = 1 + rng.index(16);
    check_svd_contract(oracles::random_matrix(rng, m, n));
  }
}

TEST_CASE("svd: zero matrix and rank-deficient input") {
  check_svd_contract(Tensor({4, 4}));
  const SvdResult r = svd(Tensor({4, 4}));
  for (double s : r.s) CHECK(s == 0.0);

  Rng rng(3);
  const Tensor a = oracles::random_matrix(rng, 6, 2);
  const Tensor b = oracles::random_matrix(rng, 5, 2);
  check_svd_contract(matmul_nt(a, b));  // rank 2 in 6x5
}

TEST_CASE("svd: wide input handled via transpose") {
  Rng rng(11);
  check_svd_contract(oracles::random_matrix(rng, 3, 9));
}

TEST_CASE("svd: errors") {
  CHECK_THROWS_AS(svd(Tensor({4})), std::invalid_argument);
  Tensor w({2, 2});
  w(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(svd(w), std::domain_error);
}

TEST_CASE("svd: deterministic") {
  Rng rng(5);
  const Tensor w = oracles::random_matrix(rng, 8, 6);
  const SvdResult a = svd(w);
  const SvdResult b = svd(w);
  CHECK(a.u == b.u);
  CHECK(a.s == b.s);
  CHECK(a.v == b.v);
}

TEST_CASE("truncated_svd: full-rank truncation is exact") {
  const Tensor w = diag3(3, 2, 1);
  const auto [a, b] = truncated_svd(w, 3);
  Tensor err = matmul_nt(a, b);
  err -= w;
  CHECK(err.frob_norm() <= 1e-10);
}

TEST_CASE("truncated_svd: Eckart-Young on a diagonal matrix") {
  const Tensor w = diag3(3, 2, 1);
  const auto [a, b] = truncated_svd(w, 1);
  Tensor err = matmul_nt(a, b);
  err -= w;
  CHECK(err.frob_norm() == doctest::Approx(std::sqrt(5.0)).epsilon(1e-10));
}

TEST_CASE("truncated_svd: tail energy matches own full spectrum") {
  Rng rng(99);
  const Tensor w = oracles::random_matrix(rng, 6, 6);
  const auto s = singular_values(w);
  const auto [a, b] = truncated_svd(w, 2);
  Tensor err = matmul_nt(a, b);
  err -= w;
  double tail = 0.0;
  for (std::size_t i = 2; i < s.size(); ++i) tail += s[i] * s[i];
  CHECK(std::abs(err.frob_norm() - std::sqrt(tail)) <= 1e-9);
}

TEST_CASE("truncated_svd: symmetric split balances factor norms") {
  Rng rng(4);
  const Tensor w = oracles::random_matrix(rng, 7, 5);
  const auto [a, b] = truncated_svd(w, 3);
  for (std::size_t j = 0; j < 3; ++j) {
    double na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < 7; ++i) na += a(i, j) * a(i, j);
    for (std::size_t i = 0; i < 5; ++i) nb += b(i, j) * b(i, j);
    CHECK(std::sqrt(na) == doctest::Approx(std::sqrt(nb)).epsilon(1e-10));
  }
}

TEST_CASE("truncated_svd: k out of range") {
  const Tensor w = diag3(3, 2, 1);
  CHECK_THROWS_AS(truncated_svd(w, 0), std::invalid_argument);
  CHECK_THROWS_AS(truncated_svd(w, 4), std::invalid_argument);
}

TEST_CASE("Eckart-Young property over 200 seeded matrices") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 2 + rng.index(15);
    const std::size_t n = 2 + rng.index(15);
    const Tensor w = oracles::random_matrix(rng, m, n);
    const std::size_t p = std::min(m, n);
    const std::size_t k = 1 + rng.index(p);
    const auto s = singular_values(w);
    const auto [a, b] = truncated_svd(w, k);
    Tensor err = matmul_nt(a, b);
    err -= w;
    double tail = 0.0;
    for (std::size_t i = k; i < p; ++i) tail += s[i] * s[i];
    CHECK(std::abs(err.frob_norm() - std::sqrt(tail)) <=
          1e-8 * std::max(w.frob_norm(), 1e-30));
  }
}

TEST_CASE("numerical_rank: zero matrix") {
  CHECK(numerical_rank(Tensor({4, 4}), 1e-8) == 0);
}

TEST_CASE("numerical_rank: thresholding") {
  Tensor w({2, 2});
  w(0, 0) = 1.0;
  w(1, 1) = 1e-12;
  CHECK(numerical_rank(w, 1e-8) == 1);
}

TEST_CASE("numerical_rank: sum of rank-1 pieces, elimination oracle") {
  Rng rng(17);
  Tensor w({8, 8});
  for (int r = 0; r < 3; ++r) {
    const Tensor u = oracles::random_matrix(rng, 8, 1);
    const Tensor v = oracles::random_matrix(rng, 8, 1);
    w += matmul_nt(u, v);
  }
  CHECK(numerical_rank(w, 1e-8) == 3);
  CHECK(oracles::elimination_rank(w) == 3);
}

TEST_CASE("numerical_rank: product bound rank(AB^T) <= k") {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 2 + rng.index(10);
    const std::size_t n = 2 + rng.index(10);
    const std::size_t k = 1 + rng.index(std::min(m, n));
    const Tensor a = oracles::random_matrix(rng, m, k);
    const Tensor b = oracles::random_matrix(rng, n, k);
    CHECK(numerical_rank(matmul_nt(a, b), 1e-8) <= static_cast<int>(k));
  }
}

TEST_CASE("numerical_rank: rel_tol domain") {
  CHECK_THROWS_AS(numerical_rank(Tensor::identity(2), 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(numerical_rank(Tensor::identity(2), 1.0),
                  std::invalid_argument);
}

TEST_CASE("solve_linear: round trip") {
  Rng rng(31);
  const Tensor a = oracles::random_matrix(rng, 5, 5);
  const Tensor x = oracles::random_matrix(rng, 5, 2);
  const Tensor b = matmul(a, x);
  Tensor got = solve_linear(a, b);
  got -= x;
  CHECK(got.frob_norm() <= 1e-9 * std::max(1.0, x.frob_norm()));
}
