#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "oracles.hpp"
#include "rankshift/linalg.hpp"
#include "rankshift/rank_adjust.hpp"
#include "rankshift/schedule.hpp"

using namespace rankshift;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a(i) - b(i)));
  }
  return m;
}

// orthonormal columns via Gram-Schmidt over seeded vectors
Tensor orthonormal_columns(Rng& rng, std::size_t dim, std::size_t count) {
  Tensor q({dim, count});
  for (std::size_t j = 0; j < count; ++j) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    for (std::size_t c = 0; c < j; ++c) {
      double dot = 0.0;
      for (std::size_t i = 0; i < dim; ++i) dot += v[i] * q(i, c);
      for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * q(i, c);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < dim; ++i) q(i, j) = v[i] / norm;
  }
  return q;
}

}  // namespace

TEST_CASE("inflate: all-zero factors produce the zero weight") {
  Layer l = Layer::dense(4, 3, Activation::kIdentity);
  l.set_low_rank_svd(Tensor(), Tensor({4, 2}), Tensor({3, 2}), 2);
  inflate(l);
  CHECK(l.mode == WeightMode::kFull);
  CHECK(l.params[0].value.frob_norm() == 0.0);
}

TEST_CASE("inflate: function preserved on 50 random inputs") {
  Rng rng(1);
  Layer l = Layer::dense(6, 5, Activation::kRelu);
  l.init_weights(rng);
  reparameterize(l, 2, Decomp::kSvd);
  Layer before = l;
  inflate(l);
  CHECK(l.trainable_weight_count() == 6 * 5);
  for (int i = 0; i < 50; ++i) {
    const Tensor x = oracles::random_matrix(rng, 2, 6);
    CHECK(max_abs_diff(before.forward(x, nullptr), l.forward(x, nullptr)) <=
          1e-12);
  }
}

TEST_CASE("inflate: Tucker conv kernel matches the factored composition") {
  Rng rng(2);
  Layer l = Layer::conv2d(Conv2dDims{5, 5, 4, 3, 3, 4}, Activation::kIdentity);
  l.init_weights(rng);
  reparameterize(l, 2, Decomp::kTucker);
  Layer factored = l;
  inflate(l);
  // the inflated kernel must act exactly like the chained convolutions
  for (int i = 0; i < 10; ++i) {
    const Tensor x = oracles::random_matrix(rng, 2, 5 * 5 * 4);
    CHECK(max_abs_diff(factored.forward(x, nullptr), l.forward(x, nullptr)) <=
          1e-9);
  }
}

TEST_CASE("inflate: rejects a full-rank layer") {
  Layer l = Layer::dense(3, 3, Activation::kIdentity);
  CHECK_THROWS_AS(inflate(l), std::logic_error);
}

TEST_CASE("deflate: zero-b init leaves outputs unchanged") {
  Rng rng(3);
  for (Decomp decomp : {Decomp::kSvd, Decomp::kTucker, Decomp::kCp}) {
    CAPTURE(to_string(decomp));
    Layer l = decomp == Decomp::kSvd
                  ? Layer::dense(7, 5, Activation::kRelu)
                  : Layer::conv2d(Conv2dDims{4, 4, 3, 2, 2, 4},
                                  Activation::kRelu);
    l.init_weights(rng);
    Layer before = l;
    deflate(l, 2, decomp, DeflationInit{DeflationPolicy::kZeroB, 1.0}, rng);
    for (int i = 0; i < 50; ++i) {
      const Tensor x = oracles::random_matrix(rng, 2, l.in_features());
      CHECK(max_abs_diff(before.forward(x, nullptr),
                         l.forward(x, nullptr)) <= 1e-12);
    }
  }
}

TEST_CASE("deflate then inflate: zero-b round trip restores the weight") {
  Rng rng(4);
  Layer l = Layer::dense(6, 6, Activation::kIdentity);
  l.init_weights(rng);
  const Tensor w = l.params[0].value;
  deflate(l, 3, Decomp::kSvd, DeflationInit{DeflationPolicy::kZeroB, 1.0},
          rng);
  inflate(l);
  CHECK(max_abs_diff(l.params[0].value, w) == 0.0);
}

TEST_CASE("deflate: random init perturbation bounded by operator norms") {
  Rng rng(5);
  Layer l = Layer::dense(8, 8, Activation::kIdentity);
  l.init_weights(rng);
  l.find_param("bias")->value.fill(0.0);
  Layer before = l;
  deflate(l, 2, Decomp::kSvd, DeflationInit{DeflationPolicy::kRandomBoth, 0.01},
          rng);
  const double a2 = spectral_norm(l.find_param("A")->value);
  const double b2 = spectral_norm(l.find_param("B")->value);
  for (int i = 0; i < 50; ++i) {
    const Tensor x = oracles::random_matrix(rng, 1, 8);
    Tensor dy = l.forward(x, nullptr);
    dy -= before.forward(x, nullptr);
    CHECK(dy.frob_norm() <= x.frob_norm() * a2 * b2 * (1.0 + 1e-9));
  }
}

TEST_CASE("deflate: rank of the adaptor stays capped at k") {
  Rng rng(6);
  Layer l = Layer::dense(9, 7, Activation::kIdentity);
  l.init_weights(rng);
  deflate(l, 3, Decomp::kSvd, DeflationInit{DeflationPolicy::kRandomBoth, 0.5},
          rng);
  Tensor adaptor = l.effective_weight();
  adaptor -= l.base;
  CHECK(numerical_rank(adaptor, 1e-8) <= 3);

  // the unfolded Tucker/CP adaptors obey the same cap
  for (Decomp decomp : {Decomp::kTucker, Decomp::kCp}) {
    Layer c = Layer::conv2d(Conv2dDims{4, 4, 5, 3, 3, 6},
                            Activation::kIdentity);
    c.init_weights(rng);
    deflate(c, 2, decomp, DeflationInit{DeflationPolicy::kRandomBoth, 0.5},
            rng);
    Tensor delta = c.effective_weight();
    delta -= c.base;
    CHECK(numerical_rank(unfold_hwc_f(delta), 1e-8) <= 2);
  }
}

TEST_CASE("deflate: parameter and state errors") {
  Rng rng(7);
  Layer l = Layer::dense(5, 5, Activation::kIdentity);
  l.init_weights(rng);
  CHECK_THROWS_AS(
      deflate(l, 5, Decomp::kSvd, DeflationInit{}, rng),
      std::invalid_argument);
  CHECK_THROWS_AS(
      deflate(l, 0, Decomp::kSvd, DeflationInit{}, rng),
      std::invalid_argument);
  deflate(l, 2, Decomp::kSvd, DeflationInit{}, rng);
  CHECK_THROWS_AS(
      deflate(l, 2, Decomp::kSvd, DeflationInit{}, rng),
      std::logic_error);
}

TEST_CASE("prop1: empty factors keep the base rank") {
  Rng rng(8);
  const Tensor a = oracles::random_matrix(rng, 8, 3);
  const Tensor b = oracles::random_matrix(rng, 6, 3);
  const Tensor w0 = matmul_nt(a, b);  // rank 3
  const Prop1Result r = prop1_bounds_check(w0, Tensor(), Tensor(), 1e-8);
  CHECK(r.r == 3);
  CHECK(r.rank_w == 3);
  CHECK(r.holds);
}

TEST_CASE("prop1: exact cancellation reaches the lower bound r - k") {
  Rng rng(9);
  const Tensor u = orthonormal_columns(rng, 8, 3);
  const Tensor v = orthonormal_columns(rng, 6, 3);
  Tensor w0({8, 6});
  for (int j = 0; j < 3; ++j) {
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::size_t c = 0; c < 6; ++c) {
        w0(i, c) += u(i, static_cast<std::size_t>(j)) *
                    v(c, static_cast<std::size_t>(j));
      }
    }
  }
  // adaptor -u3 v3^T eliminates one rank-1 component
  Tensor a({8, 1}), b({6, 1});
  for (std::size_t i = 0; i < 8; ++i) a(i, 0) = -u(i, 2);
  for (std::size_t c = 0; c < 6; ++c) b(c, 0) = v(c, 2);
  const Prop1Result r = prop1_bounds_check(w0, a, b, 1e-8);
  CHECK(r.r == 3);
  CHECK(r.rank_w == 2);
  CHECK(r.holds);
}

TEST_CASE("prop1: 1000 randomized instances never violate the bounds") {
  Rng rng(10);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 2 + rng.index(15);
    const std::size_t n = 2 + rng.index(15);
    const std::size_t p = std::min(m, n);
    const std::size_t r = 1 + rng.index(p);
    const std::size_t k = 1 + rng.index(p);
    const Tensor w0 = matmul_nt(oracles::random_matrix(rng, m, r),
                                oracles::random_matrix(rng, n, r));
    const Tensor a = oracles::random_matrix(rng, m, k);
    const Tensor b = oracles::random_matrix(rng, n, k);
    const Prop1Result res = prop1_bounds_check(w0, a, b, 1e-8);
    CHECK(res.holds);
    checked += res.holds ? 1 : 0;
  }
  CHECK(checked == 1000);
}

TEST_CASE("prop2: zero gradient gives zero gap and zero bound") {
  Rng rng(11);
  const Tensor a = oracles::random_matrix(rng, 6, 2);
  const Tensor b = oracles::random_matrix(rng, 5, 2);
  const Prop2Result r = prop2_gap(a, b, Tensor({6, 5}), 0.1);
  CHECK(r.d == 0.0);
  CHECK(r.bound == 0.0);
}

TEST_CASE("prop2: zero factors leave the raw gradient as the gap") {
  Rng rng(12);
  const Tensor g = oracles::random_matrix(rng, 6, 5);
  const Prop2Result r = prop2_gap(Tensor({6, 2}), Tensor({5, 2}), g, 0.5);
  CHECK(r.d == doctest::Approx(g.frob_norm()).epsilon(1e-15));
  CHECK(r.bound == doctest::Approx(g.frob_norm()).epsilon(1e-15));
  CHECK(r.d <= r.bound);
}

TEST_CASE("prop2: seeded instance, bound shrinks as the rate decays") {
  Rng rng(13);
  const Tensor a = oracles::random_matrix(rng, 7, 3);
  const Tensor b = oracles::random_matrix(rng, 6, 3);
  const Tensor g = oracles::random_matrix(rng, 7, 6);
  double prev_bound = std::numeric_limits<double>::infinity();
  for (double eta : {1.0, 0.1, 0.01}) {
    const Prop2Result r = prop2_gap(a, b, g, eta);
    CHECK(r.d <= r.bound);
    CHECK(r.bound < prev_bound);
    prev_bound = r.bound;
  }
}

TEST_CASE("prop2: 1000 randomized instances across four rates") {
  Rng rng(14);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 2 + rng.index(15);
    const std::size_t n = 2 + rng.index(15);
    const std::size_t k = 1 + rng.index(std::min(m, n));
    const Tensor a = oracles::random_matrix(rng, m, k);
    const Tensor b = oracles::random_matrix(rng, n, k);
    const Tensor g = oracles::random_matrix(rng, m, n);
    double prev_bound = std::numeric_limits<double>::infinity();
    for (double eta : {1.0, 0.1, 0.01, 0.001}) {
      const Prop2Result r = prop2_gap(a, b, g, eta);
      CHECK(r.d <= r.bound);
      CHECK(r.bound < prev_bound);
      prev_bound = r.bound;
    }
  }
}

TEST_CASE("inflate opens the full rank range to one gradient step") {
  Rng rng(15);
  Layer l = Layer::dense(6, 6, Activation::kIdentity);
  l.init_weights(rng);
  reparameterize(l, 2, Decomp::kSvd);
  inflate(l);
  // a synthetic full-rank gradient step can reach rank min(m, n)
  Tensor g = Tensor::identity(6);
  l.params[0].value.add_scaled(g, -1.5);
  CHECK(numerical_rank(l.params[0].value, 1e-8) == 6);
}
