#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "oracles.hpp"
#include "rankshift/cp.hpp"
#include "rankshift/linalg.hpp"

using namespace rankshift;

namespace {

double recon_error(const Tensor& w, const CpFactors& f) {
  Tensor r = cp_reconstruct(f);
  r -= w;
  return r.frob_norm();
}

Tensor rank1_tensor(Rng& rng, std::size_t h, std::size_t w, std::size_t c,
                    std::size_t f) {
  std::vector<double> vh(h), vw(w), vc(c), vf(f);
  for (auto* vec : {&vh, &vw, &vc, &vf}) {
    for (double& x : *vec) x = rng.normal();
  }
  Tensor t({h, w, c, f});
  for (std::size_t a = 0; a < h; ++a) {
    for (std::size_t b = 0; b < w; ++b) {
      for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t fi = 0; fi < f; ++fi) {
          t(a, b, ci, fi) = vh[a] * vw[b] * vc[ci] * vf[fi];
        }
      }
    }
  }
  return t;
}

// best-of-10 restarted ALS over the plain four-factor model; shares no code
// with cp_als
double restarted_als_best(const Tensor& w, std::size_t k, int restarts,
                          int iters) {
  const auto& s = w.shape();
  Rng rng(777);
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Tensor kh = oracles::random_matrix(rng, s[0], k);
    Tensor kw = oracles::random_matrix(rng, s[1], k);
    Tensor kc = oracles::random_matrix(rng, s[2], k);
    Tensor kf = oracles::random_matrix(rng, s[3], k);
    Tensor* fac[4] = {&kh, &kw, &kc, &kf};
    for (int it = 0; it < iters; ++it) {
      for (int mode = 0; mode < 4; ++mode) {
        const std::size_t dim = s[static_cast<std::size_t>(mode)];
        Tensor rhs({dim, k});
        for (std::size_t a = 0; a < s[0]; ++a) {
          for (std::size_t b = 0; b < s[1]; ++b) {
            for (std::size_t ci = 0; ci < s[2]; ++ci) {
              for (std::size_t fi = 0; fi < s[3]; ++fi) {
                const double v = w(a, b, ci, fi);
                for (std::size_t j = 0; j < k; ++j) {
                  double prod = v;
                  if (mode != 0) prod *= kh(a, j);
                  if (mode != 1) prod *= kw(b, j);
                  if (mode != 2) prod *= kc(ci, j);
                  if (mode != 3) prod *= kf(fi, j);
                  const std::size_t row = mode == 0   ? a
                                          : mode == 1 ? b
                                          : mode == 2 ? ci
                                                      : fi;
                  rhs(row, j) += prod;
                }
              }
            }
          }
        }
        Tensor v({k, k});
        v.fill(1.0);
        for (int o = 0; o < 4; ++o) {
          if (o == mode) continue;
          Tensor g = matmul_tn(*fac[o], *fac[o]);
          for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = 0; b < k; ++b) v(a, b) *= g(a, b);
          }
        }
        for (std::size_t a = 0; a < k; ++a) v(a, a) += 1e-10;
        *fac[mode] = transpose(solve_linear(v, transpose(rhs)));
      }
    }
    Tensor recon({s[0], s[1], s[2], s[3]});
    for (std::size_t j = 0; j < k; ++j) {
      for (std::size_t a = 0; a < s[0]; ++a) {
        for (std::size_t b = 0; b < s[1]; ++b) {
          for (std::size_t ci = 0; ci < s[2]; ++ci) {
            for (std::size_t fi = 0; fi < s[3]; ++fi) {
              recon(a, b, ci, fi) += kh(a, j) * kw(b, j) * kc(ci, j) * kf(fi, j);
            }
          }
        }
      }
    }
    recon -= w;
    best = std::min(best, recon.frob_norm());
  }
  return best;
}

}  // namespace

TEST_CASE("cp_als: factor shapes follow the chained-conv layout") {
  Rng rng(1);
  const Tensor w = oracles::random_tensor4(rng, 3, 3, 5, 4);
  const CpFactors f = cp_als(w, 2, 50, 1e-9);
  CHECK(f.a.shape() == std::vector<std::size_t>{1, 1, 5, 2});
  CHECK(f.c1.shape() == std::vector<std::size_t>{3, 1, 2, 2});
  CHECK(f.c2.shape() == std::vector<std::size_t>{1, 3, 2, 2});
  CHECK(f.b.shape() == std::vector<std::size_t>{1, 1, 2, 4});
  CHECK(cp_reconstruct(f).shape() == w.shape());
}

TEST_CASE("cp_als: rank-1 construction recovered at k=1") {
  Rng rng(5);
  const Tensor w = rank1_tensor(rng, 3, 3, 4, 4);
  const CpFactors f = cp_als(w, 1, 100, 1e-12);
  CHECK(recon_error(w, f) <= 1e-6 * w.frob_norm());
}

TEST_CASE("cp_als: k=2 no worse than k=1 on a rank-1 tensor") {
  Rng rng(5);
  const Tensor w = rank1_tensor(rng, 3, 3, 4, 4);
  const double e1 = recon_error(w, cp_als(w, 1, 100, 1e-12));
  const double e2 = recon_error(w, cp_als(w, 2, 100, 1e-12));
  CHECK(e2 <= e1 + 1e-9 * w.frob_norm());
}

TEST_CASE("cp_als: within 5% of a best-of-10 restarted oracle") {
  Rng rng(42);
  const Tensor w = oracles::random_tensor4(rng, 3, 3, 4, 4);
  const double ours = recon_error(w, cp_als(w, 3, 200, 1e-12));
  const double best = restarted_als_best(w, 3, 10, 200);
  CHECK(ours <= best * 1.05 + 1e-12);
}

TEST_CASE("cp_als: error non-increasing across iterations") {
  Rng rng(9);
  const Tensor w = oracles::random_tensor4(rng, 3, 3, 4, 5);
  std::vector<double> history;
  cp_als(w, 2, 60, 0.0, &history);
  REQUIRE(history.size() >= 2);
  for (std::size_t i = 1; i < history.size(); ++i) {
    CHECK(history[i] <= history[i - 1] + 1e-10 * w.frob_norm());
  }
}

TEST_CASE("cp_als: error monotone non-increasing in k on a fixed input") {
  Rng rng(13);
  const Tensor w = oracles::random_tensor4(rng, 2, 2, 4, 4);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k <= 4; ++k) {
    const double err = recon_error(w, cp_als(w, k, 300, 1e-13));
    CHECK(err <= prev + 1e-9 * w.frob_norm());
    prev = err;
  }
}

TEST_CASE("cp_als: degenerate inputs solve without crashing") {
  const Tensor zero({2, 2, 3, 3});
  const CpFactors f = cp_als(zero, 2, 20, 1e-9);
  CHECK(cp_reconstruct(f).frob_norm() <= 1e-12);

  // collinear slices stress the normal equations; ridge keeps them solvable
  Rng rng(21);
  Tensor w = rank1_tensor(rng, 2, 2, 3, 3);
  w *= 1e-8;
  const CpFactors g = cp_als(w, 3, 50, 1e-12);
  CHECK(cp_reconstruct(g).all_finite());
}

TEST_CASE("cp_als: deterministic") {
  Rng rng(30);
  const Tensor w = oracles::random_tensor4(rng, 3, 2, 4, 3);
  const CpFactors a = cp_als(w, 3, 80, 1e-11);
  const CpFactors b = cp_als(w, 3, 80, 1e-11);
  CHECK(a.a == b.a);
  CHECK(a.c1 == b.c1);
  CHECK(a.c2 == b.c2);
  CHECK(a.b == b.b);
}

TEST_CASE("cp_als: parameter validation") {
  Rng rng(2);
  const Tensor w = oracles::random_tensor4(rng, 2, 2, 3, 3);
  CHECK_THROWS_AS(cp_als(w, 0, 10, 1e-9), std::invalid_argument);
  CHECK_THROWS_AS(cp_als(w, 2, 0, 1e-9), std::invalid_argument);
  CHECK_THROWS_AS(cp_als(Tensor({3, 3}), 1, 10, 1e-9),
                  std::invalid_argument);
}
