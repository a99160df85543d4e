#include "rankshift/rank_adjust.hpp"

#include <cmath>
#include <stdexcept>

#include "rankshift/linalg.hpp"

namespace rankshift {

namespace {

constexpr int kCpIters = 200;
constexpr double kCpTol = 1e-10;

void fill_uniform(Tensor& t, double scale, Rng& rng) {
  for (double& v : t.values()) v = scale * rng.uniform(-1.0, 1.0);
}

std::size_t svd_rank_cap(const Layer& l) {
  return std::min(l.unfold_rows(), l.unfold_cols());
}

}  // namespace

void reparameterize(Layer& layer, std::size_t k, Decomp decomp) {
  if (layer.mode != WeightMode::kFull) {
    throw std::logic_error("reparameterize: layer is already low-rank");
  }
  const Tensor w = layer.params[0].value;

  if (layer.kind == LayerKind::kDense || decomp == Decomp::kSvd) {
    if (k < 1 || k >= svd_rank_cap(layer)) {
      throw std::invalid_argument("reparameterize: k out of range");
    }
    auto [a, b] = truncated_svd(unfold_hwc_f(w), k);
    if (layer.kind == LayerKind::kDense) {
      layer.set_low_rank_svd(Tensor(), std::move(a), std::move(b), k);
    } else {
      const auto& c = layer.conv;
      layer.set_low_rank_svd(
          Tensor(), a.reshaped({c.kh, c.kw, c.in_c, k}),
          transpose(b).reshaped({1, 1, k, c.out_c}), k);
    }
    return;
  }

  const auto& c = layer.conv;
  if (k < 1 || k >= std::min(c.in_c, c.out_c)) {
    throw std::invalid_argument("reparameterize: k out of range");
  }
  if (decomp == Decomp::kTucker) {
    layer.set_low_rank_tucker(Tensor(), hosvd_conv(w, k), k);
  } else {
    layer.set_low_rank_cp(Tensor(), cp_als(w, k, kCpIters, kCpTol), k);
  }
}

void inflate(Layer& layer) {
  if (layer.mode != WeightMode::kLowRank) {
    throw std::logic_error("inflate: layer is already full-rank");
  }
  layer.set_full(layer.effective_weight());
}

void deflate(Layer& layer, std::size_t k, Decomp decomp,
             const DeflationInit& init, Rng& rng) {
  if (layer.mode != WeightMode::kFull) {
    throw std::logic_error("deflate: layer is already low-rank");
  }
  if (init.scale <= 0.0) {
    throw std::invalid_argument("deflate: init scale must be positive");
  }
  Tensor frozen = layer.params[0].value;
  const bool dense = layer.kind == LayerKind::kDense;

  // kZeroB draws the leading factors at scale/sqrt(fan_in) and zeroes the
  // last one; kRandomBoth draws everything at the raw scale.
  auto draw = [&](Tensor t, std::size_t fan, bool last) {
    switch (init.policy) {
      case DeflationPolicy::kZeroB:
        if (!last) {
          fill_uniform(t, init.scale / std::sqrt(static_cast<double>(fan)),
                       rng);
        }
        break;
      case DeflationPolicy::kRandomBoth:
        fill_uniform(t, init.scale, rng);
        break;
      case DeflationPolicy::kZeroBoth:
        break;
    }
    return t;
  };

  if (dense || decomp == Decomp::kSvd) {
    if (k < 1 || k >= svd_rank_cap(layer)) {
      throw std::invalid_argument("deflate: k out of range");
    }
    const std::size_t m = layer.unfold_rows(), n = layer.unfold_cols();
    if (dense) {
      layer.set_low_rank_svd(std::move(frozen),
                             draw(Tensor({m, k}), m, false),
                             draw(Tensor({n, k}), m, true), k);
    } else {
      const auto& c = layer.conv;
      layer.set_low_rank_svd(std::move(frozen),
                             draw(Tensor({c.kh, c.kw, c.in_c, k}), m, false),
                             draw(Tensor({1, 1, k, c.out_c}), m, true), k);
    }
    return;
  }

  const auto& c = layer.conv;
  if (k < 1 || k >= std::min(c.in_c, c.out_c)) {
    throw std::invalid_argument("deflate: k out of range");
  }
  if (decomp == Decomp::kTucker) {
    TuckerFactors f;
    f.a = draw(Tensor({1, 1, c.in_c, k}), c.in_c, false);
    f.core = draw(Tensor({c.kh, c.kw, k, k}), c.kh * c.kw * k, false);
    f.b = draw(Tensor({1, 1, k, c.out_c}), k, true);
    layer.set_low_rank_tucker(std::move(frozen), std::move(f), k);
  } else {
    CpFactors f;
    f.a = draw(Tensor({1, 1, c.in_c, k}), c.in_c, false);
    f.c1 = draw(Tensor({c.kh, 1, k, k}), c.kh * k, false);
    f.c2 = draw(Tensor({1, c.kw, k, k}), c.kw * k, false);
    f.b = draw(Tensor({1, 1, k, c.out_c}), k, true);
    layer.set_low_rank_cp(std::move(frozen), std::move(f), k);
  }
}

Prop1Result prop1_bounds_check(const Tensor& w0, const Tensor& a,
                               const Tensor& b, double rel_tol) {
  const std::size_t m = w0.rows(), n = w0.cols();
  std::size_t k = 0;
  Tensor w = w0;
  if (!a.empty() || !b.empty()) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.rows() != m || b.rows() != n ||
        a.cols() != b.cols()) {
      throw std::invalid_argument("prop1_bounds_check: factor shape mismatch");
    }
    k = a.cols();
    w += matmul_nt(a, b);
  }
  Prop1Result res;
  res.r = numerical_rank(w0, rel_tol);
  res.rank_w = numerical_rank(w, rel_tol);
  const int lo = std::max(res.r - static_cast<int>(k), 0);
  const int hi = std::min(res.r + static_cast<int>(k),
                          static_cast<int>(std::min(m, n)));
  res.holds = res.rank_w >= lo && res.rank_w <= hi;
  return res;
}

Prop2Result prop2_gap(const Tensor& a, const Tensor& b, const Tensor& grad,
                      double eta) {
  if (grad.ndim() != 2 || a.ndim() != 2 || b.ndim() != 2 ||
      a.rows() != grad.rows() || b.rows() != grad.cols() ||
      a.cols() != b.cols()) {
    throw std::invalid_argument("prop2_gap: shape mismatch");
  }
  if (eta <= 0.0) throw std::invalid_argument("prop2_gap: eta must be > 0");

  const Tensor gb = matmul(grad, b);          // m x k
  const Tensor x = matmul_nt(gb, b);          // G B B^T
  const Tensor y = matmul(a, matmul_tn(a, grad));  // A A^T G
  const Tensor z = matmul(matmul_nt(gb, a), grad);  // G B A^T G

  Tensor diff = grad;
  diff += x;
  diff += y;
  diff.add_scaled(z, -eta);

  const double gf = grad.frob_norm();
  const double g2 = spectral_norm(grad);
  const double a2 = spectral_norm(a);
  const double b2 = spectral_norm(b);

  Prop2Result res;
  res.d = diff.frob_norm();
  res.bound = gf * (1.0 + a2 * a2 + b2 * b2) + eta * gf * g2 * a2 * b2;
  return res;
}

}  // namespace rankshift
