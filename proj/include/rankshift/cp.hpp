#pragma once

#include <vector>

#include "rankshift/tensor.hpp"

namespace rankshift {

/// CP factors of an h x w x C x F convolution kernel, shaped as the four
/// chained convolutions that realize them: a 1x1 input transform, an h x 1
/// and a 1 x w spatial stage, and a 1x1 output transform. cp_als emits the
/// spatial stages with diagonal channel mixing (pure rank-k CP); composed
/// layers may train them densely.
struct CpFactors {
  Tensor a;   // 1 x 1 x C x k
  Tensor c1;  // h x 1 x k x k
  Tensor c2;  // 1 x w x k x k
  Tensor b;   // 1 x 1 x k x F
};

/// Alternating least squares over the four factor groups, normal equations
/// regularized with a 1e-10 ridge. Stops when the relative fit improvement
/// drops below tol or after max_iters passes. Deterministic (SVD-seeded
/// init). fit_history, when given, receives the reconstruction error after
/// every pass.
CpFactors cp_als(const Tensor& w, std::size_t k, int max_iters, double tol,
                 std::vector<double>* fit_history = nullptr);

/// Compose the factors back into an h x w x C x F kernel (general k x k
/// channel mixing, not only the diagonal case).
Tensor cp_reconstruct(const CpFactors& f);

}  // namespace rankshift
