#pragma once

#include "rankshift/tensor.hpp"

namespace rankshift {

/// Tucker factors of an h x w x C x F convolution kernel, shaped as the
/// three chained convolutions that realize them: a 1x1 input transform,
/// an h x w core, and a 1x1 output transform.
struct TuckerFactors {
  Tensor a;     // 1 x 1 x C x k
  Tensor core;  // h x w x k x k
  Tensor b;     // 1 x 1 x k x F
};

/// HOSVD with the channel modes truncated to k and the spatial modes kept
/// full. Exact when k covers the rank of both the mode-C and the mode-F
/// unfolding. Requires 1 <= k <= min(C, F).
TuckerFactors hosvd_conv(const Tensor& w, std::size_t k);

/// Compose the factors back into an h x w x C x F kernel.
Tensor tucker_reconstruct(const TuckerFactors& f);

}  // namespace rankshift
