#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rankshift/cp.hpp"
#include "rankshift/rng.hpp"
#include "rankshift/tensor.hpp"
#include "rankshift/tucker.hpp"

namespace rankshift {

enum class Activation { kIdentity, kRelu };
enum class LossKind { kSoftmaxCrossEntropy, kMeanSquaredError };
enum class Decomp { kSvd, kTucker, kCp };
enum class WeightMode { kFull, kLowRank };
enum class LayerKind { kDense, kConv2d };

const char* to_string(Decomp d);

struct Param {
  std::string name;
  Tensor value;
  Tensor velocity;  // same shape, optimizer state; reset on mode changes
};

struct Conv2dDims {
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  std::size_t kh = 0, kw = 0, out_c = 0;
  std::size_t out_h() const { return in_h - kh + 1; }
  std::size_t out_w() const { return in_w - kw + 1; }
};

struct LayerCache {
  Tensor input;    // batch x in_features
  Tensor pre_act;  // batch x out_features, before the activation
  std::vector<Tensor> mids;
};

/// Gradient tensors aligned one-to-one with a layer's params.
struct LayerGrads {
  std::vector<Tensor> by_param;
};

/// A dense or 2-D convolution layer in full-rank or low-rank form. The
/// effective weight is base + reconstruction(factors) by definition; base is
/// empty for a plain low-rank reparameterization (W0 = 0) and holds the
/// frozen weight for a deflated adaptor. base is never touched by the
/// optimizer. Convolutions are stride-1, no padding; Tucker/CP factor forms
/// exist for convolution kernels, dense layers always use the matrix form.
struct Layer {
  LayerKind kind = LayerKind::kDense;
  Conv2dDims conv;
  std::size_t in_dim = 0, out_dim = 0;  // dense dims
  Activation act = Activation::kIdentity;
  WeightMode mode = WeightMode::kFull;
  Decomp decomp = Decomp::kSvd;
  std::size_t rank = 0;
  Tensor base;
  std::vector<Param> params;

  static Layer dense(std::size_t in, std::size_t out, Activation act);
  static Layer conv2d(const Conv2dDims& dims, Activation act);

  /// Uniform +-1/sqrt(fan_in) weights, zero bias.
  void init_weights(Rng& rng);

  std::size_t in_features() const;
  std::size_t out_features() const;
  /// Rows/cols of the weight's 2-D unfolding: dense in x out,
  /// conv (kh*kw*C) x F.
  std::size_t unfold_rows() const;
  std::size_t unfold_cols() const;

  Tensor forward(const Tensor& x, LayerCache* cache) const;
  /// Returns the gradient w.r.t. the layer input; fills one gradient tensor
  /// per param. Throws std::logic_error when the cache does not match.
  Tensor backward(const LayerCache& cache, const Tensor& dy,
                  LayerGrads* grads) const;

  /// base + reconstruction(factors): matrix for dense, 4-D kernel for conv.
  /// Diagnostics/rank-adjust only; never used by forward.
  Tensor effective_weight() const;
  Tensor effective_weight_unfolded() const;

  /// Map a gradient w.r.t. the effective weight into per-param gradients
  /// (zero for bias). g has the effective weight's shape.
  LayerGrads pullback_effective_gradient(const Tensor& g) const;

  // Mode replacement; each resets the param set (and thus optimizer state).
  void set_full(Tensor w);
  void set_low_rank_svd(Tensor base_w, Tensor a, Tensor b, std::size_t k);
  void set_low_rank_tucker(Tensor base_w, TuckerFactors f, std::size_t k);
  void set_low_rank_cp(Tensor base_w, CpFactors f, std::size_t k);

  Param* find_param(const std::string& name);
  const Param* find_param(const std::string& name) const;

  std::size_t trainable_count() const;         // includes bias
  std::size_t trainable_weight_count() const;  // excludes bias
};

/// Soft-orthogonality penalty coefficient * ||W^T W - I||_F^2 on the
/// effective weight's 2-D unfolding, with gradients for the trainable
/// components only.
std::pair<double, LayerGrads> so_penalty(const Layer& layer,
                                         double coefficient);

struct ForwardResult {
  Tensor logits;
  std::vector<LayerCache> caches;
};

struct Gradients {
  std::vector<LayerGrads> layers;
};

struct Network {
  std::vector<Layer> layers;
  LossKind loss = LossKind::kSoftmaxCrossEntropy;

  std::size_t in_features() const;
  std::size_t out_features() const;

  Tensor forward(const Tensor& x) const;
  ForwardResult forward_cached(const Tensor& x) const;
  Gradients backward(const ForwardResult& fr, const Tensor& dlogits) const;

  std::size_t trainable_count() const;
  std::size_t trainable_weight_count() const;
};

/// Mean cross-entropy after softmax; dlogits (optional) gets
/// (softmax - onehot) / batch.
double softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels, Tensor* dlogits);

/// Mean squared error over batch x dims; dlogits gets 2 (y - t) / (B * d).
double mean_squared_error(const Tensor& logits, const Tensor& targets,
                          Tensor* dlogits);

// im2col patch layout matches the (kh*kw*C) x F kernel unfolding.
Tensor im2col(const Tensor& x, std::size_t h, std::size_t w, std::size_t c,
              std::size_t kh, std::size_t kw);
Tensor col2im(const Tensor& cols, std::size_t batch, std::size_t h,
              std::size_t w, std::size_t c, std::size_t kh, std::size_t kw);

}  // namespace rankshift
