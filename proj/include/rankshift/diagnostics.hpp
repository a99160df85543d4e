#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rankshift/layers.hpp"
#include "rankshift/schedule.hpp"
#include "rankshift/tensor.hpp"

namespace rankshift {

/// Sentinel convention: lambda is +inf when sigma_min <= sigma_max * 1e-6
/// (so any finite lambda is < 1e6), and for the zero matrix, which also
/// sets empty_spectrum.
struct SpectralRatio {
  double lambda = 0.0;
  std::vector<double> sigmas;
  bool empty_spectrum = false;

  bool is_infinite() const { return std::isinf(lambda); }
};

/// sigma_max / sigma_min of the weight's 2-D unfolding; 4-D kernels are
/// unfolded (h*w*C) x F first.
SpectralRatio spectral_ratio(const Tensor& weight);

struct ComputeBudget {
  long long d = 0;
  long long d_low = 0;
  int epochs = 0;
  int inflate_epoch = 0;
  int deflate_epoch = 0;
  double t_full = 0.0;
  double t_low = 0.0;
  double t_dynamic = 0.0;
  double comp_ratio = 0.0;
};

/// T_F = E d, T_low = E d_low, T_DR = (D - I) d + (E - (D - I)) d_low.
/// Pass inflate = deflate = 0 for runs without a full-rank window.
ComputeBudget compute_budget(long long d, long long d_low, int epochs,
                             int inflate_epoch, int deflate_epoch);

enum class KernelFold {
  kHwcByF,  // (h*w*C) x F, the default everywhere else
  kHcByWf,  // (h*C) x (w*F); folds a 3x3x64x64 kernel to 192x192
};

/// Reconstruction from the n_tail smallest singular triplets of the
/// unfolded kernel: sum sigma_i u_i v_i^T over the spectrum's tail.
Tensor tail_reconstruction_heatmap(const Tensor& w, std::size_t n_tail,
                                   KernelFold fold = KernelFold::kHwcByF);

struct LambdaTable {
  std::vector<int> epochs;
  std::vector<std::vector<double>> values;  // epochs x layers
  std::size_t layer_count = 0;

  std::string to_csv() const;  // +inf written as the "inf" token
};

LambdaTable lambda_timeseries(const RunLog& log);

struct LayerSpectral {
  std::string name;
  std::vector<double> sigmas;
  double lambda = 0.0;
  int effective_rank = 0;
};

struct SpectralReport {
  int epoch = 0;
  std::vector<LayerSpectral> layers;
};

SpectralReport spectral_report(const Network& net, int epoch);

}  // namespace rankshift
