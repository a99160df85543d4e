#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "rankshift/dataset.hpp"
#include "rankshift/layers.hpp"
#include "rankshift/rank_adjust.hpp"
#include "rankshift/rng.hpp"

namespace rankshift {

/// Step decay: lr(t) = base * factor^(number of decay epochs <= t).
struct LrSchedule {
  double base_lr = 0.1;
  std::vector<int> decay_epochs;
  double decay_factor = 0.1;

  double lr_at(int epoch) const;
};

/// eta * N / B, the per-epoch gradient noise proxy.
double noise_scale(double lr, std::size_t dataset_size,
                   std::size_t batch_size);

/// Rank adjustment plan. Epoch indices are 1-based; 0 means "never".
/// Inflation happens at the start of epoch I, deflation at the end of
/// epoch D, so epochs I..D train at full rank.
struct RankSchedule {
  int total_epochs = 1;
  int inflate_epoch = 0;
  int deflate_epoch = 0;
  double rank_ratio = 1.0;
  Decomp decomp = Decomp::kSvd;

  bool has_window() const { return inflate_epoch > 0 && deflate_epoch > 0; }
  /// Share of the budget spent at full rank: (D - I) / E with a window,
  /// else 1 for a never-reparameterized run and 0 for pure low-rank.
  double phi() const;
  std::vector<std::string> validate() const;
};

/// Midpoint placement: I at the middle of the high-noise regime (epochs
/// before the first decay), D at the middle of the low-noise regime. With
/// no decay epochs (fine-tuning), the window sits at the start: I = 1,
/// D covers half the budget.
std::pair<int, int> auto_place(int total_epochs,
                               const std::vector<int>& decay_epochs);

/// k = max(1, round(rho * min(dim_a, dim_b))).
std::size_t rank_for_dims(std::size_t dim_a, std::size_t dim_b, double rho);

/// Reparameterization rank for a layer (dense: min(in, out); conv:
/// min(C, F)); 0 when the layer should stay full-rank (k would reach the
/// full rank already).
std::size_t rank_for_layer(const Layer& layer, double rho);

/// v <- momentum * v + grad + weight_decay * value; value <- value - lr * v.
void sgd_step(Param& p, const Tensor& grad, double lr, double momentum,
              double weight_decay);
void sgd_step(Network& net, const Gradients& grads, double lr,
              double momentum, double weight_decay);

struct TrainOptions {
  int batch_size = 32;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double so_coeff = 0.0;
  DeflationInit deflate_init;
  std::uint64_t seed = 1;
  bool prop_telemetry = true;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
  double noise = 0.0;
  long long trainable_params = 0;
  std::vector<double> lambda;  // per layer; +inf sentinel
  double prop2_max_ratio = std::numeric_limits<double>::quiet_NaN();
};

struct Prop1Event {
  int epoch = 0;
  int layer = 0;
  int k = 0;
  int rank_base = 0;
  int rank_recon = 0;
  bool holds = false;
};

struct RunLog {
  std::vector<EpochRecord> epochs;
  std::vector<Prop1Event> prop1_events;
  bool prop_violation = false;
  long long full_param_count = 0;  // d
  long long low_param_count = 0;   // d_low
};

/// Algorithm: start low-rank when the schedule reparameterizes, inflate at
/// epoch I, deflate at the end of epoch D, step-decay learning rate,
/// per-epoch validation and spectral logging. Deterministic for a fixed
/// (net init, dataset, options.seed).
RunLog train(Network& net, const Dataset& data, const LrSchedule& lr_sched,
             const RankSchedule& rank_sched, const TrainOptions& opts);

/// Resume path: net and rng positioned at the start of `first_epoch`;
/// appends records for first_epoch..E to log.
void train_epochs(Network& net, const Dataset& data,
                  const LrSchedule& lr_sched, const RankSchedule& rank_sched,
                  const TrainOptions& opts, int first_epoch, Rng& rng,
                  RunLog& log);

double validation_accuracy(const Network& net, const Dataset& data);

}  // namespace rankshift
