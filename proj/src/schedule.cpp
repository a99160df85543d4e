#include "rankshift/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rankshift/diagnostics.hpp"
#include "rankshift/linalg.hpp"

namespace rankshift {

double LrSchedule::lr_at(int epoch) const {
  double lr = base_lr;
  for (int d : decay_epochs) {
    if (d <= epoch) lr *= decay_factor;
  }
  return lr;
}

double noise_scale(double lr, std::size_t dataset_size,
                   std::size_t batch_size) {
  return lr * static_cast<double>(dataset_size) /
         static_cast<double>(batch_size);
}

double RankSchedule::phi() const {
  if (has_window()) {
    return static_cast<double>(deflate_epoch - inflate_epoch) /
           static_cast<double>(total_epochs);
  }
  return rank_ratio >= 1.0 ? 1.0 : 0.0;
}

std::vector<std::string> RankSchedule::validate() const {
  std::vector<std::string> problems;
  if (total_epochs < 1) problems.push_back("total epochs must be >= 1");
  if (rank_ratio <= 0.0 || rank_ratio > 1.0) {
    problems.push_back("rank ratio must be in (0, 1]");
  }
  if ((inflate_epoch > 0) != (deflate_epoch > 0)) {
    problems.push_back(
        "inflate and deflate epochs must be given together or not at all");
  }
  if (has_window()) {
    if (inflate_epoch < 1 || inflate_epoch > total_epochs) {
      problems.push_back("inflate epoch outside [1, E]");
    }
    if (deflate_epoch < 1 || deflate_epoch > total_epochs) {
      problems.push_back("deflate epoch outside [1, E]");
    }
    if (inflate_epoch >= deflate_epoch) {
      problems.push_back("inflate epoch must precede deflate epoch");
    }
  }
  return problems;
}

std::pair<int, int> auto_place(int total_epochs,
                               const std::vector<int>& decay_epochs) {
  if (total_epochs < 2) {
    throw std::invalid_argument("auto_place: need at least 2 epochs");
  }
  if (decay_epochs.empty()) {
    // fine-tuning: full-rank window at the start, half the budget
    const int d = std::min(total_epochs, 1 + (total_epochs + 1) / 2);
    return {1, d};
  }
  const int first = decay_epochs.front();
  int i = std::max(1, first / 2);
  int d = (first + total_epochs) / 2;
  d = std::min(d, total_epochs);
  if (d <= i) d = i + 1;
  return {i, d};
}

std::size_t rank_for_dims(std::size_t dim_a, std::size_t dim_b, double rho) {
  if (rho <= 0.0 || rho > 1.0) {
    throw std::invalid_argument("rank_for_dims: rho must be in (0, 1]");
  }
  const auto md = static_cast<double>(std::min(dim_a, dim_b));
  const long k = std::lround(rho * md);
  return static_cast<std::size_t>(std::max(1L, k));
}

std::size_t rank_for_layer(const Layer& layer, double rho) {
  std::size_t cap;
  if (layer.kind == LayerKind::kDense) {
    cap = std::min(layer.in_dim, layer.out_dim);
  } else {
    cap = std::min(layer.conv.in_c, layer.conv.out_c);
  }
  const std::size_t k = rank_for_dims(cap, cap, rho);
  return k >= cap ? 0 : k;
}

void sgd_step(Param& p, const Tensor& grad, double lr, double momentum,
              double weight_decay) {
  if (grad.shape() != p.value.shape()) {
    throw std::invalid_argument("sgd_step: gradient shape mismatch for '" +
                                p.name + "'");
  }
  double* v = p.velocity.data();
  double* w = p.value.data();
  const double* g = grad.data();
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    v[i] = momentum * v[i] + g[i] + weight_decay * w[i];
    w[i] -= lr * v[i];
  }
}

void sgd_step(Network& net, const Gradients& grads, double lr,
              double momentum, double weight_decay) {
  if (grads.layers.size() != net.layers.size()) {
    throw std::invalid_argument("sgd_step: gradient/layer count mismatch");
  }
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto& layer = net.layers[i];
    const auto& lg = grads.layers[i];
    if (lg.by_param.size() != layer.params.size()) {
      throw std::invalid_argument("sgd_step: gradient/param count mismatch");
    }
    for (std::size_t j = 0; j < layer.params.size(); ++j) {
      sgd_step(layer.params[j], lg.by_param[j], lr, momentum, weight_decay);
    }
  }
}

namespace {

Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& idx,
                   std::size_t begin, std::size_t end) {
  const std::size_t dim = m.cols();
  Tensor out({end - begin, dim});
  for (std::size_t i = begin; i < end; ++i) {
    const double* src = m.data() + idx[i] * dim;
    double* dst = out.data() + (i - begin) * dim;
    for (std::size_t j = 0; j < dim; ++j) dst[j] = src[j];
  }
  return out;
}

void accumulate(Gradients& into, std::size_t layer, const LayerGrads& add) {
  auto& dst = into.layers[layer].by_param;
  for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += add.by_param[j];
}

// d/bound for every low-rank dense layer on a probe batch; gradients of the
// effective weights come from a full-rank clone so the factored path is not
// involved in its own check.
double prop2_probe(const Network& net, const Dataset& data,
                   const TrainOptions& opts, double lr, bool* violation) {
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    if (l.mode == WeightMode::kLowRank && l.kind == LayerKind::kDense &&
        l.decomp == Decomp::kSvd && l.base.empty()) {
      targets.push_back(i);
    }
  }
  if (targets.empty()) return std::numeric_limits<double>::quiet_NaN();

  Network clone = net;
  for (auto& l : clone.layers) {
    if (l.mode == WeightMode::kLowRank) l.set_full(l.effective_weight());
  }
  const std::size_t probe =
      std::min<std::size_t>(static_cast<std::size_t>(opts.batch_size),
                            data.train_size());
  std::vector<std::size_t> idx(probe);
  std::iota(idx.begin(), idx.end(), 0);
  Tensor x = gather_rows(data.train_x, idx, 0, probe);
  ForwardResult fr = clone.forward_cached(x);
  Tensor dlogits;
  if (clone.loss == LossKind::kSoftmaxCrossEntropy) {
    std::vector<int> labels(data.train_labels.begin(),
                            data.train_labels.begin() +
                                static_cast<long>(probe));
    softmax_cross_entropy(fr.logits, labels, &dlogits);
  } else {
    Tensor y = gather_rows(data.train_y, idx, 0, probe);
    mean_squared_error(fr.logits, y, &dlogits);
  }
  Gradients g = clone.backward(fr, dlogits);

  double worst = 0.0;
  for (std::size_t i : targets) {
    const Tensor& grad_w = g.layers[i].by_param[0];
    const Prop2Result r = prop2_gap(net.layers[i].params[0].value,
                                    net.layers[i].params[1].value, grad_w, lr);
    if (r.bound > 0.0) worst = std::max(worst, r.d / r.bound);
    if (r.d > r.bound * (1.0 + 1e-12)) *violation = true;
  }
  return worst;
}

}  // namespace

double validation_accuracy(const Network& net, const Dataset& data) {
  if (data.val_size() == 0) return 0.0;
  const Tensor logits = net.forward(data.val_x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.val_size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    if (static_cast<int>(best) == data.val_labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.val_size());
}

void train_epochs(Network& net, const Dataset& data,
                  const LrSchedule& lr_sched, const RankSchedule& rank_sched,
                  const TrainOptions& opts, int first_epoch, Rng& rng,
                  RunLog& log) {
  const std::size_t n = data.train_size();
  const std::size_t batch = static_cast<std::size_t>(opts.batch_size);
  std::vector<std::size_t> order(n);

  for (int t = first_epoch; t <= rank_sched.total_epochs; ++t) {
    if (t == rank_sched.inflate_epoch) {
      for (auto& layer : net.layers) {
        if (layer.mode == WeightMode::kLowRank) inflate(layer);
      }
    }

    const double lr = lr_sched.lr_at(t);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::size_t end = std::min(begin + batch, n);
      Tensor x = gather_rows(data.train_x, order, begin, end);
      ForwardResult fr = net.forward_cached(x);
      Tensor dlogits;
      double loss;
      if (net.loss == LossKind::kSoftmaxCrossEntropy) {
        std::vector<int> labels(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
          labels[i - begin] = data.train_labels[order[i]];
        }
        loss = softmax_cross_entropy(fr.logits, labels, &dlogits);
      } else {
        Tensor y = gather_rows(data.train_y, order, begin, end);
        loss = mean_squared_error(fr.logits, y, &dlogits);
      }
      Gradients grads = net.backward(fr, dlogits);
      if (opts.so_coeff > 0.0) {
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
          auto [pl, pg] = so_penalty(net.layers[i], opts.so_coeff);
          loss += pl;
          accumulate(grads, i, pg);
        }
      }
      sgd_step(net, grads, lr, opts.momentum, opts.weight_decay);
      loss_sum += loss * static_cast<double>(end - begin);
    }

    EpochRecord rec;
    rec.epoch = t;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.val_acc = validation_accuracy(net, data);
    rec.lr = lr;
    rec.noise = noise_scale(lr, n, batch);
    rec.trainable_params = static_cast<long long>(net.trainable_count());
    for (const auto& layer : net.layers) {
      rec.lambda.push_back(
          spectral_ratio(layer.effective_weight_unfolded()).lambda);
    }
    if (opts.prop_telemetry) {
      bool violation = false;
      rec.prop2_max_ratio = prop2_probe(net, data, opts, lr, &violation);
      if (violation) log.prop_violation = true;
    }
    log.epochs.push_back(std::move(rec));

    if (t == rank_sched.deflate_epoch) {
      for (std::size_t i = 0; i < net.layers.size(); ++i) {
        auto& layer = net.layers[i];
        if (layer.mode != WeightMode::kFull) continue;
        const std::size_t k = rank_for_layer(layer, rank_sched.rank_ratio);
        if (k == 0) continue;
        const Tensor frozen_unf = unfold_hwc_f(layer.params[0].value);
        deflate(layer, k, rank_sched.decomp, opts.deflate_init, rng);
        if (opts.prop_telemetry && layer.decomp == Decomp::kSvd) {
          Tensor a_unf =
              layer.params[0].value.reshaped({layer.unfold_rows(), k});
          Tensor b_nk =
              layer.kind == LayerKind::kDense
                  ? layer.params[1].value
                  : transpose(layer.params[1].value.reshaped(
                        {k, layer.unfold_cols()}));
          const Prop1Result p =
              prop1_bounds_check(frozen_unf, a_unf, b_nk, 1e-8);
          log.prop1_events.push_back(Prop1Event{t, static_cast<int>(i),
                                                static_cast<int>(k), p.r,
                                                p.rank_w, p.holds});
          if (!p.holds) log.prop_violation = true;
        }
      }
    }
  }
}

RunLog train(Network& net, const Dataset& data, const LrSchedule& lr_sched,
             const RankSchedule& rank_sched, const TrainOptions& opts) {
  const auto problems = rank_sched.validate();
  if (!problems.empty()) {
    std::string msg = "invalid rank schedule: ";
    for (std::size_t i = 0; i < problems.size(); ++i) {
      if (i) msg += "; ";
      msg += problems[i];
    }
    throw std::invalid_argument(msg);
  }
  if (opts.batch_size < 1) {
    throw std::invalid_argument("train: batch size must be >= 1");
  }
  if (data.train_size() == 0) {
    throw std::invalid_argument("train: empty training split");
  }

  RunLog log;
  log.full_param_count = static_cast<long long>(net.trainable_count());
  if (rank_sched.rank_ratio < 1.0) {
    for (auto& layer : net.layers) {
      if (layer.mode != WeightMode::kFull) continue;
      const std::size_t k = rank_for_layer(layer, rank_sched.rank_ratio);
      if (k > 0) reparameterize(layer, k, rank_sched.decomp);
    }
  }
  log.low_param_count = static_cast<long long>(net.trainable_count());

  Rng rng(opts.seed);
  train_epochs(net, data, lr_sched, rank_sched, opts, 1, rng, log);
  return log;
}

}  // namespace rankshift
