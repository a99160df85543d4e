#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "oracles.hpp"
#include "rankshift/experiment.hpp"
#include "rankshift/linalg.hpp"
#include "rankshift/schedule.hpp"

using namespace rankshift;

namespace {

Dataset tiny_classification(std::uint64_t seed, long n = 24, int dim = 6,
                            int classes = 4) {
  SyntheticSpec spec;
  spec.kind = "gaussian-mixture";
  spec.n = n;
  spec.input_dim = dim;
  spec.classes = classes;
  return generate_synthetic(spec, seed);
}

Network one_layer_net(std::uint64_t seed, std::size_t in, std::size_t out) {
  Network net;
  net.layers.push_back(Layer::dense(in, out, Activation::kIdentity));
  Rng rng(seed);
  net.layers[0].init_weights(rng);
  return net;
}

}  // namespace

TEST_CASE("lr schedule: step decay law") {
  LrSchedule s{0.1, {100, 130}, 0.1};
  CHECK(s.lr_at(1) == doctest::Approx(0.1));
  CHECK(s.lr_at(99) == doctest::Approx(0.1));
  CHECK(s.lr_at(100) == doctest::Approx(0.01));
  CHECK(s.lr_at(130) == doctest::Approx(0.001));
  CHECK(s.lr_at(150) == doctest::Approx(0.001));
  for (int t = 1; t < 150; ++t) CHECK(s.lr_at(t + 1) <= s.lr_at(t));
}

TEST_CASE("noise scale: eta N / B, strictly dropping at decays") {
  LrSchedule s{0.1, {3}, 0.1};
  const double before = noise_scale(s.lr_at(2), 1000, 32);
  const double after = noise_scale(s.lr_at(3), 1000, 32);
  CHECK(before == doctest::Approx(0.1 * 1000 / 32.0));
  CHECK(after < before);
}

TEST_CASE("rank schedule: phi and validation") {
  RankSchedule rs;
  rs.total_epochs = 150;
  rs.inflate_epoch = 60;
  rs.deflate_epoch = 135;
  rs.rank_ratio = 0.5;
  CHECK(rs.validate().empty());
  CHECK(rs.phi() == doctest::Approx(0.5));

  RankSchedule pure_low{150, 0, 0, 0.5, Decomp::kSvd};
  CHECK(pure_low.phi() == 0.0);
  RankSchedule pure_full{150, 0, 0, 1.0, Decomp::kSvd};
  CHECK(pure_full.phi() == 1.0);

  RankSchedule bad{10, 7, 5, 0.5, Decomp::kSvd};
  CHECK(!bad.validate().empty());
  RankSchedule bad2{10, 3, 12, 0.5, Decomp::kSvd};
  CHECK(!bad2.validate().empty());
  RankSchedule bad3{10, 3, 0, 0.5, Decomp::kSvd};
  CHECK(!bad3.validate().empty());
}

TEST_CASE("auto placement: midpoints of the two noise regimes") {
  {
    const auto [i, d] = auto_place(150, {100});
    CHECK(i == 50);
    CHECK(d == 125);
  }
  {
    const auto [i, d] = auto_place(150, {100, 130});
    CHECK(i == 50);
    CHECK(d == 125);
  }
  {
    const auto [i, d] = auto_place(60, {40, 54});
    CHECK(i == 20);
    CHECK(d == 50);
  }
  {
    // fine-tuning: no decay -> window at the start
    const auto [i, d] = auto_place(10, {});
    CHECK(i == 1);
    CHECK(d > i);
    CHECK(d <= 10);
  }
}

TEST_CASE("rank_for_dims and the skip rule") {
  CHECK(rank_for_dims(64, 64, 0.5) == 32);
  CHECK(rank_for_dims(3, 10, 0.5) == 2);  // round(1.5)
  CHECK(rank_for_dims(10, 6, 0.25) == 2);
  CHECK(rank_for_dims(5, 9, 0.01) == 1);  // floor at 1

  Layer dense = Layer::dense(64, 64, Activation::kRelu);
  CHECK(rank_for_layer(dense, 0.5) == 32);
  CHECK(rank_for_layer(dense, 1.0) == 0);  // stays full-rank

  Layer small = Layer::dense(2, 64, Activation::kRelu);
  CHECK(rank_for_layer(small, 0.5) == 1);
  CHECK(rank_for_layer(small, 0.9) == 0);  // round(1.8) = 2 = min dim

  Layer conv = Layer::conv2d(Conv2dDims{8, 8, 16, 3, 3, 8}, Activation::kRelu);
  CHECK(rank_for_layer(conv, 0.5) == 4);  // min(C, F) = 8
}

TEST_CASE("sgd_step: lr 0 leaves weights, still advances velocity") {
  Param p{"w", Tensor({2, 2}), Tensor({2, 2})};
  p.value.fill(1.0);
  Tensor g({2, 2});
  g.fill(0.5);
  sgd_step(p, g, 0.0, 0.9, 0.0);
  CHECK(p.value(0, 0) == 1.0);
  CHECK(p.velocity(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("sgd_step: momentum 0, weight decay 0 is plain descent") {
  Param p{"w", Tensor({1}), Tensor({1})};
  p.value(0) = 2.0;
  Tensor g({1});
  g(0) = 0.25;
  sgd_step(p, g, 0.1, 0.0, 0.0);
  CHECK(p.value(0) == doctest::Approx(2.0 - 0.1 * 0.25).epsilon(1e-15));
}

TEST_CASE("sgd_step: three steps match the hand-unrolled recurrence") {
  const double lr = 0.2, mu = 0.6, wd = 0.1;
  Param p{"w", Tensor({1}), Tensor({1})};
  p.value(0) = 5.0;

  // hand unroll of v <- mu v + g + wd w; w <- w - lr v on f = 0.5 (w - 3)^2
  double w = 5.0, v = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double g_lib = p.value(0) - 3.0;
    Tensor g({1});
    g(0) = g_lib;
    sgd_step(p, g, lr, mu, wd);

    const double g_hand = w - 3.0;
    v = mu * v + g_hand + wd * w;
    w = w - lr * v;
    CHECK(p.value(0) == doctest::Approx(w).epsilon(1e-12));
    CHECK(p.velocity(0) == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("train: one epoch at lr 0 keeps initial weights") {
  Network net = one_layer_net(3, 6, 4);
  const Tensor before = net.layers[0].params[0].value;
  const Dataset data = tiny_classification(3);
  TrainOptions opts;
  opts.batch_size = 8;
  const RunLog log = train(net, data, LrSchedule{0.0, {}, 0.1},
                           RankSchedule{1, 0, 0, 1.0, Decomp::kSvd}, opts);
  CHECK(log.epochs.size() == 1);
  CHECK(net.layers[0].params[0].value == before);
}

TEST_CASE("train: trainable-count time series tracks the schedule") {
  Network net = one_layer_net(4, 6, 4);
  const Dataset data = tiny_classification(4);
  TrainOptions opts;
  opts.batch_size = 8;
  const RunLog log = train(net, data, LrSchedule{0.05, {}, 0.1},
                           RankSchedule{4, 2, 3, 0.5, Decomp::kSvd}, opts);
  REQUIRE(log.epochs.size() == 4);
  const long long low = 2 * (6 + 4) + 4;  // k(m+n) + bias
  const long long full = 6 * 4 + 4;
  CHECK(log.epochs[0].trainable_params == low);
  CHECK(log.epochs[1].trainable_params == full);
  CHECK(log.epochs[2].trainable_params == full);
  CHECK(log.epochs[3].trainable_params == low);
  CHECK(log.full_param_count == full);
  CHECK(log.low_param_count == low);
}

TEST_CASE("train: schedule endpoints give constant trainable counts") {
  for (double rho : {0.5, 1.0}) {
    Network net = one_layer_net(5, 6, 4);
    const Dataset data = tiny_classification(5);
    TrainOptions opts;
    opts.batch_size = 8;
    const RunLog log = train(net, data, LrSchedule{0.05, {}, 0.1},
                             RankSchedule{3, 0, 0, rho, Decomp::kSvd}, opts);
    for (const auto& rec : log.epochs) {
      CHECK(rec.trainable_params == log.epochs[0].trainable_params);
    }
    if (rho == 1.0) {
      CHECK(log.epochs[0].trainable_params == log.full_param_count);
    } else {
      CHECK(log.epochs[0].trainable_params == log.low_param_count);
      CHECK(log.low_param_count < log.full_param_count);
    }
  }
}

TEST_CASE("train: full-batch regression reaches the normal-equations optimum") {
  Rng rng(77);
  const std::size_t n = 24, dim = 3, out = 2;
  Dataset data;
  data.classes = 2;
  data.train_x = oracles::random_matrix(rng, n, dim);
  const Tensor w_true = oracles::random_matrix(rng, dim, out);
  data.train_y = matmul(data.train_x, w_true);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < out; ++j) {
      data.train_y(i, j) += 0.3 + 0.05 * rng.normal();
    }
  }
  data.train_labels.assign(n, 0);
  data.val_x = oracles::random_matrix(rng, 2, dim);
  data.val_y = Tensor({2, out});
  data.val_labels = {0, 0};

  // closed form over the bias-augmented design matrix
  Tensor xa({n, dim + 1});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) xa(i, j) = data.train_x(i, j);
    xa(i, dim) = 1.0;
  }
  const Tensor theta =
      solve_linear(matmul_tn(xa, xa), matmul_tn(xa, data.train_y));
  Tensor resid = matmul(xa, theta);
  resid -= data.train_y;
  const double best =
      resid.frob_norm() * resid.frob_norm() / static_cast<double>(n * out);

  Network net = one_layer_net(77, dim, out);
  net.loss = LossKind::kMeanSquaredError;
  TrainOptions opts;
  opts.batch_size = static_cast<int>(n);
  opts.momentum = 0.9;
  opts.prop_telemetry = false;
  const RunLog log = train(net, data, LrSchedule{0.4, {150}, 0.5},
                           RankSchedule{200, 0, 0, 1.0, Decomp::kSvd}, opts);
  CHECK(log.epochs.back().train_loss == doctest::Approx(best).epsilon(1e-6));
  CHECK(std::abs(log.epochs.back().train_loss - best) <= 1e-6);
}

TEST_CASE("train: deterministic runs and consistent noise column") {
  auto run_once = [] {
    Network net = one_layer_net(9, 6, 4);
    const Dataset data = tiny_classification(9);
    TrainOptions opts;
    opts.batch_size = 5;
    opts.seed = 31;
    return train(net, data, LrSchedule{0.05, {3}, 0.1},
                 RankSchedule{5, 2, 4, 0.5, Decomp::kSvd}, opts);
  };
  const RunLog a = run_once();
  const RunLog b = run_once();
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t i = 0; i < a.epochs.size(); ++i) {
    CHECK(a.epochs[i].train_loss == b.epochs[i].train_loss);
    CHECK(a.epochs[i].val_acc == b.epochs[i].val_acc);
    CHECK(a.epochs[i].lambda == b.epochs[i].lambda);
    CHECK(a.epochs[i].noise ==
          noise_scale(a.epochs[i].lr, 20, 5));  // N = 24 - 24/6
  }
}

TEST_CASE("train: dynamic schedule drives a conv net for every decomposition") {
  for (Decomp decomp : {Decomp::kSvd, Decomp::kTucker, Decomp::kCp}) {
    CAPTURE(to_string(decomp));
    SyntheticSpec spec;
    spec.kind = "gaussian-mixture";
    spec.n = 48;
    spec.input_dim = 32;  // read as 4x4x2 by the conv layer
    spec.classes = 3;
    const Dataset data = generate_synthetic(spec, 60);

    Network net;
    net.layers.push_back(
        Layer::conv2d(Conv2dDims{4, 4, 2, 2, 2, 4}, Activation::kRelu));
    net.layers.push_back(
        Layer::dense(net.layers[0].out_features(), 3, Activation::kIdentity));
    Rng rng(61);
    for (auto& l : net.layers) l.init_weights(rng);

    TrainOptions opts;
    opts.batch_size = 8;
    const RunLog log = train(net, data, LrSchedule{0.05, {3}, 0.1},
                             RankSchedule{5, 2, 4, 0.5, decomp}, opts);
    REQUIRE(log.epochs.size() == 5);
    CHECK(log.epochs[0].trainable_params == log.low_param_count);
    CHECK(log.epochs[2].trainable_params == log.full_param_count);
    CHECK(log.epochs[4].trainable_params == log.low_param_count);
    CHECK(net.layers[0].mode == WeightMode::kLowRank);
    CHECK(net.layers[0].decomp == decomp);
    CHECK(!net.layers[0].base.empty());  // adaptor form after deflation
    for (const auto& rec : log.epochs) {
      CHECK(std::isfinite(rec.train_loss));
    }
    CHECK(!log.prop_violation);
  }
}

TEST_CASE("train: soft-orthogonality coefficient shapes the objective") {
  auto run_with = [](double coeff) {
    Network net = one_layer_net(12, 6, 4);
    const Dataset data = tiny_classification(12);
    TrainOptions opts;
    opts.batch_size = 8;
    opts.so_coeff = coeff;
    return train(net, data, LrSchedule{0.05, {}, 0.1},
                 RankSchedule{3, 0, 0, 1.0, Decomp::kSvd}, opts);
  };
  const RunLog plain = run_with(0.0);
  const RunLog so = run_with(0.01);
  // the logged objective includes the penalty and the trajectories diverge
  CHECK(so.epochs[0].train_loss > plain.epochs[0].train_loss);
  CHECK(so.epochs.back().train_loss != plain.epochs.back().train_loss);
}

TEST_CASE("train: invalid schedules rejected before any step") {
  Network net = one_layer_net(10, 6, 4);
  const Tensor before = net.layers[0].params[0].value;
  const Dataset data = tiny_classification(10);
  CHECK_THROWS_AS(train(net, data, LrSchedule{0.1, {}, 0.1},
                        RankSchedule{4, 3, 2, 0.5, Decomp::kSvd},
                        TrainOptions{}),
                  std::invalid_argument);
  CHECK_THROWS_AS(train(net, data, LrSchedule{0.1, {}, 0.1},
                        RankSchedule{4, 2, 9, 0.5, Decomp::kSvd},
                        TrainOptions{}),
                  std::invalid_argument);
  CHECK(net.layers[0].params[0].value == before);
}
