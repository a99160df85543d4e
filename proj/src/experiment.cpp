#include "rankshift/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rankshift/linalg.hpp"

namespace rankshift {

namespace {

using nlohmann::json;

std::string fmt_double(double v) {
  if (std::isinf(v)) return "inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json json_number_or_inf(double v) {
  if (std::isinf(v)) return json("inf");
  return json(v);
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  f << body;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

bool parse_size(const std::string& s, std::size_t& out) {
  char* end = nullptr;
  const unsigned long v = std::strtoul(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0' || v == 0) return false;
  out = v;
  return true;
}

}  // namespace

Dataset build_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset_kind == "csv") return ingest_csv(cfg.dataset_path);
  SyntheticSpec spec;
  spec.kind = cfg.dataset_kind;
  spec.n = cfg.dataset_n;
  spec.input_dim = cfg.input_dim;
  spec.classes = cfg.classes;
  spec.teacher_rank = cfg.teacher_rank;
  return generate_synthetic(spec, cfg.seed);
}

Network build_network(const ExperimentConfig& cfg, std::size_t input_dim,
                      int classes) {
  Network net;
  net.loss = cfg.loss == "mse" ? LossKind::kMeanSquaredError
                               : LossKind::kSoftmaxCrossEntropy;
  std::vector<std::string> problems;
  std::size_t features = input_dim;
  for (const std::string& token : split(cfg.net_layers, ';')) {
    if (token.empty()) continue;
    const std::size_t colon = token.find(':');
    const std::string head = token.substr(0, colon);
    const std::string args =
        colon == std::string::npos ? "" : token.substr(colon + 1);
    if (head == "dense") {
      std::size_t out = 0;
      if (!parse_size(args, out)) {
        problems.push_back("net.layers: bad dense token '" + token + "'");
        continue;
      }
      net.layers.push_back(Layer::dense(features, out, Activation::kRelu));
      features = out;
    } else if (head == "conv") {
      // conv:KHxKWxF@HxW
      const std::size_t at = args.find('@');
      const auto kdims = split(args.substr(0, at), 'x');
      const auto sdims =
          at == std::string::npos
              ? std::vector<std::string>{}
              : split(args.substr(at + 1), 'x');
      Conv2dDims d;
      if (kdims.size() != 3 || sdims.size() != 2 ||
          !parse_size(kdims[0], d.kh) || !parse_size(kdims[1], d.kw) ||
          !parse_size(kdims[2], d.out_c) || !parse_size(sdims[0], d.in_h) ||
          !parse_size(sdims[1], d.in_w)) {
        problems.push_back("net.layers: bad conv token '" + token +
                           "' (want conv:KHxKWxF@HxW)");
        continue;
      }
      if (features % (d.in_h * d.in_w) != 0) {
        problems.push_back("net.layers: conv token '" + token + "' expects " +
                           std::to_string(d.in_h * d.in_w) +
                           "*C features, previous layer provides " +
                           std::to_string(features));
        continue;
      }
      d.in_c = features / (d.in_h * d.in_w);
      if (d.kh > d.in_h || d.kw > d.in_w) {
        problems.push_back("net.layers: conv kernel exceeds input in '" +
                           token + "'");
        continue;
      }
      net.layers.push_back(Layer::conv2d(d, Activation::kRelu));
      features = net.layers.back().out_features();
    } else {
      problems.push_back("net.layers: unknown layer kind in '" + token + "'");
    }
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));

  net.layers.push_back(Layer::dense(features,
                                    static_cast<std::size_t>(classes),
                                    Activation::kIdentity));
  Rng init_rng(cfg.seed);
  for (auto& l : net.layers) l.init_weights(init_rng);
  return net;
}

LrSchedule lr_schedule_from(const ExperimentConfig& cfg) {
  return LrSchedule{cfg.lr, cfg.decay_epochs, cfg.decay_factor};
}

RankSchedule rank_schedule_from(const ExperimentConfig& cfg) {
  RankSchedule rs;
  rs.total_epochs = cfg.epochs;
  rs.rank_ratio = cfg.rank_ratio;
  rs.decomp = cfg.decomp == "tucker" ? Decomp::kTucker
              : cfg.decomp == "cp"   ? Decomp::kCp
                                     : Decomp::kSvd;
  if (cfg.auto_place) {
    const auto [i, d] = auto_place(cfg.epochs, cfg.decay_epochs);
    rs.inflate_epoch = i;
    rs.deflate_epoch = d;
  } else {
    rs.inflate_epoch = cfg.inflate_epoch;
    rs.deflate_epoch = cfg.deflate_epoch;
  }
  return rs;
}

TrainOptions train_options_from(const ExperimentConfig& cfg) {
  TrainOptions opts;
  opts.batch_size = cfg.batch_size;
  opts.momentum = cfg.momentum;
  opts.weight_decay = cfg.weight_decay;
  opts.so_coeff = cfg.so_coeff;
  opts.deflate_init.policy = cfg.deflate_init == "random"
                                 ? DeflationPolicy::kRandomBoth
                             : cfg.deflate_init == "zero"
                                 ? DeflationPolicy::kZeroBoth
                                 : DeflationPolicy::kZeroB;
  opts.deflate_init.scale = cfg.deflate_scale;
  // trainer stream kept apart from the init stream
  opts.seed = cfg.seed ^ 0x517cc1b727220a95ULL;
  return opts;
}

RunResult execute_run(const ExperimentConfig& cfg) {
  const auto problems = validate_config(cfg);
  if (!problems.empty()) throw ConfigError(problems);

  RunResult res;
  const Dataset data = build_dataset(cfg);
  res.net = build_network(cfg, data.feature_dim(), data.classes);
  res.schedule = rank_schedule_from(cfg);
  res.log = train(res.net, data, lr_schedule_from(cfg), res.schedule,
                  train_options_from(cfg));
  return res;
}

std::string metrics_csv(const RunLog& log) {
  std::string s = "epoch,train_loss,val_acc,lr,noise_scale,trainable_params";
  const std::size_t n_layers =
      log.epochs.empty() ? 0 : log.epochs.front().lambda.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    s += ",lambda_" + std::to_string(l);
  }
  s += "\n";
  for (const auto& rec : log.epochs) {
    s += std::to_string(rec.epoch);
    s += "," + fmt_double(rec.train_loss);
    s += "," + fmt_double(rec.val_acc);
    s += "," + fmt_double(rec.lr);
    s += "," + fmt_double(rec.noise);
    s += "," + std::to_string(rec.trainable_params);
    for (double v : rec.lambda) s += "," + fmt_double(v);
    s += "\n";
  }
  return s;
}

std::string budget_json(const ComputeBudget& b) {
  json j;
  j["d"] = b.d;
  j["d_low"] = b.d_low;
  j["epochs"] = b.epochs;
  j["inflate_epoch"] = b.inflate_epoch;
  j["deflate_epoch"] = b.deflate_epoch;
  j["T_F"] = b.t_full;
  j["T_low"] = b.t_low;
  j["T_DR"] = b.t_dynamic;
  j["comp_ratio"] = b.comp_ratio;
  return j.dump(2) + "\n";
}

std::string spectral_json(const SpectralReport& rep) {
  json j;
  j["epoch"] = rep.epoch;
  j["layers"] = json::array();
  for (const auto& l : rep.layers) {
    json lj;
    lj["name"] = l.name;
    lj["lambda"] = json_number_or_inf(l.lambda);
    lj["effective_rank"] = l.effective_rank;
    lj["sigmas"] = l.sigmas;
    j["layers"].push_back(std::move(lj));
  }
  return j.dump(2) + "\n";
}

int run_experiment(const ExperimentConfig& cfg) {
  RunResult res = execute_run(cfg);

  const std::filesystem::path out(cfg.out_dir);
  std::filesystem::create_directories(out);

  write_file(out / "metrics.csv", metrics_csv(res.log));
  write_file(out / "spectral.json",
             spectral_json(spectral_report(res.net, cfg.epochs)));

  const ComputeBudget budget = compute_budget(
      res.log.full_param_count, res.log.low_param_count, cfg.epochs,
      res.schedule.inflate_epoch, res.schedule.deflate_epoch);
  write_file(out / "budget.json", budget_json(budget));

  {
    json t;
    t["prop_violation"] = res.log.prop_violation;
    t["prop2_max_ratio"] = json::array();
    for (const auto& rec : res.log.epochs) {
      t["prop2_max_ratio"].push_back(
          std::isnan(rec.prop2_max_ratio) ? json(nullptr)
                                          : json(rec.prop2_max_ratio));
    }
    t["prop1_events"] = json::array();
    for (const auto& ev : res.log.prop1_events) {
      t["prop1_events"].push_back({{"epoch", ev.epoch},
                                   {"layer", ev.layer},
                                   {"k", ev.k},
                                   {"rank_base", ev.rank_base},
                                   {"rank_recon", ev.rank_recon},
                                   {"holds", ev.holds}});
    }
    write_file(out / "telemetry.json", t.dump(2) + "\n");
  }

  for (std::size_t i = 0; i < res.net.layers.size(); ++i) {
    const Tensor w = res.net.layers[i].effective_weight();
    const Tensor unf = unfold_hwc_f(w);
    const std::size_t p = std::min(unf.rows(), unf.cols());
    const Tensor hm = tail_reconstruction_heatmap(
        w, std::min<std::size_t>(50, p), KernelFold::kHwcByF);
    std::string body =
        std::to_string(hm.rows()) + " " + std::to_string(hm.cols()) + "\n";
    for (std::size_t r = 0; r < hm.rows(); ++r) {
      for (std::size_t c = 0; c < hm.cols(); ++c) {
        if (c) body += " ";
        body += fmt_double(hm(r, c));
      }
      body += "\n";
    }
    write_file(out / ("heatmap_layer" + std::to_string(i) + ".txt"), body);
  }

  Checkpoint ckpt;
  ckpt.config_hash = config_hash(cfg);
  ckpt.epoch = cfg.epochs;
  ckpt.net = res.net;
  save_checkpoint(ckpt, (out / "checkpoint.bin").string());

  return res.log.prop_violation ? 3 : 0;
}

}  // namespace rankshift
