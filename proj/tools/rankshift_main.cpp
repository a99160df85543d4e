#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "rankshift/checkpoint.hpp"
#include "rankshift/experiment.hpp"

namespace {

using namespace rankshift;

std::size_t replicate_threads(std::size_t n_jobs) {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RANKSHIFT_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) cap = static_cast<std::size_t>(v);
  }
  return std::min(cap, n_jobs);
}

int run_replicates(const ExperimentConfig& base,
                   const std::vector<std::uint64_t>& seeds) {
  struct Job {
    ExperimentConfig cfg;
    int status = 0;
  };
  std::vector<Job> jobs;
  for (std::uint64_t s : seeds) {
    Job j;
    j.cfg = base;
    j.cfg.seed = s;
    j.cfg.out_dir = (std::filesystem::path(base.out_dir) /
                     ("seed_" + std::to_string(s)))
                        .string();
    jobs.push_back(std::move(j));
  }

  std::atomic<std::size_t> next{0};
  std::mutex io;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        jobs[i].status = run_experiment(jobs[i].cfg);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(io);
        std::cerr << "seed " << jobs[i].cfg.seed << ": " << e.what() << "\n";
        jobs[i].status = 1;
      }
      std::lock_guard<std::mutex> lk(io);
      std::cout << "seed " << jobs[i].cfg.seed << ": done (status "
                << jobs[i].status << ") -> " << jobs[i].cfg.out_dir << "\n";
    }
  };

  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < replicate_threads(jobs.size()); ++i) {
    pool.emplace_back(worker);
  }
  for (auto& t : pool) t.join();

  int status = 0;
  for (const auto& j : jobs) status = std::max(status, j.status);
  return status;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(std::strtoull(item.c_str(), nullptr, 10));
  }
  return out;
}

void write_or_print(const std::string& path, const std::string& body) {
  if (path.empty()) {
    std::cout << body;
    return;
  }
  std::ofstream f(path, std::ios::trunc);
  f << body;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rankshift: dynamic-rank training experiments"};
  app.require_subcommand(1);

  // ---- run ----
  auto* run = app.add_subcommand("run", "train a model per config");
  std::string config_path, seeds_csv;
  ExperimentConfig cfg;
  run->add_option("--config", config_path, "config file (key = value lines)");
  auto* o_dataset = run->add_option("--dataset", cfg.dataset_kind);
  auto* o_n = run->add_option("--n", cfg.dataset_n);
  auto* o_idim = run->add_option("--input-dim", cfg.input_dim);
  auto* o_classes = run->add_option("--classes", cfg.classes);
  auto* o_trank = run->add_option("--teacher-rank", cfg.teacher_rank);
  auto* o_dpath = run->add_option("--dataset-path", cfg.dataset_path);
  auto* o_net = run->add_option("--net", cfg.net_layers);
  auto* o_loss = run->add_option("--loss", cfg.loss);
  auto* o_epochs = run->add_option("--epochs", cfg.epochs);
  auto* o_inf = run->add_option("--inflate-epoch", cfg.inflate_epoch);
  auto* o_def = run->add_option("--deflate-epoch", cfg.deflate_epoch);
  auto* o_auto = run->add_flag("--auto-place", cfg.auto_place);
  auto* o_rho = run->add_option("--rank-ratio", cfg.rank_ratio);
  auto* o_decomp = run->add_option("--decomp", cfg.decomp);
  auto* o_lr = run->add_option("--lr", cfg.lr);
  std::string decay_csv;
  auto* o_decay = run->add_option("--decay-epochs", decay_csv);
  auto* o_factor = run->add_option("--decay-factor", cfg.decay_factor);
  auto* o_batch = run->add_option("--batch-size", cfg.batch_size);
  auto* o_mom = run->add_option("--momentum", cfg.momentum);
  auto* o_wd = run->add_option("--weight-decay", cfg.weight_decay);
  auto* o_so = run->add_option("--so-coeff", cfg.so_coeff);
  auto* o_dinit = run->add_option("--deflate-init", cfg.deflate_init);
  auto* o_dscale = run->add_option("--deflate-scale", cfg.deflate_scale);
  auto* o_seed = run->add_option("--seed", cfg.seed);
  run->add_option("--seeds", seeds_csv, "replicate seed list, e.g. 1,2,3");
  auto* o_out = run->add_option("--out", cfg.out_dir);

  // ---- budget ----
  auto* budget = app.add_subcommand("budget", "cost arithmetic only");
  long long b_d = 0, b_dlow = 0;
  int b_e = 0, b_i = 0, b_dd = 0;
  double b_phi = -1.0;
  std::string b_out;
  budget->add_option("--full-params", b_d)->required();
  budget->add_option("--low-params", b_dlow)->required();
  budget->add_option("--epochs", b_e)->required();
  budget->add_option("--inflate-epoch", b_i);
  budget->add_option("--deflate-epoch", b_dd);
  budget->add_option("--phi", b_phi,
                     "full-rank share; alternative to inflate/deflate");
  budget->add_option("--out", b_out, "write budget.json here");

  // ---- spectra ----
  auto* spectra = app.add_subcommand("spectra", "analyze a checkpoint");
  std::string s_ckpt, s_out, s_cfg;
  spectra->add_option("--checkpoint", s_ckpt)->required();
  spectra->add_option("--config", s_cfg,
                      "warn when the checkpoint was written by another config");
  spectra->add_option("--out", s_out, "output json (default stdout)");

  // ---- heatmap ----
  auto* heatmap = app.add_subcommand("heatmap", "tail reconstruction export");
  std::string h_ckpt, h_out, h_fold = "hwc-f";
  std::size_t h_layer = 0;
  long h_tail = -1;
  heatmap->add_option("--checkpoint", h_ckpt)->required();
  heatmap->add_option("--layer", h_layer)->required();
  heatmap->add_option("--tail", h_tail, "tail size (default min(50, p))");
  heatmap->add_option("--fold", h_fold, "hwc-f | hc-wf");
  heatmap->add_option("--out", h_out, "output file (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      ExperimentConfig base =
          config_path.empty() ? ExperimentConfig{} : load_config_file(config_path);
      // only apply flags the caller actually passed
      if (*o_dataset) base.dataset_kind = cfg.dataset_kind;
      if (*o_n) base.dataset_n = cfg.dataset_n;
      if (*o_idim) base.input_dim = cfg.input_dim;
      if (*o_classes) base.classes = cfg.classes;
      if (*o_trank) base.teacher_rank = cfg.teacher_rank;
      if (*o_dpath) base.dataset_path = cfg.dataset_path;
      if (*o_net) base.net_layers = cfg.net_layers;
      if (*o_loss) base.loss = cfg.loss;
      if (*o_epochs) base.epochs = cfg.epochs;
      if (*o_inf) base.inflate_epoch = cfg.inflate_epoch;
      if (*o_def) base.deflate_epoch = cfg.deflate_epoch;
      if (*o_auto) base.auto_place = cfg.auto_place;
      if (*o_rho) base.rank_ratio = cfg.rank_ratio;
      if (*o_decomp) base.decomp = cfg.decomp;
      if (*o_lr) base.lr = cfg.lr;
      if (*o_decay) {
        base.decay_epochs.clear();
        std::stringstream ss(decay_csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
          base.decay_epochs.push_back(std::atoi(item.c_str()));
        }
      }
      if (*o_factor) base.decay_factor = cfg.decay_factor;
      if (*o_batch) base.batch_size = cfg.batch_size;
      if (*o_mom) base.momentum = cfg.momentum;
      if (*o_wd) base.weight_decay = cfg.weight_decay;
      if (*o_so) base.so_coeff = cfg.so_coeff;
      if (*o_dinit) base.deflate_init = cfg.deflate_init;
      if (*o_dscale) base.deflate_scale = cfg.deflate_scale;
      if (*o_seed) base.seed = cfg.seed;
      if (*o_out) base.out_dir = cfg.out_dir;

      if (!seeds_csv.empty()) {
        return run_replicates(base, parse_seed_list(seeds_csv));
      }
      const int status = run_experiment(base);
      std::cout << "run complete (status " << status << ") -> "
                << base.out_dir << "\n";
      return status;
    }

    if (*budget) {
      if (b_phi >= 0.0) {
        if (b_phi > 1.0) {
          std::cerr << "budget: --phi must be in [0, 1]\n";
          return 2;
        }
        const int window =
            static_cast<int>(std::lround(b_phi * static_cast<double>(b_e)));
        b_i = 0;
        b_dd = window;
      }
      const ComputeBudget b = compute_budget(b_d, b_dlow, b_e, b_i, b_dd);
      std::printf("T_F %.0f\nT_low %.0f\nT_DR %.0f\ncomp_ratio %.6f\n",
                  b.t_full, b.t_low, b.t_dynamic, b.comp_ratio);
      if (!b_out.empty()) write_or_print(b_out, budget_json(b));
      return 0;
    }

    if (*spectra) {
      const Checkpoint ckpt = load_checkpoint(s_ckpt);
      if (!s_cfg.empty() &&
          config_hash(load_config_file(s_cfg)) != ckpt.config_hash) {
        std::cerr << "warning: checkpoint " << s_ckpt
                  << " was written by a different configuration\n";
      }
      write_or_print(s_out, spectral_json(spectral_report(
                                ckpt.net, static_cast<int>(ckpt.epoch))));
      return 0;
    }

    if (*heatmap) {
      const Checkpoint ckpt = load_checkpoint(h_ckpt);
      if (h_layer >= ckpt.net.layers.size()) {
        std::cerr << "heatmap: layer index out of range\n";
        return 2;
      }
      if (h_fold != "hwc-f" && h_fold != "hc-wf") {
        std::cerr << "heatmap: --fold must be hwc-f or hc-wf\n";
        return 2;
      }
      const Tensor w = ckpt.net.layers[h_layer].effective_weight();
      const KernelFold fold =
          h_fold == "hc-wf" ? KernelFold::kHcByWf : KernelFold::kHwcByF;
      const Tensor unf =
          fold == KernelFold::kHwcByF ? unfold_hwc_f(w) : unfold_hc_wf(w);
      const std::size_t p = std::min(unf.rows(), unf.cols());
      const std::size_t tail =
          h_tail < 0 ? std::min<std::size_t>(50, p)
                     : static_cast<std::size_t>(h_tail);
      const Tensor hm = tail_reconstruction_heatmap(w, tail, fold);
      std::string body =
          std::to_string(hm.rows()) + " " + std::to_string(hm.cols()) + "\n";
      char buf[40];
      for (std::size_t r = 0; r < hm.rows(); ++r) {
        for (std::size_t col = 0; col < hm.cols(); ++col) {
          std::snprintf(buf, sizeof buf, "%.17g", hm(r, col));
          if (col) body += " ";
          body += buf;
        }
        body += "\n";
      }
      write_or_print(h_out, body);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
