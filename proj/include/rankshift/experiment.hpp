#pragma once

#include <string>

#include "rankshift/checkpoint.hpp"
#include "rankshift/config.hpp"
#include "rankshift/dataset.hpp"
#include "rankshift/diagnostics.hpp"
#include "rankshift/schedule.hpp"

namespace rankshift {

Dataset build_dataset(const ExperimentConfig& cfg);

/// Parse net.layers, append the classifier layer, seed the weights.
/// Throws ConfigError for malformed layer tokens.
Network build_network(const ExperimentConfig& cfg, std::size_t input_dim,
                      int classes);

/// Resolved schedules (auto-placement applied).
LrSchedule lr_schedule_from(const ExperimentConfig& cfg);
RankSchedule rank_schedule_from(const ExperimentConfig& cfg);
TrainOptions train_options_from(const ExperimentConfig& cfg);

struct RunResult {
  RunLog log;
  Network net;
  RankSchedule schedule;
};

/// Validate, build, train. No artifacts written.
RunResult execute_run(const ExperimentConfig& cfg);

std::string metrics_csv(const RunLog& log);
std::string budget_json(const ComputeBudget& b);
std::string spectral_json(const SpectralReport& rep);

/// Full front door: execute and write metrics.csv, spectral.json,
/// budget.json, heatmap_layer<i>.txt and checkpoint.bin into cfg.out_dir.
/// Returns 0, or 3 when run-time proposition telemetry flagged a violation.
/// Throws ConfigError listing every invalid field.
int run_experiment(const ExperimentConfig& cfg);

}  // namespace rankshift
