#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rankshift {

/// Aggregates every invalid field found, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid configuration:";
    for (const auto& p : v) s += "\n  - " + p;
    return s;
  }
  std::vector<std::string> problems_;
};

struct ExperimentConfig {
  // dataset
  std::string dataset_kind = "two-spirals";
  long dataset_n = 2000;
  int input_dim = 2;
  int classes = 2;
  int teacher_rank = 4;
  std::string dataset_path;

  // network: semicolon-separated hidden layer tokens, "dense:N" or
  // "conv:KHxKWxF@HxW"; a dense classifier layer is appended automatically
  std::string net_layers = "dense:64;dense:64;dense:64";
  std::string loss = "ce";  // ce | mse

  // schedule
  int epochs = 60;
  int inflate_epoch = 0;  // 0 = none
  int deflate_epoch = 0;
  bool auto_place = false;
  double rank_ratio = 1.0;
  std::string decomp = "svd";  // svd | tucker | cp

  // optimizer
  double lr = 0.1;
  std::vector<int> decay_epochs;
  double decay_factor = 0.1;
  int batch_size = 32;
  double momentum = 0.9;
  double weight_decay = 0.0;

  // regularizer
  double so_coeff = 0.0;

  // deflation
  std::string deflate_init = "zero-b";  // zero-b | random | zero
  double deflate_scale = 1.0;

  // run
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;
};

/// Flat "key = value" lines, one dotted key per line, sorted; parses back
/// losslessly (doubles are written with 17 significant digits).
std::string serialize_config(const ExperimentConfig& cfg);

/// Throws ConfigError listing every unknown key and unparseable value.
ExperimentConfig parse_config(const std::string& text);

ExperimentConfig load_config_file(const std::string& path);

/// Every constraint violation, empty when the config is valid.
std::vector<std::string> validate_config(const ExperimentConfig& cfg);

/// FNV-1a over the serialized form; stored in checkpoints.
std::uint64_t config_hash(const ExperimentConfig& cfg);

}  // namespace rankshift
