#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rankshift/tensor.hpp"

namespace rankshift {

struct Dataset {
  Tensor train_x, train_y;  // features, one-hot (or real) targets
  std::vector<int> train_labels;
  Tensor val_x, val_y;
  std::vector<int> val_labels;
  int classes = 0;
  Tensor teacher_weight;  // low-rank-teacher only: the planted hidden weight

  std::size_t train_size() const { return train_labels.size(); }
  std::size_t val_size() const { return val_labels.size(); }
  std::size_t feature_dim() const { return train_x.cols(); }
};

struct SyntheticSpec {
  std::string kind = "two-spirals";  // gaussian-mixture | two-spirals |
                                     // low-rank-teacher
  long n = 2000;
  int input_dim = 2;
  int classes = 2;
  int teacher_rank = 4;
};

/// Deterministic for a fixed seed; 5:1 train/validation split.
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

struct CsvSchema {
  bool normalize = true;  // per-feature z-score from train-split stats
};

/// Numeric CSV with a header row, last column an integer class label.
/// Validation errors name the offending row and column. Split is the last
/// sixth of the rows, in file order.
Dataset ingest_csv(const std::string& path, const CsvSchema& schema = {});

}  // namespace rankshift
