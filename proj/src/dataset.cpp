#include "rankshift/dataset.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rankshift/rng.hpp"

namespace rankshift {

namespace {

constexpr double kPi = 3.14159265358979323846;

Tensor one_hot(const std::vector<int>& labels, int classes) {
  Tensor y({labels.size(), static_cast<std::size_t>(classes)});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    y(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return y;
}

// Shuffled 5:1 split of row-major samples.
Dataset split_dataset(const std::vector<std::vector<double>>& xs,
                      const std::vector<int>& labels, int classes, Rng& rng) {
  const std::size_t n = xs.size();
  const std::size_t dim = xs[0].size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);

  const std::size_t n_val = n / 6;
  const std::size_t n_train = n - n_val;

  Dataset d;
  d.classes = classes;
  d.train_x = Tensor({n_train, dim});
  d.val_x = Tensor({n_val, dim});
  d.train_labels.reserve(n_train);
  d.val_labels.reserve(n_val);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = xs[idx[i]];
    if (i < n_train) {
      for (std::size_t j = 0; j < dim; ++j) d.train_x(i, j) = row[j];
      d.train_labels.push_back(labels[idx[i]]);
    } else {
      const std::size_t v = i - n_train;
      for (std::size_t j = 0; j < dim; ++j) d.val_x(v, j) = row[j];
      d.val_labels.push_back(labels[idx[i]]);
    }
  }
  d.train_y = one_hot(d.train_labels, classes);
  d.val_y = n_val ? one_hot(d.val_labels, classes)
                  : Tensor({1, static_cast<std::size_t>(classes)});
  return d;
}

void check_spec(const SyntheticSpec& spec) {
  std::vector<std::string> problems;
  if (spec.n < 6) problems.push_back("dataset size must be >= 6");
  if (spec.input_dim < 1) problems.push_back("input dim must be >= 1");
  if (spec.classes < 2) problems.push_back("class count must be >= 2");
  if (spec.kind == "two-spirals" &&
      (spec.input_dim != 2 || spec.classes != 2)) {
    problems.push_back("two-spirals requires input dim 2 and 2 classes");
  }
  if (spec.kind == "low-rank-teacher" && spec.teacher_rank < 1) {
    problems.push_back("teacher rank must be >= 1");
  }
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) {
      if (!msg.empty()) msg += "; ";
      msg += p;
    }
    throw std::invalid_argument(msg);
  }
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  check_spec(spec);
  Rng rng(seed);
  const std::size_t n = static_cast<std::size_t>(spec.n);
  const std::size_t dim = static_cast<std::size_t>(spec.input_dim);
  std::vector<std::vector<double>> xs(n, std::vector<double>(dim, 0.0));
  std::vector<int> labels(n, 0);
  Tensor teacher;

  if (spec.kind == "gaussian-mixture") {
    std::vector<std::vector<double>> centers(
        static_cast<std::size_t>(spec.classes), std::vector<double>(dim));
    for (auto& c : centers) {
      for (double& v : c) v = 2.0 * rng.normal();
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int cls = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
      labels[i] = cls;
      for (std::size_t j = 0; j < dim; ++j) {
        xs[i][j] = centers[static_cast<std::size_t>(cls)][j] + 0.5 * rng.normal();
      }
    }
  } else if (spec.kind == "two-spirals") {
    const double turns = 1.25;
    const double r0 = 0.2;
    const double noise = 0.03;
    for (std::size_t i = 0; i < n; ++i) {
      const int cls = static_cast<int>(i % 2);
      labels[i] = cls;
      const double t = rng.uniform();
      const double theta = 2.0 * kPi * turns * t + kPi * cls;
      const double r = r0 + (1.0 - r0) * t;
      xs[i][0] = r * std::cos(theta) + noise * rng.normal();
      xs[i][1] = r * std::sin(theta) + noise * rng.normal();
    }
  } else if (spec.kind == "low-rank-teacher") {
    const std::size_t hidden = 32;
    const std::size_t r =
        std::min(static_cast<std::size_t>(spec.teacher_rank),
                 std::min(dim, hidden));
    Tensor left({dim, r}), right({r, hidden});
    for (double& v : left.values()) v = rng.normal() / std::sqrt(double(dim));
    for (double& v : right.values()) v = rng.normal() / std::sqrt(double(r));
    teacher = matmul(left, right);  // rank exactly r
    Tensor w2({hidden, static_cast<std::size_t>(spec.classes)});
    for (double& v : w2.values()) v = rng.normal() / std::sqrt(double(hidden));

    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dim; ++j) xs[i][j] = rng.normal();
      Tensor x({1, dim}, xs[i]);
      Tensor h = matmul(x, teacher);
      for (double& v : h.values()) v = v > 0.0 ? v : 0.0;
      Tensor logits = matmul(h, w2);
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c) {
        if (logits(0, c) > logits(0, best)) best = c;
      }
      labels[i] = static_cast<int>(best);
    }
  } else {
    throw std::invalid_argument("unknown synthetic generator '" + spec.kind +
                                "'");
  }

  Dataset d = split_dataset(xs, labels, spec.classes, rng);
  d.teacher_weight = std::move(teacher);
  return d;
}

Dataset ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error(path + ": empty file");
  }
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  std::size_t line_no = 1;  // header was line 1
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      ++col;
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') {
        throw std::runtime_error(path + ": row " + std::to_string(line_no) +
                                 ", column " + std::to_string(col) +
                                 ": not numeric: '" + cell + "'");
      }
      row.push_back(v);
    }
    if (row.size() < 2) {
      throw std::runtime_error(path + ": row " + std::to_string(line_no) +
                               ": need at least one feature and a label");
    }
    if (width == 0) {
      width = row.size();
    } else if (row.size() != width) {
      throw std::runtime_error(path + ": row " + std::to_string(line_no) +
                               ": expected " + std::to_string(width) +
                               " fields, got " + std::to_string(row.size()));
    }
    const double lab = row.back();
    if (lab < 0.0 || lab != std::floor(lab)) {
      throw std::runtime_error(path + ": row " + std::to_string(line_no) +
                               ", column " + std::to_string(width) +
                               ": label must be a non-negative integer");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");

  const std::size_t n = rows.size();
  const std::size_t dim = width - 1;
  int classes = 0;
  for (const auto& r : rows) {
    classes = std::max(classes, static_cast<int>(r.back()) + 1);
  }
  if (classes < 2) classes = 2;

  const std::size_t n_val = n / 6;
  const std::size_t n_train = n - n_val;

  Dataset d;
  d.classes = classes;
  d.train_x = Tensor({n_train, dim});
  d.val_x = Tensor({std::max<std::size_t>(n_val, 1), dim});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      if (i < n_train) {
        d.train_x(i, j) = rows[i][j];
      } else {
        d.val_x(i - n_train, j) = rows[i][j];
      }
    }
    if (i < n_train) {
      d.train_labels.push_back(static_cast<int>(rows[i].back()));
    } else {
      d.val_labels.push_back(static_cast<int>(rows[i].back()));
    }
  }

  if (schema.normalize) {
    for (std::size_t j = 0; j < dim; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n_train; ++i) mean += d.train_x(i, j);
      mean /= static_cast<double>(n_train);
      double var = 0.0;
      for (std::size_t i = 0; i < n_train; ++i) {
        const double e = d.train_x(i, j) - mean;
        var += e * e;
      }
      var /= static_cast<double>(n_train);
      const double sd = std::sqrt(var);
      for (std::size_t i = 0; i < n_train; ++i) {
        d.train_x(i, j) = sd > 0.0 ? (d.train_x(i, j) - mean) / sd : 0.0;
      }
      for (std::size_t i = 0; i < n_val; ++i) {
        d.val_x(i, j) = sd > 0.0 ? (d.val_x(i, j) - mean) / sd : 0.0;
      }
    }
  }

  d.train_y = one_hot(d.train_labels, classes);
  d.val_y = n_val ? one_hot(d.val_labels, classes)
                  : Tensor({1, static_cast<std::size_t>(classes)});
  return d;
}

}  // namespace rankshift
