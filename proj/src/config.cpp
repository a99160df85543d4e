#include "rankshift/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace rankshift {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_int_list(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

struct Parser {
  std::vector<std::string> problems;

  bool to_long(const std::string& key, const std::string& v, long& out) {
    char* end = nullptr;
    const long x = std::strtol(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') {
      problems.push_back(key + ": expected an integer, got '" + v + "'");
      return false;
    }
    out = x;
    return true;
  }

  bool to_int(const std::string& key, const std::string& v, int& out) {
    long x;
    if (!to_long(key, v, x)) return false;
    out = static_cast<int>(x);
    return true;
  }

  bool to_u64(const std::string& key, const std::string& v,
              std::uint64_t& out) {
    char* end = nullptr;
    const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0') {
      problems.push_back(key + ": expected an unsigned integer, got '" + v +
                         "'");
      return false;
    }
    out = x;
    return true;
  }

  bool to_double(const std::string& key, const std::string& v, double& out) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0') {
      problems.push_back(key + ": expected a number, got '" + v + "'");
      return false;
    }
    out = x;
    return true;
  }

  bool to_bool(const std::string& key, const std::string& v, bool& out) {
    if (v == "true") {
      out = true;
    } else if (v == "false") {
      out = false;
    } else {
      problems.push_back(key + ": expected true/false, got '" + v + "'");
      return false;
    }
    return true;
  }

  bool to_int_list(const std::string& key, const std::string& v,
                   std::vector<int>& out) {
    out.clear();
    if (trim(v).empty()) return true;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
      int x;
      if (!to_int(key, trim(item), x)) return false;
      out.push_back(x);
    }
    return true;
  }
};

}  // namespace

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "dataset.classes = " << c.classes << "\n";
  os << "dataset.input_dim = " << c.input_dim << "\n";
  os << "dataset.kind = " << c.dataset_kind << "\n";
  os << "dataset.n = " << c.dataset_n << "\n";
  os << "dataset.path = " << c.dataset_path << "\n";
  os << "dataset.teacher_rank = " << c.teacher_rank << "\n";
  os << "deflate.init = " << c.deflate_init << "\n";
  os << "deflate.scale = " << fmt_double(c.deflate_scale) << "\n";
  os << "net.layers = " << c.net_layers << "\n";
  os << "net.loss = " << c.loss << "\n";
  os << "opt.batch_size = " << c.batch_size << "\n";
  os << "opt.decay_epochs = " << fmt_int_list(c.decay_epochs) << "\n";
  os << "opt.decay_factor = " << fmt_double(c.decay_factor) << "\n";
  os << "opt.lr = " << fmt_double(c.lr) << "\n";
  os << "opt.momentum = " << fmt_double(c.momentum) << "\n";
  os << "opt.weight_decay = " << fmt_double(c.weight_decay) << "\n";
  os << "reg.so_coeff = " << fmt_double(c.so_coeff) << "\n";
  os << "run.out = " << c.out_dir << "\n";
  os << "run.seed = " << c.seed << "\n";
  os << "sched.auto_place = " << (c.auto_place ? "true" : "false") << "\n";
  os << "sched.decomp = " << c.decomp << "\n";
  os << "sched.deflate_epoch = " << c.deflate_epoch << "\n";
  os << "sched.epochs = " << c.epochs << "\n";
  os << "sched.inflate_epoch = " << c.inflate_epoch << "\n";
  os << "sched.rank_ratio = " << fmt_double(c.rank_ratio) << "\n";
  return os.str();
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  Parser p;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      p.problems.push_back("line " + std::to_string(line_no) +
                           ": expected 'key = value'");
      continue;
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));

    if (key == "dataset.kind") {
      c.dataset_kind = val;
    } else if (key == "dataset.n") {
      p.to_long(key, val, c.dataset_n);
    } else if (key == "dataset.input_dim") {
      p.to_int(key, val, c.input_dim);
    } else if (key == "dataset.classes") {
      p.to_int(key, val, c.classes);
    } else if (key == "dataset.teacher_rank") {
      p.to_int(key, val, c.teacher_rank);
    } else if (key == "dataset.path") {
      c.dataset_path = val;
    } else if (key == "net.layers") {
      c.net_layers = val;
    } else if (key == "net.loss") {
      c.loss = val;
    } else if (key == "sched.epochs") {
      p.to_int(key, val, c.epochs);
    } else if (key == "sched.inflate_epoch") {
      p.to_int(key, val, c.inflate_epoch);
    } else if (key == "sched.deflate_epoch") {
      p.to_int(key, val, c.deflate_epoch);
    } else if (key == "sched.auto_place") {
      p.to_bool(key, val, c.auto_place);
    } else if (key == "sched.rank_ratio") {
      p.to_double(key, val, c.rank_ratio);
    } else if (key == "sched.decomp") {
      c.decomp = val;
    } else if (key == "opt.lr") {
      p.to_double(key, val, c.lr);
    } else if (key == "opt.decay_epochs") {
      p.to_int_list(key, val, c.decay_epochs);
    } else if (key == "opt.decay_factor") {
      p.to_double(key, val, c.decay_factor);
    } else if (key == "opt.batch_size") {
      p.to_int(key, val, c.batch_size);
    } else if (key == "opt.momentum") {
      p.to_double(key, val, c.momentum);
    } else if (key == "opt.weight_decay") {
      p.to_double(key, val, c.weight_decay);
    } else if (key == "reg.so_coeff") {
      p.to_double(key, val, c.so_coeff);
    } else if (key == "deflate.init") {
      c.deflate_init = val;
    } else if (key == "deflate.scale") {
      p.to_double(key, val, c.deflate_scale);
    } else if (key == "run.seed") {
      p.to_u64(key, val, c.seed);
    } else if (key == "run.out") {
      c.out_dir = val;
    } else {
      p.problems.push_back("unknown key '" + key + "'");
    }
  }
  if (!p.problems.empty()) throw ConfigError(std::move(p.problems));
  return c;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError({"cannot open config file '" + path + "'"});
  }
  std::ostringstream os;
  os << in.rdbuf();
  return parse_config(os.str());
}

std::vector<std::string> validate_config(const ExperimentConfig& c) {
  std::vector<std::string> v;
  if (c.dataset_kind != "gaussian-mixture" && c.dataset_kind != "two-spirals" &&
      c.dataset_kind != "low-rank-teacher" && c.dataset_kind != "csv") {
    v.push_back("dataset.kind: unknown generator '" + c.dataset_kind + "'");
  }
  if (c.dataset_kind == "csv" && c.dataset_path.empty()) {
    v.push_back("dataset.path: required for csv datasets");
  }
  if (c.dataset_kind != "csv") {
    if (c.dataset_n < 6) v.push_back("dataset.n: must be >= 6");
    if (c.input_dim < 1) v.push_back("dataset.input_dim: must be >= 1");
    if (c.classes < 2) v.push_back("dataset.classes: must be >= 2");
  }
  if (c.net_layers.empty()) v.push_back("net.layers: must not be empty");
  if (c.loss != "ce" && c.loss != "mse") {
    v.push_back("net.loss: must be 'ce' or 'mse'");
  }
  if (c.epochs < 1) v.push_back("sched.epochs: must be >= 1");
  if (c.auto_place && (c.inflate_epoch > 0 || c.deflate_epoch > 0)) {
    v.push_back(
        "sched.auto_place: conflicts with explicit inflate/deflate epochs");
  }
  if ((c.inflate_epoch > 0) != (c.deflate_epoch > 0)) {
    v.push_back(
        "sched.inflate_epoch/deflate_epoch: give both or neither");
  }
  if (c.inflate_epoch > 0 && c.deflate_epoch > 0) {
    if (c.inflate_epoch < 1 || c.inflate_epoch > c.epochs) {
      v.push_back("sched.inflate_epoch: outside [1, epochs]");
    }
    if (c.deflate_epoch < 1 || c.deflate_epoch > c.epochs) {
      v.push_back("sched.deflate_epoch: outside [1, epochs]");
    }
    if (c.inflate_epoch >= c.deflate_epoch) {
      v.push_back("sched.inflate_epoch: must precede sched.deflate_epoch");
    }
  }
  if (c.rank_ratio <= 0.0 || c.rank_ratio > 1.0) {
    v.push_back("sched.rank_ratio: must be in (0, 1]");
  }
  if (c.decomp != "svd" && c.decomp != "tucker" && c.decomp != "cp") {
    v.push_back("sched.decomp: must be svd, tucker, or cp");
  }
  if (c.lr < 0.0) v.push_back("opt.lr: must be >= 0");
  if (c.decay_factor <= 0.0 || c.decay_factor >= 1.0) {
    v.push_back("opt.decay_factor: must be in (0, 1)");
  }
  for (std::size_t i = 0; i < c.decay_epochs.size(); ++i) {
    if (c.decay_epochs[i] < 1 || c.decay_epochs[i] > c.epochs) {
      v.push_back("opt.decay_epochs: entry outside [1, epochs]");
      break;
    }
    if (i && c.decay_epochs[i] <= c.decay_epochs[i - 1]) {
      v.push_back("opt.decay_epochs: must be strictly ascending");
      break;
    }
  }
  if (c.batch_size < 1) v.push_back("opt.batch_size: must be >= 1");
  if (c.momentum < 0.0 || c.momentum >= 1.0) {
    v.push_back("opt.momentum: must be in [0, 1)");
  }
  if (c.weight_decay < 0.0) v.push_back("opt.weight_decay: must be >= 0");
  if (c.so_coeff < 0.0) v.push_back("reg.so_coeff: must be >= 0");
  if (c.deflate_init != "zero-b" && c.deflate_init != "random" &&
      c.deflate_init != "zero") {
    v.push_back("deflate.init: must be zero-b, random, or zero");
  }
  if (c.deflate_scale <= 0.0) v.push_back("deflate.scale: must be > 0");
  if (c.out_dir.empty()) v.push_back("run.out: must not be empty");
  return v;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string s = serialize_config(cfg);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace rankshift
