#include "rankshift/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace rankshift {

namespace {

constexpr char kMagic[8] = {'R', 'A', 'N', 'K', 'S', 'H', 'F', 'T'};
constexpr std::uint8_t kVersion = 1;

void put_u8(std::string& out, std::uint8_t v) {
  out.push_back(static_cast<char>(v));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
}

void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

void put_string(std::string& out, const std::string& s) {
  put_u64(out, s.size());
  out += s;
}

void put_tensor(std::string& out, const Tensor& t) {
  put_u8(out, static_cast<std::uint8_t>(t.ndim()));
  for (std::size_t d : t.shape()) put_u64(out, d);
  for (double v : t.values()) put_f64(out, v);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  explicit Reader(const std::string& b) : buf(b) {}

  void need(std::size_t n) const {
    if (pos + n > buf.size()) {
      throw std::runtime_error("checkpoint: truncated file");
    }
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    }
    pos += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
  Tensor tensor() {
    const std::uint8_t nd = u8();
    if (nd < 1 || nd > 4) {
      throw std::runtime_error("checkpoint: bad tensor rank");
    }
    std::vector<std::size_t> shape(nd);
    std::size_t total = 1;
    for (auto& d : shape) {
      d = u64();
      total *= d;
    }
    std::vector<double> data(total);
    for (double& v : data) v = f64();
    return Tensor(std::move(shape), std::move(data));
  }
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string out;
  out.append(kMagic, sizeof kMagic);
  put_u8(out, kVersion);
  put_u64(out, ckpt.config_hash);
  put_u64(out, static_cast<std::uint64_t>(ckpt.epoch));
  for (std::uint64_t w : ckpt.rng_state) put_u64(out, w);

  put_u8(out, ckpt.net.loss == LossKind::kSoftmaxCrossEntropy ? 0 : 1);
  put_u64(out, ckpt.net.layers.size());
  for (const auto& l : ckpt.net.layers) {
    put_u8(out, l.kind == LayerKind::kDense ? 0 : 1);
    put_u8(out, l.act == Activation::kIdentity ? 0 : 1);
    put_u8(out, l.mode == WeightMode::kFull ? 0 : 1);
    put_u8(out, l.decomp == Decomp::kSvd   ? 0
                : l.decomp == Decomp::kTucker ? 1
                                              : 2);
    put_u64(out, l.rank);
    if (l.kind == LayerKind::kDense) {
      put_u64(out, l.in_dim);
      put_u64(out, l.out_dim);
    } else {
      put_u64(out, l.conv.in_h);
      put_u64(out, l.conv.in_w);
      put_u64(out, l.conv.in_c);
      put_u64(out, l.conv.kh);
      put_u64(out, l.conv.kw);
      put_u64(out, l.conv.out_c);
    }
    put_u8(out, l.base.empty() ? 0 : 1);
    if (!l.base.empty()) put_tensor(out, l.base);
    put_u64(out, l.params.size());
    for (const auto& p : l.params) {
      put_string(out, p.name);
      put_tensor(out, p.value);
      put_tensor(out, p.velocity);
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for '" + path +
                                   "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());

  Reader r(buf);
  r.need(sizeof kMagic);
  if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  }
  r.pos = sizeof kMagic;
  const std::uint8_t version = r.u8();
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  }

  Checkpoint ckpt;
  ckpt.config_hash = r.u64();
  ckpt.epoch = static_cast<std::int64_t>(r.u64());
  for (auto& w : ckpt.rng_state) w = r.u64();

  ckpt.net.loss = r.u8() == 0 ? LossKind::kSoftmaxCrossEntropy
                              : LossKind::kMeanSquaredError;
  const std::uint64_t n_layers = r.u64();
  for (std::uint64_t i = 0; i < n_layers; ++i) {
    Layer l;
    l.kind = r.u8() == 0 ? LayerKind::kDense : LayerKind::kConv2d;
    l.act = r.u8() == 0 ? Activation::kIdentity : Activation::kRelu;
    l.mode = r.u8() == 0 ? WeightMode::kFull : WeightMode::kLowRank;
    const std::uint8_t dec = r.u8();
    l.decomp = dec == 0 ? Decomp::kSvd
               : dec == 1 ? Decomp::kTucker
                          : Decomp::kCp;
    l.rank = r.u64();
    if (l.kind == LayerKind::kDense) {
      l.in_dim = r.u64();
      l.out_dim = r.u64();
    } else {
      l.conv.in_h = r.u64();
      l.conv.in_w = r.u64();
      l.conv.in_c = r.u64();
      l.conv.kh = r.u64();
      l.conv.kw = r.u64();
      l.conv.out_c = r.u64();
    }
    if (r.u8()) l.base = r.tensor();
    const std::uint64_t n_params = r.u64();
    for (std::uint64_t j = 0; j < n_params; ++j) {
      Param p;
      p.name = r.str();
      p.value = r.tensor();
      p.velocity = r.tensor();
      if (p.velocity.shape() != p.value.shape()) {
        throw std::runtime_error("checkpoint: velocity/value shape mismatch");
      }
      l.params.push_back(std::move(p));
    }
    if (l.params.empty()) {
      throw std::runtime_error("checkpoint: layer without parameters");
    }
    ckpt.net.layers.push_back(std::move(l));
  }
  if (r.pos != buf.size()) {
    throw std::runtime_error("checkpoint: trailing bytes in '" + path + "'");
  }
  return ckpt;
}

}  // namespace rankshift
