#include "rankshift/diagnostics.hpp"

#include <cstdio>
#include <limits>
#include <stdexcept>

#include "rankshift/linalg.hpp"

namespace rankshift {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSentinelRatio = 1e-6;

std::string format_double(double v) {
  if (std::isinf(v)) return "inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

SpectralRatio spectral_ratio(const Tensor& weight) {
  const Tensor m = unfold_hwc_f(weight);
  SpectralRatio out;
  out.sigmas = singular_values(m);
  const double smax = out.sigmas.front();
  const double smin = out.sigmas.back();
  if (smax == 0.0) {
    out.lambda = kInf;
    out.empty_spectrum = true;
  } else if (smin > smax * kSentinelRatio) {
    out.lambda = smax / smin;
  } else {
    out.lambda = kInf;
  }
  return out;
}

ComputeBudget compute_budget(long long d, long long d_low, int epochs,
                             int inflate_epoch, int deflate_epoch) {
  if (d <= 0 || d_low <= 0) {
    throw std::invalid_argument("compute_budget: parameter counts must be > 0");
  }
  if (epochs < 1) {
    throw std::invalid_argument("compute_budget: epochs must be >= 1");
  }
  if (inflate_epoch < 0 || deflate_epoch < inflate_epoch ||
      deflate_epoch > epochs) {
    throw std::invalid_argument(
        "compute_budget: need 0 <= inflate <= deflate <= epochs");
  }
  ComputeBudget b;
  b.d = d;
  b.d_low = d_low;
  b.epochs = epochs;
  b.inflate_epoch = inflate_epoch;
  b.deflate_epoch = deflate_epoch;
  const double e = epochs;
  const double window = deflate_epoch - inflate_epoch;
  b.t_full = e * static_cast<double>(d);
  b.t_low = e * static_cast<double>(d_low);
  b.t_dynamic = window * static_cast<double>(d) +
                (e - window) * static_cast<double>(d_low);
  b.comp_ratio = b.t_dynamic / b.t_full;
  return b;
}

Tensor tail_reconstruction_heatmap(const Tensor& w, std::size_t n_tail,
                                   KernelFold fold) {
  const Tensor m =
      fold == KernelFold::kHwcByF ? unfold_hwc_f(w) : unfold_hc_wf(w);
  const std::size_t p = std::min(m.rows(), m.cols());
  if (n_tail > p) {
    throw std::invalid_argument(
        "tail_reconstruction_heatmap: n_tail exceeds min unfolding dim");
  }
  Tensor out({m.rows(), m.cols()});
  if (n_tail == 0) return out;
  const SvdResult r = svd(m);
  for (std::size_t j = p - n_tail; j < p; ++j) {
    const double s = r.s[j];
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const double us = s * r.u(i, j);
      if (us == 0.0) continue;
      for (std::size_t c = 0; c < m.cols(); ++c) {
        out(i, c) += us * r.v(c, j);
      }
    }
  }
  return out;
}

std::string LambdaTable::to_csv() const {
  std::string s = "epoch";
  for (std::size_t l = 0; l < layer_count; ++l) {
    s += ",lambda_" + std::to_string(l);
  }
  s += "\n";
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    s += std::to_string(epochs[i]);
    for (double v : values[i]) {
      s += ",";
      s += format_double(v);
    }
    s += "\n";
  }
  return s;
}

LambdaTable lambda_timeseries(const RunLog& log) {
  LambdaTable t;
  for (const auto& rec : log.epochs) {
    t.epochs.push_back(rec.epoch);
    t.values.push_back(rec.lambda);
    t.layer_count = std::max(t.layer_count, rec.lambda.size());
  }
  return t;
}

SpectralReport spectral_report(const Network& net, int epoch) {
  SpectralReport rep;
  rep.epoch = epoch;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& layer = net.layers[i];
    const Tensor w = layer.effective_weight_unfolded();
    LayerSpectral ls;
    ls.name = (layer.kind == LayerKind::kDense ? "dense" : "conv") +
              std::to_string(i);
    SpectralRatio sr = spectral_ratio(w);
    ls.lambda = sr.lambda;
    ls.sigmas = std::move(sr.sigmas);
    ls.effective_rank = sr.empty_spectrum ? 0 : numerical_rank(w);
    rep.layers.push_back(std::move(ls));
  }
  return rep;
}

}  // namespace rankshift
