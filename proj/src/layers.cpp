#include "rankshift/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace rankshift {

namespace {

Tensor colsum(const Tensor& m) {
  Tensor s({m.cols()});
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) s(j) += m(i, j);
  }
  return s;
}

void add_rowwise(Tensor& m, const Tensor& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) += bias(j);
  }
}

Param make_param(std::string name, Tensor value) {
  Tensor vel(value.shape());
  return Param{std::move(name), std::move(value), std::move(vel)};
}

}  // namespace

const char* to_string(Decomp d) {
  switch (d) {
    case Decomp::kSvd: return "svd";
    case Decomp::kTucker: return "tucker";
    case Decomp::kCp: return "cp";
  }
  return "?";
}

Tensor im2col(const Tensor& x, std::size_t h, std::size_t w, std::size_t c,
              std::size_t kh, std::size_t kw) {
  if (x.ndim() != 2 || x.cols() != h * w * c) {
    throw std::invalid_argument("im2col: input shape mismatch");
  }
  const std::size_t batch = x.rows();
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  Tensor cols({batch * oh * ow, kh * kw * c});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xb = x.data() + b * h * w * c;
    for (std::size_t p = 0; p < oh; ++p) {
      for (std::size_t q = 0; q < ow; ++q) {
        double* row = cols.data() + ((b * oh + p) * ow + q) * (kh * kw * c);
        for (std::size_t dx = 0; dx < kh; ++dx) {
          const double* src = xb + ((p + dx) * w + q) * c;
          double* dst = row + dx * kw * c;
          for (std::size_t e = 0; e < kw * c; ++e) dst[e] = src[e];
        }
      }
    }
  }
  return cols;
}

Tensor col2im(const Tensor& cols, std::size_t batch, std::size_t h,
              std::size_t w, std::size_t c, std::size_t kh, std::size_t kw) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  if (cols.ndim() != 2 || cols.rows() != batch * oh * ow ||
      cols.cols() != kh * kw * c) {
    throw std::invalid_argument("col2im: patch matrix shape mismatch");
  }
  Tensor x({batch, h * w * c});
  for (std::size_t b = 0; b < batch; ++b) {
    double* xb = x.data() + b * h * w * c;
    for (std::size_t p = 0; p < oh; ++p) {
      for (std::size_t q = 0; q < ow; ++q) {
        const double* row =
            cols.data() + ((b * oh + p) * ow + q) * (kh * kw * c);
        for (std::size_t dx = 0; dx < kh; ++dx) {
          double* dst = xb + ((p + dx) * w + q) * c;
          const double* src = row + dx * kw * c;
          for (std::size_t e = 0; e < kw * c; ++e) dst[e] += src[e];
        }
      }
    }
  }
  return x;
}

Layer Layer::dense(std::size_t in, std::size_t out, Activation act) {
  Layer l;
  l.kind = LayerKind::kDense;
  l.in_dim = in;
  l.out_dim = out;
  l.act = act;
  l.mode = WeightMode::kFull;
  l.params.push_back(make_param("W", Tensor({in, out})));
  l.params.push_back(make_param("bias", Tensor({out})));
  return l;
}

Layer Layer::conv2d(const Conv2dDims& dims, Activation act) {
  if (dims.kh > dims.in_h || dims.kw > dims.in_w) {
    throw std::invalid_argument("conv2d: kernel larger than input");
  }
  Layer l;
  l.kind = LayerKind::kConv2d;
  l.conv = dims;
  l.act = act;
  l.mode = WeightMode::kFull;
  l.params.push_back(
      make_param("W", Tensor({dims.kh, dims.kw, dims.in_c, dims.out_c})));
  l.params.push_back(make_param("bias", Tensor({dims.out_c})));
  return l;
}

void Layer::init_weights(Rng& rng) {
  if (mode != WeightMode::kFull) {
    throw std::logic_error("init_weights: layer is not in full-rank mode");
  }
  Tensor& w = params[0].value;
  const double fan_in = static_cast<double>(unfold_rows());
  const double s = 1.0 / std::sqrt(fan_in);
  for (double& v : w.values()) v = rng.uniform(-s, s);
  params.back().value.fill(0.0);
}

std::size_t Layer::in_features() const {
  return kind == LayerKind::kDense ? in_dim
                                   : conv.in_h * conv.in_w * conv.in_c;
}

std::size_t Layer::out_features() const {
  return kind == LayerKind::kDense ? out_dim
                                   : conv.out_h() * conv.out_w() * conv.out_c;
}

std::size_t Layer::unfold_rows() const {
  return kind == LayerKind::kDense ? in_dim : conv.kh * conv.kw * conv.in_c;
}

std::size_t Layer::unfold_cols() const {
  return kind == LayerKind::kDense ? out_dim : conv.out_c;
}

Tensor Layer::forward(const Tensor& x, LayerCache* cache) const {
  if (x.ndim() != 2 || x.cols() != in_features()) {
    throw std::invalid_argument("forward: input is " + x.shape_str() +
                                ", layer expects " +
                                std::to_string(in_features()) + " features");
  }
  const std::size_t batch = x.rows();
  const Tensor& bias = params.back().value;
  Tensor pre;
  std::vector<Tensor> mids;

  if (kind == LayerKind::kDense) {
    if (mode == WeightMode::kFull) {
      pre = matmul(x, params[0].value);
    } else {
      Tensor hh = matmul(x, params[0].value);  // batch x k
      pre = matmul_nt(hh, params[1].value);    // batch x out
      if (!base.empty()) pre += matmul(x, base);
      mids.push_back(std::move(hh));
    }
    add_rowwise(pre, bias);
  } else {
    const std::size_t f = conv.out_c;
    const std::size_t oh = conv.out_h(), ow = conv.out_w();
    Tensor pre_cols;
    if (mode == WeightMode::kFull) {
      Tensor p = im2col(x, conv.in_h, conv.in_w, conv.in_c, conv.kh, conv.kw);
      pre_cols = matmul(p, unfold_hwc_f(params[0].value));
      mids.push_back(std::move(p));
    } else if (decomp == Decomp::kSvd) {
      Tensor p = im2col(x, conv.in_h, conv.in_w, conv.in_c, conv.kh, conv.kw);
      Tensor a_unf = params[0].value.reshaped({unfold_rows(), rank});
      Tensor b_mat = params[1].value.reshaped({rank, f});
      Tensor hh = matmul(p, a_unf);
      pre_cols = matmul(hh, b_mat);
      if (!base.empty()) pre_cols += matmul(p, unfold_hwc_f(base));
      mids.push_back(std::move(p));
      mids.push_back(std::move(hh));
    } else if (decomp == Decomp::kTucker) {
      const std::size_t k = rank;
      Tensor x1 = matmul(x.reshaped({batch * conv.in_h * conv.in_w, conv.in_c}),
                         params[0].value.reshaped({conv.in_c, k}));
      Tensor p1 = im2col(x1.reshaped({batch, conv.in_h * conv.in_w * k}),
                         conv.in_h, conv.in_w, k, conv.kh, conv.kw);
      Tensor y2 = matmul(p1, params[1].value.reshaped({conv.kh * conv.kw * k, k}));
      pre_cols = matmul(y2, params[2].value.reshaped({k, f}));
      if (!base.empty()) {
        pre_cols += matmul(
            im2col(x, conv.in_h, conv.in_w, conv.in_c, conv.kh, conv.kw),
            unfold_hwc_f(base));
      }
      mids.push_back(std::move(p1));
      mids.push_back(std::move(y2));
    } else {  // CP
      const std::size_t k = rank;
      Tensor x1 = matmul(x.reshaped({batch * conv.in_h * conv.in_w, conv.in_c}),
                         params[0].value.reshaped({conv.in_c, k}));
      Tensor p1 = im2col(x1.reshaped({batch, conv.in_h * conv.in_w * k}),
                         conv.in_h, conv.in_w, k, conv.kh, 1);
      Tensor y1 = matmul(p1, params[1].value.reshaped({conv.kh * k, k}));
      Tensor p2 = im2col(y1.reshaped({batch, oh * conv.in_w * k}), oh,
                         conv.in_w, k, 1, conv.kw);
      Tensor y2 = matmul(p2, params[2].value.reshaped({conv.kw * k, k}));
      pre_cols = matmul(y2, params[3].value.reshaped({k, f}));
      if (!base.empty()) {
        pre_cols += matmul(
            im2col(x, conv.in_h, conv.in_w, conv.in_c, conv.kh, conv.kw),
            unfold_hwc_f(base));
      }
      mids.push_back(std::move(p1));
      mids.push_back(std::move(p2));
      mids.push_back(std::move(y2));
    }
    add_rowwise(pre_cols, bias);
    pre = pre_cols.reshaped({batch, oh * ow * f});
  }

  Tensor out = pre;
  if (act == Activation::kRelu) {
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  }
  if (cache) {
    cache->input = x;
    cache->pre_act = std::move(pre);
    cache->mids = std::move(mids);
  }
  return out;
}

Tensor Layer::backward(const LayerCache& cache, const Tensor& dy,
                       LayerGrads* grads) const {
  if (dy.ndim() != 2 || cache.pre_act.shape() != dy.shape() ||
      cache.input.ndim() != 2 || cache.input.cols() != in_features()) {
    throw std::logic_error("backward: cache does not match this layer/batch");
  }
  const Tensor& x = cache.input;
  const std::size_t batch = x.rows();

  Tensor dpre = dy;
  if (act == Activation::kRelu) {
    for (std::size_t i = 0; i < dpre.size(); ++i) {
      if (cache.pre_act(i) <= 0.0) dpre(i) = 0.0;
    }
  }

  LayerGrads g;
  Tensor dx;

  if (kind == LayerKind::kDense) {
    if (mode == WeightMode::kFull) {
      g.by_param.push_back(matmul_tn(x, dpre));
      dx = matmul_nt(dpre, params[0].value);
    } else {
      if (cache.mids.size() != 1) {
        throw std::logic_error("backward: stale cache for low-rank layer");
      }
      const Tensor& hh = cache.mids[0];
      Tensor db = matmul_tn(dpre, hh);            // out x k
      Tensor dh = matmul(dpre, params[1].value);  // batch x k
      Tensor da = matmul_tn(x, dh);               // in x k
      dx = matmul_nt(dh, params[0].value);
      if (!base.empty()) dx += matmul_nt(dpre, base);
      g.by_param.push_back(std::move(da));
      g.by_param.push_back(std::move(db));
    }
    g.by_param.push_back(colsum(dpre));
  } else {
    const std::size_t f = conv.out_c;
    const std::size_t oh = conv.out_h(), ow = conv.out_w();
    const std::size_t k = rank;
    Tensor dpre_cols = dpre.reshaped({batch * oh * ow, f});

    if (mode == WeightMode::kFull) {
      const Tensor& p = cache.mids.at(0);
      Tensor dw = matmul_tn(p, dpre_cols);
      g.by_param.push_back(
          dw.reshaped({conv.kh, conv.kw, conv.in_c, conv.out_c}));
      Tensor dp = matmul_nt(dpre_cols, unfold_hwc_f(params[0].value));
      dx = col2im(dp, batch, conv.in_h, conv.in_w, conv.in_c, conv.kh,
                  conv.kw);
    } else if (decomp == Decomp::kSvd) {
      const Tensor& p = cache.mids.at(0);
      const Tensor& hh = cache.mids.at(1);
      Tensor a_unf = params[0].value.reshaped({unfold_rows(), k});
      Tensor b_mat = params[1].value.reshaped({k, f});
      Tensor db = matmul_tn(hh, dpre_cols);  // k x F
      Tensor dh = matmul_nt(dpre_cols, b_mat);
      Tensor da = matmul_tn(p, dh);
      Tensor dp = matmul_nt(dh, a_unf);
      if (!base.empty()) dp += matmul_nt(dpre_cols, unfold_hwc_f(base));
      dx = col2im(dp, batch, conv.in_h, conv.in_w, conv.in_c, conv.kh,
                  conv.kw);
      g.by_param.push_back(da.reshaped({conv.kh, conv.kw, conv.in_c, k}));
      g.by_param.push_back(db.reshaped({1, 1, k, f}));
    } else if (decomp == Decomp::kTucker) {
      const Tensor& p1 = cache.mids.at(0);
      const Tensor& y2 = cache.mids.at(1);
      Tensor a_mat = params[0].value.reshaped({conv.in_c, k});
      Tensor core_unf = params[1].value.reshaped({conv.kh * conv.kw * k, k});
      Tensor b_mat = params[2].value.reshaped({k, f});

      Tensor db = matmul_tn(y2, dpre_cols);  // k x F
      Tensor dy2 = matmul_nt(dpre_cols, b_mat);
      Tensor dcore = matmul_tn(p1, dy2);
      Tensor dp1 = matmul_nt(dy2, core_unf);
      Tensor dx1 = col2im(dp1, batch, conv.in_h, conv.in_w, k, conv.kh,
                          conv.kw)
                       .reshaped({batch * conv.in_h * conv.in_w, k});
      Tensor da = matmul_tn(
          x.reshaped({batch * conv.in_h * conv.in_w, conv.in_c}), dx1);
      Tensor dxr = matmul_nt(dx1, a_mat);
      dx = dxr.reshaped({batch, conv.in_h * conv.in_w * conv.in_c});
      if (!base.empty()) {
        Tensor dp = matmul_nt(dpre_cols, unfold_hwc_f(base));
        dx += col2im(dp, batch, conv.in_h, conv.in_w, conv.in_c, conv.kh,
                     conv.kw);
      }
      g.by_param.push_back(da.reshaped({1, 1, conv.in_c, k}));
      g.by_param.push_back(dcore.reshaped({conv.kh, conv.kw, k, k}));
      g.by_param.push_back(db.reshaped({1, 1, k, f}));
    } else {  // CP
      const Tensor& p1 = cache.mids.at(0);
      const Tensor& p2 = cache.mids.at(1);
      const Tensor& y2 = cache.mids.at(2);
      Tensor a_mat = params[0].value.reshaped({conv.in_c, k});
      Tensor c1_unf = params[1].value.reshaped({conv.kh * k, k});
      Tensor c2_unf = params[2].value.reshaped({conv.kw * k, k});
      Tensor b_mat = params[3].value.reshaped({k, f});

      Tensor db = matmul_tn(y2, dpre_cols);
      Tensor dy2 = matmul_nt(dpre_cols, b_mat);
      Tensor dc2 = matmul_tn(p2, dy2);
      Tensor dp2 = matmul_nt(dy2, c2_unf);
      Tensor dy1 = col2im(dp2, batch, oh, conv.in_w, k, 1, conv.kw)
                       .reshaped({batch * oh * conv.in_w, k});
      Tensor dc1 = matmul_tn(p1, dy1);
      Tensor dp1 = matmul_nt(dy1, c1_unf);
      Tensor dx1 = col2im(dp1, batch, conv.in_h, conv.in_w, k, conv.kh, 1)
                       .reshaped({batch * conv.in_h * conv.in_w, k});
      Tensor da = matmul_tn(
          x.reshaped({batch * conv.in_h * conv.in_w, conv.in_c}), dx1);
      dx = matmul_nt(dx1, a_mat)
               .reshaped({batch, conv.in_h * conv.in_w * conv.in_c});
      if (!base.empty()) {
        Tensor dp = matmul_nt(dpre_cols, unfold_hwc_f(base));
        dx += col2im(dp, batch, conv.in_h, conv.in_w, conv.in_c, conv.kh,
                     conv.kw);
      }
      g.by_param.push_back(da.reshaped({1, 1, conv.in_c, k}));
      g.by_param.push_back(dc1.reshaped({conv.kh, 1, k, k}));
      g.by_param.push_back(dc2.reshaped({1, conv.kw, k, k}));
      g.by_param.push_back(db.reshaped({1, 1, k, f}));
    }
    g.by_param.push_back(colsum(dpre_cols));
  }

  if (grads) *grads = std::move(g);
  return dx;
}

Tensor Layer::effective_weight() const {
  if (mode == WeightMode::kFull) return params[0].value;

  Tensor recon;
  if (kind == LayerKind::kDense) {
    recon = matmul_nt(params[0].value, params[1].value);
  } else if (decomp == Decomp::kSvd) {
    Tensor a_unf = params[0].value.reshaped({unfold_rows(), rank});
    Tensor b_mat = params[1].value.reshaped({rank, conv.out_c});
    recon = matmul(a_unf, b_mat)
                .reshaped({conv.kh, conv.kw, conv.in_c, conv.out_c});
  } else if (decomp == Decomp::kTucker) {
    recon = tucker_reconstruct(
        {params[0].value, params[1].value, params[2].value});
  } else {
    recon = cp_reconstruct({params[0].value, params[1].value, params[2].value,
                            params[3].value});
  }
  if (!base.empty()) recon += base;
  return recon;
}

Tensor Layer::effective_weight_unfolded() const {
  return unfold_hwc_f(effective_weight());
}

LayerGrads Layer::pullback_effective_gradient(const Tensor& g) const {
  LayerGrads out;
  const std::size_t bias_dim =
      kind == LayerKind::kDense ? out_dim : conv.out_c;

  if (mode == WeightMode::kFull) {
    out.by_param.push_back(g);
  } else if (kind == LayerKind::kDense) {
    out.by_param.push_back(matmul(g, params[1].value));     // G B
    out.by_param.push_back(matmul_tn(g, params[0].value));  // G^T A
  } else if (decomp == Decomp::kSvd) {
    Tensor g_unf = unfold_hwc_f(g);
    Tensor a_unf = params[0].value.reshaped({unfold_rows(), rank});
    Tensor b_mat = params[1].value.reshaped({rank, conv.out_c});
    out.by_param.push_back(matmul_nt(g_unf, b_mat).reshaped(
        {conv.kh, conv.kw, conv.in_c, rank}));
    out.by_param.push_back(
        matmul_tn(a_unf, g_unf).reshaped({1, 1, rank, conv.out_c}));
  } else if (decomp == Decomp::kTucker) {
    const Tensor& a = params[0].value;
    const Tensor& core = params[1].value;
    const Tensor& b = params[2].value;
    const std::size_t h = conv.kh, w = conv.kw, c = conv.in_c,
                      f = conv.out_c, k = rank;
    Tensor da({1, 1, c, k}), dcore({h, w, k, k}), db({1, 1, k, f});
    for (std::size_t x = 0; x < h; ++x) {
      for (std::size_t y = 0; y < w; ++y) {
        for (std::size_t ci = 0; ci < c; ++ci) {
          for (std::size_t fi = 0; fi < f; ++fi) {
            const double gv = g(x, y, ci, fi);
            if (gv == 0.0) continue;
            for (std::size_t j1 = 0; j1 < k; ++j1) {
              for (std::size_t j2 = 0; j2 < k; ++j2) {
                da(0, 0, ci, j1) += gv * core(x, y, j1, j2) * b(0, 0, j2, fi);
                dcore(x, y, j1, j2) += gv * a(0, 0, ci, j1) * b(0, 0, j2, fi);
                db(0, 0, j2, fi) += gv * a(0, 0, ci, j1) * core(x, y, j1, j2);
              }
            }
          }
        }
      }
    }
    out.by_param = {std::move(da), std::move(dcore), std::move(db)};
  } else {  // CP
    const Tensor& a = params[0].value;
    const Tensor& c1 = params[1].value;
    const Tensor& c2 = params[2].value;
    const Tensor& b = params[3].value;
    const std::size_t h = conv.kh, w = conv.kw, c = conv.in_c,
                      f = conv.out_c, k = rank;
    // t[x,y,j1,j3] = sum_j2 c1[x,j1,j2] c2[y,j2,j3]
    Tensor t({h, w, k, k});
    for (std::size_t x = 0; x < h; ++x) {
      for (std::size_t y = 0; y < w; ++y) {
        for (std::size_t j1 = 0; j1 < k; ++j1) {
          for (std::size_t j2 = 0; j2 < k; ++j2) {
            const double v1 = c1(x, 0, j1, j2);
            if (v1 == 0.0) continue;
            for (std::size_t j3 = 0; j3 < k; ++j3) {
              t(x, y, j1, j3) += v1 * c2(0, y, j2, j3);
            }
          }
        }
      }
    }
    // m[x,y,j1,j3] = sum_{c,f} g[x,y,c,f] a[c,j1] b[j3,f]
    Tensor mm({h, w, k, k});
    for (std::size_t x = 0; x < h; ++x) {
      for (std::size_t y = 0; y < w; ++y) {
        for (std::size_t ci = 0; ci < c; ++ci) {
          for (std::size_t fi = 0; fi < f; ++fi) {
            const double gv = g(x, y, ci, fi);
            if (gv == 0.0) continue;
            for (std::size_t j1 = 0; j1 < k; ++j1) {
              const double ga = gv * a(0, 0, ci, j1);
              for (std::size_t j3 = 0; j3 < k; ++j3) {
                mm(x, y, j1, j3) += ga * b(0, 0, j3, fi);
              }
            }
          }
        }
      }
    }
    Tensor da({1, 1, c, k}), dc1({h, 1, k, k}), dc2({1, w, k, k}),
        db({1, 1, k, f});
    for (std::size_t x = 0; x < h; ++x) {
      for (std::size_t y = 0; y < w; ++y) {
        for (std::size_t j1 = 0; j1 < k; ++j1) {
          for (std::size_t j2 = 0; j2 < k; ++j2) {
            for (std::size_t j3 = 0; j3 < k; ++j3) {
              dc1(x, 0, j1, j2) += mm(x, y, j1, j3) * c2(0, y, j2, j3);
              dc2(0, y, j2, j3) += mm(x, y, j1, j3) * c1(x, 0, j1, j2);
            }
          }
        }
        for (std::size_t ci = 0; ci < c; ++ci) {
          for (std::size_t fi = 0; fi < f; ++fi) {
            const double gv = g(x, y, ci, fi);
            if (gv == 0.0) continue;
            for (std::size_t j1 = 0; j1 < k; ++j1) {
              for (std::size_t j3 = 0; j3 < k; ++j3) {
                const double tv = t(x, y, j1, j3);
                da(0, 0, ci, j1) += gv * tv * b(0, 0, j3, fi);
                db(0, 0, j3, fi) += gv * a(0, 0, ci, j1) * tv;
              }
            }
          }
        }
      }
    }
    out.by_param = {std::move(da), std::move(dc1), std::move(dc2),
                    std::move(db)};
  }
  out.by_param.push_back(Tensor({bias_dim}));
  return out;
}

void Layer::set_full(Tensor w) {
  const std::vector<std::size_t> want =
      kind == LayerKind::kDense
          ? std::vector<std::size_t>{in_dim, out_dim}
          : std::vector<std::size_t>{conv.kh, conv.kw, conv.in_c, conv.out_c};
  if (w.shape() != want) {
    throw std::invalid_argument("set_full: weight shape mismatch");
  }
  Tensor bias = params.back().value;
  params.clear();
  params.push_back(make_param("W", std::move(w)));
  params.push_back(make_param("bias", std::move(bias)));
  base = Tensor();
  mode = WeightMode::kFull;
  rank = 0;
}

void Layer::set_low_rank_svd(Tensor base_w, Tensor a, Tensor b,
                             std::size_t k) {
  if (kind == LayerKind::kDense) {
    if (a.shape() != std::vector<std::size_t>{in_dim, k} ||
        b.shape() != std::vector<std::size_t>{out_dim, k}) {
      throw std::invalid_argument("set_low_rank_svd: factor shape mismatch");
    }
  } else {
    if (a.shape() != std::vector<std::size_t>{conv.kh, conv.kw, conv.in_c,
                                              k} ||
        b.shape() != std::vector<std::size_t>{1, 1, k, conv.out_c}) {
      throw std::invalid_argument("set_low_rank_svd: factor shape mismatch");
    }
  }
  Tensor bias = params.back().value;
  params.clear();
  params.push_back(make_param("A", std::move(a)));
  params.push_back(make_param("B", std::move(b)));
  params.push_back(make_param("bias", std::move(bias)));
  base = std::move(base_w);
  mode = WeightMode::kLowRank;
  decomp = Decomp::kSvd;
  rank = k;
}

void Layer::set_low_rank_tucker(Tensor base_w, TuckerFactors f,
                                std::size_t k) {
  if (kind != LayerKind::kConv2d) {
    throw std::invalid_argument("set_low_rank_tucker: conv layers only");
  }
  if (f.a.shape() != std::vector<std::size_t>{1, 1, conv.in_c, k} ||
      f.core.shape() != std::vector<std::size_t>{conv.kh, conv.kw, k, k} ||
      f.b.shape() != std::vector<std::size_t>{1, 1, k, conv.out_c}) {
    throw std::invalid_argument("set_low_rank_tucker: factor shape mismatch");
  }
  Tensor bias = params.back().value;
  params.clear();
  params.push_back(make_param("A", std::move(f.a)));
  params.push_back(make_param("Core", std::move(f.core)));
  params.push_back(make_param("B", std::move(f.b)));
  params.push_back(make_param("bias", std::move(bias)));
  base = std::move(base_w);
  mode = WeightMode::kLowRank;
  decomp = Decomp::kTucker;
  rank = k;
}

void Layer::set_low_rank_cp(Tensor base_w, CpFactors f, std::size_t k) {
  if (kind != LayerKind::kConv2d) {
    throw std::invalid_argument("set_low_rank_cp: conv layers only");
  }
  if (f.a.shape() != std::vector<std::size_t>{1, 1, conv.in_c, k} ||
      f.c1.shape() != std::vector<std::size_t>{conv.kh, 1, k, k} ||
      f.c2.shape() != std::vector<std::size_t>{1, conv.kw, k, k} ||
      f.b.shape() != std::vector<std::size_t>{1, 1, k, conv.out_c}) {
    throw std::invalid_argument("set_low_rank_cp: factor shape mismatch");
  }
  Tensor bias = params.back().value;
  params.clear();
  params.push_back(make_param("A", std::move(f.a)));
  params.push_back(make_param("C1", std::move(f.c1)));
  params.push_back(make_param("C2", std::move(f.c2)));
  params.push_back(make_param("B", std::move(f.b)));
  params.push_back(make_param("bias", std::move(bias)));
  base = std::move(base_w);
  mode = WeightMode::kLowRank;
  decomp = Decomp::kCp;
  rank = k;
}

Param* Layer::find_param(const std::string& name) {
  for (auto& p : params) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Param* Layer::find_param(const std::string& name) const {
  for (const auto& p : params) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::size_t Layer::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

std::size_t Layer::trainable_weight_count() const {
  std::size_t n = 0;
  for (const auto& p : params) {
    if (p.name != "bias") n += p.value.size();
  }
  return n;
}

std::pair<double, LayerGrads> so_penalty(const Layer& layer,
                                         double coefficient) {
  if (coefficient < 0.0) {
    throw std::invalid_argument("so_penalty: coefficient must be >= 0");
  }
  if (coefficient == 0.0) {
    LayerGrads g;
    for (const auto& p : layer.params) g.by_param.push_back(Tensor(p.value.shape()));
    return {0.0, std::move(g)};
  }
  Tensor w = layer.effective_weight_unfolded();
  Tensor gram = matmul_tn(w, w);
  for (std::size_t i = 0; i < gram.rows(); ++i) gram(i, i) -= 1.0;
  const double n = gram.frob_norm();
  const double loss = coefficient * n * n;

  Tensor gw = matmul(w, gram);
  gw *= 4.0 * coefficient;
  Tensor g_shaped = layer.kind == LayerKind::kDense
                        ? gw
                        : gw.reshaped({layer.conv.kh, layer.conv.kw,
                                       layer.conv.in_c, layer.conv.out_c});
  return {loss, layer.pullback_effective_gradient(g_shaped)};
}

std::size_t Network::in_features() const { return layers.front().in_features(); }
std::size_t Network::out_features() const { return layers.back().out_features(); }

Tensor Network::forward(const Tensor& x) const {
  Tensor cur = x;
  for (const auto& l : layers) cur = l.forward(cur, nullptr);
  return cur;
}

ForwardResult Network::forward_cached(const Tensor& x) const {
  ForwardResult fr;
  fr.caches.resize(layers.size());
  Tensor cur = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    cur = layers[i].forward(cur, &fr.caches[i]);
  }
  fr.logits = std::move(cur);
  return fr;
}

Gradients Network::backward(const ForwardResult& fr,
                            const Tensor& dlogits) const {
  if (fr.caches.size() != layers.size()) {
    throw std::logic_error("backward: cache does not match this network");
  }
  Gradients g;
  g.layers.resize(layers.size());
  Tensor d = dlogits;
  for (std::size_t i = layers.size(); i-- > 0;) {
    d = layers[i].backward(fr.caches[i], d, &g.layers[i]);
  }
  return g;
}

std::size_t Network::trainable_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.trainable_count();
  return n;
}

std::size_t Network::trainable_weight_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.trainable_weight_count();
  return n;
}

double softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels,
                             Tensor* dlogits) {
  const std::size_t b = logits.rows(), c = logits.cols();
  if (labels.size() != b) {
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  }
  Tensor probs = logits;
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs(i, j) = std::exp(logits(i, j) - mx);
      z += probs(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) probs(i, j) /= z;
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw std::invalid_argument("softmax_cross_entropy: label out of range");
    }
    loss -= std::log(std::max(probs(i, static_cast<std::size_t>(y)), 1e-300));
  }
  loss /= static_cast<double>(b);
  if (dlogits) {
    for (std::size_t i = 0; i < b; ++i) {
      probs(i, static_cast<std::size_t>(labels[i])) -= 1.0;
    }
    probs *= 1.0 / static_cast<double>(b);
    *dlogits = std::move(probs);
  }
  return loss;
}

double mean_squared_error(const Tensor& logits, const Tensor& targets,
                          Tensor* dlogits) {
  if (logits.shape() != targets.shape()) {
    throw std::invalid_argument("mean_squared_error: shape mismatch");
  }
  const double inv = 1.0 / static_cast<double>(logits.size());
  double loss = 0.0;
  Tensor d = logits;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double e = logits(i) - targets(i);
    loss += e * e;
    d(i) = 2.0 * e * inv;
  }
  loss *= inv;
  if (dlogits) *dlogits = std::move(d);
  return loss;
}

}  // namespace rankshift
