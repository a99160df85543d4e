#include "rankshift/tucker.hpp"

#include <stdexcept>

#include "rankshift/linalg.hpp"

namespace rankshift {

namespace {

// Mode-C unfolding: C x (h*w*F).
Tensor unfold_mode_c(const Tensor& w) {
  const auto& s = w.shape();
  Tensor m({s[2], s[0] * s[1] * s[3]});
  for (std::size_t x = 0; x < s[0]; ++x) {
    for (std::size_t y = 0; y < s[1]; ++y) {
      for (std::size_t c = 0; c < s[2]; ++c) {
        for (std::size_t f = 0; f < s[3]; ++f) {
          m(c, (x * s[1] + y) * s[3] + f) = w(x, y, c, f);
        }
      }
    }
  }
  return m;
}

// Mode-F unfolding: F x (h*w*C).
Tensor unfold_mode_f(const Tensor& w) {
  const auto& s = w.shape();
  Tensor m({s[3], s[0] * s[1] * s[2]});
  for (std::size_t x = 0; x < s[0]; ++x) {
    for (std::size_t y = 0; y < s[1]; ++y) {
      for (std::size_t c = 0; c < s[2]; ++c) {
        for (std::size_t f = 0; f < s[3]; ++f) {
          m(f, (x * s[1] + y) * s[2] + c) = w(x, y, c, f);
        }
      }
    }
  }
  return m;
}

}  // namespace

TuckerFactors hosvd_conv(const Tensor& w, std::size_t k) {
  if (w.ndim() != 4) {
    throw std::invalid_argument("hosvd_conv: kernel must be 4-D, got " +
                                w.shape_str());
  }
  const auto& s = w.shape();
  const std::size_t h = s[0], ww = s[1], c = s[2], f = s[3];
  if (k < 1 || k > std::min(c, f)) {
    throw std::invalid_argument("hosvd_conv: k out of range [1, min(C, F)]");
  }

  const SvdResult sc = svd(unfold_mode_c(w));  // leading cols: C x k
  const SvdResult sf = svd(unfold_mode_f(w));  // leading cols: F x k

  Tensor a({1, 1, c, k});
  Tensor b({1, 1, k, f});
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < k; ++j) a(0, 0, i, j) = sc.u(i, j);
  }
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < f; ++i) b(0, 0, j, i) = sf.u(i, j);
  }

  // Core = W x_C U_c^T x_F U_f^T
  Tensor core({h, ww, k, k});
  for (std::size_t x = 0; x < h; ++x) {
    for (std::size_t y = 0; y < ww; ++y) {
      for (std::size_t j1 = 0; j1 < k; ++j1) {
        for (std::size_t j2 = 0; j2 < k; ++j2) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < c; ++ci) {
            const double ac = sc.u(ci, j1);
            if (ac == 0.0) continue;
            for (std::size_t fi = 0; fi < f; ++fi) {
              acc += w(x, y, ci, fi) * ac * sf.u(fi, j2);
            }
          }
          core(x, y, j1, j2) = acc;
        }
      }
    }
  }
  return TuckerFactors{std::move(a), std::move(core), std::move(b)};
}

Tensor tucker_reconstruct(const TuckerFactors& fac) {
  const auto& sa = fac.a.shape();
  const auto& sc = fac.core.shape();
  const auto& sb = fac.b.shape();
  if (fac.a.ndim() != 4 || fac.core.ndim() != 4 || fac.b.ndim() != 4 ||
      sa[3] != sc[2] || sc[3] != sb[2]) {
    throw std::invalid_argument("tucker_reconstruct: inconsistent factors");
  }
  const std::size_t h = sc[0], w = sc[1], c = sa[2], f = sb[3];
  const std::size_t k1 = sc[2], k2 = sc[3];
  Tensor out({h, w, c, f});
  for (std::size_t x = 0; x < h; ++x) {
    for (std::size_t y = 0; y < w; ++y) {
      for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t j1 = 0; j1 < k1; ++j1) {
          const double av = fac.a(0, 0, ci, j1);
          if (av == 0.0) continue;
          for (std::size_t j2 = 0; j2 < k2; ++j2) {
            const double cv = av * fac.core(x, y, j1, j2);
            if (cv == 0.0) continue;
            for (std::size_t fi = 0; fi < f; ++fi) {
              out(x, y, ci, fi) += cv * fac.b(0, 0, j2, fi);
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace rankshift
