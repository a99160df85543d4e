#include "rankshift/cp.hpp"

#include <cmath>
#include <stdexcept>

#include "rankshift/linalg.hpp"
#include "rankshift/rng.hpp"

namespace rankshift {

namespace {

constexpr double kRidge = 1e-10;

// Rank-k model over the four mode factors: kh (h x k), kw (w x k),
// kc (C x k), kf (F x k).
struct CpModel {
  Tensor kh, kw, kc, kf;
};

Tensor model_reconstruct(const CpModel& m, const std::vector<std::size_t>& s) {
  const std::size_t k = m.kh.cols();
  Tensor out({s[0], s[1], s[2], s[3]});
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t x = 0; x < s[0]; ++x) {
      const double vx = m.kh(x, j);
      if (vx == 0.0) continue;
      for (std::size_t y = 0; y < s[1]; ++y) {
        const double vxy = vx * m.kw(y, j);
        if (vxy == 0.0) continue;
        for (std::size_t c = 0; c < s[2]; ++c) {
          const double vxyc = vxy * m.kc(c, j);
          if (vxyc == 0.0) continue;
          for (std::size_t f = 0; f < s[3]; ++f) {
            out(x, y, c, f) += vxyc * m.kf(f, j);
          }
        }
      }
    }
  }
  return out;
}

double recon_error(const Tensor& w, const CpModel& m) {
  Tensor r = model_reconstruct(m, w.shape());
  r -= w;
  return r.frob_norm();
}

// Matricized tensor times Khatri-Rao product for the given mode.
Tensor mttkrp(const Tensor& w, const CpModel& m, int mode) {
  const auto& s = w.shape();
  const std::size_t k = m.kh.cols();
  const std::size_t dim = s[static_cast<std::size_t>(mode)];
  Tensor out({dim, k});
  for (std::size_t x = 0; x < s[0]; ++x) {
    for (std::size_t y = 0; y < s[1]; ++y) {
      for (std::size_t c = 0; c < s[2]; ++c) {
        for (std::size_t f = 0; f < s[3]; ++f) {
          const double v = w(x, y, c, f);
          if (v == 0.0) continue;
          for (std::size_t j = 0; j < k; ++j) {
            double prod = v;
            if (mode != 0) prod *= m.kh(x, j);
            if (mode != 1) prod *= m.kw(y, j);
            if (mode != 2) prod *= m.kc(c, j);
            if (mode != 3) prod *= m.kf(f, j);
            const std::size_t row = mode == 0 ? x : mode == 1 ? y
                                    : mode == 2 ? c : f;
            out(row, j) += prod;
          }
        }
      }
    }
  }
  return out;
}

Tensor gram(const Tensor& a) { return matmul_tn(a, a); }

// Hadamard product of the Gram matrices of every factor except `mode`,
// plus the ridge.
Tensor normal_matrix(const CpModel& m, int mode) {
  const std::size_t k = m.kh.cols();
  Tensor v({k, k});
  v.fill(1.0);
  const Tensor* factors[4] = {&m.kh, &m.kw, &m.kc, &m.kf};
  for (int i = 0; i < 4; ++i) {
    if (i == mode) continue;
    Tensor g = gram(*factors[i]);
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) v(a, b) *= g(a, b);
    }
  }
  for (std::size_t a = 0; a < k; ++a) v(a, a) += kRidge;
  return v;
}

// Leading left singular vectors of the mode unfolding; columns beyond the
// mode dimension are filled from a fixed-seed stream so the whole
// initialization stays deterministic.
Tensor init_factor(const Tensor& w, int mode, std::size_t k) {
  const auto& s = w.shape();
  const std::size_t dim = s[static_cast<std::size_t>(mode)];
  Tensor unf({dim, w.size() / dim});
  std::size_t idx[4];
  for (idx[0] = 0; idx[0] < s[0]; ++idx[0]) {
    for (idx[1] = 0; idx[1] < s[1]; ++idx[1]) {
      for (idx[2] = 0; idx[2] < s[2]; ++idx[2]) {
        for (idx[3] = 0; idx[3] < s[3]; ++idx[3]) {
          std::size_t col = 0;
          for (int ax = 0; ax < 4; ++ax) {
            if (ax == mode) continue;
            col = col * s[static_cast<std::size_t>(ax)] +
                  idx[static_cast<std::size_t>(ax)];
          }
          unf(idx[static_cast<std::size_t>(mode)], col) =
              w(idx[0], idx[1], idx[2], idx[3]);
        }
      }
    }
  }
  const SvdResult r = svd(unf);
  Tensor fac({dim, k});
  const std::size_t lead = std::min(dim, k);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < lead; ++j) fac(i, j) = r.u(i, j);
  }
  if (k > lead) {
    Rng rng(0xC0FFEEULL + 31 * static_cast<std::uint64_t>(mode) + k);
    for (std::size_t j = lead; j < k; ++j) {
      for (std::size_t i = 0; i < dim; ++i) fac(i, j) = rng.normal();
    }
  }
  return fac;
}

// Rescale so every factor carries the same share of each column's weight.
void balance_columns(CpModel& m) {
  const std::size_t k = m.kh.cols();
  Tensor* factors[4] = {&m.kh, &m.kw, &m.kc, &m.kf};
  for (std::size_t j = 0; j < k; ++j) {
    double norms[4];
    double prod = 1.0;
    for (int i = 0; i < 4; ++i) {
      double n2 = 0.0;
      for (std::size_t r = 0; r < factors[i]->rows(); ++r) {
        n2 += (*factors[i])(r, j) * (*factors[i])(r, j);
      }
      norms[i] = std::sqrt(n2);
      prod *= norms[i];
    }
    if (prod == 0.0) {
      for (int i = 0; i < 4; ++i) {
        for (std::size_t r = 0; r < factors[i]->rows(); ++r) {
          (*factors[i])(r, j) = 0.0;
        }
      }
      continue;
    }
    const double target = std::pow(prod, 0.25);
    for (int i = 0; i < 4; ++i) {
      const double scale = target / norms[i];
      for (std::size_t r = 0; r < factors[i]->rows(); ++r) {
        (*factors[i])(r, j) *= scale;
      }
    }
  }
}

}  // namespace

CpFactors cp_als(const Tensor& w, std::size_t k, int max_iters, double tol,
                 std::vector<double>* fit_history) {
  if (w.ndim() != 4) {
    throw std::invalid_argument("cp_als: kernel must be 4-D, got " +
                                w.shape_str());
  }
  if (k < 1) throw std::invalid_argument("cp_als: k must be >= 1");
  if (max_iters < 1) throw std::invalid_argument("cp_als: max_iters >= 1");

  const auto& s = w.shape();
  CpModel m{init_factor(w, 0, k), init_factor(w, 1, k), init_factor(w, 2, k),
            init_factor(w, 3, k)};

  const double wnorm = w.frob_norm();
  double prev_err = recon_error(w, m);
  if (fit_history) fit_history->push_back(prev_err);

  Tensor* factors[4] = {&m.kh, &m.kw, &m.kc, &m.kf};
  for (int it = 0; it < max_iters; ++it) {
    for (int mode = 0; mode < 4; ++mode) {
      const Tensor rhs = mttkrp(w, m, mode);          // dim x k
      const Tensor v = normal_matrix(m, mode);        // k x k, symmetric
      // factor = rhs * v^-1  <=>  v * factor^T = rhs^T
      *factors[mode] = transpose(solve_linear(v, transpose(rhs)));
    }
    const double err = recon_error(w, m);
    if (fit_history) fit_history->push_back(err);
    if (std::abs(prev_err - err) < tol * std::max(wnorm, 1e-300)) {
      prev_err = err;
      break;
    }
    prev_err = err;
  }

  balance_columns(m);

  CpFactors out;
  out.a = Tensor({1, 1, s[2], k});
  out.c1 = Tensor({s[0], 1, k, k});
  out.c2 = Tensor({1, s[1], k, k});
  out.b = Tensor({1, 1, k, s[3]});
  for (std::size_t c = 0; c < s[2]; ++c) {
    for (std::size_t j = 0; j < k; ++j) out.a(0, 0, c, j) = m.kc(c, j);
  }
  for (std::size_t x = 0; x < s[0]; ++x) {
    for (std::size_t j = 0; j < k; ++j) out.c1(x, 0, j, j) = m.kh(x, j);
  }
  for (std::size_t y = 0; y < s[1]; ++y) {
    for (std::size_t j = 0; j < k; ++j) out.c2(0, y, j, j) = m.kw(y, j);
  }
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t f = 0; f < s[3]; ++f) out.b(0, 0, j, f) = m.kf(f, j);
  }
  return out;
}

Tensor cp_reconstruct(const CpFactors& fac) {
  const auto& sa = fac.a.shape();
  const auto& s1 = fac.c1.shape();
  const auto& s2 = fac.c2.shape();
  const auto& sb = fac.b.shape();
  if (fac.a.ndim() != 4 || fac.c1.ndim() != 4 || fac.c2.ndim() != 4 ||
      fac.b.ndim() != 4 || sa[3] != s1[2] || s1[3] != s2[2] ||
      s2[3] != sb[2]) {
    throw std::invalid_argument("cp_reconstruct: inconsistent factors");
  }
  const std::size_t h = s1[0], w = s2[1], c = sa[2], f = sb[3];
  const std::size_t k1 = s1[2], k2 = s1[3], k3 = s2[3];

  // spatial mixing first: t[x, y, j1, j3] = sum_j2 c1[x,0,j1,j2] c2[0,y,j2,j3]
  Tensor t({h, w, k1, k3});
  for (std::size_t x = 0; x < h; ++x) {
    for (std::size_t y = 0; y < w; ++y) {
      for (std::size_t j1 = 0; j1 < k1; ++j1) {
        for (std::size_t j2 = 0; j2 < k2; ++j2) {
          const double v1 = fac.c1(x, 0, j1, j2);
          if (v1 == 0.0) continue;
          for (std::size_t j3 = 0; j3 < k3; ++j3) {
            t(x, y, j1, j3) += v1 * fac.c2(0, y, j2, j3);
          }
        }
      }
    }
  }

  Tensor out({h, w, c, f});
  for (std::size_t x = 0; x < h; ++x) {
    for (std::size_t y = 0; y < w; ++y) {
      for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t j1 = 0; j1 < k1; ++j1) {
          const double av = fac.a(0, 0, ci, j1);
          if (av == 0.0) continue;
          for (std::size_t j3 = 0; j3 < k3; ++j3) {
            const double tv = av * t(x, y, j1, j3);
            if (tv == 0.0) continue;
            for (std::size_t fi = 0; fi < f; ++fi) {
              out(x, y, ci, fi) += tv * fac.b(0, 0, j3, fi);
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace rankshift
