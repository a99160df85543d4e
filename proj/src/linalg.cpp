#include "rankshift/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rankshift {

namespace {

// Column-major workspace for the Jacobi sweeps.
struct ColMat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  ColMat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  double* col(std::size_t j) { return a.data() + j * rows; }
  const double* col(std::size_t j) const { return a.data() + j * rows; }
};

double col_dot(const ColMat& m, std::size_t p, std::size_t q) {
  const double* cp = m.col(p);
  const double* cq = m.col(q);
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i) s += cp[i] * cq[i];
  return s;
}

void rotate_cols(ColMat& m, std::size_t p, std::size_t q, double cs,
                 double sn) {
  double* cp = m.col(p);
  double* cq = m.col(q);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double vp = cp[i];
    const double vq = cq[i];
    cp[i] = cs * vp - sn * vq;
    cq[i] = sn * vp + cs * vq;
  }
}

// SVD of an m x n matrix with m >= n: orthogonalize the columns of W by
// plane rotations, accumulating them into V.
SvdResult svd_tall(const Tensor& w) {
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();

  ColMat u(m, n);
  ColMat v(n, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) u.col(j)[i] = w(i, j);
  }
  for (std::size_t j = 0; j < n; ++j) v.col(j)[j] = 1.0;

  constexpr double kOffTol = 1e-15;
  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double app = col_dot(u, p, p);
        const double aqq = col_dot(u, q, q);
        const double apq = col_dot(u, p, q);
        if (std::abs(apq) <= kOffTol * std::sqrt(app * aqq)) continue;
        rotated = true;
        // Rutishauser rotation zeroing the (p, q) Gram entry.
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t =
            (zeta >= 0.0 ? 1.0 : -1.0) /
            (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        rotate_cols(u, p, q, cs, sn);
        rotate_cols(v, p, q, cs, sn);
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    sigma[j] = std::sqrt(col_dot(u, j, j));
  }

  // Sort descending, ties broken by original index for determinism.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sigma[a] > sigma[b];
  });

  Tensor uu({m, n});
  Tensor vv({n, n});
  std::vector<double> s(n);
  const double smax = n ? sigma[order[0]] : 0.0;
  const double negligible = smax * 1e-14;

  std::vector<bool> needs_basis(n, false);
  for (std::size_t jj = 0; jj < n; ++jj) {
    const std::size_t src = order[jj];
    s[jj] = sigma[src];
    for (std::size_t i = 0; i < n; ++i) vv(i, jj) = v.col(src)[i];
    if (sigma[src] > negligible && sigma[src] > 0.0) {
      const double inv = 1.0 / sigma[src];
      for (std::size_t i = 0; i < m; ++i) uu(i, jj) = u.col(src)[i] * inv;
    } else {
      needs_basis[jj] = true;
    }
  }

  // Numerically zero columns carry no usable direction: complete U with an
  // orthonormal basis. Take the canonical vector with the largest residual
  // against the placed columns and orthogonalize it twice.
  for (std::size_t jj = 0; jj < n; ++jj) {
    if (!needs_basis[jj]) continue;
    std::vector<double> cand(m, 0.0);
    std::vector<double> best_cand;
    double best_norm = -1.0;
    for (std::size_t e = 0; e < m; ++e) {
      std::fill(cand.begin(), cand.end(), 0.0);
      cand[e] = 1.0;
      for (std::size_t c = 0; c < n; ++c) {
        if (needs_basis[c]) continue;  // not yet placed
        double dot = 0.0;
        for (std::size_t i = 0; i < m; ++i) dot += cand[i] * uu(i, c);
        for (std::size_t i = 0; i < m; ++i) cand[i] -= dot * uu(i, c);
      }
      double norm = 0.0;
      for (double x : cand) norm += x * x;
      norm = std::sqrt(norm);
      if (norm > best_norm) {
        best_norm = norm;
        best_cand = cand;
      }
    }
    if (best_norm <= 1e-6) {
      throw std::domain_error("svd: basis completion failed");
    }
    // second orthogonalization pass for precision
    for (std::size_t c = 0; c < n; ++c) {
      if (needs_basis[c]) continue;
      double dot = 0.0;
      for (std::size_t i = 0; i < m; ++i) dot += best_cand[i] * uu(i, c);
      for (std::size_t i = 0; i < m; ++i) best_cand[i] -= dot * uu(i, c);
    }
    double norm = 0.0;
    for (double x : best_cand) norm += x * x;
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < m; ++i) uu(i, jj) = best_cand[i] / norm;
    needs_basis[jj] = false;
  }

  // Fix signs: largest-magnitude entry of each U column made positive.
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t arg = 0;
    double best = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (std::abs(uu(i, j)) > best) {
        best = std::abs(uu(i, j));
        arg = i;
      }
    }
    if (uu(arg, j) < 0.0) {
      for (std::size_t i = 0; i < m; ++i) uu(i, j) = -uu(i, j);
      for (std::size_t i = 0; i < n; ++i) vv(i, j) = -vv(i, j);
    }
  }

  return SvdResult{std::move(uu), std::move(s), std::move(vv)};
}

}  // namespace

SvdResult svd(const Tensor& w) {
  if (w.ndim() != 2) {
    throw std::invalid_argument("svd: input must be 2-D, got " +
                                w.shape_str());
  }
  if (!w.all_finite()) {
    throw std::domain_error("svd: input has non-finite entries");
  }
  if (w.rows() >= w.cols()) return svd_tall(w);
  SvdResult r = svd_tall(transpose(w));
  return SvdResult{std::move(r.v), std::move(r.s), std::move(r.u)};
}

std::vector<double> singular_values(const Tensor& w) { return svd(w).s; }

std::pair<Tensor, Tensor> truncated_svd(const Tensor& w, std::size_t k) {
  if (w.ndim() != 2) {
    throw std::invalid_argument("truncated_svd: input must be 2-D");
  }
  const std::size_t p = std::min(w.rows(), w.cols());
  if (k < 1 || k > p) {
    throw std::invalid_argument("truncated_svd: k out of range [1, " +
                                std::to_string(p) + "]");
  }
  SvdResult r = svd(w);
  Tensor a({w.rows(), k});
  Tensor b({w.cols(), k});
  for (std::size_t j = 0; j < k; ++j) {
    const double root = std::sqrt(r.s[j]);
    for (std::size_t i = 0; i < w.rows(); ++i) a(i, j) = r.u(i, j) * root;
    for (std::size_t i = 0; i < w.cols(); ++i) b(i, j) = r.v(i, j) * root;
  }
  return {std::move(a), std::move(b)};
}

int numerical_rank(const Tensor& w, double rel_tol) {
  if (rel_tol <= 0.0 || rel_tol >= 1.0) {
    throw std::invalid_argument("numerical_rank: rel_tol must be in (0, 1)");
  }
  const std::vector<double> s = singular_values(w);
  if (s.empty() || s[0] == 0.0) return 0;
  const double cut = rel_tol * s[0];
  int r = 0;
  for (double x : s) {
    if (x > cut) ++r;
  }
  return r;
}

int numerical_rank(const Tensor& w) {
  const double tol = 1e-8 * static_cast<double>(std::max(w.rows(), w.cols()));
  return numerical_rank(w, tol);
}

double spectral_norm(const Tensor& w) {
  const std::vector<double> s = singular_values(w);
  return s.empty() ? 0.0 : s[0];
}

Tensor solve_linear(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || a.rows() != a.cols() || b.ndim() != 2 ||
      b.rows() != a.rows()) {
    throw std::invalid_argument("solve_linear: incompatible shapes");
  }
  const std::size_t n = a.rows();
  const std::size_t nrhs = b.cols();
  Tensor lu = a;
  Tensor x = b;
  std::vector<std::size_t> piv(n);
  std::iota(piv.begin(), piv.end(), 0);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t best = col;
    for (std::size_t i = col + 1; i < n; ++i) {
      if (std::abs(lu(i, col)) > std::abs(lu(best, col))) best = i;
    }
    if (std::abs(lu(best, col)) == 0.0) {
      throw std::domain_error("solve_linear: singular system");
    }
    if (best != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(col, j), lu(best, j));
      for (std::size_t j = 0; j < nrhs; ++j) std::swap(x(col, j), x(best, j));
    }
    const double inv = 1.0 / lu(col, col);
    for (std::size_t i = col + 1; i < n; ++i) {
      const double f = lu(i, col) * inv;
      if (f == 0.0) continue;
      lu(i, col) = 0.0;
      for (std::size_t j = col + 1; j < n; ++j) lu(i, j) -= f * lu(col, j);
      for (std::size_t j = 0; j < nrhs; ++j) x(i, j) -= f * x(col, j);
    }
  }
  for (std::size_t ii = n; ii-- > 0;) {
    for (std::size_t j = 0; j < nrhs; ++j) {
      double s = x(ii, j);
      for (std::size_t c = ii + 1; c < n; ++c) s -= lu(ii, c) * x(c, j);
      x(ii, j) = s / lu(ii, ii);
    }
  }
  return x;
}

}  // namespace rankshift
