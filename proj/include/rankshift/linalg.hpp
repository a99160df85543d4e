#pragma once

#include <utility>
#include <vector>

#include "rankshift/tensor.hpp"

namespace rankshift {

/// Thin SVD W = U diag(S) V^T with p = min(m, n) columns.
/// U: m x p and V: n x p have orthonormal columns; S is descending and
/// non-negative.
struct SvdResult {
  Tensor u;
  std::vector<double> s;
  Tensor v;
};

/// One-sided Jacobi SVD (applied to the transpose when m < n). Deterministic
/// for a fixed input. Throws std::invalid_argument for non-2-D input and
/// std::domain_error for non-finite entries.
SvdResult svd(const Tensor& w);

/// Singular values only.
std::vector<double> singular_values(const Tensor& w);

/// Best rank-k factors A: m x k, B: n x k with A B^T the Eckart-Young
/// optimum; singular values split symmetrically (A = U_k sqrt(S_k),
/// B = V_k sqrt(S_k)).
std::pair<Tensor, Tensor> truncated_svd(const Tensor& w, std::size_t k);

/// Count of singular values strictly above rel_tol * sigma_max; 0 for the
/// zero matrix. rel_tol must lie in (0, 1).
int numerical_rank(const Tensor& w, double rel_tol);

/// Default threshold 1e-8 * max(m, n).
int numerical_rank(const Tensor& w);

/// Largest singular value (0 for the zero matrix).
double spectral_norm(const Tensor& w);

/// Solve the square system a * x = b by Gaussian elimination with partial
/// pivoting; b may have multiple columns. Throws std::domain_error when the
/// pivot collapses.
Tensor solve_linear(const Tensor& a, const Tensor& b);

}  // namespace rankshift
