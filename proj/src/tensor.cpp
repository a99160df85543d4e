#include "rankshift/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace rankshift {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

void check_shape(const std::vector<std::size_t>& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw std::invalid_argument("tensor rank must be 1..4, got rank " +
                                std::to_string(shape.size()));
  }
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor extents must be positive");
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_product(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_product(shape_) != data_.size()) {
    throw std::invalid_argument("tensor data length does not match shape");
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols) {
  return Tensor({rows, cols});
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (ndim() != 2) throw std::invalid_argument("rows(): tensor is not 2-D");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2) throw std::invalid_argument("cols(): tensor is not 2-D");
  return shape_[1];
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
  check_shape(new_shape);
  if (shape_product(new_shape) != data_.size()) {
    throw std::invalid_argument("reshape changes element count");
  }
  return Tensor(std::move(new_shape), data_);
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::frob_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

void Tensor::fill(double v) { data_.assign(data_.size(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (shape_ != other.shape_) {
    throw std::invalid_argument("+=: shape mismatch");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  if (shape_ != other.shape_) {
    throw std::invalid_argument("-=: shape mismatch");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor& Tensor::add_scaled(const Tensor& other, double s) {
  if (shape_ != other.shape_) {
    throw std::invalid_argument("add_scaled: shape mismatch");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    data_[i] += s * other.data_[i];
  }
  return *this;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << "x";
    os << shape_[i];
  }
  os << ")";
  return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: incompatible shapes " +
                                a.shape_str() + " * " + b.shape_str());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * k;
    double* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.rows() != b.rows()) {
    throw std::invalid_argument("matmul_tn: incompatible shapes " +
                                a.shape_str() + "^T * " + b.shape_str());
  }
  const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
  Tensor c({m, n});
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a.data() + p * m;
    const double* brow = b.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_nt: incompatible shapes " +
                                a.shape_str() + " * " + b.shape_str() + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * k;
    double* crow = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      crow[j] += s;
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  if (a.ndim() != 2) throw std::invalid_argument("transpose: tensor not 2-D");
  Tensor t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

Tensor unfold_hwc_f(const Tensor& kernel) {
  if (kernel.ndim() == 2) return kernel;
  if (kernel.ndim() != 4) {
    throw std::invalid_argument("unfold_hwc_f: expected 2-D or 4-D tensor");
  }
  const auto& s = kernel.shape();
  // row-major (h, w, C, F) flattens directly to (h*w*C) x F
  return kernel.reshaped({s[0] * s[1] * s[2], s[3]});
}

Tensor fold_hwc_f(const Tensor& m, std::size_t h, std::size_t w,
                  std::size_t c, std::size_t f) {
  if (m.ndim() != 2 || m.rows() != h * w * c || m.cols() != f) {
    throw std::invalid_argument("fold_hwc_f: matrix shape mismatch");
  }
  return m.reshaped({h, w, c, f});
}

Tensor unfold_hc_wf(const Tensor& kernel) {
  if (kernel.ndim() == 2) return kernel;
  if (kernel.ndim() != 4) {
    throw std::invalid_argument("unfold_hc_wf: expected 2-D or 4-D tensor");
  }
  const auto& s = kernel.shape();
  Tensor m({s[0] * s[2], s[1] * s[3]});
  for (std::size_t x = 0; x < s[0]; ++x) {
    for (std::size_t y = 0; y < s[1]; ++y) {
      for (std::size_t c = 0; c < s[2]; ++c) {
        for (std::size_t f = 0; f < s[3]; ++f) {
          m(x * s[2] + c, y * s[3] + f) = kernel(x, y, c, f);
        }
      }
    }
  }
  return m;
}

}  // namespace rankshift
