#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace rankshift {

/// Dense rank-1..4 tensor of doubles, row-major storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols);
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const;  // 2-D only
  std::size_t cols() const;  // 2-D only

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator()(std::size_t i) { return data_[i]; }
  double operator()(std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k,
                     std::size_t l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k,
                    std::size_t l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  /// Same data, new shape; element counts must match.
  Tensor reshaped(std::vector<std::size_t> new_shape) const;

  bool all_finite() const;
  double frob_norm() const;
  double max_abs() const;

  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);
  /// this += s * other
  Tensor& add_scaled(const Tensor& other, double s);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// 2-D helpers used throughout; all check shapes and throw
// std::invalid_argument on mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);     // a * b
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T * b
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor transpose(const Tensor& a);

/// Unfold an h x w x C x F kernel to the (h*w*C) x F matrix; a 2-D input is
/// returned unchanged.
Tensor unfold_hwc_f(const Tensor& kernel);
/// Fold the (h*w*C) x F matrix back to an h x w x C x F kernel.
Tensor fold_hwc_f(const Tensor& m, std::size_t h, std::size_t w,
                  std::size_t c, std::size_t f);
/// Unfold an h x w x C x F kernel to (h*C) x (w*F); rows pair (x, c),
/// columns pair (y, f). For a 3x3x64x64 kernel this is the 192 x 192 fold.
Tensor unfold_hc_wf(const Tensor& kernel);

}  // namespace rankshift
