#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace scrap::tensor {

// Dense row-major matrix of doubles. Vectors are 1×n rows or n×1 columns.
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data);
  Tensor2D(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor2D row(std::span<const double> values);
  static Tensor2D column(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<const double> row_view(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }

  void fill(double v);
  bool same_shape(const Tensor2D& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Plain (non-recorded) kernels shared by the graph ops and inference paths.
Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);
Tensor2D matmul_transpose_a(const Tensor2D& a, const Tensor2D& b);  // aᵀ·b
Tensor2D matmul_transpose_b(const Tensor2D& a, const Tensor2D& b);  // a·bᵀ
Tensor2D transpose(const Tensor2D& a);

/// Numerically stable softmax; throws on empty input.
std::vector<double> softmax(std::span<const double> v);

}  // namespace scrap::tensor
