#include "scrap/tensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "scrap/common/error.hpp"

namespace scrap::tensor {

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    std::ostringstream os;
    os << "Tensor2D: " << data_.size() << " values cannot fill shape [" << rows << "x" << cols
       << "]";
    throw ShapeError(os.str());
  }
}

Tensor2D::Tensor2D(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Tensor2D: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Tensor2D Tensor2D::row(std::span<const double> values) {
  return Tensor2D(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor2D Tensor2D::column(std::span<const double> values) {
  return Tensor2D(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

void Tensor2D::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor2D::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string Tensor2D::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + a.shape_string() + " x " + b.shape_string());
  }
  Tensor2D out(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = &out(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      const double* brow = &b.values()[p * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor2D matmul_transpose_a(const Tensor2D& a, const Tensor2D& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_transpose_a: " + a.shape_string() + "ᵀ x " + b.shape_string());
  }
  Tensor2D out(a.cols(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (std::size_t r = 0; r < n; ++r) {
    const double* brow = &b.values()[r * m];
    for (std::size_t i = 0; i < k; ++i) {
      const double av = a(r, i);
      if (av == 0.0) continue;
      double* orow = &out(i, 0);
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor2D matmul_transpose_b(const Tensor2D& a, const Tensor2D& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transpose_b: " + a.shape_string() + " x " + b.shape_string() + "ᵀ");
  }
  Tensor2D out(a.rows(), b.rows());
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = &a.values()[i * k];
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = &b.values()[j * k];
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out(i, j) = acc;
    }
  }
  return out;
}

Tensor2D transpose(const Tensor2D& a) {
  Tensor2D out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw ShapeError("softmax: empty input");
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

}  // namespace scrap::tensor
