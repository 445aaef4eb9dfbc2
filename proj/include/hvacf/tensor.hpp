#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hvacf {

// Dense row-major matrix of doubles. Vectors are stored as 1 x n rows and
// scalars as 1 x 1.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor row_vector(std::span<const double> v);
  static Tensor column_vector(std::span<const double> v);

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  double item() const;
  bool all_finite() const;
  double squared_norm() const;
};

}  // namespace hvacf
