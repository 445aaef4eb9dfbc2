#include "hvacf/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace hvacf {

Tensor Tensor::row_vector(std::span<const double> v) {
  Tensor t(1, v.size());
  std::copy(v.begin(), v.end(), t.data.begin());
  return t;
}

Tensor Tensor::column_vector(std::span<const double> v) {
  Tensor t(v.size(), 1);
  std::copy(v.begin(), v.end(), t.data.begin());
  return t;
}

double Tensor::item() const {
  if (rows != 1 || cols != 1) throw std::logic_error("Tensor::item on non-scalar tensor");
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::squared_norm() const {
  double s = 0.0;
  for (double v : data) s += v * v;
  return s;
}

}  // namespace hvacf
