#include "prflow/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "prflow/error.hpp"

namespace prflow {
namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw ContractError("tensor extents must be positive");
  }
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (product(shape_) != values_.size()) {
    throw ContractError("tensor value count " + std::to_string(values_.size()) +
                        " does not match shape");
  }
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

MatrixMap Tensor::as_matrix() {
  const auto rows = static_cast<Eigen::Index>(shape_.empty() ? 0 : shape_[0]);
  const auto cols = rows == 0 ? 0 : static_cast<Eigen::Index>(values_.size()) / rows;
  return MatrixMap(values_.data(), rows, cols);
}

ConstMatrixMap Tensor::as_matrix() const {
  const auto rows = static_cast<Eigen::Index>(shape_.empty() ? 0 : shape_[0]);
  const auto cols = rows == 0 ? 0 : static_cast<Eigen::Index>(values_.size()) / rows;
  return ConstMatrixMap(values_.data(), rows, cols);
}

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace prflow
