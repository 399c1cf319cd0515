#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace prflow {

/// Batches are row-major: one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

/// Geometry of one image. Values are stored height-major, channel innermost.
struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;

  std::size_t pixels() const { return height * width; }
  std::size_t size() const { return height * width * channels; }
  std::size_t index(std::size_t row, std::size_t col, std::size_t channel = 0) const {
    return (row * width + col) * channels + channel;
  }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

/// Dense array of doubles with an explicit shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  bool all_finite() const;

  /// Views the tensor as (extent(0) x rest) with one row per leading index.
  MatrixMap as_matrix();
  ConstMatrixMap as_matrix() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

}  // namespace prflow
