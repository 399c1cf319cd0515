#include "prflow/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "prflow/error.hpp"

namespace prflow {
namespace {

using ColMatrix = Eigen::MatrixXd;

constexpr double kEigenFloor = 1e-10;

ColMatrix psd_sqrt(const ColMatrix& m) {
  Eigen::SelfAdjointEigenSolver<ColMatrix> eig(m);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  Eigen::VectorXd roots = eig.eigenvalues();
  for (Eigen::Index i = 0; i < roots.size(); ++i) {
    roots[i] = roots[i] > kEigenFloor ? std::sqrt(roots[i]) : 0.0;
  }
  return eig.eigenvectors() * roots.asDiagonal() * eig.eigenvectors().transpose();
}

void check_symmetric(const Matrix& c, double tol, const char* name) {
  if (c.rows() != c.cols()) throw ContractError(std::string(name) + " covariance is not square");
  if (!c.allFinite()) throw NumericalError(std::string(name) + " covariance is not finite");
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > tol) {
    throw ContractError(std::string(name) + " covariance is not symmetric");
  }
}

}  // namespace

double rmse_missing(const Matrix& recovered, const Matrix& ground_truth, const Matrix& masks) {
  if (recovered.rows() != ground_truth.rows() || recovered.cols() != ground_truth.cols() ||
      masks.rows() != recovered.rows() || masks.cols() != recovered.cols()) {
    throw ContractError("rmse_missing: shape mismatch");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < recovered.rows(); ++i) {
    for (Eigen::Index j = 0; j < recovered.cols(); ++j) {
      if (masks(i, j) != 0.0) continue;
      const double d = recovered(i, j) - ground_truth(i, j);
      sum += d * d;
      ++count;
    }
  }
  if (count == 0) throw ContractError("rmse_missing: no unobserved pixels");
  return std::sqrt(sum / static_cast<double>(count));
}

GaussianStats gaussian_stats(const Matrix& features) {
  if (features.rows() == 0 || features.cols() == 0) {
    throw ContractError("gaussian_stats: empty feature matrix");
  }
  GaussianStats s;
  s.mean = features.colwise().mean().transpose();
  const Matrix centred = features.rowwise() - s.mean.transpose();
  if (features.rows() < 2) {
    s.covariance = Matrix::Zero(features.cols(), features.cols());
  } else {
    s.covariance = (centred.transpose() * centred) / static_cast<double>(features.rows() - 1);
    s.covariance = 0.5 * (s.covariance + s.covariance.transpose()).eval();
  }
  return s;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b, double symmetry_tol) {
  if (a.mean.size() == 0 || a.mean.size() != b.mean.size() ||
      a.covariance.rows() != a.mean.size() || b.covariance.rows() != b.mean.size()) {
    throw ContractError("frechet_distance: dimension mismatch");
  }
  check_symmetric(a.covariance, symmetry_tol, "first");
  check_symmetric(b.covariance, symmetry_tol, "second");

  const ColMatrix s1 = a.covariance;
  const ColMatrix s2 = b.covariance;
  const ColMatrix r1 = psd_sqrt(s1);
  ColMatrix inner = r1 * s2 * r1;
  inner = 0.5 * (inner + inner.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<ColMatrix> eig(inner, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  double trace_sqrt = 0.0;
  for (Eigen::Index i = 0; i < eig.eigenvalues().size(); ++i) {
    const double l = eig.eigenvalues()[i];
    if (l > kEigenFloor) trace_sqrt += std::sqrt(l);
  }
  const double d = (a.mean - b.mean).squaredNorm() + s1.trace() + s2.trace() - 2.0 * trace_sqrt;
  return std::max(d, 0.0);
}

double scc(double acc_imp, double acc_0) {
  if (!(acc_0 > 0.0)) throw ContractError("scc: baseline accuracy must be positive");
  if (!(acc_imp >= 0.0)) throw ContractError("scc: accuracy must be non-negative");
  return std::min(1.0, acc_imp / acc_0);
}

}  // namespace prflow
