#pragma once

#include "prflow/tensor.hpp"

namespace prflow {

/// Root mean squared error pooled over every unobserved entry (mask == 0) of
/// every sample. Throws ContractError when nothing is missing.
double rmse_missing(const Matrix& recovered, const Matrix& ground_truth, const Matrix& masks);

struct GaussianStats {
  Vector mean;
  Matrix covariance;
};

/// Sample mean and unbiased covariance of the rows of `features` (N >= 2;
/// a single row yields a zero covariance).
GaussianStats gaussian_stats(const Matrix& features);

/// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2), clamped at 0.
/// Throws ContractError for covariances asymmetric beyond `symmetry_tol`.
double frechet_distance(const GaussianStats& a, const GaussianStats& b,
                        double symmetry_tol = 1e-8);

/// min(1, acc_imp / acc_0); acc_0 must be positive.
double scc(double acc_imp, double acc_0);

}  // namespace prflow
