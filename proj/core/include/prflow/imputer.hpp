#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "prflow/flow.hpp"
#include "prflow/nn.hpp"
#include "prflow/random.hpp"
#include "prflow/tensor.hpp"

namespace prflow {

/// One partially observed image. `mask` holds 1 for observed entries and 0
/// for missing ones; missing entries of `values` hold the current fill.
struct MaskedSample {
  ImageShape shape;
  Vector values;
  Vector mask;
  std::optional<Vector> ground_truth;

  void validate() const;
  std::size_t observed_count() const;
};

struct ImputerOptions {
  std::size_t dim = 0;
  /// 0 selects 784 when dim == 784 and 1024 otherwise.
  std::size_t hidden_width = 0;
  std::size_t hidden_layers = 3;
  /// Scale applied to the randomly initialised output layer.
  double init_scale = 1e-3;

  std::size_t resolved_hidden_width() const;
};

/// Latent-space map H(y) = skip .* y + mlp(y).
///
/// The skip gain is a learned per-dimension vector, so an all-zero parameter
/// set is the zero map while init_identity() (skip = 1, zero output layer)
/// gives the exact identity.
class ImputerNetwork {
 public:
  struct Tape {
    Matrix input;
    MlpTape mlp;
  };

  ImputerNetwork() = default;
  explicit ImputerNetwork(ImputerOptions options);

  const ImputerOptions& options() const { return options_; }
  std::size_t dim() const { return options_.dim; }
  Vector& skip() { return skip_; }
  const Vector& skip() const { return skip_; }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

  /// Skip = 1, Glorot hidden layers, output layer scaled by init_scale.
  void init(Rng& rng);
  void init_identity();
  void set_zero();

  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void assign_parameters(std::span<const double> in);

  Matrix apply(const Matrix& y) const;
  Matrix apply(const Matrix& y, Tape& tape) const;
  Vector apply(const Vector& y) const;

  /// Accumulates dL/dphi into param_grad (parameter_count() entries); the
  /// input gradient is returned only when `want_input_grad` is set.
  Matrix backward(const Tape& tape, const Matrix& grad_output, std::span<double> param_grad,
                  bool want_input_grad = false) const;

 private:
  ImputerOptions options_;
  Vector skip_;
  Mlp mlp_;
};

/// Fills every missing entry with the value of the nearest observed pixel in
/// image coordinates (Euclidean distance, ties resolved by row-major order).
Vector shallow_init(const MaskedSample& sample);

/// mask .* observed + (1 - mask) .* clamp(x_hat, 0, 1), row-wise for batches.
Vector merge_observed(const Vector& x_hat, const MaskedSample& sample);
Matrix merge_observed(const Matrix& x_hat, const Matrix& observed, const Matrix& masks);

/// merge_observed(G^-1(H(G(x_prev)))) for one sample.
Vector impute(const Vector& x_prev, const MaskedSample& sample, const FlowNetwork& flow,
              const ImputerNetwork& imputer);

/// Pre-merge reconstruction G^-1(H(G(x_prev))) for a batch.
Matrix reconstruct(const Matrix& x_prev, const FlowNetwork& flow, const ImputerNetwork& imputer);

/// Batched impute(); rows are processed in fixed-size chunks so results do not
/// depend on the worker count.
Matrix impute_batch(const Matrix& x_prev, const Matrix& observed, const Matrix& masks,
                    const FlowNetwork& flow, const ImputerNetwork& imputer);

}  // namespace prflow
