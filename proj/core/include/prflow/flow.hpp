#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "prflow/nn.hpp"
#include "prflow/random.hpp"
#include "prflow/tensor.hpp"

namespace prflow {

struct FlowOptions {
  std::size_t dim = 0;
  std::size_t layers = 6;
  /// Width of the scale/translate subnets; 0 selects max(256, dim / 2).
  std::size_t hidden_width = 0;
  std::size_t hidden_layers = 2;
  /// Log-scales are squashed to (-scale_bound, scale_bound).
  double scale_bound = 2.0;
  /// Map [0,1] pixels through logit(m + (1 - 2m) x) before the couplings.
  bool logit = false;
  double logit_margin = 0.05;

  std::size_t resolved_hidden_width() const;
};

/// Output of a flow evaluated in either direction. `logdet` always holds the
/// log|det dG/dx| of the forward map at the data-space point, per row.
struct FlowPass {
  Matrix values;
  Vector logdet;
};

struct GradientResult {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// Affine coupling: the identity half passes through, the other half becomes
/// x * exp(s(x_id)) + t(x_id) with s bounded by scale_bound * tanh(. / scale_bound).
class CouplingLayer {
 public:
  struct Tape {
    Matrix identity_half;
    Matrix transformed_half;  // data-space values of the transformed half
    Matrix log_scale;
    Matrix scale;  // exp(log_scale)
    MlpTape scale_tape;
    MlpTape translate_tape;
  };

  CouplingLayer(std::size_t dim, bool identity_on_even, std::size_t hidden_width,
                std::size_t hidden_layers, double scale_bound);

  std::size_t dim() const { return dim_; }
  double scale_bound() const { return scale_bound_; }
  const std::vector<std::size_t>& identity_indices() const { return identity_; }
  const std::vector<std::size_t>& transformed_indices() const { return transformed_; }
  /// One entry per dimension; 1 marks the identity half.
  std::vector<std::uint8_t> partition() const;

  Mlp& scale_net() { return scale_net_; }
  const Mlp& scale_net() const { return scale_net_; }
  Mlp& translate_net() { return translate_net_; }
  const Mlp& translate_net() const { return translate_net_; }

  std::size_t parameter_count() const;
  void copy_parameters(std::span<double> out) const;
  void assign_parameters(std::span<const double> in);

  FlowPass forward(const Matrix& x, Tape* tape = nullptr) const;
  FlowPass inverse(const Matrix& y, Tape* tape = nullptr) const;

  /// Gradients for a tape recorded by forward(): returns dL/dx.
  Matrix backward_forward(const Tape& tape, const Matrix& grad_y, const Vector& grad_logdet,
                          std::span<double> param_grad) const;
  /// Gradients for a tape recorded by inverse(): returns dL/dy.
  Matrix backward_inverse(const Tape& tape, const Matrix& grad_x, const Vector& grad_logdet,
                          std::span<double> param_grad) const;

 private:
  void condition(const Matrix& identity_half, Tape* tape, Matrix& log_scale,
                 Matrix& shift) const;
  Matrix backward_nets(const Tape& tape, const Matrix& grad_log_scale, const Matrix& grad_shift,
                       std::span<double> param_grad) const;

  std::size_t dim_;
  double scale_bound_;
  std::vector<std::size_t> identity_;
  std::vector<std::size_t> transformed_;
  Mlp scale_net_;
  Mlp translate_net_;
};

/// RealNVP-style density model: a stack of affine couplings with alternating
/// even/odd partitions over a standard normal latent.
class FlowNetwork {
 public:
  struct Tape {
    Matrix logit_u;  // sigmoid-domain values when the logit pre-transform is on
    std::vector<CouplingLayer::Tape> layers;
  };

  FlowNetwork() = default;
  explicit FlowNetwork(FlowOptions options);
  /// Builds a flow from explicit layers (all of dimension `dim`).
  FlowNetwork(std::vector<CouplingLayer> layers, FlowOptions options);

  const FlowOptions& options() const { return options_; }
  std::size_t dim() const { return options_.dim; }
  std::size_t layer_count() const { return layers_.size(); }
  CouplingLayer& layer(std::size_t i) { return layers_[i]; }
  const CouplingLayer& layer(std::size_t i) const { return layers_[i]; }

  /// Glorot hidden layers, zero output layers: the flow starts as the identity.
  void init(Rng& rng);
  /// Every weight random; used to exercise non-trivial maps in tests.
  void randomize(Rng& rng, double output_scale);
  void set_zero();

  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void assign_parameters(std::span<const double> in);

  FlowPass forward(const Matrix& x, Tape* tape = nullptr) const;
  /// Returns x = G^-1(y) together with the forward log-determinant at x.
  FlowPass inverse(const Matrix& y, Tape* tape = nullptr) const;

  Matrix backward_forward(const Tape& tape, const Matrix& grad_y, const Vector& grad_logdet,
                          std::span<double> param_grad) const;
  Matrix backward_inverse(const Tape& tape, const Matrix& grad_x, const Vector& grad_logdet,
                          std::span<double> param_grad) const;

  Vector log_likelihood(const Matrix& x) const;
  double log_likelihood(const Vector& x) const;

  /// Mean negative log-likelihood of the batch and its exact gradient with
  /// respect to every flow parameter.
  GradientResult nll_gradient(const Matrix& batch) const;

 private:
  FlowOptions options_;
  std::vector<CouplingLayer> layers_;
};

/// log N(y; 0, I) per row.
Vector gaussian_log_density(const Matrix& y);

}  // namespace prflow
