#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "prflow/random.hpp"
#include "prflow/tensor.hpp"

namespace prflow {

enum class Activation { Tanh, Relu };

/// Activations recorded by a forward pass; inputs[l] feeds layer l.
struct MlpTape {
  std::vector<Matrix> inputs;
};

/// Fully connected network: affine layers with `activation` between them and
/// a linear output layer.
///
/// Parameters are exposed as one flat array laid out layer by layer, each
/// layer contributing its row-major (out x in) weight followed by its bias.
/// Gradients use the same layout.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<std::size_t> widths, Activation activation);

  std::size_t input_dim() const { return widths_.front(); }
  std::size_t output_dim() const { return widths_.back(); }
  std::size_t layer_count() const { return weights_.size(); }
  const std::vector<std::size_t>& widths() const { return widths_; }
  Activation activation() const { return activation_; }
  std::size_t parameter_count() const;

  Matrix forward(const Matrix& x) const;
  Matrix forward(const Matrix& x, MlpTape& tape) const;

  /// Propagates dL/d(output) back to dL/d(input). When `param_grad` is not
  /// empty it must hold parameter_count() entries; gradients are added to it.
  Matrix backward(const MlpTape& tape, const Matrix& grad_output,
                  std::span<double> param_grad) const;

  /// Same as backward() but skips the input gradient.
  void backward_params(const MlpTape& tape, const Matrix& grad_output,
                       std::span<double> param_grad) const;

  void copy_parameters(std::span<double> out) const;
  void assign_parameters(std::span<const double> in);

  /// Glorot-uniform weights, zero biases.
  void init_glorot(Rng& rng);
  void scale_output_layer(double factor);
  void zero_output_layer();
  void set_zero();

  Matrix& weight(std::size_t layer) { return weights_[layer]; }
  const Matrix& weight(std::size_t layer) const { return weights_[layer]; }
  RowVector& bias(std::size_t layer) { return biases_[layer]; }
  const RowVector& bias(std::size_t layer) const { return biases_[layer]; }

 private:
  Matrix backward_impl(const MlpTape& tape, const Matrix& grad_output, std::span<double> param_grad,
                       bool want_input_grad) const;

  std::vector<std::size_t> widths_;
  Activation activation_ = Activation::Tanh;
  std::vector<Matrix> weights_;
  std::vector<RowVector> biases_;
};

}  // namespace prflow
