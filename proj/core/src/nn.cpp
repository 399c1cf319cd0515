#include "prflow/nn.hpp"

#include <cmath>
#include <string>

#include "prflow/error.hpp"

namespace prflow {
namespace {

void activate(Matrix& z, Activation act) {
  if (act == Activation::Tanh) {
    z = z.array().tanh();
  } else {
    z = z.cwiseMax(0.0);
  }
}

// Multiplies grad in place by the activation derivative, expressed through
// the activation output.
void apply_derivative(Matrix& grad, const Matrix& activated, Activation act) {
  if (act == Activation::Tanh) {
    grad.array() *= 1.0 - activated.array().square();
  } else {
    grad.array() *= (activated.array() > 0.0).cast<double>();
  }
}

}  // namespace

Mlp::Mlp(std::vector<std::size_t> widths, Activation activation)
    : widths_(std::move(widths)), activation_(activation) {
  if (widths_.size() < 2) throw ContractError("an MLP needs at least input and output widths");
  for (std::size_t w : widths_) {
    if (w == 0) throw ContractError("MLP layer widths must be positive");
  }
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    weights_.emplace_back(Matrix::Zero(static_cast<Eigen::Index>(widths_[l + 1]),
                                       static_cast<Eigen::Index>(widths_[l])));
    biases_.emplace_back(RowVector::Zero(static_cast<Eigen::Index>(widths_[l + 1])));
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  }
  return n;
}

Matrix Mlp::forward(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != input_dim()) {
    throw ContractError("MLP input has " + std::to_string(x.cols()) + " columns, expected " +
                        std::to_string(input_dim()));
  }
  Matrix h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = h * weights_[l].transpose();
    z.rowwise() += biases_[l];
    if (l + 1 < weights_.size()) activate(z, activation_);
    h = std::move(z);
  }
  return h;
}

Matrix Mlp::forward(const Matrix& x, MlpTape& tape) const {
  if (static_cast<std::size_t>(x.cols()) != input_dim()) {
    throw ContractError("MLP input has " + std::to_string(x.cols()) + " columns, expected " +
                        std::to_string(input_dim()));
  }
  tape.inputs.clear();
  tape.inputs.reserve(weights_.size());
  tape.inputs.push_back(x);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = tape.inputs.back() * weights_[l].transpose();
    z.rowwise() += biases_[l];
    if (l + 1 < weights_.size()) {
      activate(z, activation_);
      tape.inputs.push_back(std::move(z));
    } else {
      return z;
    }
  }
  return {};
}

Matrix Mlp::backward(const MlpTape& tape, const Matrix& grad_output,
                     std::span<double> param_grad) const {
  return backward_impl(tape, grad_output, param_grad, true);
}

void Mlp::backward_params(const MlpTape& tape, const Matrix& grad_output,
                          std::span<double> param_grad) const {
  backward_impl(tape, grad_output, param_grad, false);
}

Matrix Mlp::backward_impl(const MlpTape& tape, const Matrix& grad_output,
                          std::span<double> param_grad, bool want_input_grad) const {
  if (tape.inputs.size() != weights_.size()) throw ContractError("MLP tape does not match network");
  const bool want_params = !param_grad.empty();
  if (want_params && param_grad.size() != parameter_count()) {
    throw ContractError("MLP gradient buffer has the wrong size");
  }

  // Offsets of each layer's block in the flat layout.
  std::vector<std::size_t> offsets(weights_.size());
  std::size_t offset = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    offsets[l] = offset;
    offset += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  }

  Matrix grad = grad_output;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    const Matrix& input = tape.inputs[l];
    if (want_params) {
      // Products are evaluated into aligned temporaries: Eigen's kernels round
      // differently depending on the destination's alignment, and the caller's
      // buffer alignment is arbitrary.
      const Matrix dw = grad.transpose() * input;
      const RowVector db = grad.colwise().sum();
      MatrixMap gw(param_grad.data() + offsets[l], weights_[l].rows(), weights_[l].cols());
      gw += dw;
      Eigen::Map<RowVector> gb(param_grad.data() + offsets[l] + weights_[l].size(),
                               biases_[l].size());
      gb += db;
    }
    if (l == 0 && !want_input_grad) break;
    Matrix grad_input = grad * weights_[l];
    if (l > 0) apply_derivative(grad_input, input, activation_);
    grad = std::move(grad_input);
  }
  return want_input_grad ? grad : Matrix{};
}

void Mlp::copy_parameters(std::span<double> out) const {
  if (out.size() != parameter_count()) throw ContractError("MLP parameter buffer has the wrong size");
  double* p = out.data();
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    std::copy(weights_[l].data(), weights_[l].data() + weights_[l].size(), p);
    p += weights_[l].size();
    std::copy(biases_[l].data(), biases_[l].data() + biases_[l].size(), p);
    p += biases_[l].size();
  }
}

void Mlp::assign_parameters(std::span<const double> in) {
  if (in.size() != parameter_count()) throw ContractError("MLP parameter buffer has the wrong size");
  const double* p = in.data();
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    std::copy(p, p + weights_[l].size(), weights_[l].data());
    p += weights_[l].size();
    std::copy(p, p + biases_[l].size(), biases_[l].data());
    p += biases_[l].size();
  }
}

void Mlp::init_glorot(Rng& rng) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double fan = static_cast<double>(weights_[l].rows() + weights_[l].cols());
    const double limit = std::sqrt(6.0 / fan);
    for (Eigen::Index i = 0; i < weights_[l].size(); ++i) {
      weights_[l].data()[i] = uniform(rng, -limit, limit);
    }
    biases_[l].setZero();
  }
}

void Mlp::scale_output_layer(double factor) {
  weights_.back() *= factor;
  biases_.back() *= factor;
}

void Mlp::zero_output_layer() {
  weights_.back().setZero();
  biases_.back().setZero();
}

void Mlp::set_zero() {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    weights_[l].setZero();
    biases_[l].setZero();
  }
}

}  // namespace prflow
