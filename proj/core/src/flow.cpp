#include "prflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "prflow/error.hpp"

namespace prflow {
namespace {

Matrix gather(const Matrix& m, const std::vector<std::size_t>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out(r, static_cast<Eigen::Index>(j)) = m(r, static_cast<Eigen::Index>(cols[j]));
    }
  }
  return out;
}

void scatter(Matrix& m, const std::vector<std::size_t>& cols, const Matrix& part) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      m(r, static_cast<Eigen::Index>(cols[j])) = part(r, static_cast<Eigen::Index>(j));
    }
  }
}

std::vector<std::size_t> mlp_widths(std::size_t in, std::size_t hidden, std::size_t hidden_layers,
                                    std::size_t out) {
  std::vector<std::size_t> widths{in};
  for (std::size_t i = 0; i < hidden_layers; ++i) widths.push_back(hidden);
  widths.push_back(out);
  return widths;
}

void require_finite(const Matrix& m, const char* where, std::size_t layer) {
  if (!m.allFinite()) {
    throw NumericalError(std::string("non-finite values in ") + where + " of coupling layer " +
                         std::to_string(layer) + " (unstable scale outputs)");
  }
}

}  // namespace

std::size_t FlowOptions::resolved_hidden_width() const {
  return hidden_width != 0 ? hidden_width : std::max<std::size_t>(256, dim / 2);
}

// ---------------------------------------------------------------------------
// CouplingLayer

CouplingLayer::CouplingLayer(std::size_t dim, bool identity_on_even, std::size_t hidden_width,
                             std::size_t hidden_layers, double scale_bound)
    : dim_(dim), scale_bound_(scale_bound) {
  if (dim < 2) throw ContractError("a coupling layer needs at least two dimensions");
  if (!(scale_bound > 0.0)) throw ContractError("scale_bound must be positive");
  for (std::size_t i = 0; i < dim; ++i) {
    ((i % 2 == 0) == identity_on_even ? identity_ : transformed_).push_back(i);
  }
  scale_net_ = Mlp(mlp_widths(identity_.size(), hidden_width, hidden_layers, transformed_.size()),
                   Activation::Tanh);
  translate_net_ = Mlp(
      mlp_widths(identity_.size(), hidden_width, hidden_layers, transformed_.size()),
      Activation::Tanh);
}

std::vector<std::uint8_t> CouplingLayer::partition() const {
  std::vector<std::uint8_t> p(dim_, 0);
  for (std::size_t i : identity_) p[i] = 1;
  return p;
}

std::size_t CouplingLayer::parameter_count() const {
  return scale_net_.parameter_count() + translate_net_.parameter_count();
}

void CouplingLayer::copy_parameters(std::span<double> out) const {
  const std::size_t ns = scale_net_.parameter_count();
  scale_net_.copy_parameters(out.subspan(0, ns));
  translate_net_.copy_parameters(out.subspan(ns));
}

void CouplingLayer::assign_parameters(std::span<const double> in) {
  const std::size_t ns = scale_net_.parameter_count();
  scale_net_.assign_parameters(in.subspan(0, ns));
  translate_net_.assign_parameters(in.subspan(ns));
}

void CouplingLayer::condition(const Matrix& identity_half, Tape* tape, Matrix& log_scale,
                              Matrix& shift) const {
  Matrix raw = tape ? scale_net_.forward(identity_half, tape->scale_tape)
                    : scale_net_.forward(identity_half);
  log_scale = scale_bound_ * (raw.array() / scale_bound_).tanh();
  shift = tape ? translate_net_.forward(identity_half, tape->translate_tape)
               : translate_net_.forward(identity_half);
}

FlowPass CouplingLayer::forward(const Matrix& x, Tape* tape) const {
  if (static_cast<std::size_t>(x.cols()) != dim_) {
    throw ContractError("coupling input has " + std::to_string(x.cols()) +
                        " columns, partition covers " + std::to_string(dim_));
  }
  Matrix a = gather(x, identity_);
  Matrix b = gather(x, transformed_);
  Matrix log_scale, shift;
  condition(a, tape, log_scale, shift);
  Matrix scale = log_scale.array().exp();
  Matrix yb = b.cwiseProduct(scale) + shift;

  FlowPass out{x, log_scale.rowwise().sum()};
  scatter(out.values, transformed_, yb);
  if (tape) {
    tape->identity_half = std::move(a);
    tape->transformed_half = std::move(b);
    tape->log_scale = std::move(log_scale);
    tape->scale = std::move(scale);
  }
  return out;
}

FlowPass CouplingLayer::inverse(const Matrix& y, Tape* tape) const {
  if (static_cast<std::size_t>(y.cols()) != dim_) {
    throw ContractError("coupling input has " + std::to_string(y.cols()) +
                        " columns, partition covers " + std::to_string(dim_));
  }
  Matrix a = gather(y, identity_);
  Matrix yb = gather(y, transformed_);
  Matrix log_scale, shift;
  condition(a, tape, log_scale, shift);
  Matrix scale = log_scale.array().exp();
  Matrix xb = (yb - shift).cwiseQuotient(scale);

  FlowPass out{y, log_scale.rowwise().sum()};
  scatter(out.values, transformed_, xb);
  if (tape) {
    tape->identity_half = std::move(a);
    tape->transformed_half = std::move(xb);
    tape->log_scale = std::move(log_scale);
    tape->scale = std::move(scale);
  }
  return out;
}

Matrix CouplingLayer::backward_nets(const Tape& tape, const Matrix& grad_log_scale,
                                    const Matrix& grad_shift,
                                    std::span<double> param_grad) const {
  const std::size_t ns = scale_net_.parameter_count();
  std::span<double> gs = param_grad.empty() ? param_grad : param_grad.subspan(0, ns);
  std::span<double> gt = param_grad.empty() ? param_grad : param_grad.subspan(ns);
  // d(bound * tanh(raw / bound)) / d raw = 1 - (log_scale / bound)^2
  Matrix grad_raw =
      grad_log_scale.array() * (1.0 - (tape.log_scale.array() / scale_bound_).square());
  Matrix ga = scale_net_.backward(tape.scale_tape, grad_raw, gs);
  ga += translate_net_.backward(tape.translate_tape, grad_shift, gt);
  return ga;
}

Matrix CouplingLayer::backward_forward(const Tape& tape, const Matrix& grad_y,
                                       const Vector& grad_logdet,
                                       std::span<double> param_grad) const {
  Matrix gyb = gather(grad_y, transformed_);
  Matrix gxb = gyb.cwiseProduct(tape.scale);
  Matrix g_log_scale = gxb.cwiseProduct(tape.transformed_half);
  g_log_scale.colwise() += grad_logdet;
  Matrix ga = gather(grad_y, identity_) + backward_nets(tape, g_log_scale, gyb, param_grad);

  Matrix gx(grad_y.rows(), grad_y.cols());
  scatter(gx, identity_, ga);
  scatter(gx, transformed_, gxb);
  return gx;
}

Matrix CouplingLayer::backward_inverse(const Tape& tape, const Matrix& grad_x,
                                       const Vector& grad_logdet,
                                       std::span<double> param_grad) const {
  Matrix gxb = gather(grad_x, transformed_);
  Matrix gyb = gxb.cwiseQuotient(tape.scale);
  // x_b = (y_b - t) exp(-s): dx_b/ds = -x_b, dx_b/dt = -exp(-s)
  Matrix g_log_scale = -gxb.cwiseProduct(tape.transformed_half);
  g_log_scale.colwise() += grad_logdet;
  Matrix ga = gather(grad_x, identity_) + backward_nets(tape, g_log_scale, -gyb, param_grad);

  Matrix gy(grad_x.rows(), grad_x.cols());
  scatter(gy, identity_, ga);
  scatter(gy, transformed_, gyb);
  return gy;
}

// ---------------------------------------------------------------------------
// FlowNetwork

FlowNetwork::FlowNetwork(FlowOptions options) : options_(options) {
  if (options_.dim < 2) throw ContractError("flow dimension must be at least 2");
  if (options_.layers == 0) throw ContractError("flow needs at least one coupling layer");
  if (options_.logit && !(options_.logit_margin > 0.0 && options_.logit_margin < 0.5)) {
    throw ContractError("logit margin must lie in (0, 0.5)");
  }
  const std::size_t width = options_.resolved_hidden_width();
  for (std::size_t l = 0; l < options_.layers; ++l) {
    layers_.emplace_back(options_.dim, l % 2 == 0, width, options_.hidden_layers,
                         options_.scale_bound);
  }
}

FlowNetwork::FlowNetwork(std::vector<CouplingLayer> layers, FlowOptions options)
    : options_(options), layers_(std::move(layers)) {
  if (layers_.empty()) throw ContractError("flow needs at least one coupling layer");
  for (const auto& layer : layers_) {
    if (layer.dim() != options_.dim) throw ContractError("coupling layer dimension mismatch");
  }
  options_.layers = layers_.size();
}

void FlowNetwork::init(Rng& rng) {
  for (auto& layer : layers_) {
    layer.scale_net().init_glorot(rng);
    layer.scale_net().zero_output_layer();
    layer.translate_net().init_glorot(rng);
    layer.translate_net().zero_output_layer();
  }
}

void FlowNetwork::randomize(Rng& rng, double output_scale) {
  for (auto& layer : layers_) {
    for (Mlp* net : {&layer.scale_net(), &layer.translate_net()}) {
      net->init_glorot(rng);
      for (std::size_t l = 0; l < net->layer_count(); ++l) {
        for (Eigen::Index i = 0; i < net->bias(l).size(); ++i) {
          net->bias(l)[i] = uniform(rng, -0.1, 0.1);
        }
      }
      net->scale_output_layer(output_scale);
    }
  }
}

void FlowNetwork::set_zero() {
  for (auto& layer : layers_) {
    layer.scale_net().set_zero();
    layer.translate_net().set_zero();
  }
}

std::size_t FlowNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.parameter_count();
  return n;
}

std::vector<double> FlowNetwork::parameters() const {
  std::vector<double> flat(parameter_count());
  std::size_t offset = 0;
  for (const auto& layer : layers_) {
    layer.copy_parameters(std::span(flat).subspan(offset, layer.parameter_count()));
    offset += layer.parameter_count();
  }
  return flat;
}

void FlowNetwork::assign_parameters(std::span<const double> in) {
  if (in.size() != parameter_count()) throw ContractError("flow parameter buffer has the wrong size");
  std::size_t offset = 0;
  for (auto& layer : layers_) {
    layer.assign_parameters(in.subspan(offset, layer.parameter_count()));
    offset += layer.parameter_count();
  }
}

FlowPass FlowNetwork::forward(const Matrix& x, Tape* tape) const {
  if (static_cast<std::size_t>(x.cols()) != options_.dim) {
    throw ContractError("flow input has " + std::to_string(x.cols()) + " columns, expected " +
                        std::to_string(options_.dim));
  }
  if (tape) tape->layers.assign(layers_.size(), {});
  FlowPass pass{x, Vector::Zero(x.rows())};
  if (options_.logit) {
    const double m = options_.logit_margin;
    const Matrix u = (m + (1.0 - 2.0 * m) * x.array()).matrix();
    pass.values = (u.array().log() - (1.0 - u.array()).log()).matrix();
    pass.logdet = (std::log(1.0 - 2.0 * m) - u.array().log() - (1.0 - u.array()).log())
                      .matrix()
                      .rowwise()
                      .sum();
    if (!pass.values.allFinite()) {
      throw NumericalError("logit pre-transform received values outside its domain");
    }
    if (tape) tape->logit_u = u;
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    FlowPass step = layers_[l].forward(pass.values, tape ? &tape->layers[l] : nullptr);
    require_finite(step.values, "forward pass", l);
    pass.values = std::move(step.values);
    pass.logdet += step.logdet;
  }
  return pass;
}

FlowPass FlowNetwork::inverse(const Matrix& y, Tape* tape) const {
  if (static_cast<std::size_t>(y.cols()) != options_.dim) {
    throw ContractError("flow input has " + std::to_string(y.cols()) + " columns, expected " +
                        std::to_string(options_.dim));
  }
  if (tape) tape->layers.assign(layers_.size(), {});
  FlowPass pass{y, Vector::Zero(y.rows())};
  for (std::size_t l = layers_.size(); l-- > 0;) {
    FlowPass step = layers_[l].inverse(pass.values, tape ? &tape->layers[l] : nullptr);
    require_finite(step.values, "inverse pass", l);
    pass.values = std::move(step.values);
    pass.logdet += step.logdet;
  }
  if (options_.logit) {
    const double m = options_.logit_margin;
    const Matrix u = (1.0 / (1.0 + (-pass.values.array()).exp())).matrix();
    pass.logdet += (std::log(1.0 - 2.0 * m) - u.array().log() - (1.0 - u.array()).log())
                       .matrix()
                       .rowwise()
                       .sum();
    pass.values = ((u.array() - m) / (1.0 - 2.0 * m)).matrix();
    if (tape) tape->logit_u = u;
  }
  return pass;
}

Matrix FlowNetwork::backward_forward(const Tape& tape, const Matrix& grad_y,
                                     const Vector& grad_logdet,
                                     std::span<double> param_grad) const {
  if (!param_grad.empty() && param_grad.size() != parameter_count()) {
    throw ContractError("flow gradient buffer has the wrong size");
  }
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& layer : layers_) {
    offsets.push_back(offset);
    offset += layer.parameter_count();
  }
  Matrix grad = grad_y;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    std::span<double> slice = param_grad.empty()
                                  ? param_grad
                                  : param_grad.subspan(offsets[l], layers_[l].parameter_count());
    grad = layers_[l].backward_forward(tape.layers[l], grad, grad_logdet, slice);
  }
  if (options_.logit) {
    const double c = 1.0 - 2.0 * options_.logit_margin;
    const auto u = tape.logit_u.array();
    const auto uu = u * (1.0 - u);
    Matrix gx = (grad.array() * c / uu).matrix();
    gx.array() += ((c * (2.0 * u - 1.0) / uu).colwise() * grad_logdet.array());
    grad = std::move(gx);
  }
  return grad;
}

Matrix FlowNetwork::backward_inverse(const Tape& tape, const Matrix& grad_x,
                                     const Vector& grad_logdet,
                                     std::span<double> param_grad) const {
  if (!param_grad.empty() && param_grad.size() != parameter_count()) {
    throw ContractError("flow gradient buffer has the wrong size");
  }
  Matrix grad = grad_x;
  if (options_.logit) {
    const double c = 1.0 - 2.0 * options_.logit_margin;
    const auto u = tape.logit_u.array();
    Matrix gz = (grad.array() * u * (1.0 - u) / c).matrix();
    gz.array() += ((2.0 * u - 1.0).colwise() * grad_logdet.array());
    grad = std::move(gz);
  }
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    std::span<double> slice = param_grad.empty()
                                  ? param_grad
                                  : param_grad.subspan(offset, layers_[l].parameter_count());
    grad = layers_[l].backward_inverse(tape.layers[l], grad, grad_logdet, slice);
    offset += layers_[l].parameter_count();
  }
  return grad;
}

Vector FlowNetwork::log_likelihood(const Matrix& x) const {
  FlowPass pass = forward(x);
  return gaussian_log_density(pass.values) + pass.logdet;
}

double FlowNetwork::log_likelihood(const Vector& x) const {
  Matrix row = x.transpose();
  return log_likelihood(row)[0];
}

GradientResult FlowNetwork::nll_gradient(const Matrix& batch) const {
  if (batch.rows() == 0) throw ContractError("empty batch");
  Tape tape;
  FlowPass pass = forward(batch, &tape);
  const double n = static_cast<double>(batch.rows());
  GradientResult result;
  result.loss = -(gaussian_log_density(pass.values) + pass.logdet).mean();
  result.gradient.assign(parameter_count(), 0.0);
  // d(-log N(y))/dy = y ; d(-logdet)/dlogdet = -1, both averaged over the batch.
  const Matrix grad_y = pass.values / n;
  const Vector grad_logdet = Vector::Constant(batch.rows(), -1.0 / n);
  backward_forward(tape, grad_y, grad_logdet, result.gradient);
  return result;
}

Vector gaussian_log_density(const Matrix& y) {
  const double norm = 0.5 * static_cast<double>(y.cols()) * std::log(2.0 * std::numbers::pi);
  return (-0.5 * y.rowwise().squaredNorm()).array() - norm;
}

}  // namespace prflow
