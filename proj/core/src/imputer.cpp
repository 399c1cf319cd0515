#include "prflow/imputer.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "prflow/error.hpp"
#include "prflow/parallel.hpp"

namespace prflow {
namespace {

constexpr Eigen::Index kChunkRows = 64;

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractError(std::string("shape mismatch in ") + what);
  }
}

}  // namespace

void MaskedSample::validate() const {
  const auto d = static_cast<Eigen::Index>(shape.size());
  if (values.size() != d || mask.size() != d) {
    throw ContractError("masked sample does not match its image shape");
  }
  if (ground_truth && ground_truth->size() != d) {
    throw ContractError("ground truth does not match the image shape");
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    if (mask[i] != 0.0 && mask[i] != 1.0) throw ContractError("mask entries must be 0 or 1");
  }
  if (!values.allFinite()) throw ContractError("masked sample holds non-finite values");
}

std::size_t MaskedSample::observed_count() const {
  return static_cast<std::size_t>((mask.array() > 0.5).count());
}

std::size_t ImputerOptions::resolved_hidden_width() const {
  if (hidden_width != 0) return hidden_width;
  return dim == 784 ? 784 : 1024;
}

ImputerNetwork::ImputerNetwork(ImputerOptions options) : options_(options) {
  if (options_.dim == 0) throw ContractError("imputer dimension must be positive");
  std::vector<std::size_t> widths{options_.dim};
  for (std::size_t i = 0; i < options_.hidden_layers; ++i) {
    widths.push_back(options_.resolved_hidden_width());
  }
  widths.push_back(options_.dim);
  mlp_ = Mlp(std::move(widths), Activation::Tanh);
  skip_ = Vector::Zero(static_cast<Eigen::Index>(options_.dim));
}

void ImputerNetwork::init(Rng& rng) {
  skip_.setOnes();
  mlp_.init_glorot(rng);
  mlp_.scale_output_layer(options_.init_scale);
}

void ImputerNetwork::init_identity() {
  skip_.setOnes();
  mlp_.zero_output_layer();
}

void ImputerNetwork::set_zero() {
  skip_.setZero();
  mlp_.set_zero();
}

std::size_t ImputerNetwork::parameter_count() const {
  return static_cast<std::size_t>(skip_.size()) + mlp_.parameter_count();
}

std::vector<double> ImputerNetwork::parameters() const {
  std::vector<double> flat(parameter_count());
  std::copy(skip_.data(), skip_.data() + skip_.size(), flat.begin());
  mlp_.copy_parameters(std::span(flat).subspan(static_cast<std::size_t>(skip_.size())));
  return flat;
}

void ImputerNetwork::assign_parameters(std::span<const double> in) {
  if (in.size() != parameter_count()) {
    throw ContractError("imputer parameter buffer has the wrong size");
  }
  std::copy(in.begin(), in.begin() + skip_.size(), skip_.data());
  mlp_.assign_parameters(in.subspan(static_cast<std::size_t>(skip_.size())));
}

Matrix ImputerNetwork::apply(const Matrix& y) const {
  Matrix out = mlp_.forward(y);
  out += y * skip_.asDiagonal();
  return out;
}

Matrix ImputerNetwork::apply(const Matrix& y, Tape& tape) const {
  tape.input = y;
  Matrix out = mlp_.forward(y, tape.mlp);
  out += y * skip_.asDiagonal();
  return out;
}

Vector ImputerNetwork::apply(const Vector& y) const {
  Matrix row = y.transpose();
  return apply(row).transpose();
}

Matrix ImputerNetwork::backward(const Tape& tape, const Matrix& grad_output,
                                std::span<double> param_grad, bool want_input_grad) const {
  const auto d = static_cast<std::size_t>(skip_.size());
  if (!param_grad.empty()) {
    if (param_grad.size() != parameter_count()) {
      throw ContractError("imputer gradient buffer has the wrong size");
    }
    const Vector ds = grad_output.cwiseProduct(tape.input).colwise().sum().transpose();
    Eigen::Map<Vector> g_skip(param_grad.data(), skip_.size());
    g_skip += ds;
  }
  std::span<double> mlp_grad = param_grad.empty() ? param_grad : param_grad.subspan(d);
  if (!want_input_grad) {
    mlp_.backward_params(tape.mlp, grad_output, mlp_grad);
    return {};
  }
  Matrix grad_input = mlp_.backward(tape.mlp, grad_output, mlp_grad);
  grad_input += grad_output * skip_.asDiagonal();
  return grad_input;
}

Vector shallow_init(const MaskedSample& sample) {
  sample.validate();
  const ImageShape& shape = sample.shape;
  Vector out = sample.values;
  for (std::size_t c = 0; c < shape.channels; ++c) {
    std::vector<std::pair<long, long>> donors;
    for (std::size_t r = 0; r < shape.height; ++r) {
      for (std::size_t q = 0; q < shape.width; ++q) {
        if (sample.mask[static_cast<Eigen::Index>(shape.index(r, q, c))] > 0.5) {
          donors.emplace_back(static_cast<long>(r), static_cast<long>(q));
        }
      }
    }
    if (donors.empty()) throw EmptySampleError("empty sample: no observed pixel to copy from");
    for (std::size_t r = 0; r < shape.height; ++r) {
      for (std::size_t q = 0; q < shape.width; ++q) {
        const auto idx = static_cast<Eigen::Index>(shape.index(r, q, c));
        if (sample.mask[idx] > 0.5) continue;
        long best = std::numeric_limits<long>::max();
        std::pair<long, long> pick = donors.front();
        for (const auto& d : donors) {
          const long dr = d.first - static_cast<long>(r);
          const long dq = d.second - static_cast<long>(q);
          const long dist = dr * dr + dq * dq;
          if (dist < best) {
            best = dist;
            pick = d;
          }
        }
        out[idx] = sample.values[static_cast<Eigen::Index>(
            shape.index(static_cast<std::size_t>(pick.first),
                        static_cast<std::size_t>(pick.second), c))];
      }
    }
  }
  return out;
}

Vector merge_observed(const Vector& x_hat, const MaskedSample& sample) {
  if (x_hat.size() != sample.values.size() || sample.mask.size() != sample.values.size()) {
    throw ContractError("shape mismatch in merge_observed");
  }
  Vector out(x_hat.size());
  for (Eigen::Index i = 0; i < x_hat.size(); ++i) {
    out[i] = sample.mask[i] > 0.5 ? sample.values[i] : std::clamp(x_hat[i], 0.0, 1.0);
  }
  return out;
}

Matrix merge_observed(const Matrix& x_hat, const Matrix& observed, const Matrix& masks) {
  require_same_shape(x_hat, observed, "merge_observed");
  require_same_shape(x_hat, masks, "merge_observed");
  Matrix out(x_hat.rows(), x_hat.cols());
  for (Eigen::Index i = 0; i < x_hat.size(); ++i) {
    out.data()[i] = masks.data()[i] > 0.5 ? observed.data()[i]
                                          : std::clamp(x_hat.data()[i], 0.0, 1.0);
  }
  return out;
}

Matrix reconstruct(const Matrix& x_prev, const FlowNetwork& flow, const ImputerNetwork& imputer) {
  const FlowPass latent = flow.forward(x_prev);
  return flow.inverse(imputer.apply(latent.values)).values;
}

Vector impute(const Vector& x_prev, const MaskedSample& sample, const FlowNetwork& flow,
              const ImputerNetwork& imputer) {
  Matrix row = x_prev.transpose();
  const Vector rec = reconstruct(row, flow, imputer).transpose();
  return merge_observed(rec, sample);
}

Matrix impute_batch(const Matrix& x_prev, const Matrix& observed, const Matrix& masks,
                    const FlowNetwork& flow, const ImputerNetwork& imputer) {
  require_same_shape(x_prev, observed, "impute_batch");
  require_same_shape(x_prev, masks, "impute_batch");
  Matrix out(x_prev.rows(), x_prev.cols());
  const Eigen::Index n = x_prev.rows();
  const auto chunks = static_cast<std::size_t>((n + kChunkRows - 1) / kChunkRows);
  parallel_for(chunks, [&](std::size_t c) {
    const Eigen::Index begin = static_cast<Eigen::Index>(c) * kChunkRows;
    const Eigen::Index rows = std::min(kChunkRows, n - begin);
    const Matrix rec = reconstruct(x_prev.middleRows(begin, rows), flow, imputer);
    out.middleRows(begin, rows) =
        merge_observed(rec, observed.middleRows(begin, rows), masks.middleRows(begin, rows));
  });
  return out;
}

}  // namespace prflow
