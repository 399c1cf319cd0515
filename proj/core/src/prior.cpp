#include "prflow/prior.hpp"

#include <cmath>

#include "prflow/error.hpp"

namespace prflow {
namespace {

void check_image(std::span<const double> image, const ImageShape& shape, const Kernel& k) {
  if (image.size() != shape.size()) throw ContractError("image buffer does not match its shape");
  if (shape.height < k.rows || shape.width < k.cols) {
    throw ContractError("image of " + std::to_string(shape.height) + "x" +
                        std::to_string(shape.width) + " is smaller than a " +
                        std::to_string(k.rows) + "x" + std::to_string(k.cols) + " kernel");
  }
}

double response(std::span<const double> image, const ImageShape& shape, const Kernel& k,
                std::size_t r, std::size_t q, std::size_t c) {
  double z = 0.0;
  for (std::size_t u = 0; u < k.rows; ++u) {
    for (std::size_t v = 0; v < k.cols; ++v) {
      z += k.at(u, v) * image[shape.index(r + u, q + v, c)];
    }
  }
  return z;
}

}  // namespace

FilterKind parse_filter_kind(const std::string& name) {
  if (name == "derivative") return FilterKind::Derivative;
  if (name == "literal") return FilterKind::Literal;
  throw ContractError("unknown filter bank '" + name + "' (expected derivative|literal)");
}

std::string to_string(FilterKind kind) {
  return kind == FilterKind::Derivative ? "derivative" : "literal";
}

FilterBank FilterBank::make(FilterKind kind, double alpha, double epsilon) {
  const double second = kind == FilterKind::Derivative ? -1.0 : 1.0;
  FilterBank bank;
  bank.filters.push_back(Kernel{1, 2, {1.0, second}});
  bank.filters.push_back(Kernel{2, 1, {1.0, second}});
  bank.alpha = alpha;
  bank.epsilon = epsilon;
  return bank;
}

void FilterBank::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractError("prior alpha must lie in (0, 1]");
  if (!(epsilon >= 0.0)) throw ContractError("prior epsilon must be non-negative");
  if (filters.empty()) throw ContractError("filter bank is empty");
  for (const Kernel& k : filters) {
    if (k.rows == 0 || k.cols == 0 || k.taps.size() != k.rows * k.cols) {
      throw ContractError("malformed kernel in filter bank");
    }
  }
}

GradientMap gradient_maps(std::span<const double> image, const ImageShape& shape,
                          const FilterBank& bank) {
  bank.validate();
  GradientMap map;
  for (const Kernel& k : bank.filters) {
    check_image(image, shape, k);
    const std::size_t oh = shape.height - k.rows + 1;
    const std::size_t ow = shape.width - k.cols + 1;
    Tensor t({oh, ow, shape.channels});
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t q = 0; q < ow; ++q) {
        for (std::size_t c = 0; c < shape.channels; ++c) {
          t[(r * ow + q) * shape.channels + c] = response(image, shape, k, r, q, c);
        }
      }
    }
    map.responses.push_back(std::move(t));
  }
  return map;
}

double prior_penalty(std::span<const double> image, const ImageShape& shape,
                     const FilterBank& bank) {
  return prior_penalty_and_gradient(image, shape, bank, 0.0, {});
}

Vector prior_gradient(std::span<const double> image, const ImageShape& shape,
                      const FilterBank& bank) {
  if (!(bank.epsilon > 0.0)) {
    throw ContractError("prior gradient needs epsilon > 0 (|z|^alpha is not differentiable at 0)");
  }
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(shape.size()));
  prior_penalty_and_gradient(image, shape, bank, 1.0,
                             std::span<double>(grad.data(), static_cast<std::size_t>(grad.size())));
  return grad;
}

double prior_penalty_and_gradient(std::span<const double> image, const ImageShape& shape,
                                  const FilterBank& bank, double weight, std::span<double> grad) {
  bank.validate();
  const bool want_grad = !grad.empty();
  if (want_grad) {
    if (!(bank.epsilon > 0.0)) {
      throw ContractError("prior gradient needs epsilon > 0 (|z|^alpha is not differentiable at 0)");
    }
    if (grad.size() != shape.size()) throw ContractError("gradient buffer does not match image");
  }
  const double half_alpha = 0.5 * bank.alpha;
  double total = 0.0;
  for (const Kernel& k : bank.filters) {
    check_image(image, shape, k);
    const std::size_t oh = shape.height - k.rows + 1;
    const std::size_t ow = shape.width - k.cols + 1;
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t q = 0; q < ow; ++q) {
        for (std::size_t c = 0; c < shape.channels; ++c) {
          const double z = response(image, shape, k, r, q, c);
          const double s = z * z + bank.epsilon;
          // (z^2 + eps)^(a/2); for eps = 0 this is |z|^a with 0^a = 0.
          const double value = s > 0.0 ? std::pow(s, half_alpha) : 0.0;
          total += value;
          if (!want_grad) continue;
          const double dz = weight * bank.alpha * z * value / s;
          for (std::size_t u = 0; u < k.rows; ++u) {
            for (std::size_t v = 0; v < k.cols; ++v) {
              grad[shape.index(r + u, q + v, c)] += dz * k.at(u, v);
            }
          }
        }
      }
    }
  }
  return total;
}

}  // namespace prflow
