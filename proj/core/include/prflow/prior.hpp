#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "prflow/tensor.hpp"

namespace prflow {

/// Small 2-D correlation kernel, row-major.
struct Kernel {
  std::size_t rows = 1;
  std::size_t cols = 1;
  std::vector<double> taps;

  double at(std::size_t r, std::size_t c) const { return taps[r * cols + c]; }
};

enum class FilterKind {
  Derivative,  // [1, -1] and its transpose
  Literal,     // [1, 1] and its transpose
};

FilterKind parse_filter_kind(const std::string& name);
std::string to_string(FilterKind kind);

/// Hyper-Laplacian gradient prior: penalty sum_f sum_p (z^2 + eps)^(alpha/2)
/// over the valid correlation responses z = x (*) f.
struct FilterBank {
  std::vector<Kernel> filters;
  double alpha = 1.0 / 3.0;
  double epsilon = 1e-6;

  static FilterBank make(FilterKind kind, double alpha = 1.0 / 3.0, double epsilon = 1e-6);

  /// alpha in (0, 1], epsilon >= 0, at least one well-formed filter.
  void validate() const;
};

/// Per-filter valid-correlation responses, each shaped {H', W', C}.
struct GradientMap {
  std::vector<Tensor> responses;
};

GradientMap gradient_maps(std::span<const double> image, const ImageShape& shape,
                          const FilterBank& bank);

double prior_penalty(std::span<const double> image, const ImageShape& shape,
                     const FilterBank& bank);

/// d prior_penalty / d image. Requires epsilon > 0.
Vector prior_gradient(std::span<const double> image, const ImageShape& shape,
                      const FilterBank& bank);

/// Penalty and gradient in one sweep; gradient is added to `grad` scaled by `weight`.
double prior_penalty_and_gradient(std::span<const double> image, const ImageShape& shape,
                                  const FilterBank& bank, double weight, std::span<double> grad);

}  // namespace prflow
