#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace prflow {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment estimates for one flat parameter vector.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;

  explicit AdamState(std::size_t size = 0) : first_moment(size, 0.0), second_moment(size, 0.0) {}
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Bias-corrected Adam update applied in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamOptions& options);

}  // namespace prflow
