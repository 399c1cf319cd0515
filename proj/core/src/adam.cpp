#include "prflow/adam.hpp"

#include <cmath>

#include "prflow/error.hpp"

namespace prflow {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamOptions& options) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw ContractError("adam_step: parameter, gradient and state sizes differ");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = options.beta1 * m + (1.0 - options.beta1) * grads[i];
    v = options.beta2 * v + (1.0 - options.beta2) * grads[i] * grads[i];
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    params[i] -= options.learning_rate * m_hat / (std::sqrt(v_hat) + options.epsilon);
  }
}

}  // namespace prflow
