#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prflow/adam.hpp"
#include "prflow/data.hpp"
#include "prflow/flow.hpp"
#include "prflow/imputer.hpp"
#include "prflow/prior.hpp"
#include "prflow/random.hpp"
#include "prflow/tensor.hpp"

namespace prflow {

struct TrainConfig {
  double alpha = 1.0 / 3.0;
  double learning_rate = 1e-4;
  std::size_t batch_size = 64;
  /// Prior weight; nullopt selects the automatic equalisation rule.
  std::optional<double> lambda;
  double j2_weight = 1.0;
  std::size_t epochs_per_phase = 1;
  std::size_t max_rounds = 50;
  double convergence_tol = 1e-3;
  std::size_t convergence_window = 5;
  std::uint64_t seed = 0;
  FilterKind filters = FilterKind::Derivative;
  double prior_epsilon = 1e-6;
  /// Add U(0,1)/256 dequantisation noise to flow-phase batches.
  bool dequantize = false;

  void validate() const;
  FilterBank filter_bank() const;
};

/// Everything that evolves during training.
struct TrainState {
  FlowNetwork flow;
  ImputerNetwork imputer;
  AdamState flow_optimizer;
  AdamState imputer_optimizer;
  std::size_t round = 0;
  /// Current imputations x^(n) of the training set, one row per sample.
  Matrix imputed;
  std::vector<double> j2_history;
  std::optional<double> lambda;
  double learning_rate = 1e-4;
  Rng rng;
};

struct ImputerLoss {
  double j1 = 0.0;
  double j2 = 0.0;
  double j3 = 0.0;
  double total = 0.0;
  /// Gradient of `total` with respect to the imputer parameters (when requested).
  std::vector<double> gradient;
};

struct LossWeights {
  double j2_weight = 1.0;
  double lambda = 1.0;
};

/// Mean negative log-likelihood of the batch.
double loss_flow(const Matrix& batch, const FlowNetwork& flow);

/// Mean NLL of the pre-merge reconstructions G^-1(H(G(x_prev))).
double loss_j1(const Matrix& x_prev, const FlowNetwork& flow, const ImputerNetwork& imputer);

/// Mean over samples of the squared error at observed entries between the
/// pre-merge reconstruction and the observations. Samples without observed
/// entries contribute 0 and trigger a warning.
double loss_j2(const Matrix& x_prev, const Matrix& observed, const Matrix& masks,
               const FlowNetwork& flow, const ImputerNetwork& imputer);

/// Mean prior penalty of the pre-merge reconstructions.
double loss_j3(const Matrix& x_prev, const ImageShape& shape, const FlowNetwork& flow,
               const ImputerNetwork& imputer, const FilterBank& bank);

/// J1 + j2_weight * J2 + lambda * J3 with every component reported, and the
/// exact gradient with respect to the imputer parameters when `with_gradient`.
ImputerLoss total_imputer_loss(const Matrix& x_prev, const Matrix& observed, const Matrix& masks,
                               const ImageShape& shape, const FlowNetwork& flow,
                               const ImputerNetwork& imputer, const FilterBank& bank,
                               const LossWeights& weights, bool with_gradient);

/// lambda = |J1| / J3 from the first imputer batch; falls back to 1 (with a
/// warning) when J3 <= 0 or J1 == 0.
double auto_lambda(double j1_0, double j3_0);

/// True when the last `convergence_window` J2 values move by less than
/// `convergence_tol` (relative), or when max_rounds have been completed.
bool has_converged(const std::vector<double>& j2_history, const TrainConfig& config);

struct StepRecord {
  std::size_t round = 0;
  std::string phase;  // "flow" or "imputer"
  std::size_t step = 0;
  double j = 0.0;
  double j1 = 0.0;
  double j2 = 0.0;
  double j3 = 0.0;
  double total = 0.0;
};

struct RoundRecord {
  std::size_t round = 0;
  double j = 0.0;
  double j1 = 0.0;
  double j2 = 0.0;
  double j3 = 0.0;
  double lambda = 0.0;
  double learning_rate = 0.0;
  double wall_time = 0.0;
  bool diverged = false;
};

struct TrainObserver {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const RoundRecord&)> on_round;
};

struct ModelOptions {
  FlowOptions flow;
  ImputerOptions imputer;
};

/// Default architecture for `shape`.
ModelOptions default_model_options(const ImageShape& shape);

/// Round-0 state: initialised networks and the nearest-neighbour fill of the
/// training observations.
TrainState initial_state(const MaskedDataset& data, const TrainConfig& config,
                         const ModelOptions& model);

/// One alternation: flow phase (theta only), imputer phase (phi only),
/// then re-imputation of the whole training set. On a non-finite loss the
/// round is abandoned, parameters and optimiser state are restored and the
/// learning rate is halved; the returned record has `diverged` set.
RoundRecord train_round(TrainState& state, const TrainConfig& config, const MaskedDataset& data,
                        const TrainObserver& observer = {});

/// Runs rounds until has_converged(). Gives up with NumericalError after
/// `max_divergences` consecutive abandoned rounds.
void train(TrainState& state, const TrainConfig& config, const MaskedDataset& data,
           const TrainObserver& observer = {}, std::size_t max_divergences = 8);

/// Imputes a held-out masked set: nearest-neighbour start followed by
/// `refine_steps` applications of impute().
Matrix impute_dataset(const MaskedDataset& data, const FlowNetwork& flow,
                      const ImputerNetwork& imputer, std::size_t refine_steps = 1);

}  // namespace prflow
