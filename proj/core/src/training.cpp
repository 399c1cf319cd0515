#include "prflow/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "prflow/error.hpp"
#include "prflow/log.hpp"

namespace prflow {
namespace {

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

void require_batch(const Matrix& x_prev, const Matrix& observed, const Matrix& masks) {
  if (x_prev.rows() == 0) throw ContractError("empty batch");
  if (observed.rows() != x_prev.rows() || observed.cols() != x_prev.cols() ||
      masks.rows() != x_prev.rows() || masks.cols() != x_prev.cols()) {
    throw ContractError("batch, observations and masks disagree in shape");
  }
}

struct Snapshot {
  FlowNetwork flow;
  ImputerNetwork imputer;
  AdamState flow_optimizer;
  AdamState imputer_optimizer;
  std::optional<double> lambda;
  Rng rng;
};

Snapshot take_snapshot(const TrainState& s) {
  return {s.flow, s.imputer, s.flow_optimizer, s.imputer_optimizer, s.lambda, s.rng};
}

void restore(TrainState& s, Snapshot snap) {
  s.flow = std::move(snap.flow);
  s.imputer = std::move(snap.imputer);
  s.flow_optimizer = std::move(snap.flow_optimizer);
  s.imputer_optimizer = std::move(snap.imputer_optimizer);
  s.lambda = snap.lambda;
  s.rng = snap.rng;
}

bool finite_all(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

void TrainConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractError("alpha must lie in (0, 1]");
  if (!(learning_rate > 0.0)) throw ContractError("learning rate must be positive");
  if (batch_size == 0) throw ContractError("batch size must be at least 1");
  if (lambda && !(*lambda >= 0.0)) throw ContractError("lambda must be non-negative");
  if (!(j2_weight >= 0.0)) throw ContractError("j2 weight must be non-negative");
  if (epochs_per_phase == 0) throw ContractError("epochs per phase must be at least 1");
  if (max_rounds == 0) throw ContractError("max rounds must be at least 1");
  if (!(convergence_tol > 0.0)) throw ContractError("convergence tolerance must be positive");
  if (convergence_window < 2) throw ContractError("convergence window must be at least 2");
  if (!(prior_epsilon > 0.0)) throw ContractError("prior epsilon must be positive for training");
}

FilterBank TrainConfig::filter_bank() const {
  return FilterBank::make(filters, alpha, prior_epsilon);
}

double loss_flow(const Matrix& batch, const FlowNetwork& flow) {
  if (batch.rows() == 0) throw ContractError("empty batch");
  return -flow.log_likelihood(batch).mean();
}

ImputerLoss total_imputer_loss(const Matrix& x_prev, const Matrix& observed, const Matrix& masks,
                               const ImageShape& shape, const FlowNetwork& flow,
                               const ImputerNetwork& imputer, const FilterBank& bank,
                               const LossWeights& weights, bool with_gradient) {
  require_batch(x_prev, observed, masks);
  if (static_cast<std::size_t>(x_prev.cols()) != shape.size()) {
    throw ContractError("batch width does not match the image shape");
  }
  const Eigen::Index rows = x_prev.rows();
  const double inv_b = 1.0 / static_cast<double>(rows);

  // G is frozen in this phase: its forward pass needs no tape.
  const Matrix latent = flow.forward(x_prev).values;
  ImputerNetwork::Tape imputer_tape;
  const Matrix y_rec = imputer.apply(latent, imputer_tape);
  FlowNetwork::Tape inverse_tape;
  const FlowPass inv = flow.inverse(y_rec, with_gradient ? &inverse_tape : nullptr);
  const Matrix& x_rec = inv.values;

  ImputerLoss loss;
  // log p(x_rec) = log N(G(x_rec)) + logdet_G(x_rec), and G(x_rec) = y_rec.
  loss.j1 = -(gaussian_log_density(y_rec) + inv.logdet).mean();

  Matrix grad_x = with_gradient ? Matrix::Zero(rows, x_prev.cols()) : Matrix{};
  const Matrix diff = (x_rec - observed).cwiseProduct(masks);
  std::size_t empty = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double n_obs = masks.row(i).sum();
    if (n_obs <= 0.0) {
      ++empty;
      continue;
    }
    loss.j2 += diff.row(i).squaredNorm() / n_obs * inv_b;
    if (with_gradient) {
      grad_x.row(i) += (2.0 * weights.j2_weight * inv_b / n_obs) * diff.row(i);
    }
  }
  if (empty > 0) {
    warn("J2: " + std::to_string(empty) + " sample(s) without observed entries contribute 0");
  }

  const auto d = static_cast<std::size_t>(x_prev.cols());
  for (Eigen::Index i = 0; i < rows; ++i) {
    std::span<const double> row(x_rec.row(i).data(), d);
    std::span<double> g = with_gradient ? std::span<double>(grad_x.row(i).data(), d)
                                        : std::span<double>{};
    loss.j3 += prior_penalty_and_gradient(row, shape, bank, weights.lambda * inv_b, g) * inv_b;
  }

  loss.total = loss.j1 + weights.j2_weight * loss.j2 + weights.lambda * loss.j3;
  if (!with_gradient) return loss;

  const Vector grad_logdet = Vector::Constant(rows, -inv_b);
  Matrix grad_y = flow.backward_inverse(inverse_tape, grad_x, grad_logdet, {});
  grad_y += y_rec * inv_b;
  loss.gradient.assign(imputer.parameter_count(), 0.0);
  imputer.backward(imputer_tape, grad_y, loss.gradient);
  return loss;
}

double loss_j1(const Matrix& x_prev, const FlowNetwork& flow, const ImputerNetwork& imputer) {
  if (x_prev.rows() == 0) throw ContractError("empty batch");
  const Matrix x_rec = reconstruct(x_prev, flow, imputer);
  return -flow.log_likelihood(x_rec).mean();
}

double loss_j2(const Matrix& x_prev, const Matrix& observed, const Matrix& masks,
               const FlowNetwork& flow, const ImputerNetwork& imputer) {
  require_batch(x_prev, observed, masks);
  const Matrix x_rec = reconstruct(x_prev, flow, imputer);
  const Matrix diff = (x_rec - observed).cwiseProduct(masks);
  double total = 0.0;
  std::size_t empty = 0;
  for (Eigen::Index i = 0; i < x_prev.rows(); ++i) {
    const double n_obs = masks.row(i).sum();
    if (n_obs <= 0.0) {
      ++empty;
      continue;
    }
    total += diff.row(i).squaredNorm() / n_obs;
  }
  if (empty > 0) {
    warn("J2: " + std::to_string(empty) + " sample(s) without observed entries contribute 0");
  }
  return total / static_cast<double>(x_prev.rows());
}

double loss_j3(const Matrix& x_prev, const ImageShape& shape, const FlowNetwork& flow,
               const ImputerNetwork& imputer, const FilterBank& bank) {
  if (x_prev.rows() == 0) throw ContractError("empty batch");
  const Matrix x_rec = reconstruct(x_prev, flow, imputer);
  double total = 0.0;
  const auto d = static_cast<std::size_t>(x_rec.cols());
  for (Eigen::Index i = 0; i < x_rec.rows(); ++i) {
    total += prior_penalty(std::span<const double>(x_rec.row(i).data(), d), shape, bank);
  }
  return total / static_cast<double>(x_rec.rows());
}

double auto_lambda(double j1_0, double j3_0) {
  if (!(j3_0 > 0.0) || !std::isfinite(j3_0)) {
    warn("auto lambda: J3 = " + std::to_string(j3_0) + " is not positive; using lambda = 1");
    return 1.0;
  }
  if (j1_0 == 0.0 || !std::isfinite(j1_0)) {
    warn("auto lambda: J1 = " + std::to_string(j1_0) + " cannot be matched; using lambda = 1");
    return 1.0;
  }
  return std::abs(j1_0) / j3_0;
}

bool has_converged(const std::vector<double>& j2_history, const TrainConfig& config) {
  if (j2_history.size() >= config.max_rounds) return true;
  if (j2_history.size() < config.convergence_window) return false;
  double worst = 0.0;
  const std::size_t start = j2_history.size() - config.convergence_window;
  for (std::size_t k = start + 1; k < j2_history.size(); ++k) {
    const double prev = j2_history[k - 1];
    const double change = std::abs(j2_history[k] - prev) / std::max(std::abs(prev), 1e-300);
    worst = std::max(worst, change);
  }
  return worst < config.convergence_tol;
}

ModelOptions default_model_options(const ImageShape& shape) {
  ModelOptions m;
  m.flow.dim = shape.size();
  m.imputer.dim = shape.size();
  return m;
}

TrainState initial_state(const MaskedDataset& data, const TrainConfig& config,
                         const ModelOptions& model) {
  config.validate();
  if (model.flow.dim != data.shape.size() || model.imputer.dim != data.shape.size()) {
    throw ContractError("model dimension does not match the dataset");
  }
  TrainState state{FlowNetwork(model.flow),
                   ImputerNetwork(model.imputer),
                   AdamState{},
                   AdamState{},
                   0,
                   shallow_fill(data),
                   {},
                   config.lambda,
                   config.learning_rate,
                   Rng(config.seed)};
  state.flow.init(state.rng);
  state.imputer.init(state.rng);
  state.flow_optimizer = AdamState(state.flow.parameter_count());
  state.imputer_optimizer = AdamState(state.imputer.parameter_count());
  return state;
}

RoundRecord train_round(TrainState& state, const TrainConfig& config, const MaskedDataset& data,
                        const TrainObserver& observer) {
  config.validate();
  if (state.imputed.rows() != data.observed.rows() || state.imputed.cols() != data.observed.cols()) {
    throw ContractError("training state does not match the dataset");
  }
  const auto start_time = std::chrono::steady_clock::now();
  const std::size_t n = data.count();
  const FilterBank bank = config.filter_bank();
  Snapshot snapshot = take_snapshot(state);

  RoundRecord record;
  record.round = state.round;
  try {
    AdamOptions adam{state.learning_rate};

    // Flow phase: theta only, training data fixed.
    std::size_t steps = 0;
    double j_sum = 0.0;
    for (std::size_t epoch = 0; epoch < config.epochs_per_phase; ++epoch) {
      const auto order = permutation(state.rng, n);
      for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
        const std::size_t len = std::min(config.batch_size, n - begin);
        Matrix batch = gather_rows(state.imputed, std::span(order).subspan(begin, len));
        if (config.dequantize) {
          for (Eigen::Index i = 0; i < batch.size(); ++i) {
            batch.data()[i] = (batch.data()[i] * 255.0 + uniform01(state.rng)) / 256.0;
          }
        }
        GradientResult g = state.flow.nll_gradient(batch);
        if (!std::isfinite(g.loss) || !finite_all(g.gradient)) {
          throw NumericalError("non-finite flow loss");
        }
        std::vector<double> params = state.flow.parameters();
        adam_step(params, g.gradient, state.flow_optimizer, adam);
        state.flow.assign_parameters(params);
        j_sum += g.loss;
        ++steps;
        if (observer.on_step) {
          observer.on_step(StepRecord{state.round, "flow", steps, g.loss, 0, 0, 0, g.loss});
        }
      }
    }
    record.j = j_sum / static_cast<double>(steps);

    // Imputer phase: phi only, G frozen.
    steps = 0;
    double j1_sum = 0.0, j2_sum = 0.0, j3_sum = 0.0;
    for (std::size_t epoch = 0; epoch < config.epochs_per_phase; ++epoch) {
      const auto order = permutation(state.rng, n);
      for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
        const auto rows = std::span(order).subspan(begin, std::min(config.batch_size, n - begin));
        const Matrix x_prev = gather_rows(state.imputed, rows);
        const Matrix observed = gather_rows(data.observed, rows);
        const Matrix masks = gather_rows(data.masks, rows);
        if (!state.lambda) {
          const ImputerLoss probe = total_imputer_loss(x_prev, observed, masks, data.shape,
                                                       state.flow, state.imputer, bank,
                                                       {config.j2_weight, 0.0}, false);
          state.lambda = auto_lambda(probe.j1, probe.j3);
        }
        ImputerLoss loss =
            total_imputer_loss(x_prev, observed, masks, data.shape, state.flow, state.imputer,
                               bank, {config.j2_weight, *state.lambda}, true);
        if (!std::isfinite(loss.total) || !finite_all(loss.gradient)) {
          throw NumericalError("non-finite imputer loss");
        }
        std::vector<double> params = state.imputer.parameters();
        adam_step(params, loss.gradient, state.imputer_optimizer, adam);
        state.imputer.assign_parameters(params);
        j1_sum += loss.j1;
        j2_sum += loss.j2;
        j3_sum += loss.j3;
        ++steps;
        if (observer.on_step) {
          observer.on_step(StepRecord{state.round, "imputer", steps, 0, loss.j1, loss.j2, loss.j3,
                                      loss.total});
        }
      }
    }
    record.j1 = j1_sum / static_cast<double>(steps);
    record.j2 = j2_sum / static_cast<double>(steps);
    record.j3 = j3_sum / static_cast<double>(steps);

    // Re-imputation of the whole training set.
    Matrix next = impute_batch(state.imputed, data.observed, data.masks, state.flow, state.imputer);
    if (!next.allFinite()) throw NumericalError("non-finite imputations");
    state.imputed = std::move(next);
  } catch (const NumericalError& e) {
    restore(state, std::move(snapshot));
    state.learning_rate *= 0.5;
    warn(std::string("round ") + std::to_string(state.round) + " diverged (" + e.what() +
         "); restored parameters, learning rate now " + std::to_string(state.learning_rate));
    record.diverged = true;
    record.learning_rate = state.learning_rate;
    record.lambda = state.lambda.value_or(0.0);
    record.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    if (observer.on_round) observer.on_round(record);
    return record;
  }

  state.j2_history.push_back(record.j2);
  state.round += 1;
  record.lambda = *state.lambda;
  record.learning_rate = state.learning_rate;
  record.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  if (observer.on_round) observer.on_round(record);
  return record;
}

void train(TrainState& state, const TrainConfig& config, const MaskedDataset& data,
           const TrainObserver& observer, std::size_t max_divergences) {
  std::size_t failures = 0;
  while (!has_converged(state.j2_history, config)) {
    const RoundRecord r = train_round(state, config, data, observer);
    if (r.diverged) {
      if (++failures >= max_divergences) {
        throw NumericalError("training diverged " + std::to_string(failures) +
                             " times in a row");
      }
    } else {
      failures = 0;
    }
  }
}

Matrix impute_dataset(const MaskedDataset& data, const FlowNetwork& flow,
                      const ImputerNetwork& imputer, std::size_t refine_steps) {
  Matrix x = shallow_fill(data);
  for (std::size_t k = 0; k < refine_steps; ++k) {
    x = impute_batch(x, data.observed, data.masks, flow, imputer);
  }
  return x;
}

}  // namespace prflow
