#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "prflow/checkpoint.hpp"
#include "prflow/error.hpp"
#include "prflow/training.hpp"
#include "support.hpp"

using namespace prflow;
using prflow::test::central_diff;
using prflow::test::max_rel_err;
using prflow::test::random_matrix;
using prflow::test::WarningCapture;

namespace {

ModelOptions tiny_model(const ImageShape& shape) {
  ModelOptions m = default_model_options(shape);
  m.flow.hidden_width = 16;
  m.imputer.hidden_width = 16;
  return m;
}

struct Toy {
  ImageDataset images;
  MaskedDataset masked;
};

Toy toy(std::size_t count, double rate = 0.5, std::uint64_t seed = 5) {
  Toy t;
  t.images = generate_synthetic(SyntheticKind::Blocks, count, {6, 6, 1}, seed);
  t.masked = apply_masks(t.images, MaskSpec{rate, seed}, MaskStream::Train);
  return t;
}

TrainConfig toy_config() {
  TrainConfig c;
  c.batch_size = 8;
  c.learning_rate = 1e-3;
  c.seed = 11;
  return c;
}

FlowNetwork identity_flow(std::size_t dim) {
  FlowOptions o;
  o.dim = dim;
  o.hidden_width = 8;
  return FlowNetwork(o);
}

ImputerNetwork identity_imputer(std::size_t dim) {
  ImputerOptions o;
  o.dim = dim;
  o.hidden_width = 8;
  ImputerNetwork h(o);
  h.init_identity();
  return h;
}

}  // namespace

TEST(TrainConfig, DefaultsAndValidation) {
  const TrainConfig c;
  EXPECT_DOUBLE_EQ(c.alpha, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(c.learning_rate, 1e-4);
  EXPECT_EQ(c.batch_size, 64u);
  EXPECT_FALSE(c.lambda.has_value());
  EXPECT_DOUBLE_EQ(c.j2_weight, 1.0);
  EXPECT_EQ(c.epochs_per_phase, 1u);
  EXPECT_DOUBLE_EQ(c.convergence_tol, 1e-3);
  EXPECT_EQ(c.convergence_window, 5u);
  EXPECT_NO_THROW(c.validate());
  TrainConfig bad = c;
  bad.learning_rate = 0.0;
  EXPECT_THROW(bad.validate(), ContractError);
  bad = c;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ContractError);
  bad = c;
  bad.alpha = 1.2;
  EXPECT_THROW(bad.validate(), ContractError);
}

TEST(LossFlow, IdentityOnZeros) {
  const FlowNetwork flow = identity_flow(6);
  EXPECT_NEAR(loss_flow(Matrix::Zero(3, 6), flow), 3.0 * std::log(2.0 * std::numbers::pi), 1e-14);
  Rng rng(1);
  FlowNetwork random = identity_flow(6);
  random.randomize(rng, 0.5);
  const Matrix x = random_matrix(rng, 5, 6);
  EXPECT_DOUBLE_EQ(loss_flow(x, random), -random.log_likelihood(x).mean());
}

TEST(LossFlow, DecreasesOnTwoClusters) {
  Rng rng(2);
  Matrix data(64, 2);
  for (Eigen::Index i = 0; i < 64; ++i) {
    const double cx = i % 2 == 0 ? -1.5 : 1.5;
    data(i, 0) = cx + 0.2 * standard_normal(rng);
    data(i, 1) = 0.5 * cx + 0.2 * standard_normal(rng);
  }
  FlowOptions o;
  o.dim = 2;
  o.hidden_width = 16;
  FlowNetwork flow(o);
  flow.init(rng);
  AdamState state(flow.parameter_count());
  const double before = loss_flow(data, flow);
  for (int step = 0; step < 50; ++step) {
    const GradientResult g = flow.nll_gradient(data);
    auto p = flow.parameters();
    adam_step(p, g.gradient, state, AdamOptions{1e-2});
    flow.assign_parameters(p);
  }
  EXPECT_LT(loss_flow(data, flow), before - 0.1);
}

TEST(LossJ1, IdentityPipelineEqualsLossFlow) {
  Rng rng(3);
  const Matrix x = random_matrix(rng, 4, 6, 0, 1);
  const FlowNetwork flow = identity_flow(6);
  EXPECT_DOUBLE_EQ(loss_j1(x, flow, identity_imputer(6)), loss_flow(x, flow));
}

TEST(LossJ2, IdentityAndOffset) {
  Rng rng(4);
  const Matrix x = random_matrix(rng, 4, 6, 0, 1);
  Matrix masks = Matrix::Ones(4, 6);
  masks(0, 1) = masks(2, 3) = 0.0;
  const Matrix observed = x.cwiseProduct(masks);
  const FlowNetwork flow = identity_flow(6);
  ImputerNetwork h = identity_imputer(6);
  EXPECT_EQ(loss_j2(x, observed, masks, flow, h), 0.0);
  h.mlp().bias(h.mlp().layer_count() - 1).setConstant(0.1);
  EXPECT_NEAR(loss_j2(x, observed, masks, flow, h), 0.01, 1e-15);
}

TEST(LossJ2, EmptyMaskWarnsAndContributesZero) {
  Rng rng(5);
  const Matrix x = random_matrix(rng, 2, 6, 0, 1);
  WarningCapture warnings;
  EXPECT_EQ(loss_j2(x, x, Matrix::Zero(2, 6), identity_flow(6), identity_imputer(6)), 0.0);
  EXPECT_EQ(warnings.messages.size(), 1u);
}

TEST(LossJ3, IdentityPipelineHandValues) {
  const ImageShape s{2, 2, 1};
  const FlowNetwork flow = identity_flow(4);
  const ImputerNetwork h = identity_imputer(4);
  const FilterBank exact = FilterBank::make(FilterKind::Derivative, 1.0 / 3.0, 0.0);
  EXPECT_EQ(loss_j3(Matrix::Constant(3, 4, 0.3), s, flow, h, exact), 0.0);
  Matrix x(1, 4);
  x << 0, 1, 0, 1;
  EXPECT_NEAR(loss_j3(x, s, flow, h, exact), 2.0, 1e-15);
}

TEST(TotalLoss, ComponentsAndWeights) {
  const Toy t = toy(8);
  TrainConfig c = toy_config();
  const ModelOptions m = tiny_model(t.masked.shape);
  TrainState st = initial_state(t.masked, c, m);
  st.flow.randomize(st.rng, 0.3);
  const FilterBank bank = c.filter_bank();
  const Matrix& x = st.imputed;
  const ImputerLoss zero = total_imputer_loss(x, t.masked.observed, t.masked.masks, t.masked.shape,
                                              st.flow, st.imputer, bank, {0.0, 0.0}, false);
  EXPECT_NEAR(zero.total, zero.j1, 1e-12);
  EXPECT_NEAR(zero.j1, loss_j1(x, st.flow, st.imputer), 1e-9 * std::abs(zero.j1));
  EXPECT_NEAR(zero.j2, loss_j2(x, t.masked.observed, t.masked.masks, st.flow, st.imputer), 1e-12);
  EXPECT_NEAR(zero.j3, loss_j3(x, t.masked.shape, st.flow, st.imputer, bank), 1e-9);
  const ImputerLoss w = total_imputer_loss(x, t.masked.observed, t.masked.masks, t.masked.shape,
                                           st.flow, st.imputer, bank, {2.0, 0.5}, false);
  EXPECT_NEAR(w.total, w.j1 + 2.0 * w.j2 + 0.5 * w.j3, 1e-9);
}

TEST(TotalLoss, GradientMatchesFiniteDifferences) {
  const Toy t = toy(4, 0.4);
  const ModelOptions m = tiny_model(t.masked.shape);
  TrainState st = initial_state(t.masked, toy_config(), m);
  st.flow.randomize(st.rng, 0.3);
  Rng rng(6);
  // Move the imputer away from identity so every term is active.
  {
    ImputerNetwork& h = st.imputer;
    auto p = h.parameters();
    for (auto& v : p) v += 0.05 * standard_normal(rng);
    h.assign_parameters(p);
  }
  const FilterBank bank = toy_config().filter_bank();
  for (const LossWeights w : {LossWeights{1.0, 0.0}, LossWeights{0.0, 1.0}, LossWeights{3.0, 0.7}}) {
    const ImputerLoss l = total_imputer_loss(st.imputed, t.masked.observed, t.masked.masks,
                                             t.masked.shape, st.flow, st.imputer, bank, w, true);
    const auto fd = central_diff(
        [&](std::span<const double> p) {
          ImputerNetwork probe = st.imputer;
          probe.assign_parameters(p);
          return total_imputer_loss(st.imputed, t.masked.observed, t.masked.masks, t.masked.shape,
                                    st.flow, probe, bank, w, false)
              .total;
        },
        st.imputer.parameters(), 1e-6);
    EXPECT_LT(max_rel_err(l.gradient, fd, 1e-5), 1e-3) << w.j2_weight << " " << w.lambda;
  }
}

TEST(AutoLambda, Rule) {
  EXPECT_DOUBLE_EQ(auto_lambda(10.0, 5.0), 2.0);
  EXPECT_DOUBLE_EQ(auto_lambda(4.0, 4.0), 1.0);
  EXPECT_DOUBLE_EQ(auto_lambda(-10.0, 5.0), 2.0);
  WarningCapture warnings;
  EXPECT_DOUBLE_EQ(auto_lambda(3.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(auto_lambda(3.0, -1.0), 1.0);
  EXPECT_EQ(warnings.messages.size(), 2u);
}

TEST(Convergence, Examples) {
  TrainConfig c;
  EXPECT_TRUE(has_converged({1.0, 1.0, 1.0, 1.0, 1.0}, c));
  EXPECT_FALSE(has_converged({16.0, 8.0, 4.0, 2.0, 1.0, 0.5}, c));
  EXPECT_FALSE(has_converged({1.0, 1.0, 1.0}, c));
  c.max_rounds = 3;
  EXPECT_TRUE(has_converged({16.0, 8.0, 4.0}, c));
  c.max_rounds = 50;
  // Only the trailing window matters.
  EXPECT_TRUE(has_converged({9.0, 1.0, 1.0, 1.0, 1.0, 1.0}, c));
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> p{0.5, -1.0, 2.0};
  const auto before = p;
  AdamState s(3);
  adam_step(p, std::vector<double>(3, 0.0), s, {});
  EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  std::vector<double> p{0.0, 0.0, 0.0};
  AdamState s(3);
  const AdamOptions o{1e-3};
  adam_step(p, std::vector<double>{3.0, -0.02, 1e3}, s, o);
  EXPECT_NEAR(p[0], -1e-3, 1e-9);
  EXPECT_NEAR(p[1], 1e-3, 1e-9);
  EXPECT_NEAR(p[2], -1e-3, 1e-9);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, Deterministic) {
  Rng rng(7);
  std::vector<std::vector<double>> grads(20, std::vector<double>(5));
  for (auto& g : grads)
    for (auto& v : g) v = standard_normal(rng);
  auto run = [&] {
    std::vector<double> p(5, 0.1);
    AdamState s(5);
    for (const auto& g : grads) adam_step(p, g, s, {});
    return p;
  };
  EXPECT_EQ(run(), run());
  std::vector<double> p(3);
  AdamState s(2);
  EXPECT_THROW(adam_step(p, std::vector<double>(3), s, {}), ContractError);
}

TEST(TrainRound, IdentityPipelineIsFixedPoint) {
  const Toy t = toy(16);
  const Matrix x = shallow_fill(t.masked);
  const Matrix out = impute_batch(x, t.masked.observed, t.masked.masks, identity_flow(36),
                                  identity_imputer(36));
  EXPECT_EQ(out, x);
}

TEST(TrainRound, ObservedEntriesAndPhaseIsolation) {
  const Toy t = toy(16);
  const TrainConfig c = toy_config();
  TrainState st = initial_state(t.masked, c, tiny_model(t.masked.shape));
  std::vector<double> flow_after_flow_phase, imputer_before;
  bool imputer_phase_started = false;
  int violations = 0;
  imputer_before = st.imputer.parameters();
  TrainObserver obs;
  obs.on_step = [&](const StepRecord& r) {
    if (r.phase == "flow") {
      if (st.imputer.parameters() != imputer_before) ++violations;
    } else {
      if (!imputer_phase_started) {
        imputer_phase_started = true;
        flow_after_flow_phase = st.flow.parameters();
      } else if (st.flow.parameters() != flow_after_flow_phase) {
        ++violations;
      }
    }
  };
  for (int round = 0; round < 3; ++round) {
    imputer_before = st.imputer.parameters();
    imputer_phase_started = false;
    const RoundRecord rec = train_round(st, c, t.masked, obs);
    EXPECT_FALSE(rec.diverged);
    EXPECT_EQ(st.flow.parameters(), flow_after_flow_phase);
    for (Eigen::Index i = 0; i < st.imputed.size(); ++i) {
      if (t.masked.masks.data()[i] == 1.0) {
        ASSERT_EQ(st.imputed.data()[i], t.masked.observed.data()[i]);
      }
    }
  }
  EXPECT_EQ(violations, 0);
  EXPECT_EQ(st.round, 3u);
  EXPECT_EQ(st.j2_history.size(), 3u);
}

TEST(TrainRound, AutoLambdaFrozenAfterRoundZero) {
  const Toy t = toy(16);
  const TrainConfig c = toy_config();
  TrainState st = initial_state(t.masked, c, tiny_model(t.masked.shape));
  EXPECT_FALSE(st.lambda.has_value());
  train_round(st, c, t.masked);
  ASSERT_TRUE(st.lambda.has_value());
  const double lambda = *st.lambda;
  for (int i = 0; i < 3; ++i) {
    const RoundRecord r = train_round(st, c, t.masked);
    EXPECT_EQ(r.lambda, lambda);
  }
  EXPECT_EQ(*st.lambda, lambda);
}

TEST(TrainRound, J2DecreasesOnToySet) {
  const Toy t = toy(200, 0.5);
  TrainConfig c = toy_config();
  c.batch_size = 32;
  TrainState st = initial_state(t.masked, c, tiny_model(t.masked.shape));
  // Push the imputer away from identity so J2 starts well above zero.
  st.imputer.mlp().scale_output_layer(300.0);
  const RoundRecord first = train_round(st, c, t.masked);
  RoundRecord last = first;
  for (int i = 1; i < 10; ++i) last = train_round(st, c, t.masked);
  EXPECT_LT(last.j2, first.j2);
}

TEST(TrainRound, DivergenceRestoresAndHalvesLearningRate) {
  const Toy t = toy(16);
  const TrainConfig c = toy_config();
  TrainState st = initial_state(t.masked, c, tiny_model(t.masked.shape));
  train_round(st, c, t.masked);
  st.imputed(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const auto flow_before = st.flow.parameters();
  const auto imputer_before = st.imputer.parameters();
  const AdamState opt_before = st.flow_optimizer;
  WarningCapture warnings;
  const RoundRecord r = train_round(st, c, t.masked);
  EXPECT_TRUE(r.diverged);
  EXPECT_EQ(st.flow.parameters(), flow_before);
  EXPECT_EQ(st.imputer.parameters(), imputer_before);
  EXPECT_EQ(st.flow_optimizer, opt_before);
  EXPECT_DOUBLE_EQ(st.learning_rate, c.learning_rate / 2);
  EXPECT_EQ(st.round, 1u);
  EXPECT_EQ(st.j2_history.size(), 1u);
  EXPECT_FALSE(warnings.messages.empty());
  EXPECT_THROW(train(st, c, t.masked, {}, 3), NumericalError);
}

TEST(Train, DeterministicAndResumable) {
  const Toy t = toy(24);
  TrainConfig c = toy_config();
  c.max_rounds = 6;
  c.dequantize = true;
  const ModelOptions m = tiny_model(t.masked.shape);

  TrainState a = initial_state(t.masked, c, m);
  train(a, c, t.masked);
  TrainState b = initial_state(t.masked, c, m);
  train(b, c, t.masked);
  EXPECT_EQ(a.j2_history, b.j2_history);
  EXPECT_EQ(a.flow.parameters(), b.flow.parameters());
  EXPECT_EQ(a.imputed, b.imputed);

  TrainState r = initial_state(t.masked, c, m);
  for (int i = 0; i < 3; ++i) train_round(r, c, t.masked);
  const std::string bytes = encode_checkpoint({c, m, MaskSpec{0.5, 5}, r});
  Checkpoint loaded = decode_checkpoint(bytes);
  train(loaded.state, loaded.config, t.masked);
  EXPECT_EQ(loaded.state.j2_history, a.j2_history);
  EXPECT_EQ(loaded.state.imputer.parameters(), a.imputer.parameters());
}

TEST(Train, ConvergesOnStableHistory) {
  const Toy t = toy(16);
  TrainConfig c = toy_config();
  c.learning_rate = 1e-12;
  c.max_rounds = 40;
  c.convergence_window = 3;
  TrainState st = initial_state(t.masked, c, tiny_model(t.masked.shape));
  train(st, c, t.masked);
  EXPECT_LT(st.round, 40u);
  EXPECT_GE(st.round, 3u);
}

TEST(ImputeDataset, StartsFromShallowFill) {
  const Toy t = toy(10);
  const Matrix direct = impute_batch(shallow_fill(t.masked), t.masked.observed, t.masked.masks,
                                     identity_flow(36), identity_imputer(36));
  EXPECT_EQ(impute_dataset(t.masked, identity_flow(36), identity_imputer(36), 2), direct);
}
