#include <benchmark/benchmark.h>

#include "prflow/flow.hpp"
#include "prflow/imputer.hpp"
#include "prflow/prior.hpp"
#include "prflow/random.hpp"
#include "prflow/training.hpp"

namespace {

using namespace prflow;

const ImageShape kMnist{28, 28, 1};

Matrix uniform_batch(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, 0.0, 1.0);
  return m;
}

struct Models {
  FlowNetwork flow;
  ImputerNetwork imputer;
};

Models mnist_models() {
  const ModelOptions o = default_model_options(kMnist);
  Models m{FlowNetwork(o.flow), ImputerNetwork(o.imputer)};
  Rng rng(1);
  m.flow.randomize(rng, 0.1);
  m.imputer.init(rng);
  return m;
}

void BM_FlowForward(benchmark::State& state) {
  const Models m = mnist_models();
  const Matrix x = uniform_batch(state.range(0), 784, 2);
  for (auto _ : state) benchmark::DoNotOptimize(m.flow.forward(x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FlowForward)->Arg(1)->Arg(64);

void BM_FlowNllGradient(benchmark::State& state) {
  const Models m = mnist_models();
  const Matrix x = uniform_batch(64, 784, 3);
  for (auto _ : state) benchmark::DoNotOptimize(m.flow.nll_gradient(x));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_FlowNllGradient);

void BM_ImputeBatch(benchmark::State& state) {
  const Models m = mnist_models();
  const Matrix truth = uniform_batch(state.range(0), 784, 4);
  const Matrix masks = (uniform_batch(state.range(0), 784, 5).array() > 0.6).cast<double>();
  const Matrix observed = truth.cwiseProduct(masks);
  for (auto _ : state) {
    benchmark::DoNotOptimize(impute_batch(truth, observed, masks, m.flow, m.imputer));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ImputeBatch)->Arg(64)->Arg(500);

void BM_PriorPenalty(benchmark::State& state) {
  const Matrix x = uniform_batch(1, 784, 6);
  const FilterBank bank = FilterBank::make(FilterKind::Derivative);
  for (auto _ : state) {
    benchmark::DoNotOptimize(prior_penalty(std::span<const double>(x.data(), 784), kMnist, bank));
  }
}
BENCHMARK(BM_PriorPenalty);

void BM_PriorPenaltyAndGradient(benchmark::State& state) {
  const Matrix x = uniform_batch(1, 784, 7);
  const FilterBank bank = FilterBank::make(FilterKind::Derivative);
  Vector grad = Vector::Zero(784);
  for (auto _ : state) {
    benchmark::DoNotOptimize(prior_penalty_and_gradient(
        std::span<const double>(x.data(), 784), kMnist, bank, 1.0,
        std::span<double>(grad.data(), 784)));
  }
}
BENCHMARK(BM_PriorPenaltyAndGradient);

}  // namespace
BENCHMARK_MAIN();
