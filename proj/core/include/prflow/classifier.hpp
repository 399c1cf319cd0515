#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "prflow/data.hpp"
#include "prflow/nn.hpp"
#include "prflow/tensor.hpp"

namespace prflow {

struct ClassifierOptions {
  /// Hidden widths; the last one is the feature dimension.
  std::vector<std::size_t> hidden{128, 64};
  std::size_t classes = 10;
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
};

/// Small ReLU classifier used as the feature extractor and accuracy probe
/// for the evaluation metrics. Frozen once trained.
class BenchmarkClassifier {
 public:
  /// Softmax cross-entropy with Adam on fully observed `train`; acc_0 is
  /// measured on fully observed `test`. Throws ContractError without labels.
  static BenchmarkClassifier train(const ImageDataset& train, const ImageDataset& test,
                                   const ClassifierOptions& options = {});

  Matrix logits(const Matrix& x) const;
  std::vector<int> predict(const Matrix& x) const;
  /// Penultimate-layer activations, one row per input.
  Matrix features(const Matrix& x) const;
  double accuracy(const Matrix& x, const std::vector<int>& labels) const;

  double acc_0() const { return acc_0_; }
  std::size_t feature_dim() const { return net_.widths()[net_.widths().size() - 2]; }
  const Mlp& network() const { return net_; }

 private:
  Mlp net_;
  double acc_0_ = 0.0;
};

}  // namespace prflow
