#include "prflow/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "prflow/adam.hpp"
#include "prflow/error.hpp"
#include "prflow/random.hpp"

namespace prflow {

BenchmarkClassifier BenchmarkClassifier::train(const ImageDataset& train, const ImageDataset& test,
                                               const ClassifierOptions& options) {
  if (!train.labels || !test.labels) throw ContractError("classifier needs labelled data");
  if (train.count() == 0 || test.count() == 0) throw ContractError("classifier needs data");
  if (options.hidden.empty() || options.batch_size == 0 || options.classes < 2) {
    throw ContractError("invalid classifier options");
  }
  for (int label : *train.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= options.classes) {
      throw ContractError("label out of range");
    }
  }

  std::vector<std::size_t> widths{train.shape.size()};
  widths.insert(widths.end(), options.hidden.begin(), options.hidden.end());
  widths.push_back(options.classes);

  BenchmarkClassifier clf;
  clf.net_ = Mlp(widths, Activation::Relu);
  Rng rng(options.seed);
  clf.net_.init_glorot(rng);

  const Matrix x = train.to_matrix();
  const auto& labels = *train.labels;
  const std::size_t n = train.count();
  AdamState adam(clf.net_.parameter_count());
  const AdamOptions adam_opts{options.learning_rate};
  std::vector<double> params(clf.net_.parameter_count());
  std::vector<double> grad(params.size());

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const auto order = permutation(rng, n);
    for (std::size_t begin = 0; begin < n; begin += options.batch_size) {
      const std::size_t len = std::min(options.batch_size, n - begin);
      Matrix batch(static_cast<Eigen::Index>(len), x.cols());
      for (std::size_t i = 0; i < len; ++i) {
        batch.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(order[begin + i]));
      }
      MlpTape tape;
      const Matrix z = clf.net_.forward(batch, tape);
      // Softmax cross-entropy gradient: (softmax - onehot) / batch.
      Matrix g(z.rows(), z.cols());
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double m = z.row(i).maxCoeff();
        const RowVector e = (z.row(i).array() - m).exp().matrix();
        g.row(i) = e / e.sum();
        g(i, labels[order[begin + static_cast<std::size_t>(i)]]) -= 1.0;
      }
      g /= static_cast<double>(len);
      std::fill(grad.begin(), grad.end(), 0.0);
      clf.net_.backward_params(tape, g, grad);
      clf.net_.copy_parameters(params);
      adam_step(params, grad, adam, adam_opts);
      clf.net_.assign_parameters(params);
    }
  }
  clf.acc_0_ = clf.accuracy(test.to_matrix(), *test.labels);
  return clf;
}

Matrix BenchmarkClassifier::logits(const Matrix& x) const { return net_.forward(x); }

std::vector<int> BenchmarkClassifier::predict(const Matrix& x) const {
  const Matrix z = logits(x);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index arg = 0;
    z.row(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return out;
}

Matrix BenchmarkClassifier::features(const Matrix& x) const {
  MlpTape tape;
  net_.forward(x, tape);
  return tape.inputs.back();
}

double BenchmarkClassifier::accuracy(const Matrix& x, const std::vector<int>& labels) const {
  if (static_cast<std::size_t>(x.rows()) != labels.size() || labels.empty()) {
    throw ContractError("accuracy: label count mismatch");
  }
  const auto pred = predict(x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace prflow
