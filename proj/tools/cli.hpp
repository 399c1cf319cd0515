#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "prflow/data.hpp"
#include "prflow/error.hpp"
#include "prflow/training.hpp"

namespace prflow::cli {

/// Bad flags, bad config keys or out-of-range values (exit status 1).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Values given on the command line; unset members fall back to the config
/// file and then to the defaults.
struct FlagValues {
  std::optional<std::filesystem::path> config;
  std::optional<std::string> dataset;
  std::optional<double> missing_rate;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> lambda;
  std::optional<double> alpha;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::size_t> max_rounds;
  std::optional<std::string> filters;
  std::vector<std::filesystem::path> inputs;
};

struct RunConfig {
  TrainConfig train;
  MaskSpec mask;
  /// Directory holding the four MNIST IDX files, or "synthetic:<kind>[:<side>]".
  std::string dataset = "data/mnist-desk";
  std::size_t train_count = 2000;
  std::size_t test_count = 500;
  std::filesystem::path out = "runs/default";
  std::optional<std::filesystem::path> checkpoint;
  std::size_t refine_steps = 1;
  bool logit = false;
  std::size_t classifier_epochs = 30;
  std::uint64_t classifier_seed = 1;
  std::vector<std::filesystem::path> inputs;

  void validate() const;
  /// Checkpoint read by impute/evaluate and resumed by train.
  std::filesystem::path checkpoint_path() const;
};

/// Merges flags over the JSON config file over the defaults. Unknown keys and
/// invalid values raise UsageError.
RunConfig parse_config(const FlagValues& flags);
RunConfig parse_config_text(const std::string& json_text, const FlagValues& flags);

/// The fully resolved configuration as JSON.
std::string to_json(const RunConfig& config);

struct Splits {
  ImageDataset train;
  ImageDataset test;
};
Splits load_splits(const RunConfig& config);

/// Runs one subcommand; returns the process exit status.
int run_command(const std::string& command, const RunConfig& config, std::ostream& out,
                std::ostream& err);

/// Full entry point (argument parsing included).
int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace prflow::cli
