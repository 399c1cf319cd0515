#include "cli.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "prflow/checkpoint.hpp"
#include "prflow/classifier.hpp"
#include "prflow/log.hpp"
#include "prflow/metrics.hpp"
#include "prflow/prior.hpp"

namespace prflow::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kRecoveredFile = "recovered-test-images.idx";
constexpr const char* kMaskFile = "test-masks.idx";
constexpr const char* kEvaluationFile = "evaluation.json";
constexpr const char* kBaselineFile = "baseline.json";

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "alpha",          "learning_rate",  "batch_size",  "lambda",
      "j2_weight",      "epochs_per_phase", "max_rounds", "convergence_tol",
      "convergence_window", "seed",       "mask_seed",   "filters",
      "prior_epsilon",  "dequantize",     "logit",       "missing_rate",
      "dataset",        "train_count",    "test_count",  "out",
      "checkpoint",     "refine_steps",   "classifier_epochs", "classifier_seed"};
  return keys;
}

std::optional<double> parse_lambda(const json& value) {
  if (value.is_null()) return std::nullopt;
  if (value.is_string()) {
    const auto text = value.get<std::string>();
    if (text == "auto") return std::nullopt;
    try {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError("lambda must be \"auto\" or a number, got \"" + text + "\"");
  }
  if (value.is_number()) return value.get<double>();
  throw UsageError("lambda must be \"auto\" or a number");
}

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw UsageError("config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    throw UsageError("config key '" + key + "' must be a non-negative integer");
  }
  return j.get<std::size_t>();
}

void apply_json(RunConfig& c, std::optional<std::uint64_t>& mask_seed, const json& j) {
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known_keys().contains(key)) throw UsageError("unknown config key '" + key + "'");
    TrainConfig& t = c.train;
    if (key == "alpha") t.alpha = get_as<double>(value, key);
    else if (key == "learning_rate") t.learning_rate = get_as<double>(value, key);
    else if (key == "batch_size") t.batch_size = get_count(value, key);
    else if (key == "lambda") t.lambda = parse_lambda(value);
    else if (key == "j2_weight") t.j2_weight = get_as<double>(value, key);
    else if (key == "epochs_per_phase") t.epochs_per_phase = get_count(value, key);
    else if (key == "max_rounds") t.max_rounds = get_count(value, key);
    else if (key == "convergence_tol") t.convergence_tol = get_as<double>(value, key);
    else if (key == "convergence_window") t.convergence_window = get_count(value, key);
    else if (key == "seed") t.seed = get_count(value, key);
    else if (key == "mask_seed") mask_seed = get_count(value, key);
    else if (key == "filters") {
      try {
        t.filters = parse_filter_kind(get_as<std::string>(value, key));
      } catch (const ContractError& e) {
        throw UsageError(e.what());
      }
    } else if (key == "prior_epsilon") t.prior_epsilon = get_as<double>(value, key);
    else if (key == "dequantize") t.dequantize = get_as<bool>(value, key);
    else if (key == "logit") c.logit = get_as<bool>(value, key);
    else if (key == "missing_rate") c.mask.missing_rate = get_as<double>(value, key);
    else if (key == "dataset") c.dataset = get_as<std::string>(value, key);
    else if (key == "train_count") c.train_count = get_count(value, key);
    else if (key == "test_count") c.test_count = get_count(value, key);
    else if (key == "out") c.out = get_as<std::string>(value, key);
    else if (key == "checkpoint") {
      if (!value.is_null()) c.checkpoint = fs::path(get_as<std::string>(value, key));
    }
    else if (key == "refine_steps") c.refine_steps = get_count(value, key);
    else if (key == "classifier_epochs") c.classifier_epochs = get_count(value, key);
    else if (key == "classifier_seed") c.classifier_seed = get_count(value, key);
  }
}

bool is_synthetic(const std::string& dataset) { return dataset.rfind("synthetic:", 0) == 0; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

ModelOptions model_for(const RunConfig& config, const ImageShape& shape) {
  ModelOptions m = default_model_options(shape);
  m.flow.logit = config.logit;
  return m;
}

Checkpoint require_checkpoint(const RunConfig& config) {
  const fs::path path = config.checkpoint_path();
  if (!fs::exists(path)) {
    throw UsageError("checkpoint not found: " + path.string() + " (run 'prflow train' first)");
  }
  return load_checkpoint(path);
}

Matrix read_recovered(const fs::path& path, const ImageDataset& test) {
  const ImageDataset rec = load_idx(path);
  if (rec.count() != test.count() || !(rec.shape == test.shape)) {
    throw ContractError(path.string() + " does not match the test split");
  }
  return rec.to_matrix();
}

struct Metrics {
  double rmse = 0.0;
  std::optional<double> fid;
  std::optional<double> scc;
  std::optional<double> acc_imp;
  std::optional<double> acc_0;
  double prior_penalty = 0.0;
};

Metrics compute_metrics(const RunConfig& config, const Splits& splits, const Matrix& recovered,
                        const Matrix& masks, const FilterBank& bank) {
  Metrics m;
  const Matrix truth = splits.test.to_matrix();
  m.rmse = rmse_missing(recovered, truth, masks);
  double penalty = 0.0;
  for (Eigen::Index i = 0; i < recovered.rows(); ++i) {
    const Vector row = recovered.row(i).transpose();
    penalty += prior_penalty(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                             splits.test.shape, bank);
  }
  m.prior_penalty = penalty / static_cast<double>(recovered.rows());
  if (!splits.train.labels || !splits.test.labels) {
    warn("dataset has no labels; FID and SCC are skipped");
    return m;
  }
  ClassifierOptions opts;
  opts.epochs = config.classifier_epochs;
  opts.seed = config.classifier_seed;
  const auto clf = BenchmarkClassifier::train(splits.train, splits.test, opts);
  m.fid = frechet_distance(gaussian_stats(clf.features(recovered)),
                           gaussian_stats(clf.features(truth)));
  m.acc_0 = clf.acc_0();
  m.acc_imp = clf.accuracy(recovered, *splits.test.labels);
  m.scc = scc(*m.acc_imp, *m.acc_0);
  return m;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string fmt_opt(const std::optional<double>& v, int precision) {
  return v ? fmt::format("{:.{}f}", *v, precision) : std::string("-");
}

json metrics_json(const RunConfig& config, const std::string& method, const Metrics& m,
                  std::optional<std::size_t> rounds) {
  return json{{"dataset", config.dataset},
              {"method", method},
              {"missing_rate", config.mask.missing_rate},
              {"seed", config.train.seed},
              {"mask_seed", config.mask.seed},
              {"rounds", rounds ? json(*rounds) : json(nullptr)},
              {"rmse", m.rmse},
              {"fid", optional_json(m.fid)},
              {"scc", optional_json(m.scc)},
              {"acc_imp", optional_json(m.acc_imp)},
              {"acc_0", optional_json(m.acc_0)},
              {"prior_penalty", m.prior_penalty}};
}

std::string table_row(const std::string& method, double rate, const Metrics& m) {
  return fmt::format("{:<10} p={:.2f}  rmse={:.4f}  fid={}  scc={}  penalty={:.4f}\n", method, rate,
                     m.rmse, fmt_opt(m.fid, 4), fmt_opt(m.scc, 4), m.prior_penalty);
}

void append_line(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw Error("cannot write " + path.string());
  f << j.dump() << '\n';
}

int cmd_train(const RunConfig& config, std::ostream& out) {
  const Splits splits = load_splits(config);
  const MaskedDataset data = apply_masks(splits.train, config.mask, MaskStream::Train);
  fs::create_directories(config.out);
  write_text(config.out / "resolved_config.json", to_json(config));

  const fs::path metrics_path = config.out / "metrics.jsonl";
  const fs::path timing_path = config.out / "timing.jsonl";
  const bool resume = config.checkpoint && fs::exists(*config.checkpoint);
  Checkpoint ck = [&] {
    if (!resume) {
      const ModelOptions model = model_for(config, splits.train.shape);
      fs::remove(metrics_path);
      fs::remove(timing_path);
      return Checkpoint{config.train, model, config.mask, initial_state(data, config.train, model)};
    }
    Checkpoint loaded = load_checkpoint(*config.checkpoint);
    if (loaded.state.imputed.rows() != data.observed.rows() ||
        loaded.state.imputed.cols() != data.observed.cols()) {
      throw UsageError("checkpoint does not match the configured training split");
    }
    if (loaded.mask.missing_rate != config.mask.missing_rate || loaded.mask.seed != config.mask.seed) {
      throw UsageError("checkpoint was trained under a different mask");
    }
    loaded.config = config.train;
    return loaded;
  }();
  if (resume) out << "resuming from round " << ck.state.round << '\n';

  const fs::path ck_path = config.out / "checkpoint.ckpt";
  TrainObserver observer;
  observer.on_round = [&](const RoundRecord& r) {
    append_line(metrics_path, json{{"round", r.round},
                                   {"j", r.j},
                                   {"j1", r.j1},
                                   {"j2", r.j2},
                                   {"j3", r.j3},
                                   {"lambda", r.lambda},
                                   {"learning_rate", r.learning_rate},
                                   {"diverged", r.diverged}});
    append_line(timing_path, json{{"round", r.round}, {"wall_time", r.wall_time}});
    save_checkpoint(ck, ck_path);
    out << fmt::format("round {:>3}  J={:.4f}  J1={:.4f}  J2={:.6f}  J3={:.4f}  lambda={:.4g}{}\n",
                       r.round, r.j, r.j1, r.j2, r.j3, r.lambda, r.diverged ? "  (diverged)" : "");
  };
  save_checkpoint(ck, ck_path);
  train(ck.state, config.train, data, observer);
  save_checkpoint(ck, ck_path);
  out << "trained " << ck.state.round << " rounds; checkpoint " << ck_path.string() << '\n';
  return 0;
}

struct Imputed {
  Checkpoint checkpoint;
  Splits splits;
  MaskedDataset test;
  Matrix recovered;
};

Imputed run_impute(const RunConfig& config, bool reuse_existing) {
  Checkpoint ck = require_checkpoint(config);
  RunConfig effective = config;
  effective.mask = ck.mask;
  Splits splits = load_splits(effective);
  if (splits.test.shape.size() != ck.model.flow.dim) {
    throw UsageError("checkpoint dimension does not match the dataset");
  }
  MaskedDataset test = apply_masks(splits.test, ck.mask, MaskStream::Test);
  const fs::path rec_path = config.out / kRecoveredFile;
  Matrix recovered;
  if (reuse_existing && fs::exists(rec_path)) {
    recovered = read_recovered(rec_path, splits.test);
  } else {
    recovered = impute_dataset(test, ck.state.flow, ck.state.imputer, config.refine_steps);
    fs::create_directories(config.out);
    write_idx_images(rec_path,
                     make_dataset(splits.test.name, "recovered", splits.test.shape, recovered),
                     IdxType::Float64);
    write_idx_images(config.out / kMaskFile,
                     make_dataset(splits.test.name, "masks", splits.test.shape, test.masks),
                     IdxType::UnsignedByte);
  }
  return {std::move(ck), std::move(splits), std::move(test), std::move(recovered)};
}

int cmd_impute(const RunConfig& config, std::ostream& out) {
  const Imputed r = run_impute(config, false);
  out << "wrote " << (config.out / kRecoveredFile).string() << " (" << r.recovered.rows()
      << " images)\n";
  return 0;
}

void require_missing(const Matrix& masks) {
  if ((masks.array() < 0.5).count() == 0) {
    throw ContractError("RMSE is undefined: the test masks leave no unobserved pixel (missing_rate = 0)");
  }
}

int cmd_evaluate(const RunConfig& config, std::ostream& out) {
  Imputed r = run_impute(config, true);
  require_missing(r.test.masks);
  RunConfig effective = config;
  effective.mask = r.checkpoint.mask;
  const Metrics m =
      compute_metrics(effective, r.splits, r.recovered, r.test.masks, r.checkpoint.config.filter_bank());
  write_text(config.out / kEvaluationFile,
             metrics_json(effective, "PRFlow", m, r.checkpoint.state.round).dump(2) + "\n");
  out << table_row("PRFlow", effective.mask.missing_rate, m);
  return 0;
}

int cmd_baseline(const RunConfig& config, std::ostream& out) {
  const Splits splits = load_splits(config);
  const MaskedDataset test = apply_masks(splits.test, config.mask, MaskStream::Test);
  require_missing(test.masks);
  const Matrix recovered = shallow_fill(test);
  const Metrics m = compute_metrics(config, splits, recovered, test.masks, config.train.filter_bank());
  fs::create_directories(config.out);
  write_text(config.out / kBaselineFile,
             metrics_json(config, "NN", m, std::nullopt).dump(2) + "\n");
  out << table_row("NN", config.mask.missing_rate, m);
  return 0;
}

int cmd_report(const RunConfig& config, std::ostream& out) {
  if (config.inputs.empty()) throw UsageError("report needs --inputs");
  std::vector<json> rows;
  for (const fs::path& in : config.inputs) {
    if (fs::is_directory(in)) {
      bool found = false;
      for (const char* name : {kEvaluationFile, kBaselineFile}) {
        if (fs::exists(in / name)) {
          rows.push_back(read_json(in / name));
          found = true;
        }
      }
      if (!found) throw UsageError("no evaluation output under " + in.string());
    } else {
      rows.push_back(read_json(in));
    }
  }
  // (dataset, method) -> rate -> metrics
  std::map<std::pair<std::string, std::string>, std::map<double, json>> grid;
  std::set<double> rates;
  for (const json& r : rows) {
    try {
      const double rate = r.at("missing_rate").get<double>();
      grid[{r.at("dataset").get<std::string>(), r.at("method").get<std::string>()}][rate] = r;
      rates.insert(rate);
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed evaluation record: ") + e.what());
    }
  }
  std::string text;
  for (const auto& [metric, title] :
       std::vector<std::pair<std::string, std::string>>{{"rmse", "RMSE (missing pixels)"},
                                                        {"fid", "FID (classifier features)"},
                                                        {"scc", "SCC"}}) {
    text += title + "\n";
    std::string header = fmt::format("{:<24} {:<10}", "dataset", "method");
    for (double rate : rates) header += fmt::format(" {:>10}", fmt::format("p={:.2f}", rate));
    text += header + "\n";
    for (const auto& [key, by_rate] : grid) {
      std::string line = fmt::format("{:<24} {:<10}", key.first, key.second);
      for (double rate : rates) {
        const auto it = by_rate.find(rate);
        std::string cell = "-";
        if (it != by_rate.end() && it->second.contains(metric) && it->second[metric].is_number()) {
          cell = fmt::format("{:.4f}", it->second[metric].get<double>());
        }
        line += fmt::format(" {:>10}", cell);
      }
      text += line + "\n";
    }
    text += "\n";
  }
  fs::create_directories(config.out);
  write_text(config.out / "report.txt", text);
  out << text;
  return 0;
}

}  // namespace

void RunConfig::validate() const {
  try {
    train.validate();
    mask.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  if (train_count == 0 || test_count == 0) throw UsageError("train_count and test_count must be positive");
  if (refine_steps == 0) throw UsageError("refine_steps must be at least 1");
  if (classifier_epochs == 0) throw UsageError("classifier_epochs must be at least 1");
  if (out.empty()) throw UsageError("out must not be empty");
  if (dataset.empty()) throw UsageError("dataset must not be empty");
  if (is_synthetic(dataset)) {
    const std::string rest = dataset.substr(std::string("synthetic:").size());
    const std::string kind = rest.substr(0, rest.find(':'));
    try {
      parse_synthetic_kind(kind);
    } catch (const ContractError& e) {
      throw UsageError(e.what());
    }
  }
}

fs::path RunConfig::checkpoint_path() const {
  return checkpoint ? *checkpoint : out / "checkpoint.ckpt";
}

RunConfig parse_config_text(const std::string& json_text, const FlagValues& flags) {
  RunConfig c;
  std::optional<std::uint64_t> mask_seed;
  if (json_text.find_first_not_of(" \t\r\n") != std::string::npos) {
    json j;
    try {
      j = json::parse(json_text);
    } catch (const json::exception& e) {
      throw UsageError(std::string("config file is not valid JSON: ") + e.what());
    }
    apply_json(c, mask_seed, j);
  }
  if (flags.dataset) c.dataset = *flags.dataset;
  if (flags.missing_rate) c.mask.missing_rate = *flags.missing_rate;
  if (flags.seed) c.train.seed = *flags.seed;
  if (flags.lambda) c.train.lambda = parse_lambda(json(*flags.lambda));
  if (flags.alpha) c.train.alpha = *flags.alpha;
  if (flags.out) c.out = *flags.out;
  if (flags.checkpoint) c.checkpoint = *flags.checkpoint;
  if (flags.max_rounds) c.train.max_rounds = *flags.max_rounds;
  if (flags.filters) {
    try {
      c.train.filters = parse_filter_kind(*flags.filters);
    } catch (const ContractError& e) {
      throw UsageError(e.what());
    }
  }
  c.inputs = flags.inputs;
  c.mask.seed = mask_seed.value_or(c.train.seed);
  c.validate();
  return c;
}

RunConfig parse_config(const FlagValues& flags) {
  std::string text;
  if (flags.config) {
    std::ifstream f(*flags.config, std::ios::binary);
    if (!f) throw UsageError("cannot read config file " + flags.config->string());
    std::ostringstream ss;
    ss << f.rdbuf();
    text = ss.str();
  }
  return parse_config_text(text, flags);
}

std::string to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  json j{{"alpha", t.alpha},
         {"learning_rate", t.learning_rate},
         {"batch_size", t.batch_size},
         {"lambda", t.lambda ? json(*t.lambda) : json("auto")},
         {"j2_weight", t.j2_weight},
         {"epochs_per_phase", t.epochs_per_phase},
         {"max_rounds", t.max_rounds},
         {"convergence_tol", t.convergence_tol},
         {"convergence_window", t.convergence_window},
         {"seed", t.seed},
         {"mask_seed", c.mask.seed},
         {"filters", to_string(t.filters)},
         {"prior_epsilon", t.prior_epsilon},
         {"dequantize", t.dequantize},
         {"logit", c.logit},
         {"missing_rate", c.mask.missing_rate},
         {"dataset", c.dataset},
         {"train_count", c.train_count},
         {"test_count", c.test_count},
         {"out", c.out.string()},
         {"checkpoint", c.checkpoint ? json(c.checkpoint->string()) : json(nullptr)},
         {"refine_steps", c.refine_steps},
         {"classifier_epochs", c.classifier_epochs},
         {"classifier_seed", c.classifier_seed}};
  return j.dump(2) + "\n";
}

Splits load_splits(const RunConfig& config) {
  if (is_synthetic(config.dataset)) {
    const std::string rest = config.dataset.substr(std::string("synthetic:").size());
    const auto colon = rest.find(':');
    const SyntheticKind kind = parse_synthetic_kind(rest.substr(0, colon));
    std::size_t side = 16;
    if (colon != std::string::npos) {
      try {
        side = std::stoul(rest.substr(colon + 1));
      } catch (const std::exception&) {
        throw UsageError("bad synthetic image size in '" + config.dataset + "'");
      }
    }
    if (side < 2) throw UsageError("synthetic images must be at least 2x2");
    const ImageShape shape{side, side, 1};
    return {generate_synthetic(kind, config.train_count, shape, config.train.seed * 2 + 101),
            generate_synthetic(kind, config.test_count, shape, config.train.seed * 2 + 102)};
  }
  const fs::path dir(config.dataset);
  const fs::path files[] = {dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte",
                            dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte"};
  for (const auto& f : files) {
    if (!fs::exists(f)) throw UsageError("dataset file not found: " + f.string());
  }
  ImageDataset train = load_idx(files[0], files[1]);
  ImageDataset test = load_idx(files[2], files[3]);
  if (train.count() < config.train_count || test.count() < config.test_count) {
    throw UsageError("dataset holds fewer images than train_count/test_count");
  }
  return {train.head(config.train_count), test.head(config.test_count)};
}

int run_command(const std::string& command, const RunConfig& config, std::ostream& out,
                std::ostream& err) {
  try {
    if (command == "train") return cmd_train(config, out);
    if (command == "impute") return cmd_impute(config, out);
    if (command == "evaluate") return cmd_evaluate(config, out);
    if (command == "baseline") return cmd_baseline(config, out);
    if (command == "report") return cmd_report(config, out);
    err << "error: unknown command '" << command << "'\n";
    return 1;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prior-regularised normalizing-flow imputation"};
  app.require_subcommand(1, 1);
  FlagValues flags;
  std::string config_path, dataset, lambda, out_dir, checkpoint, filters;
  double missing_rate = 0.0, alpha = 0.0;
  std::uint64_t seed = 0;
  std::size_t max_rounds = 0;
  std::vector<std::string> inputs;

  std::vector<CLI::Option*> opts;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file");
    sub->add_option("--dataset", dataset, "MNIST IDX directory or synthetic:<kind>[:<side>]");
    sub->add_option("--missing-rate", missing_rate, "Per-pixel drop probability");
    sub->add_option("--seed", seed, "Training seed (also the mask seed unless mask_seed is set)");
    sub->add_option("--lambda", lambda, "Prior weight or 'auto'");
    sub->add_option("--alpha", alpha, "Hyper-Laplacian exponent");
    sub->add_option("--out", out_dir, "Run directory");
    sub->add_option("--checkpoint", checkpoint, "Checkpoint to read (or resume from)");
    sub->add_option("--max-rounds", max_rounds, "Upper bound on training rounds");
    sub->add_option("--filters", filters, "derivative or literal")
        ->check(CLI::IsMember({"derivative", "literal"}));
  };
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"train", "Train a model and write per-round checkpoints"},
           {"impute", "Impute the masked test split"},
           {"evaluate", "RMSE, FID, SCC and prior penalty of the imputed test split"},
           {"baseline", "Metrics of nearest-neighbour imputation"},
           {"report", "Aggregate evaluation outputs into a grid"}}) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub);
    if (name == "report") sub->add_option("--inputs", inputs, "Evaluation files or run directories");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }
  CLI::App* sub = app.get_subcommands().front();
  const auto given = [&](const char* flag) { return sub->count(flag) > 0; };
  if (given("--config")) flags.config = config_path;
  if (given("--dataset")) flags.dataset = dataset;
  if (given("--missing-rate")) flags.missing_rate = missing_rate;
  if (given("--seed")) flags.seed = seed;
  if (given("--lambda")) flags.lambda = lambda;
  if (given("--alpha")) flags.alpha = alpha;
  if (given("--out")) flags.out = out_dir;
  if (given("--checkpoint")) flags.checkpoint = checkpoint;
  if (given("--max-rounds")) flags.max_rounds = max_rounds;
  if (given("--filters")) flags.filters = filters;
  for (const auto& in : inputs) flags.inputs.emplace_back(in);

  RunConfig config;
  try {
    config = parse_config(flags);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return run_command(sub->get_name(), config, out, err);
}

}  // namespace prflow::cli
