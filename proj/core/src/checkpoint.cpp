#include "prflow/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "prflow/error.hpp"

namespace prflow {
namespace {

using nlohmann::json;

constexpr std::string_view kMagic = "PRFLOWCK";

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void reals(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  std::string_view bytes(std::size_t n) {
    if (n > data_.size() - pos_) throw ParseError(what_ + ": truncated");
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
  std::uint32_t u32() {
    auto s = bytes(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<std::uint8_t>(s[i])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto s = bytes(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<std::uint8_t>(s[i])) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<double> reals() {
    const std::uint64_t n = u64();
    if (n > remaining() / 8) throw ParseError(what_ + ": corrupt array length");
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  void expect_end() const {
    if (pos_ != data_.size()) throw ParseError(what_ + ": trailing bytes");
  }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::uint32_t tag(const char (&t)[5]) {
  return std::uint32_t(std::uint8_t(t[0])) | std::uint32_t(std::uint8_t(t[1])) << 8 |
         std::uint32_t(std::uint8_t(t[2])) << 16 | std::uint32_t(std::uint8_t(t[3])) << 24;
}

void write_section(Writer& w, const char (&name)[5], const std::string& payload) {
  w.u32(tag(name));
  w.u64(payload.size());
  w.bytes(payload);
}

std::string encode_adam(const AdamState& s) {
  Writer w;
  w.u64(s.step);
  w.reals(s.first_moment);
  w.reals(s.second_moment);
  return w.take();
}

AdamState decode_adam(std::string_view bytes, std::size_t expected) {
  Reader r(bytes, "checkpoint optimiser section");
  AdamState s;
  s.step = r.u64();
  s.first_moment = r.reals();
  s.second_moment = r.reals();
  r.expect_end();
  if (s.first_moment.size() != expected || s.second_moment.size() != expected) {
    throw ParseError("checkpoint optimiser state does not match the model size");
  }
  return s;
}

json config_json(const TrainConfig& c, const ModelOptions& m, const MaskSpec& mask) {
  json j;
  j["train"] = {{"alpha", c.alpha},
                {"learning_rate", c.learning_rate},
                {"batch_size", c.batch_size},
                {"lambda", c.lambda ? json(*c.lambda) : json(nullptr)},
                {"j2_weight", c.j2_weight},
                {"epochs_per_phase", c.epochs_per_phase},
                {"max_rounds", c.max_rounds},
                {"convergence_tol", c.convergence_tol},
                {"convergence_window", c.convergence_window},
                {"seed", c.seed},
                {"filters", to_string(c.filters)},
                {"prior_epsilon", c.prior_epsilon},
                {"dequantize", c.dequantize}};
  j["flow"] = {{"dim", m.flow.dim},
               {"layers", m.flow.layers},
               {"hidden_width", m.flow.hidden_width},
               {"hidden_layers", m.flow.hidden_layers},
               {"scale_bound", m.flow.scale_bound},
               {"logit", m.flow.logit},
               {"logit_margin", m.flow.logit_margin}};
  j["imputer"] = {{"dim", m.imputer.dim},
                  {"hidden_width", m.imputer.hidden_width},
                  {"hidden_layers", m.imputer.hidden_layers},
                  {"init_scale", m.imputer.init_scale}};
  j["mask"] = {{"missing_rate", mask.missing_rate}, {"seed", mask.seed}};
  return j;
}

void parse_config_json(const json& j, TrainConfig& c, ModelOptions& m, MaskSpec& mask) {
  const json& t = j.at("train");
  c.alpha = t.at("alpha").get<double>();
  c.learning_rate = t.at("learning_rate").get<double>();
  c.batch_size = t.at("batch_size").get<std::size_t>();
  if (t.at("lambda").is_null()) {
    c.lambda.reset();
  } else {
    c.lambda = t.at("lambda").get<double>();
  }
  c.j2_weight = t.at("j2_weight").get<double>();
  c.epochs_per_phase = t.at("epochs_per_phase").get<std::size_t>();
  c.max_rounds = t.at("max_rounds").get<std::size_t>();
  c.convergence_tol = t.at("convergence_tol").get<double>();
  c.convergence_window = t.at("convergence_window").get<std::size_t>();
  c.seed = t.at("seed").get<std::uint64_t>();
  c.filters = parse_filter_kind(t.at("filters").get<std::string>());
  c.prior_epsilon = t.at("prior_epsilon").get<double>();
  c.dequantize = t.at("dequantize").get<bool>();

  const json& f = j.at("flow");
  m.flow.dim = f.at("dim").get<std::size_t>();
  m.flow.layers = f.at("layers").get<std::size_t>();
  m.flow.hidden_width = f.at("hidden_width").get<std::size_t>();
  m.flow.hidden_layers = f.at("hidden_layers").get<std::size_t>();
  m.flow.scale_bound = f.at("scale_bound").get<double>();
  m.flow.logit = f.at("logit").get<bool>();
  m.flow.logit_margin = f.at("logit_margin").get<double>();

  const json& h = j.at("imputer");
  m.imputer.dim = h.at("dim").get<std::size_t>();
  m.imputer.hidden_width = h.at("hidden_width").get<std::size_t>();
  m.imputer.hidden_layers = h.at("hidden_layers").get<std::size_t>();
  m.imputer.init_scale = h.at("init_scale").get<double>();

  mask.missing_rate = j.at("mask").at("missing_rate").get<double>();
  mask.seed = j.at("mask").at("seed").get<std::uint64_t>();
}

}  // namespace

std::string config_to_json(const TrainConfig& config, const ModelOptions& model,
                           const MaskSpec& mask) {
  return config_json(config, model, mask).dump(2);
}

std::string encode_checkpoint(const Checkpoint& ck) {
  const TrainState& s = ck.state;
  Writer w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);

  write_section(w, "CONF", config_json(ck.config, ck.model, ck.mask).dump());

  Writer stat;
  stat.u64(s.round);
  stat.f64(s.learning_rate);
  stat.u8(s.lambda ? 1 : 0);
  stat.f64(s.lambda.value_or(0.0));
  stat.reals(s.j2_history);
  write_section(w, "STAT", stat.take());

  write_section(w, "RNG ", serialize_rng(s.rng));

  Writer flow;
  flow.reals(s.flow.parameters());
  write_section(w, "FLOW", flow.take());

  Writer imp;
  imp.reals(s.imputer.parameters());
  write_section(w, "IMPU", imp.take());

  write_section(w, "OPTF", encode_adam(s.flow_optimizer));
  write_section(w, "OPTI", encode_adam(s.imputer_optimizer));

  Writer data;
  data.u64(static_cast<std::uint64_t>(s.imputed.rows()));
  data.u64(static_cast<std::uint64_t>(s.imputed.cols()));
  for (Eigen::Index i = 0; i < s.imputed.size(); ++i) data.f64(s.imputed.data()[i]);
  write_section(w, "DATA", data.take());
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes, "checkpoint");
  if (r.bytes(kMagic.size()) != kMagic) throw ParseError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  }
  std::map<std::uint32_t, std::string_view> sections;
  while (r.remaining() > 0) {
    const std::uint32_t t = r.u32();
    const std::uint64_t len = r.u64();
    if (len > r.remaining()) throw ParseError("checkpoint: corrupt section length");
    if (!sections.emplace(t, r.bytes(len)).second) {
      throw ParseError("checkpoint: duplicate section");
    }
  }
  auto section = [&](const char (&name)[5]) {
    auto it = sections.find(tag(name));
    if (it == sections.end()) throw ParseError(std::string("checkpoint: missing section ") + name);
    return it->second;
  };

  TrainConfig config;
  ModelOptions model;
  MaskSpec mask;
  try {
    parse_config_json(json::parse(section("CONF")), config, model, mask);
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: bad configuration: ") + e.what());
  }

  TrainState state{FlowNetwork(model.flow), ImputerNetwork(model.imputer), AdamState{}, AdamState{},
                   0, Matrix{}, {}, std::nullopt, 0.0, Rng{}};

  Reader stat(section("STAT"), "checkpoint state section");
  state.round = stat.u64();
  state.learning_rate = stat.f64();
  const bool has_lambda = stat.u8() != 0;
  const double lambda = stat.f64();
  if (has_lambda) state.lambda = lambda;
  state.j2_history = stat.reals();
  stat.expect_end();

  state.rng = deserialize_rng(std::string(section("RNG ")));

  Reader flow(section("FLOW"), "checkpoint flow section");
  const auto flow_params = flow.reals();
  flow.expect_end();
  if (flow_params.size() != state.flow.parameter_count()) {
    throw ParseError("checkpoint: flow parameter count mismatch");
  }
  state.flow.assign_parameters(flow_params);

  Reader imp(section("IMPU"), "checkpoint imputer section");
  const auto imp_params = imp.reals();
  imp.expect_end();
  if (imp_params.size() != state.imputer.parameter_count()) {
    throw ParseError("checkpoint: imputer parameter count mismatch");
  }
  state.imputer.assign_parameters(imp_params);

  state.flow_optimizer = decode_adam(section("OPTF"), flow_params.size());
  state.imputer_optimizer = decode_adam(section("OPTI"), imp_params.size());

  Reader data(section("DATA"), "checkpoint data section");
  const std::uint64_t rows = data.u64();
  const std::uint64_t cols = data.u64();
  if (cols != model.flow.dim || (cols > 0 && rows > data.remaining() / 8 / cols)) {
    throw ParseError("checkpoint: corrupt imputation block");
  }
  state.imputed.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < state.imputed.size(); ++i) state.imputed.data()[i] = data.f64();
  data.expect_end();

  return Checkpoint{config, model, mask, std::move(state)};
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(checkpoint);
  const auto tmp = std::filesystem::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace prflow
