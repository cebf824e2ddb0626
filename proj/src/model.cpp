// Copyright 2026 The sasv-ensemble Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sasv/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include <json.hpp>

#include "sasv/error.hpp"
#include "sasv/io.hpp"

namespace sasv {

using nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, 8> kPresetNames{
    "Extend512_DNN", "Extend1024_DNN", "CNN1D",    "CNN1D_SE",
    "CNN1D_PA",      "CNN2D",          "CNN2D_SE", "CNN2D_VSE",
};

// 1D CNN pooling length; mirrors the 2D preset's [16, 16].
constexpr std::size_t kPool1d = 16;
// Attention sits after the third conv layer (0-based index 2).
constexpr std::size_t kAttentionAfter = 2;

ModelConfig cnn1d(std::string name, std::optional<AttentionKind> attention) {
  ModelConfig c;
  c.name = std::move(name);
  c.fusion_mode = FusionMode::kStack1D;
  c.conv_channels = {256, 128, 64};
  c.conv_kernels = {3, 3, 3};
  c.pool_size = {kPool1d};
  c.dnn_nodes = {512, 256, 64};
  if (attention) {
    c.attention_kind = attention;
    c.attention_position = kAttentionAfter;
  }
  return c;
}

ModelConfig cnn2d(std::string name, std::optional<AttentionKind> attention) {
  ModelConfig c;
  c.name = std::move(name);
  c.fusion_mode = FusionMode::kCirc2D;
  c.conv_channels = {32, 64, 128, 256};
  c.conv_kernels = {5, 3, 3, 3};
  c.pool_size = {16, 16};
  c.dnn_nodes = {256, 128, 64};
  if (attention) {
    c.attention_kind = attention;
    c.attention_position = kAttentionAfter;
  }
  return c;
}

ModelConfig dnn(std::string name, std::vector<std::size_t> nodes) {
  ModelConfig c;
  c.name = std::move(name);
  c.fusion_mode = FusionMode::kConcat;
  c.dnn_nodes = std::move(nodes);
  return c;
}

bool is_2d(const ModelConfig& c) { return c.fusion_mode == FusionMode::kCirc2D; }

}  // namespace

std::span<const std::string_view> preset_names() { return kPresetNames; }

ModelConfig preset_config(std::string_view name) {
  if (name == "Extend512_DNN") return dnn("Extend512_DNN", {512, 256, 128, 64});
  if (name == "Extend1024_DNN") return dnn("Extend1024_DNN", {1024, 512, 256, 128, 64});
  if (name == "CNN1D") return cnn1d("CNN1D", std::nullopt);
  if (name == "CNN1D_SE") return cnn1d("CNN1D_SE", AttentionKind::kSE1D);
  if (name == "CNN1D_PA") return cnn1d("CNN1D_PA", AttentionKind::kPA);
  if (name == "CNN2D") return cnn2d("CNN2D", std::nullopt);
  if (name == "CNN2D_SE") return cnn2d("CNN2D_SE", AttentionKind::kSE2D);
  if (name == "CNN2D_VSE") return cnn2d("CNN2D_VSE", AttentionKind::kVSE);
  std::string known;
  for (auto n : kPresetNames) known += " " + std::string(n);
  fail(ErrorCategory::kInvalidArgument, "unknown model preset '" + std::string(name) +
                                            "'; known presets:" + known);
}

void ModelConfig::validate() const {
  auto bad = [this](const std::string& what) {
    fail(ErrorCategory::kInvalidArgument, "model config '" + name + "': " + what);
  };
  if (conv_channels.size() != conv_kernels.size()) {
    bad("conv_channels and conv_kernels differ in length");
  }
  if (num_classes < 2) bad("num_classes must be at least 2");
  if (reduction_ratio == 0) bad("reduction_ratio must be positive");
  for (std::size_t v : conv_channels) if (v == 0) bad("conv channels must be positive");
  for (std::size_t k : conv_kernels) if (k == 0) bad("conv kernels must be positive");
  for (std::size_t v : dnn_nodes) if (v == 0) bad("dnn widths must be positive");
  const bool conv = !conv_channels.empty();
  if (!conv && fusion_mode != FusionMode::kConcat) bad("DNN configs take CONCAT input");
  if (conv && fusion_mode == FusionMode::kConcat) bad("CNN configs take STACK1D or CIRC2D input");
  if (conv) {
    const std::size_t want = is_2d(*this) ? 2 : 1;
    if (pool_size.size() != want) bad("pool_size needs " + std::to_string(want) + " entries");
    for (std::size_t p : pool_size) if (p == 0) bad("pool_size entries must be positive");
  }
  if (attention_kind.has_value() != attention_position.has_value()) {
    bad("attention_kind and attention_position go together");
  }
  if (attention_position && *attention_position >= conv_channels.size()) {
    bad("attention_position " + std::to_string(*attention_position) +
        " is not a valid conv layer index");
  }
  if (attention_kind) {
    const bool kind_2d = *attention_kind == AttentionKind::kSE2D ||
                         *attention_kind == AttentionKind::kVSE;
    if (kind_2d != is_2d(*this)) {
      bad(std::string(attention_kind_name(*attention_kind)) + " attention does not fit " +
          std::string(fusion_mode_name(fusion_mode)) + " input");
    }
  }
}

std::string ModelConfig::to_json() const {
  ordered_json j;
  j["name"] = name;
  j["fusion_mode"] = std::string(fusion_mode_name(fusion_mode));
  j["conv_channels"] = conv_channels;
  j["conv_kernels"] = conv_kernels;
  j["pool_size"] = pool_size;
  j["dnn_nodes"] = dnn_nodes;
  j["attention_kind"] =
      attention_kind ? ordered_json(std::string(attention_kind_name(*attention_kind))) : nullptr;
  j["attention_position"] = attention_position ? ordered_json(*attention_position) : nullptr;
  j["reduction_ratio"] = reduction_ratio;
  j["num_classes"] = num_classes;
  return j.dump();
}

ModelConfig ModelConfig::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ModelConfig c;
    c.name = j.at("name").get<std::string>();
    c.fusion_mode = parse_fusion_mode(j.at("fusion_mode").get<std::string>());
    c.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
    c.conv_kernels = j.at("conv_kernels").get<std::vector<std::size_t>>();
    c.pool_size = j.at("pool_size").get<std::vector<std::size_t>>();
    c.dnn_nodes = j.at("dnn_nodes").get<std::vector<std::size_t>>();
    if (!j.at("attention_kind").is_null()) {
      c.attention_kind = parse_attention_kind(j["attention_kind"].get<std::string>());
    }
    if (!j.at("attention_position").is_null()) {
      c.attention_position = j["attention_position"].get<std::size_t>();
    }
    c.reduction_ratio = j.at("reduction_ratio").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kParse, std::string("model config: ") + e.what());
  }
}

namespace {

Tensor uniform_param(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor constant_param(Shape shape, double value) {
  return Tensor::parameter(shape, std::vector<double>(shape_numel(shape), value));
}

std::string indexed(const char* stem, std::size_t i, const char* leaf) {
  return std::string(stem) + std::to_string(i) + "." + leaf;
}

}  // namespace

Model Model::build(const ModelConfig& config, EmbeddingDims dims, std::uint64_t seed) {
  config.validate();
  if (dims.d == 0 || dims.b == 0 || dims.q == 0) {
    fail(ErrorCategory::kDimension, "embedding dimensions must be positive");
  }
  Model m;
  m.config_ = config;
  m.dims_ = dims;
  m.seed_ = seed;
  std::mt19937_64 rng(seed);

  std::size_t features = 0;
  if (config.conv_channels.empty()) {
    features = dims.d + dims.b + dims.q;
  } else {
    const bool two_d = is_2d(config);
    const std::size_t D = std::max({dims.d, dims.b, dims.q});
    std::size_t in_ch = 3;
    std::size_t extent = D;
    for (std::size_t i = 0; i < config.conv_channels.size(); ++i) {
      const std::size_t out_ch = config.conv_channels[i];
      const std::size_t k = config.conv_kernels[i];
      const std::size_t pad = k / 2;
      if (k > extent + 2 * pad) {
        fail(ErrorCategory::kDimension, "conv kernel " + std::to_string(k) +
                                            " exceeds the input extent");
      }
      extent = extent + 2 * pad - k + 1;
      const std::size_t fan_in = in_ch * k * (two_d ? k : 1);
      Shape wshape = two_d ? Shape{out_ch, in_ch, k, k} : Shape{out_ch, in_ch, k};
      m.params_.emplace_back(indexed("conv", i, "weight"), uniform_param(wshape, fan_in, rng));
      m.params_.emplace_back(indexed("conv", i, "bias"), constant_param({out_ch}, 0.0));
      m.params_.emplace_back(indexed("norm", i, "gamma"), constant_param({out_ch}, 1.0));
      m.params_.emplace_back(indexed("norm", i, "beta"), constant_param({out_ch}, 0.0));
      m.norm_stats_.push_back(ops::RunningStats::identity(out_ch));
      if (config.attention_position == i) {
        // PA's feature gate spans the sequence length at this point.
        m.attention_.emplace(make_attention(*config.attention_kind, out_ch, extent,
                                            config.reduction_ratio, rng));
      }
      in_ch = out_ch;
    }
    for (std::size_t p : config.pool_size) {
      if (p > extent) {
        fail(ErrorCategory::kDimension,
             "pool size " + std::to_string(p) + " exceeds post-conv spatial size " +
                 std::to_string(extent) + " (embedding dims " + std::to_string(dims.d) + "/" +
                 std::to_string(dims.b) + "/" + std::to_string(dims.q) + ")");
      }
    }
    if (m.attention_) {
      // Attention weights follow the conv layer they attach to.
      auto pos = m.params_.begin() +
                 static_cast<std::ptrdiff_t>(4 * (*config.attention_position + 1));
      std::vector<std::pair<std::string, Tensor>> att;
      for (const auto& [n, t] : m.attention_->weights) att.emplace_back("attention." + n, t);
      m.params_.insert(pos, att.begin(), att.end());
    }
    features = in_ch;
    for (std::size_t p : config.pool_size) features *= p;
  }

  std::size_t width = features;
  for (std::size_t j = 0; j < config.dnn_nodes.size(); ++j) {
    const std::size_t out = config.dnn_nodes[j];
    m.params_.emplace_back(indexed("fc", j, "weight"), uniform_param({width, out}, width, rng));
    m.params_.emplace_back(indexed("fc", j, "bias"), constant_param({out}, 0.0));
    width = out;
  }
  m.params_.emplace_back("out.weight", uniform_param({width, config.num_classes}, width, rng));
  m.params_.emplace_back("out.bias", constant_param({config.num_classes}, 0.0));
  return m;
}

std::vector<Tensor> Model::parameter_list() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [n, t] : params_) out.push_back(t);
  return out;
}

const Tensor& Model::param(std::string_view name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  fail(ErrorCategory::kInvalidArgument, "model has no parameter '" + std::string(name) + "'");
}

Tensor& Model::parameter(std::string_view name) { return const_cast<Tensor&>(param(name)); }

std::size_t Model::num_parameters() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

void Model::check_input(const FusedInput& batch) const {
  if (batch.mode != config_.fusion_mode) {
    fail(ErrorCategory::kInvalidArgument,
         "model '" + config_.name + "' takes " + std::string(fusion_mode_name(config_.fusion_mode)) +
             " input, got " + std::string(fusion_mode_name(batch.mode)));
  }
  Shape want = fused_shape(config_.fusion_mode, dims_.d, dims_.b, dims_.q);
  const Shape& got = batch.tensor.shape();
  if (got.size() != want.size() + 1 || !std::equal(want.begin(), want.end(), got.begin() + 1)) {
    fail(ErrorCategory::kDimension, "model '" + config_.name + "' expects batches of " +
                                        shape_string(want) + ", got " + shape_string(got));
  }
}

Tensor Model::forward_impl(const FusedInput& batch, ops::NormMode mode, Tape* tape,
                           std::vector<ops::RunningStats>& stats) const {
  check_input(batch);
  const std::size_t B = batch.tensor.dim(0);
  Tensor x = batch.tensor;
  const bool two_d = is_2d(config_);
  for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
    const std::size_t pad = config_.conv_kernels[i] / 2;
    const Tensor& w = param(indexed("conv", i, "weight"));
    const Tensor& b = param(indexed("conv", i, "bias"));
    x = two_d ? ops::conv2d(x, w, b, {1, pad}, tape) : ops::conv1d(x, w, b, {1, pad}, tape);
    x = ops::batch_norm(x, param(indexed("norm", i, "gamma")), param(indexed("norm", i, "beta")),
                        stats[i], mode, tape);
    x = ops::leaky_relu(x, ops::kLeakySlope, tape);
    if (attention_ && config_.attention_position == i) x = apply_attention(x, *attention_, tape);
  }
  if (!config_.conv_channels.empty()) {
    x = ops::adaptive_avg_pool(x, config_.pool_size, tape);
    x = ops::reshape(x, {B, x.numel() / B}, tape);
  }
  for (std::size_t j = 0; j < config_.dnn_nodes.size(); ++j) {
    x = ops::linear(x, param(indexed("fc", j, "weight")), param(indexed("fc", j, "bias")), tape);
    x = ops::leaky_relu(x, ops::kLeakySlope, tape);
  }
  return ops::linear(x, param("out.weight"), param("out.bias"), tape);
}

Tensor Model::forward(const FusedInput& batch, Tape* tape) {
  return forward_impl(batch, training_ ? ops::NormMode::kTrain : ops::NormMode::kEval, tape,
                      norm_stats_);
}

double target_probability(double logit_other, double logit_target) {
  const double m = std::max(logit_other, logit_target);
  const double e0 = std::exp(logit_other - m), e1 = std::exp(logit_target - m);
  return e1 / (e0 + e1);
}

std::vector<double> Model::score(const FusedInput& batch) const {
  std::vector<ops::RunningStats> stats = norm_stats_;
  const Tensor logits = forward_impl(batch, ops::NormMode::kEval, nullptr, stats);
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  std::vector<double> out(B);
  for (std::size_t i = 0; i < B; ++i) {
    // Target class is index 1; any further classes count as "other".
    double other = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      if (k != 1) other = std::max(other, logits[i * K + k]);
    }
    if (K == 2) {
      out[i] = target_probability(logits[i * K], logits[i * K + 1]);
    } else {
      double total = 0.0;
      for (std::size_t k = 0; k < K; ++k) total += std::exp(logits[i * K + k] - other);
      out[i] = std::exp(logits[i * K + 1] - other) / total;
    }
  }
  return out;
}

Model::Snapshot Model::snapshot() const {
  Snapshot s;
  for (const auto& [n, t] : params_) s.params.emplace_back(t.data().begin(), t.data().end());
  s.stats = norm_stats_;
  return s;
}

void Model::restore(const Snapshot& snapshot) {
  if (snapshot.params.size() != params_.size() || snapshot.stats.size() != norm_stats_.size()) {
    fail(ErrorCategory::kInvalidArgument, "snapshot does not match this model");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    std::span<double> dst = params_[i].second.mutable_data();
    if (snapshot.params[i].size() != dst.size()) {
      fail(ErrorCategory::kDimension, "snapshot tensor size mismatch for " + params_[i].first);
    }
    std::copy(snapshot.params[i].begin(), snapshot.params[i].end(), dst.begin());
  }
  norm_stats_ = snapshot.stats;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'A', 'S', 'V', 'C', 'K', 'P', 'T'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) fail(ErrorCategory::kParse, "checkpoint is truncated");
  T value;
  std::memcpy(&value, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

struct NamedArray {
  std::string name;
  Shape shape;
  std::span<const double> values;
};

std::vector<NamedArray> checkpoint_arrays(const Model& m) {
  std::vector<NamedArray> arrays;
  for (const auto& [n, t] : m.parameters()) arrays.push_back({n, t.shape(), t.data()});
  for (std::size_t i = 0; i < m.norm_stats().size(); ++i) {
    const auto& s = m.norm_stats()[i];
    arrays.push_back({indexed("norm", i, "running_mean"), {s.mean.size()}, s.mean});
    arrays.push_back({indexed("norm", i, "running_var"), {s.var.size()}, s.var});
  }
  return arrays;
}

}  // namespace

std::string Model::serialize() const {
  const auto arrays = checkpoint_arrays(*this);
  ordered_json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = ordered_json::parse(config_.to_json());
  header["dims"] = {{"d", dims_.d}, {"b", dims_.b}, {"q", dims_.q}};
  header["seed"] = seed_;
  ordered_json table = ordered_json::array();
  std::size_t offset = 0;
  for (const auto& a : arrays) {
    table.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}});
    offset += a.values.size();
  }
  header["tensors"] = table;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& a : arrays) {
    out.append(reinterpret_cast<const char*>(a.values.data()), a.values.size() * sizeof(double));
  }
  return out;
}

Model Model::deserialize(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    fail(ErrorCategory::kParse, "not a checkpoint (bad magic)");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    fail(ErrorCategory::kParse, "unsupported checkpoint format version " + std::to_string(version));
  }
  const auto header_len = take<std::uint64_t>(bytes, pos);
  if (pos + header_len > bytes.size()) fail(ErrorCategory::kParse, "checkpoint is truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kParse, std::string("checkpoint header: ") + e.what());
  }
  pos += header_len;
  const std::size_t data_start = pos;
  try {
    const ModelConfig config = ModelConfig::from_json(header.at("config").dump());
    const EmbeddingDims dims{header.at("dims").at("d").get<std::size_t>(),
                             header.at("dims").at("b").get<std::size_t>(),
                             header.at("dims").at("q").get<std::size_t>()};
    Model m = build(config, dims, header.at("seed").get<std::uint64_t>());
    std::vector<std::span<double>> slots;
    std::vector<std::string> names;
    for (auto& [n, t] : m.params_) {
      slots.push_back(t.mutable_data());
      names.push_back(n);
    }
    for (std::size_t i = 0; i < m.norm_stats_.size(); ++i) {
      slots.push_back(m.norm_stats_[i].mean);
      names.push_back(indexed("norm", i, "running_mean"));
      slots.push_back(m.norm_stats_[i].var);
      names.push_back(indexed("norm", i, "running_var"));
    }
    const auto& table = header.at("tensors");
    if (table.size() != slots.size()) {
      fail(ErrorCategory::kParse, "checkpoint has " + std::to_string(table.size()) +
                                      " tensors, config implies " + std::to_string(slots.size()));
    }
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const auto& entry = table[i];
      if (entry.at("name").get<std::string>() != names[i]) {
        fail(ErrorCategory::kParse, "checkpoint tensor " + std::to_string(i) + " is '" +
                                        entry.at("name").get<std::string>() + "', expected '" +
                                        names[i] + "'");
      }
      const Shape shape = entry.at("shape").get<Shape>();
      if (shape_numel(shape) != slots[i].size()) {
        fail(ErrorCategory::kParse, "checkpoint tensor '" + names[i] + "' has the wrong size");
      }
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      const std::size_t begin = data_start + offset * sizeof(double);
      const std::size_t len = slots[i].size() * sizeof(double);
      if (begin + len > bytes.size()) fail(ErrorCategory::kParse, "checkpoint is truncated");
      std::memcpy(slots[i].data(), bytes.data() + begin, len);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kParse, std::string("checkpoint header: ") + e.what());
  }
}

void Model::save(const std::filesystem::path& path) const {
  io::write_file_atomic(path, serialize());
}

Model Model::load(const std::filesystem::path& path) {
  try {
    return deserialize(io::read_file(path));
  } catch (const Error& e) {
    if (e.category() == ErrorCategory::kIo) throw;
    fail(e.category(), path.string() + ": " + e.what());
  }
}

std::string Model::digest() const { return io::digest_hex(serialize()); }

ScoreSet score_protocol(const Model& model, const EmbeddingStore& store, const Protocol& protocol,
                        std::size_t batch_size) {
  if (batch_size == 0) fail(ErrorCategory::kInvalidArgument, "batch size must be positive");
  ScoreSet scores;
  scores.seed = model.seed();
  scores.digest = model.digest();
  scores.trials.reserve(protocol.trials.size());
  std::vector<TrialEmbeddings> batch;
  for (std::size_t start = 0; start < protocol.trials.size(); start += batch_size) {
    const std::size_t end = std::min(protocol.trials.size(), start + batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(store.trial_embeddings(protocol.trials[i]));
    }
    const FusedInput fused{model.config().fusion_mode,
                           fuse_batch(batch, model.config().fusion_mode)};
    const std::vector<double> probs = model.score(fused);
    for (std::size_t i = start; i < end; ++i) {
      scores.trials.push_back({trial_id(i), probs[i - start], protocol.trials[i].label});
    }
  }
  return scores;
}

}  // namespace sasv
