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

#include "sasv/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "sasv/error.hpp"
#include "sasv/fusion.hpp"
#include "sasv/io.hpp"
#include "sasv/ops.hpp"

namespace sasv {

void TrainConfig::set(std::string_view key, std::string_view value) {
  if (key == "lr0") {
    lr0 = io::parse_real(key, value);
  } else if (key == "weight_decay") {
    weight_decay = io::parse_real(key, value);
  } else if (key == "schedule_decay") {
    schedule_decay = io::parse_real(key, value);
  } else if (key == "class_weights") {
    const auto parts = io::split(value, ',');
    if (parts.size() != 2) {
      fail(ErrorCategory::kInvalidArgument, "class_weights takes two comma-separated values");
    }
    class_weights = {io::parse_real(key, io::trim(parts[0])), io::parse_real(key, io::trim(parts[1]))};
  } else if (key == "batch_size") {
    batch_size = io::parse_size(key, value);
  } else if (key == "epochs") {
    epochs = io::parse_size(key, value);
  } else if (key == "seed") {
    seed = io::parse_u64(key, value);
  } else if (key == "select_on_dev") {
    select_on_dev = io::parse_bool(key, value);
  } else {
    fail(ErrorCategory::kInvalidArgument, "unknown training key '" + std::string(key) + "'");
  }
}

void TrainConfig::validate() const {
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) fail(ErrorCategory::kInvalidArgument, "lr0 must be positive");
  if (!(weight_decay >= 0.0)) fail(ErrorCategory::kInvalidArgument, "weight_decay must be >= 0");
  if (!(schedule_decay >= 0.0)) fail(ErrorCategory::kInvalidArgument, "schedule_decay must be >= 0");
  for (double w : class_weights) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      fail(ErrorCategory::kInvalidArgument, "class weights must be positive");
    }
  }
  if (batch_size < 2) fail(ErrorCategory::kInvalidArgument, "batch_size must be at least 2");
  if (epochs == 0) fail(ErrorCategory::kInvalidArgument, "epochs must be positive");
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["lr0"] = lr0;
  j["weight_decay"] = weight_decay;
  j["class_weights"] = class_weights;
  j["schedule_decay"] = schedule_decay;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["select_on_dev"] = select_on_dev;
  return j.dump();
}

void adam_step(std::span<Tensor> params, OptimizerState& state, double lr, double weight_decay) {
  if (state.m.empty() && state.v.empty()) {
    for (const Tensor& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    fail(ErrorCategory::kInvalidArgument, "optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      fail(ErrorCategory::kInvalidArgument, "parameter " + std::to_string(i) + " has no gradient");
    }
    if (state.m[i].size() != params[i].numel()) {
      fail(ErrorCategory::kDimension, "optimizer moment size mismatch at parameter " +
                                          std::to_string(i));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::span<double> w = params[i].mutable_data();
    const std::span<const double> g = params[i].grad();
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k] + weight_decay * w[k];
      m[k] = kAdamBeta1 * m[k] + (1.0 - kAdamBeta1) * gk;
      v[k] = kAdamBeta2 * v[k] + (1.0 - kAdamBeta2) * gk * gk;
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      w[k] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
    }
  }
}

double lr_at(std::uint64_t step, const TrainConfig& cfg) {
  return cfg.lr0 / (1.0 + cfg.schedule_decay * static_cast<double>(step));
}

Tensor weighted_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels,
                              std::span<const double> class_weights, Tape* tape) {
  if (logits.rank() != 2) {
    fail(ErrorCategory::kDimension, "weighted_cross_entropy expects logits [B x K], got " +
                                        shape_string(logits.shape()));
  }
  if (labels.size() != logits.dim(0)) {
    fail(ErrorCategory::kDimension, "label count does not match the batch size");
  }
  if (class_weights.size() != logits.dim(1)) {
    fail(ErrorCategory::kDimension, "need one class weight per logit column");
  }
  std::vector<double> per_item(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= class_weights.size()) {
      fail(ErrorCategory::kInvalidArgument, "label " + std::to_string(labels[i]) +
                                                " is out of range at position " + std::to_string(i));
    }
    per_item[i] = class_weights[labels[i]];
  }
  return ops::weighted_nll(ops::log_softmax(logits, 1, tape), labels, per_item, tape);
}

std::size_t training_label(TrialLabel label) { return label == TrialLabel::kTarget ? 1 : 0; }

double scored_cross_entropy(const ScoreSet& scores, std::span<const double> class_weights) {
  if (scores.trials.empty()) fail(ErrorCategory::kData, "no scored trials");
  constexpr double kFloor = 1e-300;
  double sum = 0.0;
  for (const ScoredTrial& t : scores.trials) {
    const std::size_t y = training_label(t.label);
    const double p = y == 1 ? t.score : 1.0 - t.score;
    sum -= class_weights[y] * std::log(std::max(p, kFloor));
  }
  return sum / static_cast<double>(scores.trials.size());
}

std::string EpochRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["mean_loss"] = mean_loss;
  j["lr"] = lr;
  if (dev_loss) j["dev_loss"] = *dev_loss;
  if (dev) {
    for (Metric m : {Metric::kSasv, Metric::kSpf, Metric::kSv}) {
      const auto& r = (*dev)[m];
      j["dev_" + std::string(metric_name(m))] =
          r.eer_percent ? nlohmann::ordered_json(*r.eer_percent) : nullptr;
    }
  }
  return j.dump();
}

TrainResult fit(Model& model, const EmbeddingStore& store, const Protocol& train,
                const Protocol* dev, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.trials.empty()) fail(ErrorCategory::kData, "training protocol is empty");
  const FusionMode mode = model.config().fusion_mode;

  std::vector<TrialEmbeddings> items;
  std::vector<std::size_t> labels;
  items.reserve(train.trials.size());
  std::array<std::size_t, 2> counts{0, 0};
  for (const Trial& t : train.trials) {
    items.push_back(store.trial_embeddings(t));
    labels.push_back(training_label(t.label));
    ++counts[labels.back()];
  }
  if (counts[0] == 0 || counts[1] == 0) {
    fail(ErrorCategory::kData, "training data holds a single class (" + std::to_string(counts[1]) +
                                   " target, " + std::to_string(counts[0]) + " other)");
  }

  std::vector<Tensor> params = model.parameter_list();
  TrainResult result;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  // Batch boundaries; a trailing batch of one is merged into its
  // predecessor since batch statistics need two items.
  std::vector<std::size_t> bounds;
  for (std::size_t s = 0; s < items.size(); s += cfg.batch_size) bounds.push_back(s);
  bounds.push_back(items.size());
  if (bounds.size() > 2 && bounds[bounds.size() - 1] - bounds[bounds.size() - 2] == 1) {
    bounds.erase(bounds.end() - 2);
  }
  if (bounds.size() == 2 && items.size() < 2) {
    fail(ErrorCategory::kData, "training needs at least two trials");
  }

  const bool selecting = dev != nullptr && cfg.select_on_dev;
  std::optional<Model::Snapshot> best;
  double best_eer = std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();

  std::vector<TrialEmbeddings> batch_items;
  std::vector<std::size_t> batch_labels;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    model.set_training(true);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    double lr = lr_at(result.optimizer.step, cfg);
    for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
      batch_items.clear();
      batch_labels.clear();
      for (std::size_t k = bounds[b]; k < bounds[b + 1]; ++k) {
        batch_items.push_back(items[order[k]]);
        batch_labels.push_back(labels[order[k]]);
      }
      for (Tensor& p : params) p.zero_grad();
      Tape tape;
      const FusedInput input{mode, fuse_batch(batch_items, mode)};
      const Tensor logits = model.forward(input, &tape);
      const Tensor loss = weighted_cross_entropy(logits, batch_labels, cfg.class_weights, &tape);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        fail(ErrorCategory::kNumeric, "non-finite training loss at epoch " + std::to_string(epoch) +
                                          ", batch " + std::to_string(b + 1) + " (lr " +
                                          io::format_double(lr) + ")");
      }
      tape.backward(loss);
      lr = lr_at(result.optimizer.step, cfg);
      adam_step(params, result.optimizer, lr, cfg.weight_decay);
      loss_sum += value * static_cast<double>(batch_labels.size());
      seen += batch_labels.size();
    }
    model.set_training(false);

    EpochRecord record;
    record.epoch = epoch;
    record.mean_loss = loss_sum / static_cast<double>(seen);
    record.lr = lr;
    if (dev != nullptr) {
      const ScoreSet scored = score_protocol(model, store, *dev);
      record.dev = evaluate(scored);
      record.dev_loss = scored_cross_entropy(scored, cfg.class_weights);
      const auto& sasv = (*record.dev)[Metric::kSasv];
      // Dev EER saturates quickly on easy data; the dev loss breaks ties.
      if (selecting && sasv.eer_percent &&
          (*sasv.eer_percent < best_eer ||
           (*sasv.eer_percent == best_eer && *record.dev_loss < best_loss))) {
        best_eer = *sasv.eer_percent;
        best_loss = *record.dev_loss;
        best = model.snapshot();
        result.selected_epoch = epoch;
      }
    }
    if (on_epoch) on_epoch(record);
    result.epochs.push_back(std::move(record));
  }
  if (best) {
    model.restore(*best);
  } else {
    result.selected_epoch = cfg.epochs;
  }
  model.set_training(false);
  return result;
}

}  // namespace sasv
