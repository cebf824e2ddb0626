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

#include "sasv/experiment.hpp"

#include <json.hpp>

#include "sasv/error.hpp"
#include "sasv/io.hpp"
#include "sasv/model.hpp"

namespace sasv {

namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& workdir, std::string_view value) {
  fs::path p{std::string(value)};
  return p.is_absolute() || workdir.empty() ? p : workdir / p;
}

void require_file(const fs::path& path, const char* key) {
  if (!fs::is_regular_file(path)) {
    fail(ErrorCategory::kIo, std::string(key) + ": no such file '" + path.string() + "'");
  }
}

}  // namespace

ExperimentConfig parse_experiment(std::string_view text, const fs::path& workdir) {
  ExperimentConfig cfg;
  bool seen_model = false, seen_embeddings = false, seen_train = false, seen_output = false;
  bool seen_select = false;
  for (const auto& [key, value] : io::parse_key_values(text)) {
    if (key == "model") {
      cfg.model = value;
      seen_model = true;
    } else if (key == "embeddings") {
      cfg.embeddings = resolve(workdir, value);
      seen_embeddings = true;
    } else if (key == "train_protocol") {
      cfg.train_protocol = resolve(workdir, value);
      seen_train = true;
    } else if (key == "dev_protocol") {
      cfg.dev_protocol = resolve(workdir, value);
    } else if (key == "eval_protocol") {
      cfg.eval_protocol = resolve(workdir, value);
    } else if (key == "output_dir") {
      cfg.output_dir = resolve(workdir, value);
      seen_output = true;
    } else if (key == "seed") {
      cfg.seed = io::parse_u64(key, value);
    } else if (key == "d_spk") {
      cfg.d_spk = io::parse_size(key, value);
    } else if (key == "d_cm") {
      cfg.d_cm = io::parse_size(key, value);
    } else if (key == "train_on_dev") {
      cfg.train_on_dev = io::parse_bool(key, value);
    } else {
      cfg.train.set(key, value);
      seen_select = seen_select || key == "select_on_dev";
    }
  }
  auto missing = [](const char* key) {
    fail(ErrorCategory::kInvalidArgument, std::string("run file is missing '") + key + "'");
  };
  if (!seen_model) missing("model");
  if (!seen_embeddings) missing("embeddings");
  if (!seen_train) missing("train_protocol");
  if (!seen_output) missing("output_dir");
  cfg.train.seed = cfg.seed;
  if (cfg.train_on_dev && !seen_select) cfg.train.select_on_dev = false;
  preset_config(cfg.model);  // rejects unknown presets early
  cfg.train.validate();
  return cfg;
}

ExperimentConfig load_experiment(const fs::path& path, const fs::path& workdir) {
  try {
    return parse_experiment(io::read_file(resolve(workdir, path.string())), workdir);
  } catch (const Error& e) {
    if (e.category() == ErrorCategory::kIo) throw;
    fail(e.category(), path.string() + ": " + e.what());
  }
}

void ExperimentConfig::validate() const {
  preset_config(model);
  train.validate();
  require_file(embeddings, "embeddings");
  require_file(train_protocol, "train_protocol");
  if (dev_protocol) require_file(*dev_protocol, "dev_protocol");
  if (eval_protocol) require_file(*eval_protocol, "eval_protocol");
  if (train_on_dev && !dev_protocol) {
    fail(ErrorCategory::kInvalidArgument, "train_on_dev needs a dev_protocol");
  }
  if (output_dir.empty()) fail(ErrorCategory::kInvalidArgument, "output_dir is empty");
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  const EmbeddingStore store = load_embeddings(cfg.embeddings);
  if (cfg.d_spk && *cfg.d_spk != store.d_spk()) {
    fail(ErrorCategory::kDimension, "run file expects d_spk=" + std::to_string(*cfg.d_spk) +
                                        ", embeddings have " + std::to_string(store.d_spk()));
  }
  if (cfg.d_cm && *cfg.d_cm != store.d_cm()) {
    fail(ErrorCategory::kDimension, "run file expects d_cm=" + std::to_string(*cfg.d_cm) +
                                        ", embeddings have " + std::to_string(store.d_cm()));
  }
  Protocol train = parse_protocol(cfg.train_protocol, Partition::kTrain);
  std::optional<Protocol> dev;
  if (cfg.dev_protocol) dev = parse_protocol(*cfg.dev_protocol, Partition::kDev);
  if (cfg.train_on_dev) train.trials.insert(train.trials.end(), dev->trials.begin(), dev->trials.end());

  const EmbeddingDims dims{store.d_spk(), store.d_spk(), store.d_cm()};
  Model model = Model::build(preset_config(cfg.model), dims, cfg.seed);

  fs::create_directories(cfg.output_dir);
  ExperimentResult result;
  result.log = cfg.output_dir / "train_log.jsonl";
  std::string log_text;
  auto log_epoch = [&](const EpochRecord& r) {
    log_text += r.to_json();
    log_text += '\n';
    if (on_epoch) on_epoch(r);
  };
  result.training = fit(model, store, train, dev ? &*dev : nullptr, cfg.train, log_epoch);
  io::write_file_atomic(result.log, log_text);

  result.checkpoint = cfg.output_dir / "model.ckpt";
  model.save(result.checkpoint);

  nlohmann::ordered_json run;
  run["model"] = cfg.model;
  run["seed"] = cfg.seed;
  run["config_digest"] = model.digest();
  run["dims"] = {{"d_spk", store.d_spk()}, {"d_cm", store.d_cm()}};
  run["train"] = nlohmann::ordered_json::parse(cfg.train.to_json());
  run["train_on_dev"] = cfg.train_on_dev;
  run["selected_epoch"] = result.training.selected_epoch;
  run["num_parameters"] = model.num_parameters();

  if (cfg.eval_protocol) {
    const Protocol eval = parse_protocol(*cfg.eval_protocol, Partition::kEval);
    const ScoreSet scores = score_protocol(model, store, eval);
    result.eval_scores = cfg.output_dir / "eval_scores.txt";
    save_scores(scores, *result.eval_scores);
    result.eval_report = evaluate(scores);
    run["eval"] = nlohmann::ordered_json::parse(result.eval_report->json());
  }
  io::write_file_atomic(cfg.output_dir / "run.json", run.dump(2) + "\n");
  return result;
}

}  // namespace sasv
