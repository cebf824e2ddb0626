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

#include "sasv/sasv.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <string>
#include <vector>

#include <json.hpp>

#include "sasv/data_io.hpp"
#include "sasv/error.hpp"
#include "sasv/experiment.hpp"
#include "sasv/io.hpp"
#include "sasv/metrics.hpp"
#include "sasv/model.hpp"
#include "sasv/score_fusion.hpp"
#include "sasv/selftest.hpp"

struct sasv_store {
  sasv::EmbeddingStore store;
};
struct sasv_protocol {
  sasv::Protocol protocol;
};
struct sasv_model {
  sasv::Model model;
};
struct sasv_scores {
  sasv::ScoreSet scores;
  bool labelled = false;
};
struct sasv_report {
  sasv::EerReport report;
};
struct sasv_fusion {
  sasv::FusionModel fusion;
};

namespace {

thread_local std::string g_last_error;

sasv_status to_status(sasv::ErrorCategory c) {
  switch (c) {
    case sasv::ErrorCategory::kInvalidArgument: return SASV_ERR_INVALID_ARGUMENT;
    case sasv::ErrorCategory::kDimension: return SASV_ERR_DIMENSION;
    case sasv::ErrorCategory::kParse: return SASV_ERR_PARSE;
    case sasv::ErrorCategory::kIo: return SASV_ERR_IO;
    case sasv::ErrorCategory::kData: return SASV_ERR_DATA;
    case sasv::ErrorCategory::kNumeric: return SASV_ERR_NUMERIC;
    case sasv::ErrorCategory::kInternal: return SASV_ERR_INTERNAL;
  }
  return SASV_ERR_INTERNAL;
}

template <typename Fn>
sasv_status guard(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return SASV_OK;
  } catch (const sasv::Error& e) {
    g_last_error = e.what();
    return to_status(e.category());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SASV_ERR_INTERNAL;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return SASV_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SASV_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SASV_ERR_INTERNAL;
  }
}

template <typename T>
void require(const T* ptr, const char* what) {
  if (ptr == nullptr) {
    sasv::fail(sasv::ErrorCategory::kInvalidArgument, std::string(what) + " is NULL");
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<sasv::ScoreSet> gather(const sasv_scores* const* systems, size_t count,
                                   bool need_labels) {
  if (systems == nullptr || count == 0) {
    sasv::fail(sasv::ErrorCategory::kInvalidArgument, "no score sets given");
  }
  std::vector<sasv::ScoreSet> out;
  for (size_t i = 0; i < count; ++i) {
    require(systems[i], "score set");
    if (need_labels && !systems[i]->labelled) {
      sasv::fail(sasv::ErrorCategory::kInvalidArgument,
                 "score set " + std::to_string(i) + " has no labels; attach a protocol first");
    }
    out.push_back(systems[i]->scores);
  }
  return out;
}

sasv::Metric to_metric(sasv_metric m) {
  switch (m) {
    case SASV_METRIC_SASV: return sasv::Metric::kSasv;
    case SASV_METRIC_SPF: return sasv::Metric::kSpf;
    case SASV_METRIC_SV: return sasv::Metric::kSv;
  }
  sasv::fail(sasv::ErrorCategory::kInvalidArgument, "unknown metric");
}

}  // namespace

extern "C" {

const char* sasv_version(void) { return "1.0.0"; }

const char* sasv_last_error(void) { return g_last_error.c_str(); }

const char* sasv_status_string(sasv_status status) {
  switch (status) {
    case SASV_OK: return "ok";
    case SASV_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case SASV_ERR_DIMENSION: return "dimension";
    case SASV_ERR_PARSE: return "parse";
    case SASV_ERR_IO: return "io";
    case SASV_ERR_DATA: return "data";
    case SASV_ERR_NUMERIC: return "numeric";
    case SASV_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void sasv_string_free(char* str) { std::free(str); }

sasv_status sasv_generate_synthetic(const char* config_path, const char* const* overrides,
                                    size_t num_overrides, const char* out_dir) {
  return guard([&] {
    require(out_dir, "out_dir");
    sasv::SynthConfig cfg;
    if (config_path != nullptr) cfg = sasv::parse_synth_config(sasv::io::read_file(config_path));
    for (size_t i = 0; i < num_overrides; ++i) {
      require(overrides, "overrides");
      require(overrides[i], "override");
      const std::string_view kv = overrides[i];
      const auto eq = kv.find('=');
      if (eq == std::string_view::npos) {
        sasv::fail(sasv::ErrorCategory::kInvalidArgument,
                   "override '" + std::string(kv) + "' is not key=value");
      }
      cfg.set(sasv::io::trim(kv.substr(0, eq)), sasv::io::trim(kv.substr(eq + 1)));
    }
    cfg.validate();
    const sasv::SyntheticData data = sasv::generate_synthetic(cfg);
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    sasv::save_embeddings(data.store, dir / "embeddings.txt");
    sasv::save_protocol(data.train, dir / "train.txt");
    sasv::save_protocol(data.dev, dir / "dev.txt");
    sasv::save_protocol(data.eval, dir / "eval.txt");
    sasv::io::write_file_atomic(dir / "synth.cfg", cfg.to_text());
  });
}

sasv_status sasv_store_load(const char* path, sasv_store** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new sasv_store{sasv::load_embeddings(path)};
  });
}

void sasv_store_free(sasv_store* store) { delete store; }

sasv_status sasv_store_dims(const sasv_store* store, size_t* d_spk, size_t* d_cm) {
  return guard([&] {
    require(store, "store");
    if (d_spk) *d_spk = store->store.d_spk();
    if (d_cm) *d_cm = store->store.d_cm();
  });
}

sasv_status sasv_protocol_load(const char* path, sasv_protocol** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new sasv_protocol{sasv::parse_protocol(path)};
  });
}

void sasv_protocol_free(sasv_protocol* protocol) { delete protocol; }

sasv_status sasv_protocol_size(const sasv_protocol* protocol, size_t* out) {
  return guard([&] {
    require(protocol, "protocol");
    require(out, "out");
    *out = protocol->protocol.trials.size();
  });
}

size_t sasv_preset_count(void) { return sasv::preset_names().size(); }

const char* sasv_preset_name(size_t index) {
  const auto names = sasv::preset_names();
  return index < names.size() ? names[index].data() : nullptr;
}

sasv_status sasv_model_build(const char* preset, size_t d_spk, size_t d_cm, uint64_t seed,
                             sasv_model** out) {
  return guard([&] {
    require(preset, "preset");
    require(out, "out");
    *out = new sasv_model{sasv::Model::build(sasv::preset_config(preset),
                                             sasv::EmbeddingDims{d_spk, d_spk, d_cm}, seed)};
  });
}

sasv_status sasv_model_load(const char* path, sasv_model** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new sasv_model{sasv::Model::load(path)};
  });
}

sasv_status sasv_model_save(const sasv_model* model, const char* path) {
  return guard([&] {
    require(model, "model");
    require(path, "path");
    model->model.save(path);
  });
}

void sasv_model_free(sasv_model* model) { delete model; }

sasv_status sasv_model_num_parameters(const sasv_model* model, size_t* out) {
  return guard([&] {
    require(model, "model");
    require(out, "out");
    *out = model->model.num_parameters();
  });
}

sasv_status sasv_model_config_json(const sasv_model* model, char** out) {
  return guard([&] {
    require(model, "model");
    require(out, "out");
    *out = copy_string(model->model.config().to_json());
  });
}

sasv_status sasv_model_digest(const sasv_model* model, char** out) {
  return guard([&] {
    require(model, "model");
    require(out, "out");
    *out = copy_string(model->model.digest());
  });
}

sasv_status sasv_experiment_train(const char* run_file, const char* workdir,
                                  sasv_epoch_callback on_epoch, void* user, char** summary_json) {
  return guard([&] {
    require(run_file, "run_file");
    const std::filesystem::path wd = workdir ? workdir : "";
    const sasv::ExperimentConfig cfg = sasv::load_experiment(run_file, wd);
    sasv::EpochCallback cb;
    if (on_epoch) cb = [&](const sasv::EpochRecord& r) { on_epoch(r.to_json().c_str(), user); };
    const sasv::ExperimentResult result = sasv::run_experiment(cfg, cb);
    if (summary_json != nullptr) {
      nlohmann::ordered_json j;
      j["checkpoint"] = result.checkpoint.string();
      j["log"] = result.log.string();
      j["selected_epoch"] = result.training.selected_epoch;
      j["final_loss"] = result.training.epochs.back().mean_loss;
      if (result.eval_scores) j["eval_scores"] = result.eval_scores->string();
      if (result.eval_report) j["eval"] = nlohmann::ordered_json::parse(result.eval_report->json());
      *summary_json = copy_string(j.dump(2));
    }
  });
}

sasv_status sasv_model_score(const sasv_model* model, const sasv_store* store,
                             const sasv_protocol* protocol, sasv_scores** out) {
  return guard([&] {
    require(model, "model");
    require(store, "store");
    require(protocol, "protocol");
    require(out, "out");
    *out = new sasv_scores{
        sasv::score_protocol(model->model, store->store, protocol->protocol), true};
  });
}

sasv_status sasv_scores_load(const char* path, const sasv_protocol* protocol, sasv_scores** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    sasv::ScoreSet s = sasv::load_scores(path);
    if (protocol != nullptr) sasv::attach_labels(s, protocol->protocol);
    *out = new sasv_scores{std::move(s), protocol != nullptr};
  });
}

sasv_status sasv_scores_attach_labels(sasv_scores* scores, const sasv_protocol* protocol) {
  return guard([&] {
    require(scores, "scores");
    require(protocol, "protocol");
    sasv::attach_labels(scores->scores, protocol->protocol);
    scores->labelled = true;
  });
}

sasv_status sasv_scores_save(const sasv_scores* scores, const char* path) {
  return guard([&] {
    require(scores, "scores");
    require(path, "path");
    sasv::save_scores(scores->scores, path);
  });
}

void sasv_scores_free(sasv_scores* scores) { delete scores; }

sasv_status sasv_scores_size(const sasv_scores* scores, size_t* out) {
  return guard([&] {
    require(scores, "scores");
    require(out, "out");
    *out = scores->scores.trials.size();
  });
}

sasv_status sasv_scores_get(const sasv_scores* scores, size_t index, const char** trial_id,
                            double* score) {
  return guard([&] {
    require(scores, "scores");
    if (index >= scores->scores.trials.size()) {
      sasv::fail(sasv::ErrorCategory::kInvalidArgument, "score index out of range");
    }
    const auto& t = scores->scores.trials[index];
    if (trial_id) *trial_id = t.trial_id.c_str();
    if (score) *score = t.score;
  });
}

sasv_status sasv_evaluate(const sasv_scores* scores, sasv_report** out) {
  return guard([&] {
    require(scores, "scores");
    require(out, "out");
    if (!scores->labelled) {
      sasv::fail(sasv::ErrorCategory::kInvalidArgument,
                 "scores have no labels; attach a protocol first");
    }
    *out = new sasv_report{sasv::evaluate(scores->scores)};
  });
}

void sasv_report_free(sasv_report* report) { delete report; }

sasv_status sasv_report_eer(const sasv_report* report, sasv_metric metric, double* eer_percent,
                            double* threshold) {
  return guard([&] {
    require(report, "report");
    const sasv::Metric m = to_metric(metric);
    const auto& r = report->report[m];
    if (!r.eer_percent) {
      sasv::fail(sasv::ErrorCategory::kData,
                 std::string(sasv::metric_name(m)) + " is undefined for these trials");
    }
    if (eer_percent) *eer_percent = *r.eer_percent;
    if (threshold) *threshold = r.threshold;
  });
}

sasv_status sasv_report_text(const sasv_report* report, sasv_report_format format, char** out) {
  return guard([&] {
    require(report, "report");
    require(out, "out");
    switch (format) {
      case SASV_REPORT_TABLE: *out = copy_string(report->report.table()); return;
      case SASV_REPORT_JSON: *out = copy_string(report->report.json()); return;
      case SASV_REPORT_TRIPLE: *out = copy_string(report->report.triple()); return;
    }
    sasv::fail(sasv::ErrorCategory::kInvalidArgument, "unknown report format");
  });
}

sasv_status sasv_det_points_write(const sasv_scores* scores, sasv_metric metric, const char* path) {
  return guard([&] {
    require(scores, "scores");
    require(path, "path");
    if (!scores->labelled) {
      sasv::fail(sasv::ErrorCategory::kInvalidArgument, "DET points need labelled scores");
    }
    const auto [pos, neg] = sasv::metric_partition(scores->scores, to_metric(metric));
    std::string text = "# threshold\tfar\tfrr\n";
    for (const auto& p : sasv::det_points(pos, neg)) {
      text += sasv::io::format_double(p.threshold) + "\t" + sasv::io::format_double(p.far) + "\t" +
              sasv::io::format_double(p.frr) + "\n";
    }
    sasv::io::write_file_atomic(path, text);
  });
}

sasv_status sasv_fusion_average(const sasv_scores* const* systems, size_t count,
                                sasv_scores** out) {
  return guard([&] {
    require(out, "out");
    const auto sets = gather(systems, count, false);
    *out = new sasv_scores{sasv::average_scores(sets), systems[0]->labelled};
  });
}

sasv_status sasv_fusion_fit_linear(const sasv_scores* const* calibration, size_t count,
                                   sasv_fusion** out) {
  return guard([&] {
    require(out, "out");
    const auto sets = gather(calibration, count, true);
    *out = new sasv_fusion{sasv::fit_linear(sets)};
  });
}

sasv_status sasv_fusion_make_average(sasv_fusion** out) {
  return guard([&] {
    require(out, "out");
    *out = new sasv_fusion{};
  });
}

sasv_status sasv_fusion_apply(const sasv_fusion* fusion, const sasv_scores* const* systems,
                              size_t count, sasv_scores** out) {
  return guard([&] {
    require(fusion, "fusion");
    require(out, "out");
    const auto sets = gather(systems, count, false);
    *out = new sasv_scores{sasv::apply_fusion(fusion->fusion, sets), systems[0]->labelled};
  });
}

sasv_status sasv_fusion_save(const sasv_fusion* fusion, const char* path) {
  return guard([&] {
    require(fusion, "fusion");
    require(path, "path");
    sasv::save_fusion_model(fusion->fusion, path);
  });
}

sasv_status sasv_fusion_load(const char* path, sasv_fusion** out) {
  return guard([&] {
    require(path, "path");
    require(out, "out");
    *out = new sasv_fusion{sasv::load_fusion_model(path)};
  });
}

sasv_status sasv_fusion_json(const sasv_fusion* fusion, char** out) {
  return guard([&] {
    require(fusion, "fusion");
    require(out, "out");
    *out = copy_string(fusion->fusion.to_json());
  });
}

void sasv_fusion_free(sasv_fusion* fusion) { delete fusion; }

sasv_status sasv_selftest(sasv_check_callback on_check, void* user, size_t* passed,
                          size_t* failed) {
  return guard([&] {
    const sasv::SelftestSummary s = sasv::run_selftest([&](const sasv::SelftestCheck& c) {
      if (on_check) on_check(c.name.c_str(), c.passed ? 1 : 0, c.detail.c_str(), user);
    });
    if (passed) *passed = s.passed;
    if (failed) *failed = s.failed;
  });
}

}  // extern "C"
