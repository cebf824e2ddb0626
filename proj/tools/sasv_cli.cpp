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

// Command-line front end. Talks to the library only through sasv.h.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "sasv/sasv.h"

namespace {

namespace fs = std::filesystem;

struct Failure {
  sasv_status status;
};

void check(sasv_status status) {
  if (status != SASV_OK) throw Failure{status};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Store = std::unique_ptr<sasv_store, Deleter<sasv_store, sasv_store_free>>;
using Protocol = std::unique_ptr<sasv_protocol, Deleter<sasv_protocol, sasv_protocol_free>>;
using Model = std::unique_ptr<sasv_model, Deleter<sasv_model, sasv_model_free>>;
using Scores = std::unique_ptr<sasv_scores, Deleter<sasv_scores, sasv_scores_free>>;
using Report = std::unique_ptr<sasv_report, Deleter<sasv_report, sasv_report_free>>;
using Fusion = std::unique_ptr<sasv_fusion, Deleter<sasv_fusion, sasv_fusion_free>>;

std::string take_string(char* s) {
  std::string out = s ? s : "";
  sasv_string_free(s);
  return out;
}

struct Paths {
  std::string workdir;
  std::string operator()(const std::string& p) const {
    if (p.empty() || workdir.empty() || fs::path(p).is_absolute()) return p;
    return (fs::path(workdir) / p).string();
  }
};

Protocol load_protocol(const std::string& path) {
  sasv_protocol* p = nullptr;
  check(sasv_protocol_load(path.c_str(), &p));
  return Protocol(p);
}

Scores load_scores(const std::string& path, const sasv_protocol* protocol) {
  sasv_scores* s = nullptr;
  check(sasv_scores_load(path.c_str(), protocol, &s));
  return Scores(s);
}

void print_report(const sasv_scores* scores, const std::string& json_out, const Paths& at) {
  sasv_report* raw = nullptr;
  check(sasv_evaluate(scores, &raw));
  Report report(raw);
  char* text = nullptr;
  check(sasv_report_text(report.get(), SASV_REPORT_TABLE, &text));
  std::fputs(take_string(text).c_str(), stdout);
  check(sasv_report_text(report.get(), SASV_REPORT_TRIPLE, &text));
  std::printf("EER(%%) SASV SPF SV: %s\n", take_string(text).c_str());
  if (!json_out.empty()) {
    check(sasv_report_text(report.get(), SASV_REPORT_JSON, &text));
    const std::string body = take_string(text);
    const std::string path = at(json_out);
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr || std::fwrite(body.data(), 1, body.size(), f) != body.size()) {
      if (f) std::fclose(f);
      std::fprintf(stderr, "error [io]: cannot write %s\n", path.c_str());
      throw Failure{SASV_ERR_IO};
    }
    std::fclose(f);
  }
}

std::vector<const sasv_scores*> raw_list(const std::vector<Scores>& sets) {
  std::vector<const sasv_scores*> out;
  for (const auto& s : sets) out.push_back(s.get());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spoofing-aware speaker verification backends"};
  app.require_subcommand(1);
  Paths at;
  app.add_option("--workdir", at.workdir, "Directory that relative paths resolve against");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic embedding store and protocols");
  std::string gen_config, gen_out;
  std::vector<std::string> gen_set;
  gen->add_option("--config", gen_config, "Synthetic config file (key=value)");
  gen->add_option("--set", gen_set, "Override a config key (key=value); repeatable");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a preset from a run file");
  std::string run_file;
  bool quiet = false;
  train->add_option("--run", run_file, "Run file (key=value)")->required();
  train->add_flag("--quiet", quiet, "Do not print per-epoch records");

  // score
  auto* score = app.add_subcommand("score", "Score a protocol with a checkpoint");
  std::string ckpt, emb, score_protocol, score_out;
  score->add_option("--checkpoint", ckpt, "Model checkpoint")->required();
  score->add_option("--embeddings", emb, "Embedding store")->required();
  score->add_option("--protocol", score_protocol, "Trial protocol")->required();
  score->add_option("--out", score_out, "Score file to write")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Compute SASV, SPF and SV EERs for a score file");
  std::string eval_scores, eval_protocol, eval_json, eval_det;
  eval->add_option("--scores", eval_scores, "Score file")->required();
  eval->add_option("--protocol", eval_protocol, "Trial protocol with labels")->required();
  eval->add_option("--json", eval_json, "Also write the report as JSON");
  eval->add_option("--det", eval_det, "Write SASV DET points (threshold, FAR, FRR)");

  // fuse
  auto* fuse = app.add_subcommand("fuse", "Fuse score files from several systems");
  std::string method = "average", fuse_out, fuse_protocol, cal_protocol, model_out, model_in,
              fuse_json;
  std::vector<std::string> fuse_scores, cal_scores;
  fuse->add_option("--method", method, "average or linear")
      ->check(CLI::IsMember({"average", "linear"}));
  fuse->add_option("--scores", fuse_scores, "Score files to fuse")->required();
  fuse->add_option("--out", fuse_out, "Fused score file")->required();
  fuse->add_option("--protocol", fuse_protocol, "Protocol of the fused trials; prints a report");
  fuse->add_option("--json", fuse_json, "Write the report as JSON (needs --protocol)");
  fuse->add_option("--calibration-scores", cal_scores,
                   "Per-system calibration score files (linear)");
  fuse->add_option("--calibration-protocol", cal_protocol, "Protocol of the calibration trials");
  fuse->add_option("--model-out", model_out, "Write the fitted fusion model (JSON)");
  fuse->add_option("--model", model_in, "Apply a saved fusion model instead of fitting");

  auto* selftest = app.add_subcommand("selftest", "Run the built-in checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      std::vector<const char*> overrides;
      for (const auto& s : gen_set) overrides.push_back(s.c_str());
      const std::string cfg = at(gen_config);
      check(sasv_generate_synthetic(cfg.empty() ? nullptr : cfg.c_str(), overrides.data(),
                                    overrides.size(), at(gen_out).c_str()));
      std::printf("wrote synthetic data to %s\n", at(gen_out).c_str());
    } else if (train->parsed()) {
      auto print = [](const char* record, void*) { std::printf("%s\n", record); std::fflush(stdout); };
      char* summary = nullptr;
      check(sasv_experiment_train(at(run_file).c_str(), at.workdir.empty() ? nullptr : at.workdir.c_str(),
                                  quiet ? nullptr : +print, nullptr, &summary));
      std::printf("%s\n", take_string(summary).c_str());
    } else if (score->parsed()) {
      sasv_model* m = nullptr;
      check(sasv_model_load(at(ckpt).c_str(), &m));
      Model model(m);
      sasv_store* s = nullptr;
      check(sasv_store_load(at(emb).c_str(), &s));
      Store store(s);
      Protocol protocol = load_protocol(at(score_protocol));
      sasv_scores* out = nullptr;
      check(sasv_model_score(model.get(), store.get(), protocol.get(), &out));
      Scores scores(out);
      check(sasv_scores_save(scores.get(), at(score_out).c_str()));
      size_t n = 0;
      check(sasv_scores_size(scores.get(), &n));
      std::printf("scored %zu trials -> %s\n", n, at(score_out).c_str());
    } else if (eval->parsed()) {
      Protocol protocol = load_protocol(at(eval_protocol));
      Scores scores = load_scores(at(eval_scores), protocol.get());
      print_report(scores.get(), eval_json, at);
      if (!eval_det.empty()) check(sasv_det_points_write(scores.get(), SASV_METRIC_SASV, at(eval_det).c_str()));
    } else if (fuse->parsed()) {
      Protocol protocol;
      if (!fuse_protocol.empty()) protocol = load_protocol(at(fuse_protocol));
      std::vector<Scores> systems;
      for (const auto& path : fuse_scores) systems.push_back(load_scores(at(path), protocol.get()));
      Fusion fusion;
      sasv_fusion* f = nullptr;
      if (!model_in.empty()) {
        check(sasv_fusion_load(at(model_in).c_str(), &f));
        fusion.reset(f);
      } else if (method == "linear") {
        if (cal_scores.size() != fuse_scores.size() || cal_protocol.empty()) {
          std::fprintf(stderr,
                       "error [invalid-argument]: linear fusion needs one --calibration-scores "
                       "file per system and --calibration-protocol\n");
          return static_cast<int>(SASV_ERR_INVALID_ARGUMENT);
        }
        Protocol cal = load_protocol(at(cal_protocol));
        std::vector<Scores> cal_sets;
        for (const auto& path : cal_scores) cal_sets.push_back(load_scores(at(path), cal.get()));
        const auto raw = raw_list(cal_sets);
        check(sasv_fusion_fit_linear(raw.data(), raw.size(), &f));
        fusion.reset(f);
        char* json = nullptr;
        check(sasv_fusion_json(fusion.get(), &json));
        std::printf("%s", take_string(json).c_str());
      } else {
        check(sasv_fusion_make_average(&f));
        fusion.reset(f);
      }
      if (!model_out.empty()) check(sasv_fusion_save(fusion.get(), at(model_out).c_str()));
      const auto raw = raw_list(systems);
      sasv_scores* out = nullptr;
      check(sasv_fusion_apply(fusion.get(), raw.data(), raw.size(), &out));
      Scores fused(out);
      check(sasv_scores_save(fused.get(), at(fuse_out).c_str()));
      if (protocol) print_report(fused.get(), fuse_json, at);
    } else if (selftest->parsed()) {
      auto print = [](const char* name, int passed, const char* detail, void*) {
        std::printf("[%s] %s: %s\n", passed ? "PASS" : "FAIL", name, detail);
      };
      size_t passed = 0, failed = 0;
      check(sasv_selftest(print, nullptr, &passed, &failed));
      std::printf("%zu passed, %zu failed\n", passed, failed);
      return failed == 0 ? 0 : 1;
    }
  } catch (const Failure& f) {
    if (f.status != SASV_OK && *sasv_last_error() != '\0') {
      std::fprintf(stderr, "error [%s]: %s\n", sasv_status_string(f.status), sasv_last_error());
    }
    return static_cast<int>(f.status);
  }
  return 0;
}
