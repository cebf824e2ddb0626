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


#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "sasv/data_io.hpp"
#include "sasv/error.hpp"
#include "sasv/metrics.hpp"
#include "sasv/model.hpp"
#include "sasv/training.hpp"

using namespace sasv;

namespace {

std::string message_of(const std::function<void()>& fn, ErrorCategory expected) {
  try {
    fn();
  } catch (const Error& e) {
    CHECK(e.category() == expected);
    return e.what();
  }
  FAIL("expected an error");
  return {};
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "sasv_test_data_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

std::string speaker_of(const std::string& utt) { return utt.substr(0, utt.rfind('_')); }

EerReport train_and_eval(const SynthConfig& synth, std::uint64_t seed, std::size_t epochs) {
  const SyntheticData data = generate_synthetic(synth);
  const EmbeddingDims dims{data.store.d_spk(), data.store.d_spk(), data.store.d_cm()};
  Model m = Model::build(preset_config("CNN1D"), dims, seed);
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.epochs = epochs;
  cfg.seed = seed;
  fit(m, data.store, data.train, &data.dev, cfg);
  return evaluate(score_protocol(m, data.store, data.eval));
}

}  // namespace

TEST_CASE("protocol lines") {
  const Protocol one = parse_protocol_text("u1 u9 target\n");
  REQUIRE(one.trials.size() == 1);
  CHECK(one.trials[0] == Trial{{"u1"}, "u9", TrialLabel::kTarget});

  const Protocol three = parse_protocol_text("u1,u2,u3 u9 spoof");
  REQUIRE(three.trials.size() == 1);
  CHECK(three.trials[0].enroll_ids == std::vector<std::string>{"u1", "u2", "u3"});
  CHECK(three.trials[0].label == TrialLabel::kSpoof);

  CHECK(parse_protocol_text("a\tb\tnontarget\n", Partition::kDev).partition == Partition::kDev);
}

TEST_CASE("ten-line protocol fixture") {
  const Protocol p = parse_protocol(SASV_FIXTURE_DIR "/protocol_ten.txt");
  const std::vector<Trial> expected{
      {{"spk1_e0"}, "spk1_t0", TrialLabel::kTarget},
      {{"spk1_e0", "spk1_e1"}, "spk2_t0", TrialLabel::kNontarget},
      {{"spk2_e0"}, "spk2_s0", TrialLabel::kSpoof},
      {{"spk2_e0", "spk2_e1", "spk2_e2"}, "spk2_t1", TrialLabel::kTarget},
      {{"spk3_e0"}, "spk1_t1", TrialLabel::kNontarget},
      {{"spk3_e0", "spk3_e1"}, "spk3_s1", TrialLabel::kSpoof},
      {{"spk3_e0"}, "spk3_t0", TrialLabel::kTarget},
      {{"spk1_e1"}, "spk3_t0", TrialLabel::kNontarget},
  };
  CHECK(p.trials == expected);
  CHECK(p.label_counts() == std::array<std::size_t, 3>{3, 3, 2});
}

TEST_CASE("protocol errors") {
  const std::string msg =
      message_of([] { parse_protocol_text("a b target\na b bogus\n"); }, ErrorCategory::kParse);
  CHECK(msg.find("bogus") != std::string::npos);
  CHECK(msg.find("line 2") != std::string::npos);
  message_of([] { parse_protocol_text("a b\n"); }, ErrorCategory::kParse);
  message_of([] { parse_protocol_text("a,,b c target\n"); }, ErrorCategory::kParse);
  const std::string missing = message_of([] { parse_protocol(scratch("absent.txt")); },
                                         ErrorCategory::kIo);
  CHECK(missing.find("absent.txt") != std::string::npos);
}

TEST_CASE("protocol round trip") {
  const Protocol p = parse_protocol(SASV_FIXTURE_DIR "/protocol_ten.txt");
  const auto path = scratch("protocol.txt");
  save_protocol(p, path);
  CHECK(parse_protocol(path).trials == p.trials);
  CHECK(trial_id(42) == "t000042");
}

TEST_CASE("embedding store files") {
  SUBCASE("header only gives an empty store") {
    const auto path = scratch("empty.emb");
    write_file(path, "#EMB v1 d_spk=4 d_cm=2\n");
    const EmbeddingStore s = load_embeddings(path);
    CHECK(s.size() == 0);
    CHECK(s.d_spk() == 4);
    CHECK(s.d_cm() == 2);
  }
  SUBCASE("round trip is bit-identical") {
    EmbeddingStore s(3, 2);
    s.add_speaker("a", {0.1, -1.0 / 3.0, 1e-300});
    s.add_cm("a", {6.02214076e23, -0.0});
    s.add_speaker("b", {3.141592653589793, 2.718281828459045, 1.0 / 7.0});
    s.add_cm("c", {5e-324, 1.7976931348623157e308});
    const auto path = scratch("round.emb");
    save_embeddings(s, path);
    const EmbeddingStore back = load_embeddings(path);
    CHECK(back == s);
    CHECK(std::signbit((*back.cm("a"))[1]));
    CHECK(back.cm("b") == nullptr);
    CHECK(back.speaker("c") == nullptr);
  }
  SUBCASE("malformed record cites its line") {
    std::ostringstream text;
    text << "#EMB v1 d_spk=2 d_cm=1\n";
    for (int i = 0; i < 5; ++i) text << "u" << i << "\tspk\t0.5,0.25\n";
    text << "u5\tspk\t0.5,abc\n";
    text << "u6\tcm\t1\n";
    const auto path = scratch("bad.emb");
    write_file(path, text.str());
    const std::string msg = message_of([&] { load_embeddings(path); }, ErrorCategory::kParse);
    CHECK(msg.find("line 7") != std::string::npos);
    CHECK(msg.find("bad.emb") != std::string::npos);
  }
  SUBCASE("duplicate id and dimension mismatch") {
    const std::string dup = message_of(
        [] { parse_embeddings("#EMB v1 d_spk=1 d_cm=1\nx\tspk\t1\nx\tspk\t2\n"); },
        ErrorCategory::kData);
    CHECK(dup.find("x") != std::string::npos);
    const std::string dim = message_of(
        [] { parse_embeddings("#EMB v1 d_spk=2 d_cm=1\nx\tspk\t1\n"); },
        ErrorCategory::kDimension);
    CHECK(dim.find("line 2") != std::string::npos);
    message_of([] { parse_embeddings("x\tspk\t1\n"); }, ErrorCategory::kParse);
  }
  SUBCASE("trial embeddings average enrollment") {
    EmbeddingStore s(2, 1);
    s.add_speaker("e1", {1.0, 0.0});
    s.add_speaker("e2", {0.0, 1.0});
    s.add_speaker("t", {5.0, 5.0});
    s.add_cm("t", {-2.0});
    const TrialEmbeddings te = s.trial_embeddings({{"e1", "e2"}, "t", TrialLabel::kTarget});
    CHECK(te.enroll_spk == std::vector<double>{0.5, 0.5});
    CHECK(te.test_spk == std::vector<double>{5.0, 5.0});
    CHECK(te.test_cm == std::vector<double>{-2.0});
  }
}

TEST_CASE("generator determinism and counts") {
  SynthConfig cfg;
  cfg.seed = 17;
  const SyntheticData a = generate_synthetic(cfg);
  const SyntheticData b = generate_synthetic(cfg);
  CHECK(format_embeddings(a.store) == format_embeddings(b.store));
  CHECK(format_protocol(a.eval) == format_protocol(b.eval));
  CHECK(format_protocol(a.train) == format_protocol(b.train));

  cfg.seed = 18;
  CHECK(format_embeddings(generate_synthetic(cfg).store) != format_embeddings(a.store));

  auto counts = [](const TrialCounts& c) { return std::array{c.target, c.nontarget, c.spoof}; };
  CHECK(a.train.label_counts() == counts(cfg.train));
  CHECK(a.dev.label_counts() == counts(cfg.dev));
  CHECK(a.eval.label_counts() == counts(cfg.eval));
  CHECK(a.train.partition == Partition::kTrain);
  CHECK(a.eval.partition == Partition::kEval);
}

TEST_CASE("generated trials resolve and partitions share no speaker") {
  SynthConfig cfg;
  cfg.seed = 3;
  const SyntheticData d = generate_synthetic(cfg);
  std::array<std::set<std::string>, 3> speakers;
  const std::array<const Protocol*, 3> parts{&d.train, &d.dev, &d.eval};
  for (std::size_t p = 0; p < 3; ++p) {
    std::set<std::string> distinct;
    for (const Trial& t : parts[p]->trials) {
      REQUIRE(d.store.speaker(t.test_id) != nullptr);
      REQUIRE(d.store.cm(t.test_id) != nullptr);
      speakers[p].insert(speaker_of(t.test_id));
      for (const std::string& e : t.enroll_ids) speakers[p].insert(speaker_of(e));
      CHECK(t.enroll_ids.size() == cfg.enroll_utterances);
      const bool same = speaker_of(t.test_id) == speaker_of(t.enroll_ids[0]);
      CHECK(same == (t.label != TrialLabel::kNontarget));
      std::string key = t.test_id + "|" + t.enroll_ids[0];
      CHECK(distinct.insert(key).second);
    }
  }
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t q = p + 1; q < 3; ++q) {
      for (const std::string& s : speakers[p]) CHECK(speakers[q].count(s) == 0);
    }
  }
}

TEST_CASE("generator configuration") {
  SynthConfig cfg;
  cfg.eval.target = cfg.eval_speakers * cfg.test_utterances + 1;
  message_of([&] { generate_synthetic(cfg); }, ErrorCategory::kInvalidArgument);

  SynthConfig zero;
  zero.sigma_within = 0.0;
  message_of([&] { zero.validate(); }, ErrorCategory::kInvalidArgument);
  SynthConfig no_dim;
  no_dim.d_cm = 0;
  message_of([&] { no_dim.validate(); }, ErrorCategory::kInvalidArgument);

  SynthConfig custom;
  custom.set("eval_spoof", "12");
  custom.set("spoof_shift", "1.5");
  custom.set("seed", "99");
  CHECK(custom.eval.spoof == 12);
  CHECK(custom.spoof_shift == 1.5);
  const SynthConfig back = parse_synth_config(custom.to_text());
  CHECK(back.to_text() == custom.to_text());
  message_of([&] { custom.set("colour", "blue"); }, ErrorCategory::kInvalidArgument);
}

TEST_CASE("indistinguishable spoofs give chance-level SPF-EER") {
  SynthConfig cfg;
  cfg.spoof_shift = 0.0;
  cfg.spoof_spk_noise = 0.0;
  cfg.eval_speakers = 100;
  cfg.eval = {800, 200, 800};
  cfg.seed = 11;
  const EerReport r = train_and_eval(cfg, 1, 10);
  const double spf = *r[Metric::kSpf].eer_percent;
  MESSAGE("SPF-EER with indistinguishable spoofs: " << spf);
  CHECK(spf >= 45.0);
  CHECK(spf <= 55.0);
}

TEST_CASE("well separated clusters are learned almost perfectly") {
  SynthConfig cfg;
  cfg.sigma_within = 0.01;
  cfg.sigma_between = 3.0;
  cfg.spoof_shift = 8.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    cfg.seed = 100 + seed;
    const EerReport r = train_and_eval(cfg, seed, 15);
    MESSAGE("seed " << seed << ": " << r.triple());
    CHECK(*r[Metric::kSasv].eer_percent < 1.0);
    CHECK(*r[Metric::kSpf].eer_percent < 1.0);
    CHECK(*r[Metric::kSv].eer_percent < 1.0);
  }
}
