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

#include "sasv/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "sasv/error.hpp"
#include "sasv/io.hpp"

namespace sasv {

std::string_view label_name(TrialLabel label) {
  switch (label) {
    case TrialLabel::kTarget: return "target";
    case TrialLabel::kNontarget: return "nontarget";
    case TrialLabel::kSpoof: return "spoof";
  }
  return "?";
}

TrialLabel parse_label(std::string_view token) {
  for (TrialLabel l : {TrialLabel::kTarget, TrialLabel::kNontarget, TrialLabel::kSpoof}) {
    if (label_name(l) == token) return l;
  }
  fail(ErrorCategory::kParse, "unknown trial label '" + std::string(token) + "'");
}

std::string_view partition_name(Partition partition) {
  switch (partition) {
    case Partition::kTrain: return "train";
    case Partition::kDev: return "dev";
    case Partition::kEval: return "eval";
  }
  return "?";
}

std::array<std::size_t, 3> Protocol::label_counts() const {
  std::array<std::size_t, 3> counts{0, 0, 0};
  for (const Trial& t : trials) ++counts[static_cast<std::size_t>(t.label)];
  return counts;
}

std::string trial_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%06zu", index);
  return buf;
}

Protocol parse_protocol_text(std::string_view text, Partition partition) {
  Protocol protocol;
  protocol.partition = partition;
  std::size_t line_no = 0;
  for (std::string_view line : io::split(text, '\n')) {
    ++line_no;
    line = io::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = io::split_whitespace(line);
    const std::string where = "protocol line " + std::to_string(line_no);
    if (fields.size() != 3) {
      fail(ErrorCategory::kParse, where + ": expected 3 fields (enroll_ids, test_id, label), got " +
                                      std::to_string(fields.size()));
    }
    Trial trial;
    for (std::string_view id : io::split(fields[0], ',')) {
      if (id.empty()) fail(ErrorCategory::kParse, where + ": empty enrollment id");
      trial.enroll_ids.emplace_back(id);
    }
    trial.test_id = std::string(fields[1]);
    try {
      trial.label = parse_label(fields[2]);
    } catch (const Error& e) {
      fail(ErrorCategory::kParse, where + ": " + e.what());
    }
    protocol.trials.push_back(std::move(trial));
  }
  return protocol;
}

Protocol parse_protocol(const std::filesystem::path& path, Partition partition) {
  try {
    return parse_protocol_text(io::read_file(path), partition);
  } catch (const Error& e) {
    if (e.category() == ErrorCategory::kIo) throw;
    fail(e.category(), path.string() + ": " + e.what());
  }
}

std::string format_protocol(const Protocol& protocol) {
  std::string out;
  for (const Trial& t : protocol.trials) {
    for (std::size_t i = 0; i < t.enroll_ids.size(); ++i) {
      if (i) out += ',';
      out += t.enroll_ids[i];
    }
    out += '\t';
    out += t.test_id;
    out += '\t';
    out += label_name(t.label);
    out += '\n';
  }
  return out;
}

void save_protocol(const Protocol& protocol, const std::filesystem::path& path) {
  io::write_file_atomic(path, format_protocol(protocol));
}

EmbeddingStore::EmbeddingStore(std::size_t d_spk, std::size_t d_cm) : d_spk_(d_spk), d_cm_(d_cm) {
  if (d_spk == 0 || d_cm == 0) {
    fail(ErrorCategory::kDimension, "embedding dimensions must be positive");
  }
}

namespace {

void check_embedding(const std::string& utt_id, const std::vector<double>& v, std::size_t dim,
                     const char* kind) {
  if (v.size() != dim) {
    fail(ErrorCategory::kDimension, std::string(kind) + " embedding for '" + utt_id + "' has " +
                                        std::to_string(v.size()) + " values, store declares " +
                                        std::to_string(dim));
  }
  for (double x : v) {
    if (!std::isfinite(x)) {
      fail(ErrorCategory::kData,
           std::string(kind) + " embedding for '" + utt_id + "' has a non-finite value");
    }
  }
}

}  // namespace

void EmbeddingStore::add_speaker(const std::string& utt_id, std::vector<double> embedding) {
  check_embedding(utt_id, embedding, d_spk_, "speaker");
  Entry& e = entries_[utt_id];
  if (e.spk) fail(ErrorCategory::kData, "duplicate speaker embedding for '" + utt_id + "'");
  e.spk = std::move(embedding);
}

void EmbeddingStore::add_cm(const std::string& utt_id, std::vector<double> embedding) {
  check_embedding(utt_id, embedding, d_cm_, "CM");
  Entry& e = entries_[utt_id];
  if (e.cm) fail(ErrorCategory::kData, "duplicate CM embedding for '" + utt_id + "'");
  e.cm = std::move(embedding);
}

const std::vector<double>* EmbeddingStore::speaker(std::string_view utt_id) const {
  auto it = entries_.find(utt_id);
  return it == entries_.end() || !it->second.spk ? nullptr : &*it->second.spk;
}

const std::vector<double>* EmbeddingStore::cm(std::string_view utt_id) const {
  auto it = entries_.find(utt_id);
  return it == entries_.end() || !it->second.cm ? nullptr : &*it->second.cm;
}

std::vector<std::string> EmbeddingStore::ids() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [id, entry] : entries_) out.push_back(id);
  return out;
}

TrialEmbeddings EmbeddingStore::trial_embeddings(const Trial& trial) const {
  if (trial.enroll_ids.empty()) fail(ErrorCategory::kData, "trial has no enrollment utterances");
  TrialEmbeddings te;
  te.enroll_spk.assign(d_spk_, 0.0);
  for (const std::string& id : trial.enroll_ids) {
    const std::vector<double>* e = speaker(id);
    if (!e) fail(ErrorCategory::kData, "no speaker embedding for enrollment utterance '" + id + "'");
    for (std::size_t i = 0; i < d_spk_; ++i) te.enroll_spk[i] += (*e)[i];
  }
  const double inv = 1.0 / static_cast<double>(trial.enroll_ids.size());
  for (double& v : te.enroll_spk) v *= inv;
  const std::vector<double>* ts = speaker(trial.test_id);
  if (!ts) fail(ErrorCategory::kData, "no speaker embedding for test utterance '" + trial.test_id + "'");
  const std::vector<double>* tc = cm(trial.test_id);
  if (!tc) fail(ErrorCategory::kData, "no CM embedding for test utterance '" + trial.test_id + "'");
  te.test_spk = *ts;
  te.test_cm = *tc;
  return te;
}

EmbeddingStore parse_embeddings(std::string_view text) {
  const auto lines = io::split(text, '\n');
  const std::string_view header = lines.empty() ? std::string_view{} : io::trim(lines[0]);
  const auto fields = io::split_whitespace(header);
  if (fields.size() != 4 || fields[0] != "#EMB" || fields[1] != "v1" ||
      !fields[2].starts_with("d_spk=") || !fields[3].starts_with("d_cm=")) {
    fail(ErrorCategory::kParse, "line 1: expected header '#EMB v1 d_spk=<int> d_cm=<int>'");
  }
  EmbeddingStore store(io::parse_size("d_spk", fields[2].substr(6)),
                       io::parse_size("d_cm", fields[3].substr(5)));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string_view line = io::trim(lines[i]);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(i + 1);
    const auto parts = io::split(line, '\t');
    if (parts.size() != 3) {
      fail(ErrorCategory::kParse, where + ": expected utt_id<TAB>spk|cm<TAB>values");
    }
    std::vector<double> values;
    try {
      for (std::string_view tok : io::split(parts[2], ',')) values.push_back(io::parse_double(tok));
      if (parts[1] == "spk") {
        store.add_speaker(std::string(parts[0]), std::move(values));
      } else if (parts[1] == "cm") {
        store.add_cm(std::string(parts[0]), std::move(values));
      } else {
        fail(ErrorCategory::kParse, "unknown embedding kind '" + std::string(parts[1]) + "'");
      }
    } catch (const Error& e) {
      fail(e.category(), where + ": " + e.what());
    }
  }
  return store;
}

EmbeddingStore load_embeddings(const std::filesystem::path& path) {
  try {
    return parse_embeddings(io::read_file(path));
  } catch (const Error& e) {
    if (e.category() == ErrorCategory::kIo) throw;
    fail(e.category(), path.string() + ": " + e.what());
  }
}

std::string format_embeddings(const EmbeddingStore& store) {
  std::string out = "#EMB v1 d_spk=" + std::to_string(store.d_spk()) +
                    " d_cm=" + std::to_string(store.d_cm()) + "\n";
  auto emit = [&out](const std::string& id, const char* kind, const std::vector<double>& v) {
    out += id;
    out += '\t';
    out += kind;
    out += '\t';
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ',';
      out += io::format_double(v[i]);
    }
    out += '\n';
  };
  for (const std::string& id : store.ids()) {
    if (const auto* s = store.speaker(id)) emit(id, "spk", *s);
    if (const auto* c = store.cm(id)) emit(id, "cm", *c);
  }
  return out;
}

void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path) {
  io::write_file_atomic(path, format_embeddings(store));
}

void SynthConfig::set(std::string_view key, std::string_view value) {
  auto size_field = [&](std::string_view name, std::size_t& field) {
    if (key != name) return false;
    field = io::parse_size(key, value);
    return true;
  };
  auto real_field = [&](std::string_view name, double& field) {
    if (key != name) return false;
    field = io::parse_real(key, value);
    return true;
  };
  if (size_field("train_speakers", train_speakers) || size_field("dev_speakers", dev_speakers) ||
      size_field("eval_speakers", eval_speakers) ||
      size_field("enroll_utterances", enroll_utterances) ||
      size_field("test_utterances", test_utterances) ||
      size_field("spoof_utterances", spoof_utterances) || size_field("num_attacks", num_attacks) ||
      size_field("d_spk", d_spk) || size_field("d_cm", d_cm) ||
      real_field("sigma_within", sigma_within) || real_field("sigma_between", sigma_between) ||
      real_field("cm_spread", cm_spread) || real_field("spoof_shift", spoof_shift) ||
      real_field("spoof_spk_noise", spoof_spk_noise) ||
      size_field("train_target", train.target) || size_field("train_nontarget", train.nontarget) ||
      size_field("train_spoof", train.spoof) || size_field("dev_target", dev.target) ||
      size_field("dev_nontarget", dev.nontarget) || size_field("dev_spoof", dev.spoof) ||
      size_field("eval_target", eval.target) || size_field("eval_nontarget", eval.nontarget) ||
      size_field("eval_spoof", eval.spoof)) {
    return;
  }
  if (key == "seed") {
    seed = io::parse_u64(key, value);
    return;
  }
  fail(ErrorCategory::kInvalidArgument, "unknown synthetic-data key '" + std::string(key) + "'");
}

std::string SynthConfig::to_text() const {
  std::ostringstream out;
  out << "train_speakers=" << train_speakers << "\n"
      << "dev_speakers=" << dev_speakers << "\n"
      << "eval_speakers=" << eval_speakers << "\n"
      << "enroll_utterances=" << enroll_utterances << "\n"
      << "test_utterances=" << test_utterances << "\n"
      << "spoof_utterances=" << spoof_utterances << "\n"
      << "num_attacks=" << num_attacks << "\n"
      << "d_spk=" << d_spk << "\n"
      << "d_cm=" << d_cm << "\n"
      << "sigma_within=" << io::format_double(sigma_within) << "\n"
      << "sigma_between=" << io::format_double(sigma_between) << "\n"
      << "cm_spread=" << io::format_double(cm_spread) << "\n"
      << "spoof_shift=" << io::format_double(spoof_shift) << "\n"
      << "spoof_spk_noise=" << io::format_double(spoof_spk_noise) << "\n"
      << "train_target=" << train.target << "\n"
      << "train_nontarget=" << train.nontarget << "\n"
      << "train_spoof=" << train.spoof << "\n"
      << "dev_target=" << dev.target << "\n"
      << "dev_nontarget=" << dev.nontarget << "\n"
      << "dev_spoof=" << dev.spoof << "\n"
      << "eval_target=" << eval.target << "\n"
      << "eval_nontarget=" << eval.nontarget << "\n"
      << "eval_spoof=" << eval.spoof << "\n"
      << "seed=" << seed << "\n";
  return out.str();
}

void SynthConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCategory::kInvalidArgument, what); };
  if (d_spk == 0 || d_cm == 0) bad("d_spk and d_cm must be positive");
  if (enroll_utterances == 0) bad("enroll_utterances must be positive");
  if (!(sigma_within > 0.0) || !(sigma_between > 0.0) || !(cm_spread > 0.0)) {
    bad("sigma_within, sigma_between and cm_spread must be positive");
  }
  if (!(spoof_shift >= 0.0) || !(spoof_spk_noise >= 0.0)) {
    bad("spoof_shift and spoof_spk_noise must be non-negative");
  }
  const std::array<std::pair<const char*, std::pair<std::size_t, TrialCounts>>, 3> parts{{
      {"train", {train_speakers, train}},
      {"dev", {dev_speakers, dev}},
      {"eval", {eval_speakers, eval}},
  }};
  for (const auto& [name, part] : parts) {
    const auto& [speakers, counts] = part;
    const std::string p(name);
    if (counts.target + counts.nontarget + counts.spoof == 0) continue;
    if (speakers == 0) bad(p + ": trials requested but no speakers");
    if (counts.target > speakers * test_utterances) {
      bad(p + ": " + std::to_string(counts.target) + " target trials requested but " +
          std::to_string(speakers) + " speakers support only " +
          std::to_string(speakers * test_utterances));
    }
    if (counts.nontarget > speakers * (speakers - 1) * test_utterances) {
      bad(p + ": " + std::to_string(counts.nontarget) + " nontarget trials requested but " +
          std::to_string(speakers) + " speakers support only " +
          std::to_string(speakers * (speakers - 1) * test_utterances));
    }
    if (counts.spoof > 0 && num_attacks == 0) bad(p + ": spoof trials need num_attacks >= 1");
    if (counts.spoof > speakers * spoof_utterances) {
      bad(p + ": " + std::to_string(counts.spoof) + " spoof trials requested but " +
          std::to_string(speakers) + " speakers support only " +
          std::to_string(speakers * spoof_utterances));
    }
  }
}

SynthConfig parse_synth_config(std::string_view text) {
  SynthConfig cfg;
  for (const auto& [key, value] : io::parse_key_values(text)) cfg.set(key, value);
  return cfg;
}

namespace {

std::vector<double> gaussian(std::size_t dim, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, sigma);
  std::vector<double> v(dim);
  for (double& x : v) x = dist(rng);
  return v;
}

std::vector<double> unit_vector(std::size_t dim, std::mt19937_64& rng) {
  std::vector<double> v = gaussian(dim, 1.0, rng);
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    v.assign(dim, 0.0);
    v[0] = 1.0;
    return v;
  }
  for (double& x : v) x /= norm;
  return v;
}

std::vector<double> plus(std::vector<double> a, const std::vector<double>& b, double scale = 1.0) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
  return a;
}

std::string utt_name(std::string_view part, std::size_t spk, const char* kind, std::size_t k) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*s_s%03zu_%s%02zu", static_cast<int>(part.size()), part.data(),
                spk, kind, k);
  return buf;
}

// Picks `count` distinct indices from [0, population) in random order.
std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count,
                                                    std::mt19937_64& rng) {
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, population - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  return idx;
}

Protocol make_partition(const SynthConfig& cfg, Partition partition, std::size_t speakers,
                        const TrialCounts& counts, const std::vector<std::vector<double>>& attacks,
                        EmbeddingStore& store, std::mt19937_64& rng) {
  const std::string_view part = partition_name(partition);
  const double spoof_sigma =
      std::sqrt(cfg.sigma_within * cfg.sigma_within + cfg.spoof_spk_noise * cfg.spoof_spk_noise);
  std::vector<std::vector<std::string>> enroll(speakers);
  for (std::size_t s = 0; s < speakers; ++s) {
    std::vector<double> mean = unit_vector(cfg.d_spk, rng);
    for (double& x : mean) x *= cfg.sigma_between;
    auto add_bonafide = [&](const std::string& id) {
      store.add_speaker(id, plus(mean, gaussian(cfg.d_spk, cfg.sigma_within, rng)));
      store.add_cm(id, gaussian(cfg.d_cm, cfg.cm_spread, rng));
    };
    for (std::size_t k = 0; k < cfg.enroll_utterances; ++k) {
      enroll[s].push_back(utt_name(part, s, "e", k));
      add_bonafide(enroll[s].back());
    }
    for (std::size_t k = 0; k < cfg.test_utterances; ++k) add_bonafide(utt_name(part, s, "u", k));
    for (std::size_t k = 0; k < cfg.spoof_utterances; ++k) {
      const std::string id = utt_name(part, s, "sp", k);
      const std::vector<double>& attack = attacks[k % attacks.size()];
      store.add_speaker(id, plus(mean, gaussian(cfg.d_spk, spoof_sigma, rng)));
      store.add_cm(id, plus(gaussian(cfg.d_cm, cfg.cm_spread, rng), attack, cfg.spoof_shift));
    }
  }

  Protocol protocol;
  protocol.partition = partition;
  const std::size_t T = cfg.test_utterances;
  for (std::size_t c : sample_without_replacement(speakers * T, counts.target, rng)) {
    const std::size_t s = c / T;
    protocol.trials.push_back({enroll[s], utt_name(part, s, "u", c % T), TrialLabel::kTarget});
  }
  // Nontarget candidates: (enrolled speaker, other speaker, test utterance).
  const std::size_t others = speakers > 0 ? speakers - 1 : 0;
  for (std::size_t c : sample_without_replacement(speakers * others * T, counts.nontarget, rng)) {
    const std::size_t s = c / (others * T);
    std::size_t o = (c / T) % others;
    if (o >= s) ++o;
    protocol.trials.push_back({enroll[s], utt_name(part, o, "u", c % T), TrialLabel::kNontarget});
  }
  const std::size_t S = cfg.spoof_utterances;
  for (std::size_t c : sample_without_replacement(speakers * S, counts.spoof, rng)) {
    const std::size_t s = c / S;
    protocol.trials.push_back({enroll[s], utt_name(part, s, "sp", c % S), TrialLabel::kSpoof});
  }
  std::shuffle(protocol.trials.begin(), protocol.trials.end(), rng);
  return protocol;
}

}  // namespace

SyntheticData generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::vector<double>> attacks;
  for (std::size_t a = 0; a < std::max<std::size_t>(cfg.num_attacks, 1); ++a) {
    attacks.push_back(unit_vector(cfg.d_cm, rng));
  }
  SyntheticData data{EmbeddingStore(cfg.d_spk, cfg.d_cm), {}, {}, {}};
  data.train = make_partition(cfg, Partition::kTrain, cfg.train_speakers, cfg.train, attacks,
                              data.store, rng);
  data.dev = make_partition(cfg, Partition::kDev, cfg.dev_speakers, cfg.dev, attacks, data.store,
                            rng);
  data.eval = make_partition(cfg, Partition::kEval, cfg.eval_speakers, cfg.eval, attacks,
                             data.store, rng);
  return data;
}

}  // namespace sasv
