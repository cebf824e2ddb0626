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

#include "sasv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <unordered_map>

#include <json.hpp>

#include "sasv/error.hpp"
#include "sasv/io.hpp"

namespace sasv {

ScoreSet parse_scores(std::string_view text) {
  ScoreSet scores;
  std::size_t line_no = 0;
  for (std::string_view line : io::split(text, '\n')) {
    ++line_no;
    line = io::trim(line);
    if (line.empty()) continue;
    if (line.front() == '#') {
      for (std::string_view tok : io::split_whitespace(line.substr(1))) {
        if (tok.starts_with("seed=")) scores.seed = io::parse_u64("seed", tok.substr(5));
        if (tok.starts_with("digest=")) scores.digest = std::string(tok.substr(7));
      }
      continue;
    }
    const auto fields = io::split_whitespace(line);
    const std::string where = "score line " + std::to_string(line_no);
    if (fields.size() != 2) fail(ErrorCategory::kParse, where + ": expected trial_id<TAB>score");
    double value = 0.0;
    try {
      value = io::parse_double(fields[1]);
    } catch (const Error& e) {
      fail(ErrorCategory::kParse, where + ": " + e.what());
    }
    if (!std::isfinite(value)) fail(ErrorCategory::kData, where + ": non-finite score");
    scores.trials.push_back({std::string(fields[0]), value, TrialLabel::kTarget});
  }
  return scores;
}

ScoreSet load_scores(const std::filesystem::path& path) {
  try {
    return parse_scores(io::read_file(path));
  } catch (const Error& e) {
    if (e.category() == ErrorCategory::kIo) throw;
    fail(e.category(), path.string() + ": " + e.what());
  }
}

std::string format_scores(const ScoreSet& scores) {
  std::string out = "# sasv-scores v1 seed=" + std::to_string(scores.seed) +
                    " digest=" + (scores.digest.empty() ? "none" : scores.digest) + "\n";
  for (const ScoredTrial& t : scores.trials) {
    out += t.trial_id;
    out += '\t';
    out += io::format_double(t.score);
    out += '\n';
  }
  return out;
}

void save_scores(const ScoreSet& scores, const std::filesystem::path& path) {
  io::write_file_atomic(path, format_scores(scores));
}

void attach_labels(ScoreSet& scores, const Protocol& protocol) {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(protocol.trials.size());
  for (std::size_t i = 0; i < protocol.trials.size(); ++i) index.emplace(trial_id(i), i);
  std::vector<bool> seen(protocol.trials.size(), false);
  for (ScoredTrial& t : scores.trials) {
    auto it = index.find(t.trial_id);
    if (it == index.end()) {
      fail(ErrorCategory::kData, "score for unknown trial '" + t.trial_id + "'");
    }
    if (seen[it->second]) fail(ErrorCategory::kData, "duplicate score for trial '" + t.trial_id + "'");
    seen[it->second] = true;
    t.label = protocol.trials[it->second].label;
  }
  std::size_t missing = 0;
  std::string first_missing;
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i] && missing++ == 0) first_missing = trial_id(i);
  }
  if (missing > 0) {
    fail(ErrorCategory::kData, std::to_string(missing) + " protocol trials have no score (first: " +
                                   first_missing + ")");
  }
}

namespace {

void check_sides(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) {
    fail(ErrorCategory::kInvalidArgument, "EER needs at least one positive and one negative score");
  }
}

}  // namespace

std::vector<DetPoint> det_points(std::span<const double> pos, std::span<const double> neg) {
  check_sides(pos, neg);
  std::vector<double> p(pos.begin(), pos.end()), n(neg.begin(), neg.end());
  std::sort(p.begin(), p.end());
  std::sort(n.begin(), n.end());
  std::vector<double> thresholds;
  thresholds.reserve(p.size() + n.size() + 1);
  std::merge(p.begin(), p.end(), n.begin(), n.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(std::nextafter(thresholds.back(), std::numeric_limits<double>::infinity()));

  const double P = static_cast<double>(p.size()), N = static_cast<double>(n.size());
  std::vector<DetPoint> points;
  points.reserve(thresholds.size());
  std::size_t pos_below = 0, neg_below = 0;
  for (double t : thresholds) {
    while (pos_below < p.size() && p[pos_below] < t) ++pos_below;
    while (neg_below < n.size() && n[neg_below] < t) ++neg_below;
    points.push_back({static_cast<double>(n.size() - neg_below) / N,
                      static_cast<double>(pos_below) / P, t});
  }
  return points;
}

EerPoint eer(std::span<const double> pos, std::span<const double> neg) {
  const std::vector<DetPoint> points = det_points(pos, neg);
  // FAR - FRR is non-increasing; it starts at 1 and ends at -1.
  for (std::size_t k = 0; k < points.size(); ++k) {
    const double diff = points[k].far - points[k].frr;
    if (diff > 0.0) continue;
    if (diff == 0.0 || k == 0) return {points[k].far, points[k].threshold};
    const DetPoint& a = points[k - 1];
    const DetPoint& b = points[k];
    const double da = a.far - a.frr;
    const double t = da / (da - diff);
    return {a.far + t * (b.far - a.far), a.threshold + t * (b.threshold - a.threshold)};
  }
  fail(ErrorCategory::kInternal, "EER sweep found no crossing");
}

std::string_view metric_name(Metric metric) {
  switch (metric) {
    case Metric::kSasv: return "SASV-EER";
    case Metric::kSpf: return "SPF-EER";
    case Metric::kSv: return "SV-EER";
  }
  return "?";
}

std::pair<std::vector<double>, std::vector<double>> metric_partition(const ScoreSet& scores,
                                                                     Metric metric) {
  std::vector<double> pos, neg;
  for (const ScoredTrial& t : scores.trials) {
    switch (t.label) {
      case TrialLabel::kTarget: pos.push_back(t.score); break;
      case TrialLabel::kNontarget:
        if (metric != Metric::kSpf) neg.push_back(t.score);
        break;
      case TrialLabel::kSpoof:
        if (metric != Metric::kSv) neg.push_back(t.score);
        break;
    }
  }
  return {std::move(pos), std::move(neg)};
}

EerReport evaluate(const ScoreSet& scores) {
  EerReport report;
  for (const ScoredTrial& t : scores.trials) {
    if (!std::isfinite(t.score)) fail(ErrorCategory::kData, "non-finite score for " + t.trial_id);
    switch (t.label) {
      case TrialLabel::kTarget: ++report.targets; break;
      case TrialLabel::kNontarget: ++report.nontargets; break;
      case TrialLabel::kSpoof: ++report.spoofs; break;
    }
  }
  for (Metric m : {Metric::kSasv, Metric::kSpf, Metric::kSv}) {
    auto [pos, neg] = metric_partition(scores, m);
    MetricResult& r = report.metrics[static_cast<std::size_t>(m)];
    r.positives = pos.size();
    r.negatives = neg.size();
    if (pos.empty() || neg.empty()) continue;
    const EerPoint e = eer(pos, neg);
    r.eer_percent = 100.0 * e.eer;
    r.threshold = e.threshold;
  }
  return report;
}

namespace {

std::string fixed3(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

}  // namespace

std::string EerReport::triple() const {
  return fixed3((*this)[Metric::kSasv].eer_percent) + " " +
         fixed3((*this)[Metric::kSpf].eer_percent) + " " + fixed3((*this)[Metric::kSv].eer_percent);
}

std::string EerReport::table() const {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %10s %14s %8s %8s\n", "metric", "EER(%)", "threshold",
                "pos", "neg");
  out += buf;
  for (Metric m : {Metric::kSasv, Metric::kSpf, Metric::kSv}) {
    const MetricResult& r = (*this)[m];
    std::string thr = "-";
    if (r.eer_percent) {
      char t[32];
      std::snprintf(t, sizeof t, "%.6g", r.threshold);
      thr = t;
    }
    std::snprintf(buf, sizeof buf, "%-10s %10s %14s %8zu %8zu\n", std::string(metric_name(m)).c_str(),
                  fixed3(r.eer_percent).c_str(), thr.c_str(), r.positives, r.negatives);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "trials: %zu target, %zu nontarget, %zu spoof\n", targets,
                nontargets, spoofs);
  out += buf;
  return out;
}

std::string EerReport::json() const {
  nlohmann::ordered_json j;
  for (Metric m : {Metric::kSasv, Metric::kSpf, Metric::kSv}) {
    const MetricResult& r = (*this)[m];
    nlohmann::ordered_json entry;
    entry["eer_percent"] = r.eer_percent ? nlohmann::ordered_json(*r.eer_percent) : nullptr;
    entry["threshold"] = r.eer_percent ? nlohmann::ordered_json(r.threshold) : nullptr;
    entry["positives"] = r.positives;
    entry["negatives"] = r.negatives;
    j[std::string(metric_name(m))] = entry;
  }
  j["counts"] = {{"target", targets}, {"nontarget", nontargets}, {"spoof", spoofs}};
  return j.dump(2) + "\n";
}

}  // namespace sasv
