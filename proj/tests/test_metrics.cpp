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

#include <cmath>

#include "oracles.hpp"
#include "sasv/error.hpp"
#include "sasv/metrics.hpp"

using namespace sasv;
using oracle::pick;

namespace {

ScoreSet labelled(const std::vector<std::pair<TrialLabel, double>>& rows) {
  ScoreSet s;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s.trials.push_back({trial_id(i), rows[i].second, rows[i].first});
  }
  return s;
}

std::vector<double> tied_scores(std::size_t n, oracle::Rng& rng, int levels, double shift) {
  std::vector<double> v(n);
  for (double& s : v) s = static_cast<double>(pick(rng, 0, levels)) / levels + shift;
  return v;
}

}  // namespace

TEST_CASE("EER examples") {
  CHECK(eer(std::vector{0.9, 0.8}, std::vector{0.1, 0.2}).eer == 0.0);
  const std::vector<double> same{0.1, 0.4, 0.4, 0.7};
  CHECK(eer(same, same).eer == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(eer(std::vector<double>{}, same), Error);
  CHECK_THROWS_AS(eer(same, std::vector<double>{}), Error);
}

TEST_CASE("EER matches the exhaustive threshold oracle") {
  oracle::Rng rng(1);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t np = pick(rng, 5, 500), nn = pick(rng, 5, 500);
    // Half the sets sit on a coarse grid, so ties within and across classes
    // are frequent.
    const bool coarse = t % 2 == 0;
    const auto pos = coarse ? tied_scores(np, rng, 20, 0.2) : oracle::uniform(np, rng, -0.5, 1.5);
    const auto neg = coarse ? tied_scores(nn, rng, 20, 0.0) : oracle::uniform(nn, rng, -1.5, 0.8);
    const double got = eer(pos, neg).eer;
    CHECK(got >= 0.0);
    CHECK(got <= 1.0);
    worst = std::max(worst, std::abs(got - oracle::eer_exhaustive(pos, neg)));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("EER is invariant to increasing transforms and to swapping sides") {
  oracle::Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    auto pos = oracle::uniform(pick(rng, 5, 80), rng, -0.5, 1.0);
    auto neg = oracle::uniform(pick(rng, 5, 80), rng, -1.0, 0.5);
    const double base = eer(pos, neg).eer;
    auto map = [](std::vector<double> v, double (*f)(double)) {
      for (double& x : v) x = f(x);
      return v;
    };
    auto ex = [](double x) { return std::exp(x); };
    auto affine = [](double x) { return 3.0 * x - 7.0; };
    auto cube = [](double x) { return x * x * x; };
    auto flip = [](double x) { return -x; };
    CHECK(eer(map(pos, ex), map(neg, ex)).eer == doctest::Approx(base).epsilon(1e-12));
    CHECK(eer(map(pos, affine), map(neg, affine)).eer == doctest::Approx(base).epsilon(1e-12));
    CHECK(eer(map(pos, cube), map(neg, cube)).eer == doctest::Approx(base).epsilon(1e-12));
    CHECK(eer(map(neg, flip), map(pos, flip)).eer == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("evaluate separates the three metrics") {
  using L = TrialLabel;
  const EerReport perfect =
      evaluate(labelled({{L::kTarget, 1.0}, {L::kNontarget, 0.0}, {L::kSpoof, 0.0}}));
  for (Metric m : {Metric::kSasv, Metric::kSpf, Metric::kSv}) CHECK(*perfect[m].eer_percent == 0.0);

  oracle::Rng rng(3);
  std::vector<std::pair<L, double>> rows;
  for (int i = 0; i < 10000; ++i) {
    rows.emplace_back(static_cast<L>(i % 3), oracle::uniform(1, rng, 0.0, 1.0)[0]);
  }
  const ScoreSet null_set = labelled(rows);
  const EerReport null_report = evaluate(null_set);
  for (Metric m : {Metric::kSasv, Metric::kSpf, Metric::kSv}) {
    CHECK(std::abs(*null_report[m].eer_percent - 50.0) <= 2.0);
  }
  CHECK(null_report.targets + null_report.nontargets + null_report.spoofs == 10000);
  CHECK(null_report[Metric::kSasv].positives + null_report[Metric::kSasv].negatives == 10000);
  CHECK(null_report[Metric::kSpf].negatives + null_report[Metric::kSv].negatives ==
        null_report[Metric::kSasv].negatives);

  const EerReport no_spoof = evaluate(labelled({{L::kTarget, 0.9}, {L::kNontarget, 0.1}}));
  CHECK_FALSE(no_spoof[Metric::kSpf].eer_percent);
  CHECK(*no_spoof[Metric::kSv].eer_percent == 0.0);
  CHECK(no_spoof.triple() == "0.000 - 0.000");
}

TEST_CASE("golden fixture") {
  const ScoreSet raw = load_scores(SASV_FIXTURE_DIR "/golden_scores.txt");
  const Protocol protocol = parse_protocol(SASV_FIXTURE_DIR "/golden_protocol.txt");
  ScoreSet s = raw;
  attach_labels(s, protocol);
  const EerReport r = evaluate(s);
  CHECK(*r[Metric::kSasv].eer_percent == doctest::Approx(42.857142857142854).epsilon(1e-12));
  CHECK(*r[Metric::kSpf].eer_percent == doctest::Approx(33.33333333333333).epsilon(1e-12));
  CHECK(*r[Metric::kSv].eer_percent == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(r.triple() == "42.857 33.333 50.000");
  CHECK(r.targets == 5);
  CHECK(r.nontargets == 4);
  CHECK(r.spoofs == 3);
}

TEST_CASE("excluded labels do not move a metric") {
  oracle::Rng rng(4);
  std::vector<std::pair<TrialLabel, double>> rows;
  for (int i = 0; i < 60; ++i) {
    rows.emplace_back(static_cast<TrialLabel>(i % 3), oracle::uniform(1, rng)[0]);
  }
  const ScoreSet base = labelled(rows);
  const EerReport before = evaluate(base);
  for (int t = 0; t < 10; ++t) {
    ScoreSet s = base, n = base;
    for (auto& tr : s.trials) {
      if (tr.label == TrialLabel::kSpoof) tr.score = oracle::uniform(1, rng, -9.0, 9.0)[0];
    }
    for (auto& tr : n.trials) {
      if (tr.label == TrialLabel::kNontarget) tr.score = oracle::uniform(1, rng, -9.0, 9.0)[0];
    }
    CHECK(evaluate(s)[Metric::kSv].eer_percent == before[Metric::kSv].eer_percent);
    CHECK(evaluate(s)[Metric::kSv].threshold == before[Metric::kSv].threshold);
    CHECK(evaluate(n)[Metric::kSpf].eer_percent == before[Metric::kSpf].eer_percent);
  }
}

TEST_CASE("DET points") {
  const auto sep = det_points(std::vector{0.8}, std::vector{0.2});
  CHECK(std::any_of(sep.begin(), sep.end(),
                    [](const DetPoint& p) { return p.far == 0.0 && p.frr == 0.0; }));
  const auto rev = det_points(std::vector{0.2}, std::vector{0.8});
  CHECK(std::any_of(rev.begin(), rev.end(),
                    [](const DetPoint& p) { return p.far == 1.0 || p.frr == 1.0; }));

  oracle::Rng rng(5);
  const auto pos = tied_scores(300, rng, 30, 0.1), neg = tied_scores(200, rng, 30, 0.0);
  const auto pts = det_points(pos, neg);
  REQUIRE(pts.size() >= 2);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    CHECK(pts[i].threshold > pts[i - 1].threshold);
    CHECK(pts[i].far <= pts[i - 1].far);
    CHECK(pts[i].frr >= pts[i - 1].frr);
  }
  CHECK(pts.back().far == 0.0);
  CHECK(pts.back().frr == 1.0);
  CHECK(pts.front().frr == 0.0);
}

TEST_CASE("score files") {
  ScoreSet s;
  s.seed = 17;
  s.digest = "0123456789abcdef";
  s.trials = {{trial_id(0), 0.1 + 0.2, TrialLabel::kTarget}, {trial_id(1), 1e-300, TrialLabel::kTarget}};
  const ScoreSet back = parse_scores(format_scores(s));
  CHECK(back.seed == 17);
  CHECK(back.digest == s.digest);
  REQUIRE(back.trials.size() == 2);
  CHECK(back.trials[0].score == s.trials[0].score);
  CHECK(back.trials[1].score == s.trials[1].score);
  CHECK_THROWS_AS(parse_scores("t000000\tabc\n"), Error);
  CHECK_THROWS_AS(parse_scores("t000000\tnan\n"), Error);

  Protocol p;
  p.trials = {{{"a"}, "b", TrialLabel::kSpoof}, {{"a"}, "c", TrialLabel::kNontarget}};
  ScoreSet ok = back;
  attach_labels(ok, p);
  CHECK(ok.trials[0].label == TrialLabel::kSpoof);
  ScoreSet missing;
  missing.trials = {back.trials[0]};
  CHECK_THROWS_AS(attach_labels(missing, p), Error);
  ScoreSet dup;
  dup.trials = {back.trials[0], back.trials[0]};
  CHECK_THROWS_AS(attach_labels(dup, p), Error);
}
