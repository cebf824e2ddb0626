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

#include "sasv/score_fusion.hpp"

#include <cmath>
#include <unordered_map>

#include <Eigen/Dense>
#include <json.hpp>

#include "sasv/error.hpp"
#include "sasv/io.hpp"

namespace sasv {

std::string_view fusion_method_name(FusionMethod method) {
  return method == FusionMethod::kAverage ? "average" : "linear";
}

FusionMethod parse_fusion_method(std::string_view name) {
  if (name == "average") return FusionMethod::kAverage;
  if (name == "linear") return FusionMethod::kLinear;
  fail(ErrorCategory::kInvalidArgument, "unknown fusion method '" + std::string(name) +
                                            "' (expected average or linear)");
}

namespace {

// aligned[i][s] = score of trial i (first system's order) in system s.
std::vector<std::vector<double>> align(std::span<const ScoreSet> systems) {
  if (systems.empty()) fail(ErrorCategory::kInvalidArgument, "fusion needs at least one system");
  const ScoreSet& first = systems.front();
  std::vector<std::vector<double>> aligned(first.trials.size(),
                                           std::vector<double>(systems.size()));
  for (std::size_t i = 0; i < first.trials.size(); ++i) aligned[i][0] = first.trials[i].score;
  for (std::size_t s = 1; s < systems.size(); ++s) {
    std::unordered_map<std::string_view, double> lookup;
    for (const ScoredTrial& t : systems[s].trials) lookup.emplace(t.trial_id, t.score);
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < first.trials.size(); ++i) {
      auto it = lookup.find(first.trials[i].trial_id);
      if (it == lookup.end()) {
        missing.push_back(first.trials[i].trial_id);
        continue;
      }
      aligned[i][s] = it->second;
    }
    if (!missing.empty() || systems[s].trials.size() != first.trials.size()) {
      std::string msg = "system " + std::to_string(s) + " does not cover the same trials as system 0";
      if (!missing.empty()) {
        msg += "; missing:";
        for (std::size_t k = 0; k < missing.size() && k < 10; ++k) msg += " " + missing[k];
        if (missing.size() > 10) msg += " ... (" + std::to_string(missing.size()) + " total)";
      }
      fail(ErrorCategory::kData, msg);
    }
  }
  return aligned;
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ScoreSet with_scores(const ScoreSet& like, const std::vector<double>& values) {
  ScoreSet out;
  out.seed = like.seed;
  out.digest = like.digest;
  out.trials = like.trials;
  for (std::size_t i = 0; i < values.size(); ++i) out.trials[i].score = values[i];
  return out;
}

}  // namespace

ScoreSet average_scores(std::span<const ScoreSet> systems) {
  const auto aligned = align(systems);
  std::vector<double> mean(aligned.size());
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    // Offsets from the first system, so averaging identical sets is exact.
    const double first = aligned[i].front();
    double offset = 0.0;
    for (double v : aligned[i]) offset += v - first;
    mean[i] = first + offset / static_cast<double>(systems.size());
  }
  return with_scores(systems.front(), mean);
}

FusionModel fit_linear(std::span<const ScoreSet> systems) {
  if (systems.size() < 2) {
    fail(ErrorCategory::kInvalidArgument, "linear fusion needs at least 2 systems");
  }
  const auto aligned = align(systems);
  const std::size_t n = aligned.size(), S = systems.size();
  std::vector<double> y(n);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = systems.front().trials[i].label == TrialLabel::kTarget ? 1.0 : 0.0;
    positives += y[i] > 0.5;
  }
  if (positives == 0 || positives == n) {
    fail(ErrorCategory::kData, "linear fusion needs both target and non-target calibration trials");
  }

  // Minimizes J(w, b) = mean_i softplus(-m_i) + lambda * |w|^2 with
  // m_i = (2 y_i - 1)(w.s_i + b), using damped Newton steps.
  const double lambda = kFusionL2Penalty;
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(S + 1));
  auto objective = [&](const Eigen::VectorXd& th) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = th[static_cast<Eigen::Index>(S)];
      for (std::size_t s = 0; s < S; ++s) z += th[static_cast<Eigen::Index>(s)] * aligned[i][s];
      acc += softplus(y[i] > 0.5 ? -z : z);
    }
    return acc * inv_n + lambda * th.head(static_cast<Eigen::Index>(S)).squaredNorm();
  };

  FusionModel model;
  model.method = FusionMethod::kLinear;
  model.converged = false;
  const auto dim = static_cast<Eigen::Index>(S + 1);
  double current = objective(theta);
  std::size_t iter = 0;
  double gnorm = 0.0;
  for (; iter < kFusionMaxIterations; ++iter) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd x(dim);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t s = 0; s < S; ++s) x[static_cast<Eigen::Index>(s)] = aligned[i][s];
      x[dim - 1] = 1.0;
      const double p = sigmoid(theta.dot(x));
      grad += (p - y[i]) * inv_n * x;
      hess += (p * (1.0 - p) * inv_n) * (x * x.transpose());
    }
    for (Eigen::Index s = 0; s < dim - 1; ++s) {
      grad[s] += 2.0 * lambda * theta[s];
      hess(s, s) += 2.0 * lambda;
    }
    gnorm = grad.norm();
    if (gnorm < kFusionGradTolerance) {
      model.converged = true;
      break;
    }
    hess.diagonal().array() += 1e-12;
    Eigen::VectorXd step = hess.ldlt().solve(grad);
    if (!step.allFinite() || step.dot(grad) <= 0.0) step = grad;
    // Armijo backtracking.
    double t = 1.0;
    bool moved = false;
    for (int k = 0; k < 60; ++k) {
      Eigen::VectorXd trial = theta - t * step;
      const double value = objective(trial);
      if (value <= current - 1e-4 * t * step.dot(grad)) {
        theta = trial;
        current = value;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;  // no further decrease representable
  }
  model.weights.assign(theta.data(), theta.data() + S);
  model.bias = theta[dim - 1];
  model.iterations = iter;
  model.gradient_norm = gnorm;
  model.objective = current;
  return model;
}

double logistic_loss(const FusionModel& model, std::span<const ScoreSet> systems) {
  const auto aligned = align(systems);
  if (model.method != FusionMethod::kLinear) {
    fail(ErrorCategory::kInvalidArgument, "logistic_loss needs a linear fusion model");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    double z = model.bias;
    for (std::size_t s = 0; s < aligned[i].size(); ++s) z += model.weights[s] * aligned[i][s];
    acc += softplus(systems.front().trials[i].label == TrialLabel::kTarget ? -z : z);
  }
  return acc / static_cast<double>(aligned.size());
}

ScoreSet apply_fusion(const FusionModel& model, std::span<const ScoreSet> systems) {
  if (model.method == FusionMethod::kAverage) return average_scores(systems);
  if (model.weights.size() != systems.size()) {
    fail(ErrorCategory::kDimension, "linear fusion model has " +
                                        std::to_string(model.weights.size()) + " weights but " +
                                        std::to_string(systems.size()) + " systems were given");
  }
  const auto aligned = align(systems);
  std::vector<double> fused(aligned.size());
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    double z = model.bias;
    for (std::size_t s = 0; s < aligned[i].size(); ++s) z += model.weights[s] * aligned[i][s];
    fused[i] = sigmoid(z);
  }
  return with_scores(systems.front(), fused);
}

std::string FusionModel::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = std::string(fusion_method_name(method));
  j["weights"] = weights;
  j["bias"] = bias;
  j["diagnostics"] = {{"converged", converged},
                      {"iterations", iterations},
                      {"gradient_norm", gradient_norm},
                      {"objective", objective},
                      {"l2_penalty", kFusionL2Penalty}};
  return j.dump(2) + "\n";
}

FusionModel FusionModel::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    FusionModel m;
    m.method = parse_fusion_method(j.at("kind").get<std::string>());
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    if (j.contains("diagnostics")) {
      const auto& d = j["diagnostics"];
      m.converged = d.value("converged", true);
      m.iterations = d.value("iterations", std::size_t{0});
      m.gradient_norm = d.value("gradient_norm", 0.0);
      m.objective = d.value("objective", 0.0);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kParse, std::string("fusion model: ") + e.what());
  }
}

void save_fusion_model(const FusionModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, model.to_json());
}

FusionModel load_fusion_model(const std::filesystem::path& path) {
  return FusionModel::from_json(io::read_file(path));
}

}  // namespace sasv
