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

#include "sasv/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "sasv/attention.hpp"
#include "sasv/error.hpp"
#include "sasv/fusion.hpp"
#include "sasv/metrics.hpp"
#include "sasv/model.hpp"
#include "sasv/ops.hpp"
#include "sasv/training.hpp"

namespace sasv {

namespace {

using Rng = std::mt19937_64;

std::vector<double> random_values(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

Tensor random_tensor(Shape shape, Rng& rng, bool grad = false) {
  auto values = random_values(shape_numel(shape), rng);
  return grad ? Tensor::parameter(std::move(shape), std::move(values))
              : Tensor::from(std::move(shape), std::move(values));
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Direct convolution over [B x Cin x H x W] with a [Cout x Cin x k x k] kernel.
std::vector<double> conv_loops(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t pad) {
  const std::size_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1;
  std::vector<double> out(B * Co * Ho * Wo);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          double acc = b[o];
          for (std::size_t c = 0; c < Ci; ++c)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long r = static_cast<long>(i + u) - static_cast<long>(pad);
                const long s = static_cast<long>(j + v) - static_cast<long>(pad);
                if (r < 0 || s < 0 || r >= static_cast<long>(H) || s >= static_cast<long>(W)) continue;
                acc += x[((n * Ci + c) * H + r) * W + s] * w[((o * Ci + c) * kh + u) * kw + v];
              }
          out[((n * Co + o) * Ho + i) * Wo + j] = acc;
        }
  return out;
}

SelftestCheck check_conv(Rng& rng) {
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    const std::size_t B = pick(rng, 1, 3), Ci = pick(rng, 1, 4), Co = pick(rng, 1, 4);
    const std::size_t H = pick(rng, 3, 7), W = pick(rng, 3, 7), k = 2 * pick(rng, 0, 1) + 1;
    const std::size_t pad = k / 2;
    Tensor x = random_tensor({B, Ci, H, W}, rng), w = random_tensor({Co, Ci, k, k}, rng),
           b = random_tensor({Co}, rng);
    worst = std::max(worst, max_abs_diff(ops::conv2d(x, w, b, {1, pad}).data(),
                                         conv_loops(x, w, b, pad)));
    // The 1D path is the H = 1 case of the same loops.
    Tensor x1 = random_tensor({B, Ci, W}, rng), w1 = random_tensor({Co, Ci, k}, rng);
    Tensor x1v = ops::reshape(x1, {B, Ci, 1, W}), w1v = ops::reshape(w1, {Co, Ci, 1, k});
    std::vector<double> ref(B * Co * W);
    {
      const std::vector<double> full = conv_loops(x1v, w1v, b, pad);
      // Loops pad both axes; keep the centre row (only row when pad = 0).
      const std::size_t rows = 1 + 2 * pad, wo = W;
      for (std::size_t n = 0; n < B * Co; ++n)
        for (std::size_t j = 0; j < wo; ++j) ref[n * wo + j] = full[(n * rows + pad) * wo + j];
    }
    worst = std::max(worst, max_abs_diff(ops::conv1d(x1, w1, b, {1, pad}).data(), ref));
  }
  return {"conv1d/conv2d match direct loops", worst <= 1e-12, "max |diff| " + sci(worst)};
}

SelftestCheck check_pool(Rng& rng) {
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t B = pick(rng, 1, 2), C = pick(rng, 1, 3), H = pick(rng, 1, 9),
                      W = pick(rng, 1, 9), oh = pick(rng, 1, H), ow = pick(rng, 1, W);
    Tensor x = random_tensor({B, C, H, W}, rng);
    const std::array<std::size_t, 2> out{oh, ow};
    std::vector<double> ref(B * C * oh * ow);
    for (std::size_t n = 0; n < B * C; ++n)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          const std::size_t r0 = i * H / oh, r1 = ((i + 1) * H + oh - 1) / oh;
          const std::size_t c0 = j * W / ow, c1 = ((j + 1) * W + ow - 1) / ow;
          double acc = 0.0;
          for (std::size_t r = r0; r < r1; ++r)
            for (std::size_t c = c0; c < c1; ++c) acc += x[(n * H + r) * W + c];
          ref[(n * oh + i) * ow + j] = acc / static_cast<double>((r1 - r0) * (c1 - c0));
        }
    worst = std::max(worst, max_abs_diff(ops::adaptive_avg_pool(x, out).data(), ref));
  }
  return {"adaptive pooling matches bin loops", worst <= 1e-12, "max |diff| " + sci(worst)};
}

SelftestCheck check_cross_entropy(Rng& rng) {
  double worst = 0.0;
  const std::array<double, 2> weights{0.1, 0.9};
  for (int t = 0; t < 20; ++t) {
    const std::size_t B = pick(rng, 1, 16);
    Tensor logits = random_tensor({B, 2}, rng);
    std::vector<std::size_t> labels(B);
    for (auto& y : labels) y = pick(rng, 0, 1);
    double ref = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
      const double a = logits[2 * i], b = logits[2 * i + 1], m = std::max(a, b);
      const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
      ref += weights[labels[i]] * (lse - logits[2 * i + labels[i]]);
    }
    ref /= static_cast<double>(B);
    worst = std::max(worst, std::abs(weighted_cross_entropy(logits, labels, weights).item() - ref));
  }
  return {"weighted cross-entropy matches per-sample loop", worst <= 1e-12,
          "max |diff| " + sci(worst)};
}

SelftestCheck check_adam() {
  // Minimizing w^2 from w = 1; scalar reference below.
  Tensor w = Tensor::parameter({1}, {1.0});
  OptimizerState state;
  double ref = 1.0, m = 0.0, v = 0.0;
  const double lr = 0.1;
  double worst = 0.0;
  for (int t = 1; t <= 3; ++t) {
    w.zero_grad();
    w.ensure_grad()[0] = 2.0 * w[0];
    std::vector<Tensor> params{w};
    adam_step(params, state, lr, 0.0);
    const double g = 2.0 * ref;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    ref -= lr * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
    worst = std::max(worst, std::abs(w[0] - ref));
  }
  return {"Adam matches scalar reference", worst <= 1e-12, "max |diff| " + sci(worst)};
}

// EER by trying every midpoint between adjacent distinct scores.
double eer_exhaustive(const std::vector<double>& pos, const std::vector<double>& neg) {
  std::vector<double> all(pos);
  all.insert(all.end(), neg.begin(), neg.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> cuts{all.front() - 1.0};
  for (std::size_t i = 0; i + 1 < all.size(); ++i) cuts.push_back(0.5 * (all[i] + all[i + 1]));
  cuts.push_back(all.back() + 1.0);
  auto rates = [&](double t) {
    double fa = 0, fr = 0;
    for (double s : neg) fa += s >= t;
    for (double s : pos) fr += s < t;
    return std::pair{fa / static_cast<double>(neg.size()), fr / static_cast<double>(pos.size())};
  };
  for (std::size_t k = 1; k < cuts.size(); ++k) {
    auto [fa1, fr1] = rates(cuts[k]);
    if (fa1 - fr1 > 0) continue;
    auto [fa0, fr0] = rates(cuts[k - 1]);
    const double d0 = fa0 - fr0, d1 = fa1 - fr1;
    if (d1 == 0) return fa1;
    const double t = d0 / (d0 - d1);
    return fa0 + t * (fa1 - fa0);
  }
  return NAN;
}

SelftestCheck check_eer(Rng& rng) {
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> pos(pick(rng, 1, 20)), neg(pick(rng, 1, 20));
    // Coarse grid so ties are common.
    for (double& s : pos) s = static_cast<double>(pick(rng, 0, 12)) / 4.0;
    for (double& s : neg) s = static_cast<double>(pick(rng, 0, 10)) / 4.0 - 0.5;
    worst = std::max(worst, std::abs(eer(pos, neg).eer - eer_exhaustive(pos, neg)));
  }
  return {"EER matches exhaustive threshold sweep", worst <= 1e-9, "max |diff| " + sci(worst)};
}

SelftestCheck check_circulant(Rng& rng) {
  bool ok = true;
  for (std::size_t D = 1; D <= 32 && ok; ++D) {
    const auto v = random_values(D, rng);
    const Tensor c = circulant(v);
    double total = 0.0;
    for (double x : v) total += x;
    for (std::size_t i = 0; i < D; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < D; ++j) {
        row += c[i * D + j];
        ok = ok && c[i * D + j] == v[(j + D - i) % D];
        if (i > 0) ok = ok && c[i * D + j] == c[(i - 1) * D + (j + D - 1) % D];
      }
      ok = ok && std::abs(row - total) <= 1e-12;
    }
  }
  return {"circulant rows rotate and keep their sum", ok, ok ? "D = 1..32" : "property violated"};
}

// Central differences on every parameter entry against the tape gradient.
double gradient_error(const std::function<Tensor(Tape*)>& loss_fn, std::vector<Tensor> params) {
  for (Tensor& p : params) p.zero_grad();
  Tape tape;
  tape.backward(loss_fn(&tape));
  double num = 0.0, den = 0.0;
  const double h = 1e-6;
  for (Tensor& p : params) {
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    auto data = p.mutable_data();
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double keep = data[k];
      data[k] = keep + h;
      const double up = loss_fn(nullptr).item();
      data[k] = keep - h;
      const double down = loss_fn(nullptr).item();
      data[k] = keep;
      const double fd = (up - down) / (2 * h);
      num += (fd - analytic[k]) * (fd - analytic[k]);
      den += fd * fd + analytic[k] * analytic[k];
    }
  }
  return den == 0.0 ? 0.0 : std::sqrt(num) / std::sqrt(den);
}

SelftestCheck check_gradients(Rng& rng) {
  double worst = 0.0;
  Tensor x = random_tensor({2, 3, 5, 5}, rng, true);
  Tensor w = random_tensor({4, 3, 3, 3}, rng, true), b = random_tensor({4}, rng, true);
  Tensor gamma = random_tensor({4}, rng, true), beta = random_tensor({4}, rng, true);
  AttentionParams se = make_attention(AttentionKind::kSE2D, 4, 0, 2, rng);
  AttentionParams vse = make_attention(AttentionKind::kVSE, 4, 0, 2, rng);
  const Tensor probe = random_tensor({2, 4, 5, 5}, rng);
  std::vector<Tensor> params{x, w, b, gamma, beta};
  for (auto& [n, t] : se.weights) params.push_back(t);
  for (auto& [n, t] : vse.weights) params.push_back(t);
  auto loss2d = [&](Tape* tape) {
    auto stats = ops::RunningStats::identity(4);
    Tensor y = ops::conv2d(x, w, b, {1, 1}, tape);
    y = ops::batch_norm(y, gamma, beta, stats, ops::NormMode::kTrain, tape);
    y = ops::leaky_relu(y, ops::kLeakySlope, tape);
    y = se_attention_2d(y, se, tape);
    y = vse_attention(y, vse, tape);
    return ops::sum(ops::mul(y, probe, tape), tape);
  };
  worst = std::max(worst, gradient_error(loss2d, params));

  Tensor x1 = random_tensor({3, 4, 6}, rng, true);
  Tensor w1 = random_tensor({4, 4, 3}, rng, true), b1 = random_tensor({4}, rng, true);
  AttentionParams pa = make_attention(AttentionKind::kPA, 4, 6, 2, rng);
  Tensor fc = random_tensor({8, 2}, rng, true), fcb = random_tensor({2}, rng, true);
  std::vector<Tensor> params1{x1, w1, b1, fc, fcb};
  for (auto& [n, t] : pa.weights) params1.push_back(t);
  const std::array<std::size_t, 1> pool{2};
  const std::vector<std::size_t> labels{1, 0, 1};
  const std::array<double, 2> weights{0.1, 0.9};
  auto loss1d = [&](Tape* tape) {
    Tensor y = ops::conv1d(x1, w1, b1, {1, 1}, tape);
    y = parallel_attention(y, pa, tape);
    y = ops::adaptive_avg_pool(y, pool, tape);
    y = ops::linear(ops::reshape(y, {3, 8}, tape), fc, fcb, tape);
    return weighted_cross_entropy(y, labels, weights, tape);
  };
  worst = std::max(worst, gradient_error(loss1d, params1));
  return {"finite-difference gradients agree", worst < 1e-6, "relative error " + sci(worst)};
}

SelftestCheck check_presets() {
  std::string bad;
  for (std::string_view name : preset_names()) {
    const ModelConfig c = preset_config(name);
    Model m = Model::build(c, EmbeddingDims{}, 1);
    if (c.attention_kind && (c.attention_position != 2u || c.reduction_ratio != 8)) {
      bad += std::string(name) + " ";
    }
    if (c.fusion_mode == FusionMode::kCirc2D && c.pool_size != std::vector<std::size_t>{16, 16}) {
      bad += std::string(name) + " ";
    }
    if (m.num_parameters() == 0) bad += std::string(name) + " ";
  }
  return {"all presets build with their layouts", bad.empty(),
          bad.empty() ? std::to_string(preset_names().size()) + " presets" : "bad: " + bad};
}

SelftestCheck check_metric_exclusion(Rng& rng) {
  ScoreSet s;
  for (std::size_t i = 0; i < 30; ++i) {
    const auto label = static_cast<TrialLabel>(i % 3);
    s.trials.push_back({trial_id(i), random_values(1, rng)[0], label});
  }
  const EerReport before = evaluate(s);
  ScoreSet spoof_moved = s, nontarget_moved = s;
  for (auto& t : spoof_moved.trials) if (t.label == TrialLabel::kSpoof) t.score += 5.0;
  for (auto& t : nontarget_moved.trials) if (t.label == TrialLabel::kNontarget) t.score -= 3.0;
  const bool ok = evaluate(spoof_moved)[Metric::kSv].eer_percent == before[Metric::kSv].eer_percent &&
                  evaluate(nontarget_moved)[Metric::kSpf].eer_percent ==
                      before[Metric::kSpf].eer_percent;
  return {"SV/SPF EER ignore excluded labels", ok, ok ? "bit-identical" : "metric moved"};
}

SelftestCheck check_checkpoint_roundtrip() {
  Model m = Model::build(preset_config("CNN1D_PA"), EmbeddingDims{16, 16, 12}, 7);
  const std::string bytes = m.serialize();
  const Model back = Model::deserialize(bytes);
  const bool ok = back.serialize() == bytes && back.config() == m.config();
  return {"checkpoint round trip is byte-identical", ok, std::to_string(bytes.size()) + " bytes"};
}

}  // namespace

SelftestSummary run_selftest(const std::function<void(const SelftestCheck&)>& on_check) {
  Rng rng(20240501);
  SelftestSummary summary;
  auto record = [&](SelftestCheck c) {
    (c.passed ? summary.passed : summary.failed) += 1;
    if (on_check) on_check(c);
  };
  auto guarded = [&](const char* name, const std::function<SelftestCheck()>& fn) {
    try {
      record(fn());
    } catch (const std::exception& e) {
      record({name, false, std::string("threw: ") + e.what()});
    }
  };
  guarded("conv", [&] { return check_conv(rng); });
  guarded("pool", [&] { return check_pool(rng); });
  guarded("cross-entropy", [&] { return check_cross_entropy(rng); });
  guarded("adam", [&] { return check_adam(); });
  guarded("eer", [&] { return check_eer(rng); });
  guarded("circulant", [&] { return check_circulant(rng); });
  guarded("gradients", [&] { return check_gradients(rng); });
  guarded("presets", [&] { return check_presets(); });
  guarded("metric exclusion", [&] { return check_metric_exclusion(rng); });
  guarded("checkpoint", [&] { return check_checkpoint_roundtrip(); });
  return summary;
}

}  // namespace sasv
