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

#include "sasv/attention.hpp"

#include <algorithm>
#include <cmath>

#include "sasv/error.hpp"
#include "sasv/ops.hpp"

namespace sasv {

std::string_view attention_kind_name(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::kSE1D: return "SE1D";
    case AttentionKind::kSE2D: return "SE2D";
    case AttentionKind::kPA: return "PA";
    case AttentionKind::kVSE: return "VSE";
  }
  return "?";
}

AttentionKind parse_attention_kind(std::string_view name) {
  for (AttentionKind k :
       {AttentionKind::kSE1D, AttentionKind::kSE2D, AttentionKind::kPA, AttentionKind::kVSE}) {
    if (attention_kind_name(k) == name) return k;
  }
  fail(ErrorCategory::kInvalidArgument, "unknown attention kind '" + std::string(name) + "'");
}

std::size_t reduced_dim(std::size_t dim, std::size_t reduction_ratio) {
  if (reduction_ratio == 0) fail(ErrorCategory::kInvalidArgument, "reduction ratio must be positive");
  return std::max<std::size_t>(1, dim / reduction_ratio);
}

const Tensor& AttentionParams::weight(std::string_view name) const {
  for (const auto& [n, t] : weights) {
    if (n == name) return t;
  }
  fail(ErrorCategory::kInvalidArgument, std::string(attention_kind_name(kind)) +
                                            " attention has no weight '" + std::string(name) + "'");
}

Tensor& AttentionParams::weight(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).weight(name));
}

namespace {

Tensor uniform_weight(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = dist(rng);
  return Tensor::parameter({rows, cols}, std::move(v));
}

void expect_kind(const AttentionParams& p, AttentionKind kind) {
  if (p.kind != kind) {
    fail(ErrorCategory::kInvalidArgument, "expected " + std::string(attention_kind_name(kind)) +
                                              " parameters, got " +
                                              std::string(attention_kind_name(p.kind)));
  }
}

void expect_shape(const Tensor& w, std::size_t rows, std::size_t cols, const char* name) {
  if (w.rank() != 2 || w.dim(0) != rows || w.dim(1) != cols) {
    fail(ErrorCategory::kDimension, std::string("attention weight ") + name + " is " +
                                        shape_string(w.shape()) + ", input needs [" +
                                        std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
}

void expect_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    fail(ErrorCategory::kDimension,
         std::string(op) + ": expected rank-" + std::to_string(rank) + " input, got " +
             shape_string(t.shape()));
  }
}

// sigmoid(relu(s * a) * b) for SE; gate over [B x C].
Tensor se_gate(const Tensor& squeezed, const AttentionParams& p, Tape* tape) {
  const std::size_t C = squeezed.dim(1);
  const std::size_t Cr = reduced_dim(C, p.reduction_ratio);
  expect_shape(p.weight("squeeze"), C, Cr, "squeeze");
  expect_shape(p.weight("excite"), Cr, C, "excite");
  Tensor hidden = ops::relu(ops::matmul(squeezed, p.weight("squeeze"), tape), tape);
  return ops::sigmoid(ops::matmul(hidden, p.weight("excite"), tape), tape);
}

// Shared bottleneck then a per-axis gate. pooled is [B x C x L]; returns [B x C x L].
Tensor coordinate_gate(const Tensor& pooled, const Tensor& shared, const Tensor& gate,
                       Tape* tape) {
  const std::size_t B = pooled.dim(0), C = pooled.dim(1), L = pooled.dim(2);
  Tensor rows = ops::reshape(ops::transpose(pooled, 1, 2, tape), {B * L, C}, tape);
  Tensor hidden = ops::relu(ops::matmul(rows, shared, tape), tape);
  Tensor g = ops::sigmoid(ops::matmul(hidden, gate, tape), tape);
  return ops::transpose(ops::reshape(g, {B, L, C}, tape), 1, 2, tape);
}

}  // namespace

AttentionParams make_attention(AttentionKind kind, std::size_t channels, std::size_t features,
                               std::size_t reduction_ratio, std::mt19937_64& rng) {
  AttentionParams p;
  p.kind = kind;
  p.reduction_ratio = reduction_ratio;
  p.channels = channels;
  p.features = features;
  const std::size_t Cr = reduced_dim(channels, reduction_ratio);
  switch (kind) {
    case AttentionKind::kSE1D:
    case AttentionKind::kSE2D:
      p.weights.emplace_back("squeeze", uniform_weight(channels, Cr, rng));
      p.weights.emplace_back("excite", uniform_weight(Cr, channels, rng));
      break;
    case AttentionKind::kPA: {
      const std::size_t Fr = reduced_dim(features, reduction_ratio);
      p.weights.emplace_back("w1", uniform_weight(features, Fr, rng));
      p.weights.emplace_back("w2", uniform_weight(Fr, features, rng));
      p.weights.emplace_back("w3", uniform_weight(channels, Cr, rng));
      p.weights.emplace_back("w4", uniform_weight(Cr, channels, rng));
      break;
    }
    case AttentionKind::kVSE:
      p.weights.emplace_back("shared", uniform_weight(channels, Cr, rng));
      p.weights.emplace_back("gate_h", uniform_weight(Cr, channels, rng));
      p.weights.emplace_back("gate_w", uniform_weight(Cr, channels, rng));
      break;
  }
  return p;
}

Tensor parallel_attention(const Tensor& t, const AttentionParams& params, Tape* tape) {
  expect_kind(params, AttentionKind::kPA);
  expect_rank(t, 3, "parallel_attention");
  const std::size_t B = t.dim(0), C = t.dim(1), F = t.dim(2);
  const std::size_t Cr = reduced_dim(C, params.reduction_ratio);
  const std::size_t Fr = reduced_dim(F, params.reduction_ratio);
  expect_shape(params.weight("w1"), F, Fr, "w1");
  expect_shape(params.weight("w2"), Fr, F, "w2");
  expect_shape(params.weight("w3"), C, Cr, "w3");
  expect_shape(params.weight("w4"), Cr, C, "w4");

  // Pool over channels -> [B x F]; pool the channel/feature transpose over
  // features -> [B x C].
  Tensor by_feature = ops::mean(t, 1, tape);
  Tensor by_channel = ops::mean(ops::transpose(t, 1, 2, tape), 1, tape);

  Tensor feature_gate = ops::sigmoid(
      ops::matmul(ops::matmul(by_feature, params.weight("w1"), tape), params.weight("w2"), tape),
      tape);
  Tensor channel_gate = ops::sigmoid(
      ops::matmul(ops::matmul(by_channel, params.weight("w3"), tape), params.weight("w4"), tape),
      tape);

  Tensor gated = ops::mul(ops::reshape(channel_gate, {B, C, 1}, tape), t, tape);
  return ops::mul(gated, ops::reshape(feature_gate, {B, 1, F}, tape), tape);
}

Tensor se_attention_1d(const Tensor& t, const AttentionParams& params, Tape* tape) {
  expect_kind(params, AttentionKind::kSE1D);
  expect_rank(t, 3, "se_attention_1d");
  const std::size_t B = t.dim(0), C = t.dim(1);
  Tensor gate = se_gate(ops::mean(t, 2, tape), params, tape);
  return ops::mul(t, ops::reshape(gate, {B, C, 1}, tape), tape);
}

Tensor se_attention_2d(const Tensor& t, const AttentionParams& params, Tape* tape) {
  expect_kind(params, AttentionKind::kSE2D);
  expect_rank(t, 4, "se_attention_2d");
  const std::size_t B = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
  Tensor squeezed = ops::mean(ops::reshape(t, {B, C, H * W}, tape), 2, tape);
  Tensor gate = se_gate(squeezed, params, tape);
  return ops::mul(t, ops::reshape(gate, {B, C, 1, 1}, tape), tape);
}

Tensor vse_attention(const Tensor& t, const AttentionParams& params, Tape* tape) {
  expect_kind(params, AttentionKind::kVSE);
  expect_rank(t, 4, "vse_attention");
  const std::size_t B = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
  const std::size_t Cr = reduced_dim(C, params.reduction_ratio);
  expect_shape(params.weight("shared"), C, Cr, "shared");
  expect_shape(params.weight("gate_h"), Cr, C, "gate_h");
  expect_shape(params.weight("gate_w"), Cr, C, "gate_w");

  Tensor along_h = ops::mean(t, 3, tape);  // [B x C x H]
  Tensor along_w = ops::mean(t, 2, tape);  // [B x C x W]
  Tensor gate_h = coordinate_gate(along_h, params.weight("shared"), params.weight("gate_h"), tape);
  Tensor gate_w = coordinate_gate(along_w, params.weight("shared"), params.weight("gate_w"), tape);
  Tensor gated = ops::mul(t, ops::reshape(gate_h, {B, C, H, 1}, tape), tape);
  return ops::mul(gated, ops::reshape(gate_w, {B, C, 1, W}, tape), tape);
}

Tensor apply_attention(const Tensor& t, const AttentionParams& params, Tape* tape) {
  switch (params.kind) {
    case AttentionKind::kSE1D: return se_attention_1d(t, params, tape);
    case AttentionKind::kSE2D: return se_attention_2d(t, params, tape);
    case AttentionKind::kPA: return parallel_attention(t, params, tape);
    case AttentionKind::kVSE: return vse_attention(t, params, tape);
  }
  fail(ErrorCategory::kInternal, "unhandled attention kind");
}

}  // namespace sasv
