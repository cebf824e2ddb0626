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

#include "sasv/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sasv/error.hpp"

namespace sasv {

std::string_view fusion_mode_name(FusionMode mode) {
  switch (mode) {
    case FusionMode::kConcat: return "CONCAT";
    case FusionMode::kStack1D: return "STACK1D";
    case FusionMode::kCirc2D: return "CIRC2D";
  }
  return "?";
}

FusionMode parse_fusion_mode(std::string_view name) {
  for (FusionMode m : {FusionMode::kConcat, FusionMode::kStack1D, FusionMode::kCirc2D}) {
    if (fusion_mode_name(m) == name) return m;
  }
  fail(ErrorCategory::kInvalidArgument, "unknown fusion mode '" + std::string(name) + "'");
}

namespace {

void validate(const TrialEmbeddings& te) {
  const std::array<const std::vector<double>*, 3> parts{&te.enroll_spk, &te.test_spk, &te.test_cm};
  const std::array<const char*, 3> names{"enrollment speaker", "test speaker", "test CM"};
  for (std::size_t k = 0; k < 3; ++k) {
    if (parts[k]->empty()) {
      fail(ErrorCategory::kDimension, std::string(names[k]) + " embedding is empty");
    }
    for (double v : *parts[k]) {
      if (!std::isfinite(v)) {
        fail(ErrorCategory::kData, std::string(names[k]) + " embedding has a non-finite value");
      }
    }
  }
}

std::size_t common_length(const TrialEmbeddings& te) {
  return std::max({te.enroll_spk.size(), te.test_spk.size(), te.test_cm.size()});
}

// Writes one fused item into out (already sized to fused_shape).
void write_fused(const TrialEmbeddings& te, FusionMode mode, double* out) {
  const std::array<const std::vector<double>*, 3> parts{&te.enroll_spk, &te.test_spk, &te.test_cm};
  switch (mode) {
    case FusionMode::kConcat:
      for (const auto* p : parts) out = std::copy(p->begin(), p->end(), out);
      return;
    case FusionMode::kStack1D: {
      const std::size_t D = common_length(te);
      for (std::size_t k = 0; k < 3; ++k) {
        double* row = out + k * D;
        std::fill(row, row + D, 0.0);
        std::copy(parts[k]->begin(), parts[k]->end(), row);
      }
      return;
    }
    case FusionMode::kCirc2D: {
      const std::size_t D = common_length(te);
      for (std::size_t k = 0; k < 3; ++k) {
        const std::vector<double>& v = *parts[k];
        double* plane = out + k * D * D;
        for (std::size_t i = 0; i < D; ++i) {
          for (std::size_t j = 0; j < D; ++j) {
            const std::size_t src = (j + D - i) % D;
            plane[i * D + j] = src < v.size() ? v[src] : 0.0;
          }
        }
      }
      return;
    }
  }
}

}  // namespace

Shape fused_shape(FusionMode mode, std::size_t d, std::size_t b, std::size_t q) {
  if (d == 0 || b == 0 || q == 0) {
    fail(ErrorCategory::kDimension, "embedding dimensions must be positive");
  }
  const std::size_t D = std::max({d, b, q});
  switch (mode) {
    case FusionMode::kConcat: return {d + b + q};
    case FusionMode::kStack1D: return {3, D};
    case FusionMode::kCirc2D: return {3, D, D};
  }
  fail(ErrorCategory::kInternal, "unhandled fusion mode");
}

FusedInput concat(const TrialEmbeddings& te) { return fuse(te, FusionMode::kConcat); }

std::array<std::vector<double>, 3> pad_to_common(const TrialEmbeddings& te) {
  const std::size_t D = common_length(te);
  std::array<std::vector<double>, 3> out{te.enroll_spk, te.test_spk, te.test_cm};
  for (auto& v : out) v.resize(D, 0.0);
  return out;
}

Tensor circulant(std::span<const double> v) {
  if (v.empty()) fail(ErrorCategory::kDimension, "circulant of an empty vector");
  const std::size_t D = v.size();
  std::vector<double> m(D * D);
  for (std::size_t i = 0; i < D; ++i) {
    for (std::size_t j = 0; j < D; ++j) m[i * D + j] = v[(j + D - i) % D];
  }
  return Tensor::from({D, D}, std::move(m));
}

FusedInput stack_1d(const TrialEmbeddings& te) { return fuse(te, FusionMode::kStack1D); }

FusedInput stack_circulant_2d(const TrialEmbeddings& te) {
  return fuse(te, FusionMode::kCirc2D);
}

FusedInput fuse(const TrialEmbeddings& te, FusionMode mode) {
  validate(te);
  Tensor t = Tensor::zeros(fused_shape(mode, te.enroll_spk.size(), te.test_spk.size(),
                                       te.test_cm.size()));
  write_fused(te, mode, t.mutable_data().data());
  return {mode, std::move(t)};
}

Tensor fuse_batch(std::span<const TrialEmbeddings> trials, FusionMode mode) {
  if (trials.empty()) fail(ErrorCategory::kInvalidArgument, "cannot fuse an empty batch");
  const TrialEmbeddings& first = trials.front();
  const Shape item = fused_shape(mode, first.enroll_spk.size(), first.test_spk.size(),
                                 first.test_cm.size());
  const std::size_t stride = shape_numel(item);
  Shape shape{trials.size()};
  shape.insert(shape.end(), item.begin(), item.end());
  Tensor batch = Tensor::zeros(shape);
  double* out = batch.mutable_data().data();
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const TrialEmbeddings& te = trials[i];
    validate(te);
    if (te.enroll_spk.size() != first.enroll_spk.size() ||
        te.test_spk.size() != first.test_spk.size() || te.test_cm.size() != first.test_cm.size()) {
      fail(ErrorCategory::kDimension, "trial " + std::to_string(i) +
                                          " has embedding dims different from the batch");
    }
    write_fused(te, mode, out + i * stride);
  }
  return batch;
}

}  // namespace sasv
