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

#include "sasv/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "sasv/error.hpp"

namespace sasv {

namespace {

// Activation buffers are large and short-lived. Keeping freed blocks in the
// heap instead of returning them to the kernel avoids a page fault per
// touched page on every allocation.
[[maybe_unused]] const bool kHeapTuned = [] {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return true;
}();

}  // namespace

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInvalidArgument: return "invalid-argument";
    case ErrorCategory::kDimension: return "dimension";
    case ErrorCategory::kParse: return "parse";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kData: return "data";
    case ErrorCategory::kNumeric: return "numeric";
    case ErrorCategory::kInternal: return "internal";
  }
  return "unknown";
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) fail(ErrorCategory::kDimension, "tensor shape must have at least one axis");
  for (std::size_t extent : shape) {
    if (extent == 0) {
      fail(ErrorCategory::kDimension, "tensor extents must be positive, got " + shape_string(shape));
    }
  }
}

}  // namespace

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  check_shape(shape);
  auto impl = std::make_shared<Impl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    fail(ErrorCategory::kDimension, "shape " + shape_string(shape) + " needs " +
                                        std::to_string(shape_numel(shape)) + " values, got " +
                                        std::to_string(values.size()));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.impl_->requires_grad = true;
  return t;
}


std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    fail(ErrorCategory::kDimension, "axis " + std::to_string(axis) + " out of range for " +
                                        shape_string(impl_->shape));
  }
  return impl_->shape[axis];
}



double Tensor::item() const {
  if (impl_->data.size() != 1) {
    fail(ErrorCategory::kDimension, "item() needs a single-element tensor, got " +
                                        shape_string(impl_->shape));
  }
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool flag) const { impl_->requires_grad = flag; }

std::span<double> Tensor::ensure_grad() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() const {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const { return from(impl_->shape, impl_->data); }

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn) {
  records_.push_back({std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (records_.empty()) fail(ErrorCategory::kInvalidArgument, "backward() on an empty tape");
  if (!loss.defined() || loss.numel() != 1) {
    fail(ErrorCategory::kDimension, "backward() needs a scalar loss, got " +
                                        (loss.defined() ? shape_string(loss.shape()) : "undefined"));
  }
  Tensor seed = loss;
  std::span<double> g = seed.ensure_grad();
  g[0] = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    for (Tensor& input : it->inputs) {
      if (input.requires_grad()) input.ensure_grad();
    }
    if (it->output.has_grad()) it->backward();
  }
  records_.clear();
}

}  // namespace sasv
