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

#include "sasv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <string>

#include "linalg.hpp"
#include "sasv/error.hpp"

namespace sasv::ops {

using detail::gemm;
using detail::Trans;

namespace {

bool should_record(Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void dimension_error(const std::string& what) { fail(ErrorCategory::kDimension, what); }

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* name) {
  if (t.rank() != rank) {
    dimension_error(std::string(op) + ": " + name + " must have rank " + std::to_string(rank) +
                    ", got " + shape_string(t.shape()));
  }
}

// Geometry shared by conv1d (H = 1) and conv2d.
struct ConvGeometry {
  std::size_t batch, in_ch, height, width;
  std::size_t out_ch, kh, kw;
  std::size_t stride, pad_h, pad_w;
  std::size_t out_h, out_w;

  std::size_t patch() const { return in_ch * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t pad, std::size_t stride,
                        const char* op) {
  if (stride == 0) dimension_error(std::string(op) + ": stride must be positive");
  if (k > in + 2 * pad) {
    dimension_error(std::string(op) + ": kernel " + std::to_string(k) +
                    " exceeds padded input extent " + std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - k) / stride + 1;
}

// cols[(c*kh + i)*kw + j][oh*out_w + ow] = x[c][oh*s + i - ph][ow*s + j - pw]
void im2col(const double* x, const ConvGeometry& g, double* cols) {
  const std::size_t P = g.positions();
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        double* row = cols + ((c * g.kh + i) * g.kw + j) * P;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + i) - static_cast<long>(g.pad_h);
          double* dst = row + oh * g.out_w;
          if (ih < 0 || ih >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = x + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + j) - static_cast<long>(g.pad_w);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.width))
                          ? 0.0
                          : src[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* dx) {
  const std::size_t P = g.positions();
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const double* row = cols + ((c * g.kh + i) * g.kw + j) * P;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + i) - static_cast<long>(g.pad_h);
          if (ih < 0 || ih >= static_cast<long>(g.height)) continue;
          double* dst = dx + (c * g.height + static_cast<std::size_t>(ih)) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + j) - static_cast<long>(g.pad_w);
            if (iw >= 0 && iw < static_cast<long>(g.width)) {
              dst[static_cast<std::size_t>(iw)] += row[oh * g.out_w + ow];
            }
          }
        }
      }
    }
  }
}

Tensor conv_forward(const Tensor& x, const Tensor& weight, const Tensor& bias,
                    const ConvGeometry& g, Shape out_shape, Tape* tape) {
  Tensor out = Tensor::zeros(std::move(out_shape));
  const std::size_t K = g.patch(), P = g.positions();
  const std::size_t in_stride = g.in_ch * g.height * g.width;
  std::vector<double> cols(K * P);
  {
    std::span<double> y = out.mutable_data();
    for (std::size_t b = 0; b < g.batch; ++b) {
      im2col(x.data().data() + b * in_stride, g, cols.data());
      double* yb = y.data() + b * g.out_ch * P;
      gemm(weight.data().data(), Trans::kNo, cols.data(), Trans::kNo, yb, g.out_ch, P, K, false);
      if (bias.defined()) {
        for (std::size_t o = 0; o < g.out_ch; ++o) {
          const double v = bias[o];
          for (std::size_t p = 0; p < P; ++p) yb[o * P + p] += v;
        }
      }
    }
  }
  if (should_record(tape, {&x, &weight, &bias})) {
    out.set_requires_grad(true);
    tape->record({x, weight, bias}, out, [x, weight, bias, out, g, in_stride]() mutable {
      const std::size_t K = g.patch(), P = g.positions();
      std::span<const double> dy = out.grad();
      std::vector<double> cols(K * P);
      std::vector<double> dcols(x.requires_grad() ? K * P : 0);
      for (std::size_t b = 0; b < g.batch; ++b) {
        const double* dyb = dy.data() + b * g.out_ch * P;
        if (weight.requires_grad()) {
          im2col(x.data().data() + b * in_stride, g, cols.data());
          gemm(dyb, Trans::kNo, cols.data(), Trans::kYes, weight.mutable_grad().data(), g.out_ch,
               K, P, true);
        }
        if (x.requires_grad()) {
          gemm(weight.data().data(), Trans::kYes, dyb, Trans::kNo, dcols.data(), K, P, g.out_ch,
               false);
          col2im_add(dcols.data(), g, x.mutable_grad().data() + b * in_stride);
        }
        if (bias.defined() && bias.requires_grad()) {
          std::span<double> db = bias.mutable_grad();
          for (std::size_t o = 0; o < g.out_ch; ++o) {
            double acc = 0.0;
            for (std::size_t p = 0; p < P; ++p) acc += dyb[o * P + p];
            db[o] += acc;
          }
        }
      }
    });
  }
  return out;
}

void check_bias(const Tensor& bias, std::size_t out_ch, const char* op) {
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_ch)) {
    dimension_error(std::string(op) + ": bias " + shape_string(bias.shape()) +
                    " does not match " + std::to_string(out_ch) + " output channels");
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    dimension_error("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                    shape_string(b.shape()));
  }
  const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor out = Tensor::zeros({M, N});
  gemm(a.data().data(), Trans::kNo, b.data().data(), Trans::kNo, out.mutable_data().data(), M, N,
       K, false);
  if (should_record(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record({a, b}, out, [a, b, out, M, N, K]() mutable {
      const double* dc = out.grad().data();
      if (a.requires_grad()) {
        gemm(dc, Trans::kNo, b.data().data(), Trans::kYes, a.mutable_grad().data(), M, K, N, true);
      }
      if (b.requires_grad()) {
        gemm(a.data().data(), Trans::kYes, dc, Trans::kNo, b.mutable_grad().data(), K, N, M, true);
      }
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias, Tape* tape) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(0)) {
    dimension_error("linear: input " + shape_string(x.shape()) + " does not match weight " +
                    shape_string(weight.shape()));
  }
  const std::size_t B = x.dim(0), In = x.dim(1), Out = weight.dim(1);
  check_bias(bias, Out, "linear");
  Tensor out = Tensor::zeros({B, Out});
  std::span<double> y = out.mutable_data();
  gemm(x.data().data(), Trans::kNo, weight.data().data(), Trans::kNo, y.data(), B, Out, In, false);
  if (bias.defined()) {
    for (std::size_t i = 0; i < B; ++i) {
      for (std::size_t o = 0; o < Out; ++o) y[i * Out + o] += bias[o];
    }
  }
  if (should_record(tape, {&x, &weight, &bias})) {
    out.set_requires_grad(true);
    tape->record({x, weight, bias}, out, [x, weight, bias, out, B, In, Out]() mutable {
      const double* dy = out.grad().data();
      if (x.requires_grad()) {
        gemm(dy, Trans::kNo, weight.data().data(), Trans::kYes, x.mutable_grad().data(), B, In,
             Out, true);
      }
      if (weight.requires_grad()) {
        gemm(x.data().data(), Trans::kYes, dy, Trans::kNo, weight.mutable_grad().data(), In, Out,
             B, true);
      }
      if (bias.defined() && bias.requires_grad()) {
        std::span<double> db = bias.mutable_grad();
        for (std::size_t i = 0; i < B; ++i) {
          for (std::size_t o = 0; o < Out; ++o) db[o] += dy[i * Out + o];
        }
      }
    });
  }
  return out;
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv1dOptions options,
              Tape* tape) {
  require_rank(x, 3, "conv1d", "input");
  require_rank(weight, 3, "conv1d", "weight");
  if (weight.dim(1) != x.dim(1)) {
    dimension_error("conv1d: weight " + shape_string(weight.shape()) + " expects " +
                    std::to_string(weight.dim(1)) + " input channels, input is " +
                    shape_string(x.shape()));
  }
  check_bias(bias, weight.dim(0), "conv1d");
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.in_ch = x.dim(1);
  g.height = 1;
  g.width = x.dim(2);
  g.out_ch = weight.dim(0);
  g.kh = 1;
  g.kw = weight.dim(2);
  g.stride = options.stride;
  g.pad_h = 0;
  g.pad_w = options.padding;
  g.out_h = 1;
  g.out_w = conv_extent(g.width, g.kw, g.pad_w, g.stride, "conv1d");
  // stride on the unit height axis is harmless: out_h is fixed at 1.
  return conv_forward(x, weight, bias, g, {g.batch, g.out_ch, g.out_w}, tape);
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions options,
              Tape* tape) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  if (weight.dim(1) != x.dim(1)) {
    dimension_error("conv2d: weight " + shape_string(weight.shape()) + " expects " +
                    std::to_string(weight.dim(1)) + " input channels, input is " +
                    shape_string(x.shape()));
  }
  check_bias(bias, weight.dim(0), "conv2d");
  ConvGeometry g{};
  g.batch = x.dim(0);
  g.in_ch = x.dim(1);
  g.height = x.dim(2);
  g.width = x.dim(3);
  g.out_ch = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = options.stride;
  g.pad_h = options.padding;
  g.pad_w = options.padding;
  g.out_h = conv_extent(g.height, g.kh, g.pad_h, g.stride, "conv2d");
  g.out_w = conv_extent(g.width, g.kw, g.pad_w, g.stride, "conv2d");
  return conv_forward(x, weight, bias, g, {g.batch, g.out_ch, g.out_h, g.out_w}, tape);
}

Tensor adaptive_avg_pool(const Tensor& x, std::span<const std::size_t> output_size, Tape* tape) {
  const bool two_d = output_size.size() == 2;
  if (output_size.size() != 1 && !two_d) {
    dimension_error("adaptive_avg_pool: output size needs 1 or 2 extents");
  }
  require_rank(x, two_d ? 4 : 3, "adaptive_avg_pool", "input");
  const std::size_t B = x.dim(0), C = x.dim(1);
  const std::size_t H = two_d ? x.dim(2) : 1, W = x.dim(two_d ? 3 : 2);
  const std::size_t OH = two_d ? output_size[0] : 1, OW = output_size[two_d ? 1 : 0];
  if (OH == 0 || OW == 0) dimension_error("adaptive_avg_pool: output size must be positive");
  if (OH > H || OW > W) {
    dimension_error("adaptive_avg_pool: output size exceeds input " + shape_string(x.shape()));
  }
  auto bin = [](std::size_t i, std::size_t in, std::size_t out) {
    const std::size_t start = (i * in) / out;
    const std::size_t end = ((i + 1) * in + out - 1) / out;
    return std::pair{start, end};
  };
  Shape out_shape = two_d ? Shape{B, C, OH, OW} : Shape{B, C, OW};
  Tensor out = Tensor::zeros(out_shape);
  std::span<double> y = out.mutable_data();
  std::span<const double> xs = x.data();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    for (std::size_t oh = 0; oh < OH; ++oh) {
      const auto [h0, h1] = bin(oh, H, OH);
      for (std::size_t ow = 0; ow < OW; ++ow) {
        const auto [w0, w1] = bin(ow, W, OW);
        double acc = 0.0;
        for (std::size_t h = h0; h < h1; ++h) {
          for (std::size_t w = w0; w < w1; ++w) acc += xs[(bc * H + h) * W + w];
        }
        y[(bc * OH + oh) * OW + ow] = acc / static_cast<double>((h1 - h0) * (w1 - w0));
      }
    }
  }
  if (should_record(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record({x}, out, [x, out, B, C, H, W, OH, OW, bin]() mutable {
      std::span<const double> dy = out.grad();
      std::span<double> dx = x.mutable_grad();
      for (std::size_t bc = 0; bc < B * C; ++bc) {
        for (std::size_t oh = 0; oh < OH; ++oh) {
          const auto [h0, h1] = bin(oh, H, OH);
          for (std::size_t ow = 0; ow < OW; ++ow) {
            const auto [w0, w1] = bin(ow, W, OW);
            const double share =
                dy[(bc * OH + oh) * OW + ow] / static_cast<double>((h1 - h0) * (w1 - w0));
            for (std::size_t h = h0; h < h1; ++h) {
              for (std::size_t w = w0; w < w1; ++w) dx[(bc * H + h) * W + w] += share;
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, RunningStats& stats,
                  NormMode mode, Tape* tape) {
  if (x.rank() < 2) dimension_error("batch_norm: input must be [B x C x ...]");
  const std::size_t B = x.dim(0), C = x.dim(1);
  const std::size_t S = x.numel() / (B * C);
  if (gamma.numel() != C || beta.numel() != C || stats.mean.size() != C ||
      stats.var.size() != C) {
    dimension_error("batch_norm: parameters do not match " + std::to_string(C) + " channels");
  }
  if (mode == NormMode::kTrain && B < 2) {
    fail(ErrorCategory::kInvalidArgument, "batch_norm: training mode needs a batch of at least 2");
  }
  const std::size_t N = B * S;
  std::vector<double> mean(C), inv_std(C);
  std::span<const double> xs = x.data();
  if (mode == NormMode::kTrain) {
    for (std::size_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* row = xs.data() + (b * C + c) * S;
        for (std::size_t s = 0; s < S; ++s) acc += row[s];
      }
      const double mu = acc / static_cast<double>(N);
      double sq = 0.0;
      for (std::size_t b = 0; b < B; ++b) {
        const double* row = xs.data() + (b * C + c) * S;
        for (std::size_t s = 0; s < S; ++s) sq += (row[s] - mu) * (row[s] - mu);
      }
      const double var = sq / static_cast<double>(N);
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + kBatchNormEps);
      const double unbiased = N > 1 ? sq / static_cast<double>(N - 1) : var;
      stats.mean[c] = (1.0 - kBatchNormMomentum) * stats.mean[c] + kBatchNormMomentum * mu;
      stats.var[c] = (1.0 - kBatchNormMomentum) * stats.var[c] + kBatchNormMomentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = stats.mean[c];
      inv_std[c] = 1.0 / std::sqrt(stats.var[c] + kBatchNormEps);
    }
  }
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> xhat(x.numel());
  std::span<double> y = out.mutable_data();
  std::span<const double> gs = gamma.data(), bs = beta.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const std::size_t base = (b * C + c) * S;
      const double mu = mean[c], is = inv_std[c], g = gs[c], sh = bs[c];
      double* xh = xhat.data() + base;
      double* yo = y.data() + base;
      const double* xi = xs.data() + base;
      for (std::size_t s = 0; s < S; ++s) {
        xh[s] = (xi[s] - mu) * is;
        yo[s] = g * xh[s] + sh;
      }
    }
  }
  if (should_record(tape, {&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    const bool train = mode == NormMode::kTrain;
    tape->record({x, gamma, beta}, out,
                 [x, gamma, beta, out, xhat = std::move(xhat), inv_std, B, C, S, N,
                  train]() mutable {
                   std::span<const double> dy = out.grad();
                   std::vector<double> sum_dy(C, 0.0), sum_dy_xhat(C, 0.0);
                   for (std::size_t b = 0; b < B; ++b) {
                     for (std::size_t c = 0; c < C; ++c) {
                       const std::size_t base = (b * C + c) * S;
                       double a0 = 0.0, a1 = 0.0;
                       for (std::size_t s = 0; s < S; ++s) {
                         a0 += dy[base + s];
                         a1 += dy[base + s] * xhat[base + s];
                       }
                       sum_dy[c] += a0;
                       sum_dy_xhat[c] += a1;
                     }
                   }
                   if (gamma.requires_grad()) {
                     std::span<double> dg = gamma.mutable_grad();
                     for (std::size_t c = 0; c < C; ++c) dg[c] += sum_dy_xhat[c];
                   }
                   if (beta.requires_grad()) {
                     std::span<double> db = beta.mutable_grad();
                     for (std::size_t c = 0; c < C; ++c) db[c] += sum_dy[c];
                   }
                   if (!x.requires_grad()) return;
                   std::span<double> dx = x.mutable_grad();
                   const double n = static_cast<double>(N);
                   for (std::size_t b = 0; b < B; ++b) {
                     for (std::size_t c = 0; c < C; ++c) {
                       const std::size_t base = (b * C + c) * S;
                       const double k = gamma[c] * inv_std[c];
                       double* d = dx.data() + base;
                       const double* g = dy.data() + base;
                       const double* xh = xhat.data() + base;
                       if (train) {
                         const double mean_dy = sum_dy[c] / n, mean_dyx = sum_dy_xhat[c] / n;
                         for (std::size_t s = 0; s < S; ++s) {
                           d[s] += k * (g[s] - mean_dy - xh[s] * mean_dyx);
                         }
                       } else {
                         for (std::size_t s = 0; s < S; ++s) d[s] += k * g[s];
                       }
                     }
                   }
                 });
  }
  return out;
}

namespace {

template <typename Fwd, typename Deriv>
Tensor elementwise(const Tensor& x, Tape* tape, Fwd fwd, Deriv deriv) {
  Tensor out = Tensor::zeros(x.shape());
  std::span<double> y = out.mutable_data();
  std::span<const double> xs = x.data();
  for (std::size_t i = 0; i < xs.size(); ++i) y[i] = fwd(xs[i]);
  if (should_record(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record({x}, out, [x, out, deriv]() mutable {
      std::span<const double> dy = out.grad();
      std::span<const double> xv = x.data();
      std::span<const double> yv = out.data();
      std::span<double> dx = x.mutable_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * deriv(xv[i], yv[i]);
    });
  }
  return out;
}

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor leaky_relu(const Tensor& x, double slope, Tape* tape) {
  return elementwise(
      x, tape, [slope](double v) { return v >= 0.0 ? v : slope * v; },
      [slope](double v, double) { return v >= 0.0 ? 1.0 : slope; });
}

Tensor relu(const Tensor& x, Tape* tape) {
  return elementwise(
      x, tape, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x, Tape* tape) {
  return elementwise(x, tape, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor scale(const Tensor& x, double factor, Tape* tape) {
  return elementwise(
      x, tape, [factor](double v) { return factor * v; },
      [factor](double, double) { return factor; });
}

Tensor log_softmax(const Tensor& x, std::size_t axis, Tape* tape) {
  if (axis >= x.rank()) {
    dimension_error("log_softmax: axis " + std::to_string(axis) + " out of range for " +
                    shape_string(x.shape()));
  }
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Tensor out = Tensor::zeros(s);
  std::span<double> y = out.mutable_data();
  std::span<const double> xs = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = xs[base];
      for (std::size_t k = 1; k < n; ++k) mx = std::max(mx, xs[base + k * inner]);
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += std::exp(xs[base + k * inner] - mx);
      // Subtracting the max first keeps large equal logits exact.
      const double log_acc = std::log(acc);
      for (std::size_t k = 0; k < n; ++k) y[base + k * inner] = (xs[base + k * inner] - mx) - log_acc;
    }
  }
  if (should_record(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record({x}, out, [x, out, outer, inner, n]() mutable {
      std::span<const double> dy = out.grad();
      std::span<const double> yv = out.data();
      std::span<double> dx = x.mutable_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          double total = 0.0;
          for (std::size_t k = 0; k < n; ++k) total += dy[base + k * inner];
          for (std::size_t k = 0; k < n; ++k) {
            const std::size_t idx = base + k * inner;
            dx[idx] += dy[idx] - std::exp(yv[idx]) * total;
          }
        }
      }
    });
  }
  return out;
}

namespace {

struct Broadcast {
  Shape out_shape;
  std::vector<std::size_t> a_strides, b_strides;
};

Broadcast broadcast_shapes(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rank() != b.rank()) {
    dimension_error(std::string(op) + ": rank mismatch " + shape_string(a.shape()) + " vs " +
                    shape_string(b.shape()));
  }
  const std::size_t r = a.rank();
  Broadcast bc;
  bc.out_shape.resize(r);
  bc.a_strides.assign(r, 0);
  bc.b_strides.assign(r, 0);
  std::size_t sa = 1, sb = 1;
  for (std::size_t i = r; i-- > 0;) {
    const std::size_t ea = a.dim(i), eb = b.dim(i);
    if (ea != eb && ea != 1 && eb != 1) {
      dimension_error(std::string(op) + ": cannot broadcast " + shape_string(a.shape()) +
                      " with " + shape_string(b.shape()));
    }
    bc.out_shape[i] = std::max(ea, eb);
    bc.a_strides[i] = ea == 1 ? 0 : sa;
    bc.b_strides[i] = eb == 1 ? 0 : sb;
    sa *= ea;
    sb *= eb;
  }
  return bc;
}

// Calls fn(out_index, a_index, b_index) for every output element in order.
template <typename Fn>
void for_each_broadcast(const Broadcast& bc, Fn fn) {
  const std::size_t r = bc.out_shape.size();
  const std::size_t total = shape_numel(bc.out_shape);
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < total; ++o) {
    fn(o, ia, ib);
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      ia += bc.a_strides[ax];
      ib += bc.b_strides[ax];
      if (idx[ax] < bc.out_shape[ax]) break;
      ia -= bc.a_strides[ax] * idx[ax];
      ib -= bc.b_strides[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

}  // namespace

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  const Broadcast bc = broadcast_shapes(a, b, "mul");
  Tensor out = Tensor::zeros(bc.out_shape);
  std::span<double> y = out.mutable_data();
  std::span<const double> av = a.data(), bv = b.data();
  for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    y[o] = av[ia] * bv[ib];
  });
  if (should_record(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record({a, b}, out, [a, b, out, bc]() mutable {
      std::span<const double> dy = out.grad();
      std::span<const double> av = a.data(), bv = b.data();
      if (a.requires_grad()) {
        std::span<double> da = a.mutable_grad();
        for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
          da[ia] += dy[o] * bv[ib];
        });
      }
      if (b.requires_grad()) {
        std::span<double> db = b.mutable_grad();
        for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
          db[ib] += dy[o] * av[ia];
        });
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  const Broadcast bc = broadcast_shapes(a, b, "add");
  Tensor out = Tensor::zeros(bc.out_shape);
  std::span<double> y = out.mutable_data();
  std::span<const double> av = a.data(), bv = b.data();
  for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
    y[o] = av[ia] + bv[ib];
  });
  if (should_record(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record({a, b}, out, [a, b, out, bc]() mutable {
      std::span<const double> dy = out.grad();
      std::span<double> da = a.requires_grad() ? a.mutable_grad() : std::span<double>{};
      std::span<double> db = b.requires_grad() ? b.mutable_grad() : std::span<double>{};
      for_each_broadcast(bc, [&](std::size_t o, std::size_t ia, std::size_t ib) {
        if (!da.empty()) da[ia] += dy[o];
        if (!db.empty()) db[ib] += dy[o];
      });
    });
  }
  return out;
}

Tensor mean(const Tensor& x, std::size_t axis, Tape* tape) {
  if (axis >= x.rank() || x.rank() < 2) {
    dimension_error("mean: cannot reduce axis " + std::to_string(axis) + " of " +
                    shape_string(x.shape()));
  }
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Shape out_shape = s;
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out = Tensor::zeros(out_shape);
  std::span<double> y = out.mutable_data();
  std::span<const double> xs = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < n; ++k) {
      const double* src = xs.data() + (o * n + k) * inner;
      double* dst = y.data() + o * inner;
      for (std::size_t in = 0; in < inner; ++in) dst[in] += src[in];
    }
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : y) v *= inv;
  if (should_record(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record({x}, out, [x, out, outer, inner, n, inv]() mutable {
      std::span<const double> dy = out.grad();
      std::span<double> dx = x.mutable_grad();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < n; ++k) {
          double* dst = dx.data() + (o * n + k) * inner;
          const double* src = dy.data() + o * inner;
          for (std::size_t in = 0; in < inner; ++in) dst[in] += src[in] * inv;
        }
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x, Tape* tape) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::from({1}, {acc});
  if (should_record(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record({x}, out, [x, out]() mutable {
      const double g = out.grad()[0];
      for (double& d : x.mutable_grad()) d += g;
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape, Tape* tape) {
  if (shape_numel(shape) != x.numel()) {
    dimension_error("reshape: cannot view " + shape_string(x.shape()) + " as " +
                    shape_string(shape));
  }
  Tensor out = Tensor::from(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (should_record(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record({x}, out, [x, out]() mutable {
      std::span<const double> dy = out.grad();
      std::span<double> dx = x.mutable_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    });
  }
  return out;
}

Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1, Tape* tape) {
  if (axis0 >= x.rank() || axis1 >= x.rank()) {
    dimension_error("transpose: axes out of range for " + shape_string(x.shape()));
  }
  const Shape& in_shape = x.shape();
  Shape out_shape = in_shape;
  std::swap(out_shape[axis0], out_shape[axis1]);
  const std::size_t r = in_shape.size();
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  // Walking the output in order, the source stride per output axis is the
  // input stride of the axis it came from.
  std::vector<std::size_t> src_strides = in_strides;
  std::swap(src_strides[axis0], src_strides[axis1]);
  std::vector<std::size_t> perm(x.numel());
  {
    std::vector<std::size_t> idx(r, 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < perm.size(); ++o) {
      perm[o] = src;
      for (std::size_t ax = r; ax-- > 0;) {
        ++idx[ax];
        src += src_strides[ax];
        if (idx[ax] < out_shape[ax]) break;
        src -= src_strides[ax] * idx[ax];
        idx[ax] = 0;
      }
    }
  }
  Tensor out = Tensor::zeros(out_shape);
  std::span<double> y = out.mutable_data();
  std::span<const double> xs = x.data();
  for (std::size_t o = 0; o < perm.size(); ++o) y[o] = xs[perm[o]];
  if (should_record(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record({x}, out, [x, out, perm = std::move(perm)]() mutable {
      std::span<const double> dy = out.grad();
      std::span<double> dx = x.mutable_grad();
      for (std::size_t o = 0; o < perm.size(); ++o) dx[perm[o]] += dy[o];
    });
  }
  return out;
}

Tensor weighted_nll(const Tensor& log_probs, std::span<const std::size_t> targets,
                    std::span<const double> weights, Tape* tape) {
  require_rank(log_probs, 2, "weighted_nll", "log_probs");
  const std::size_t B = log_probs.dim(0), K = log_probs.dim(1);
  if (targets.size() != B || weights.size() != B) {
    dimension_error("weighted_nll: expected " + std::to_string(B) + " targets and weights");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    if (targets[i] >= K) {
      fail(ErrorCategory::kInvalidArgument, "weighted_nll: label " + std::to_string(targets[i]) +
                                                " out of range for " + std::to_string(K) +
                                                " classes");
    }
    acc -= weights[i] * log_probs[i * K + targets[i]];
  }
  Tensor out = Tensor::from({1}, {acc / static_cast<double>(B)});
  if (should_record(tape, {&log_probs})) {
    out.set_requires_grad(true);
    std::vector<std::size_t> t(targets.begin(), targets.end());
    std::vector<double> w(weights.begin(), weights.end());
    tape->record({log_probs}, out, [log_probs, out, t, w, B, K]() mutable {
      const double g = out.grad()[0] / static_cast<double>(B);
      std::span<double> dx = log_probs.mutable_grad();
      for (std::size_t i = 0; i < B; ++i) dx[i * K + t[i]] -= g * w[i];
    });
  }
  return out;
}

}  // namespace sasv::ops
