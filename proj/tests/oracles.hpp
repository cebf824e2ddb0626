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


#pragma once

// Straight-line reference implementations used by the test suites. Each one
// loops over indices directly and shares no code with the library beyond
// reading Tensor storage.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "sasv/attention.hpp"
#include "sasv/tensor.hpp"

namespace oracle {

using sasv::Shape;
using sasv::Tensor;
using Rng = std::mt19937_64;

inline std::vector<double> uniform(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

inline Tensor random_tensor(Shape shape, Rng& rng, bool grad = false) {
  auto values = uniform(sasv::shape_numel(shape), rng);
  return grad ? Tensor::parameter(std::move(shape), std::move(values))
              : Tensor::from(std::move(shape), std::move(values));
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline std::vector<double> matmul(const Tensor& a, const Tensor& b) {
  const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  std::vector<double> out(M * N, 0.0);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j)
      for (std::size_t k = 0; k < K; ++k) out[i * N + j] += a[i * K + k] * b[k * N + j];
  return out;
}

inline std::vector<double> conv1d(const Tensor& x, const Tensor& w, const Tensor& b,
                                  std::size_t stride, std::size_t pad) {
  const std::size_t B = x.dim(0), Ci = x.dim(1), L = x.dim(2), Co = w.dim(0), k = w.dim(2);
  const std::size_t Lo = (L + 2 * pad - k) / stride + 1;
  std::vector<double> out(B * Co * Lo);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t i = 0; i < Lo; ++i) {
        double acc = b.defined() ? b[o] : 0.0;
        for (std::size_t c = 0; c < Ci; ++c)
          for (std::size_t u = 0; u < k; ++u) {
            const long p = static_cast<long>(i * stride + u) - static_cast<long>(pad);
            if (p < 0 || p >= static_cast<long>(L)) continue;
            acc += x[(n * Ci + c) * L + p] * w[(o * Ci + c) * k + u];
          }
        out[(n * Co + o) * Lo + i] = acc;
      }
  return out;
}

inline std::vector<double> conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
                                  std::size_t stride, std::size_t pad) {
  const std::size_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
  std::vector<double> out(B * Co * Ho * Wo);
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          double acc = b.defined() ? b[o] : 0.0;
          for (std::size_t c = 0; c < Ci; ++c)
            for (std::size_t u = 0; u < kh; ++u)
              for (std::size_t v = 0; v < kw; ++v) {
                const long r = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                const long s = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                if (r < 0 || s < 0 || r >= static_cast<long>(H) || s >= static_cast<long>(W)) {
                  continue;
                }
                acc += x[((n * Ci + c) * H + r) * W + s] * w[((o * Ci + c) * kh + u) * kw + v];
              }
          out[((n * Co + o) * Ho + i) * Wo + j] = acc;
        }
  return out;
}

// Bin i of an adaptive pool from L to O covers [floor(iL/O), ceil((i+1)L/O)).
inline std::pair<std::size_t, std::size_t> bin(std::size_t i, std::size_t L, std::size_t O) {
  return {i * L / O, ((i + 1) * L + O - 1) / O};
}

// Pools the trailing axes of x (one or two) down to `out`.
inline std::vector<double> adaptive_pool(const Tensor& x, std::span<const std::size_t> out) {
  const bool two = out.size() == 2;
  const std::size_t H = two ? x.dim(2) : 1, W = x.dim(x.rank() - 1);
  const std::size_t oh = two ? out[0] : 1, ow = out[out.size() - 1];
  const std::size_t planes = x.dim(0) * x.dim(1);
  std::vector<double> res(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const auto [r0, r1] = bin(i, H, oh);
        const auto [c0, c1] = bin(j, W, ow);
        double acc = 0.0;
        for (std::size_t r = r0; r < r1; ++r)
          for (std::size_t c = c0; c < c1; ++c) acc += x[(p * H + r) * W + c];
        res[(p * oh + i) * ow + j] = acc / static_cast<double>((r1 - r0) * (c1 - c0));
      }
  return res;
}

inline double weighted_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels,
                                     std::span<const double> weights) {
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) m = std::max(m, logits[i * K + k]);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(logits[i * K + k] - m);
    total += weights[labels[i]] * (m + std::log(z) - logits[i * K + labels[i]]);
  }
  return total / static_cast<double>(B);
}

inline double softmax_target(double other, double target) {
  const double m = std::max(other, target);
  return std::exp(target - m) / (std::exp(other - m) + std::exp(target - m));
}

// Scalar Adam with L2-coupled decay and bias correction.
struct ScalarAdam {
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double w, double g, double lr, double wd) {
    g += wd * w;
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    return w - lr * mh / (std::sqrt(vh) + 1e-8);
  }
};

// EER evaluated at one threshold below all scores, every midpoint between
// consecutive distinct scores and one above all scores; linearly
// interpolated where FAR - FRR changes sign.
inline double eer_exhaustive(std::span<const double> pos, std::span<const double> neg) {
  std::vector<double> all(pos.begin(), pos.end());
  all.insert(all.end(), neg.begin(), neg.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> cuts{all.front() - 1.0};
  for (std::size_t i = 0; i + 1 < all.size(); ++i) cuts.push_back(0.5 * (all[i] + all[i + 1]));
  cuts.push_back(all.back() + 1.0);
  auto rates = [&](double t) {
    double fa = 0, fr = 0;
    for (double s : neg) fa += s >= t ? 1 : 0;
    for (double s : pos) fr += s < t ? 1 : 0;
    return std::pair{fa / static_cast<double>(neg.size()), fr / static_cast<double>(pos.size())};
  };
  for (std::size_t k = 1; k < cuts.size(); ++k) {
    const auto [fa1, fr1] = rates(cuts[k]);
    if (fa1 - fr1 > 0) continue;
    const auto [fa0, fr0] = rates(cuts[k - 1]);
    const double d0 = fa0 - fr0, d1 = fa1 - fr1;
    if (d1 == 0) return fa1;
    return fa0 + d0 / (d0 - d1) * (fa1 - fa0);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// Row vector times matrix: v [n] x m [n x k].
inline std::vector<double> vecmat(std::span<const double> v, const Tensor& m) {
  const std::size_t n = m.dim(0), k = m.dim(1);
  std::vector<double> out(k, 0.0);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < n; ++i) out[j] += v[i] * m[i * k + j];
  return out;
}

inline std::vector<double> se_gate(std::span<const double> squeezed, const Tensor& squeeze,
                                   const Tensor& excite) {
  auto hidden = vecmat(squeezed, squeeze);
  for (double& h : hidden) h = std::max(h, 0.0);
  auto gate = vecmat(hidden, excite);
  for (double& g : gate) g = sigmoid(g);
  return gate;
}

// SE over [B x C x ...]: every trailing element of a channel shares its gate.
inline std::vector<double> se_attention(const Tensor& t, const sasv::AttentionParams& p) {
  const std::size_t B = t.dim(0), C = t.dim(1), S = t.numel() / (B * C);
  std::vector<double> out(t.numel());
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> s(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t k = 0; k < S; ++k) s[c] += t[(b * C + c) * S + k];
      s[c] /= static_cast<double>(S);
    }
    const auto g = se_gate(s, p.weight("squeeze"), p.weight("excite"));
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < S; ++k) out[(b * C + c) * S + k] = t[(b * C + c) * S + k] * g[c];
  }
  return out;
}

inline std::vector<double> parallel_attention(const Tensor& t, const sasv::AttentionParams& p) {
  const std::size_t B = t.dim(0), C = t.dim(1), F = t.dim(2);
  std::vector<double> out(t.numel());
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> over_c(F, 0.0), over_f(C, 0.0);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t f = 0; f < F; ++f) {
        over_c[f] += t[(b * C + c) * F + f] / static_cast<double>(C);
        over_f[c] += t[(b * C + c) * F + f] / static_cast<double>(F);
      }
    auto g1 = vecmat(vecmat(over_c, p.weight("w1")), p.weight("w2"));
    auto g2 = vecmat(vecmat(over_f, p.weight("w3")), p.weight("w4"));
    for (double& g : g1) g = sigmoid(g);
    for (double& g : g2) g = sigmoid(g);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t f = 0; f < F; ++f) {
        out[(b * C + c) * F + f] = g2[c] * t[(b * C + c) * F + f] * g1[f];
      }
  }
  return out;
}

inline std::vector<double> vse_attention(const Tensor& t, const sasv::AttentionParams& p) {
  const std::size_t B = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
  auto at = [&](std::size_t b, std::size_t c, std::size_t h, std::size_t w) {
    return t[((b * C + c) * H + h) * W + w];
  };
  std::vector<double> out(t.numel());
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<std::vector<double>> gh(H), gw(W);
    for (std::size_t h = 0; h < H; ++h) {
      std::vector<double> pooled(C, 0.0);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t w = 0; w < W; ++w) pooled[c] += at(b, c, h, w) / static_cast<double>(W);
      gh[h] = se_gate(pooled, p.weight("shared"), p.weight("gate_h"));
    }
    for (std::size_t w = 0; w < W; ++w) {
      std::vector<double> pooled(C, 0.0);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t h = 0; h < H; ++h) pooled[c] += at(b, c, h, w) / static_cast<double>(H);
      gw[w] = se_gate(pooled, p.weight("shared"), p.weight("gate_w"));
    }
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w) {
          out[((b * C + c) * H + h) * W + w] = at(b, c, h, w) * gh[h][c] * gw[w][c];
        }
  }
  return out;
}

// Relative error ||fd - analytic|| / (||fd|| + ||analytic||) over every
// parameter entry, with central differences of step h.
inline double gradient_error(const std::function<Tensor(sasv::Tape*)>& loss_fn,
                             std::vector<Tensor> params, double h = 1e-6) {
  for (Tensor& p : params) p.zero_grad();
  sasv::Tape tape;
  tape.backward(loss_fn(&tape));
  double num = 0.0, fd_norm = 0.0, an_norm = 0.0;
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
      fd_norm += fd * fd;
      an_norm += analytic[k] * analytic[k];
    }
  }
  const double den = std::sqrt(fd_norm) + std::sqrt(an_norm);
  return den == 0.0 ? 0.0 : std::sqrt(num) / den;
}

}  // namespace oracle
