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

#include <cstddef>

#include <Eigen/Core>

namespace sasv::detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

enum class Trans { kNo, kYes };

// C[M x N] (+)= op(A) * op(B), all buffers row-major. op(A) is M x K; when
// transposed, A is stored as K x M. Same for B.
inline void gemm(const double* a, Trans ta, const double* b, Trans tb, double* c,
                 std::size_t m, std::size_t n, std::size_t k, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  MatrixMap out(c, M, N);
  if (!accumulate) out.setZero();
  if (ta == Trans::kNo && tb == Trans::kNo) {
    out.noalias() += ConstMatrixMap(a, M, K) * ConstMatrixMap(b, K, N);
  } else if (ta == Trans::kNo) {
    out.noalias() += ConstMatrixMap(a, M, K) * ConstMatrixMap(b, N, K).transpose();
  } else if (tb == Trans::kNo) {
    out.noalias() += ConstMatrixMap(a, K, M).transpose() * ConstMatrixMap(b, K, N);
  } else {
    out.noalias() += ConstMatrixMap(a, K, M).transpose() * ConstMatrixMap(b, N, K).transpose();
  }
}

}  // namespace sasv::detail
