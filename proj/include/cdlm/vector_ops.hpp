// Copyright 2026 The CDLM Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <span>

#include "cdlm/types.hpp"

namespace cdlm {

/// Unit-norm copy of `v`. An all-zero input maps to the first basis vector.
template <typename Derived>
Vector<typename Derived::Scalar> normalized_or_basis(
    const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  Vector<Scalar> out = v;
  const Scalar norm = out.norm();
  if (norm == Scalar(0) || !std::isfinite(static_cast<double>(norm))) {
    out.setZero();
    if (out.size() > 0) out(0) = Scalar(1);
    return out;
  }
  out /= norm;
  return out;
}

template <typename Derived>
bool is_unit(const Eigen::MatrixBase<Derived>& v, double tol = 1e-6) {
  if (!v.allFinite()) return false;
  return std::abs(static_cast<double>(v.norm()) - 1.0) <= tol;
}

/// Dot product of two float vectors with double accumulation, summed in
/// index order.
inline double dot_f32(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

inline Vector<float> to_f32(const ContextVector& v) { return v.cast<float>(); }

}  // namespace cdlm
