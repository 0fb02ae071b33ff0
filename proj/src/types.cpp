// Copyright 2026 The flk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS-IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "flk/types.hpp"

#include <cmath>
#include <stdexcept>

namespace flk {

bool all_finite(const ParameterVector& v) {
  for (double x : v.values) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

ParameterVector vec_axpy(double a, const ParameterVector& x,
                         const ParameterVector& y) {
  if (x.dim() != y.dim()) {
    throw std::invalid_argument("vec_axpy: dimension mismatch");
  }
  ParameterVector out = ParameterVector::zeros(x.dim());
  for (size_t i = 0; i < x.dim(); ++i) {
    out.values[i] = y.values[i] + a * x.values[i];
  }
  return out;
}

double l2_norm(const ParameterVector& v) {
  double acc = 0.0;
  for (double x : v.values) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace flk
