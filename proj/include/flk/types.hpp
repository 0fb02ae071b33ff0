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

#ifndef FLK_TYPES_HPP_
#define FLK_TYPES_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace flk {

// Flat vector of f64 model parameters. The producing task defines the
// layout; everything downstream (aggregation, privacy, transport) treats it
// as an opaque fixed-dimension vector.
struct ParameterVector {
  std::vector<double> values;

  ParameterVector() = default;
  explicit ParameterVector(std::vector<double> v) : values(std::move(v)) {}
  static ParameterVector zeros(size_t dim) {
    return ParameterVector(std::vector<double>(dim, 0.0));
  }

  size_t dim() const { return values.size(); }
  double& operator[](size_t i) { return values[i]; }
  double operator[](size_t i) const { return values[i]; }

  bool operator==(const ParameterVector&) const = default;
};

bool all_finite(const ParameterVector& v);

// y + a*x elementwise; dimensions must match.
ParameterVector vec_axpy(double a, const ParameterVector& x,
                         const ParameterVector& y);

// Euclidean norm, accumulated left to right (summation order is part of the
// reproducibility contract).
double l2_norm(const ParameterVector& v);

// What one client hands back after a round of local work.
struct LocalUpdate {
  uint32_t client_id = 0;
  uint32_t round = 0;
  ParameterVector params;
  uint64_t sample_count = 0;
  double train_loss = 0.0;
  double wall_time_sec = 0.0;
  std::map<std::string, double> metrics;
};

}  // namespace flk

#endif  // FLK_TYPES_HPP_
