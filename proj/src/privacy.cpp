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

#include "flk/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "flk/rng.hpp"
#include "flk/sha256.hpp"

namespace flk {

uint64_t MaskSeedTable::seed_for(uint64_t a, uint64_t b) const {
  const uint64_t lo = std::min(a, b);
  const uint64_t hi = std::max(a, b);
  std::string material = token_;
  char packed[16];
  for (int i = 0; i < 8; ++i) {
    packed[i] = char(uint8_t(lo >> (8 * i)));
    packed[8 + i] = char(uint8_t(hi >> (8 * i)));
  }
  material.append(packed, sizeof(packed));
  const Sha256Digest digest = sha256(material);
  uint64_t seed = 0;
  for (int i = 0; i < 8; ++i) {
    seed |= uint64_t(digest[i]) << (8 * i);
  }
  return seed;
}

ParameterVector clip(const ParameterVector& delta, double clip_norm) {
  if (!(clip_norm > 0.0)) {
    throw std::invalid_argument("clip: bound must be positive");
  }
  const double norm = l2_norm(delta);
  if (norm <= clip_norm) {
    return delta;  // including the zero vector
  }
  const double scale = clip_norm / norm;
  ParameterVector out = delta;
  for (double& v : out.values) v *= scale;
  return out;
}

double gaussian_sigma(double clip_norm, double epsilon, double delta) {
  if (!(clip_norm > 0.0)) {
    throw std::invalid_argument("gaussian_sigma: clip must be positive");
  }
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("gaussian_sigma: epsilon must be positive");
  }
  if (!(delta > 0.0) || delta >= 1.0) {
    throw std::invalid_argument("gaussian_sigma: delta out of range (0, 1)");
  }
  return clip_norm * std::sqrt(2.0 * std::log(1.25 / delta)) / epsilon;
}

ParameterVector add_noise(const ParameterVector& delta, double sigma,
                          uint64_t seed) {
  if (sigma < 0.0) {
    throw std::invalid_argument("add_noise: sigma must be non-negative");
  }
  if (sigma == 0.0) return delta;
  rng::Engine engine(seed);
  ParameterVector out = delta;
  for (double& v : out.values) v += sigma * engine.normal();
  return out;
}

ResidueVector fp_encode(const ParameterVector& x, double scale) {
  if (!(scale > 0.0)) {
    throw std::invalid_argument("fp_encode: scale must be positive");
  }
  ResidueVector out;
  out.values.reserve(x.dim());
  for (double v : x.values) {
    // llrint under the default rounding mode is round-half-to-even.
    out.values.push_back(uint64_t(int64_t(std::llrint(v * scale))));
  }
  return out;
}

ParameterVector fp_decode(const ResidueVector& r, double scale,
                          double divisor) {
  if (!(scale > 0.0) || !(divisor > 0.0)) {
    throw std::invalid_argument("fp_decode: scale and divisor must be positive");
  }
  ParameterVector out = ParameterVector::zeros(r.dim());
  for (size_t i = 0; i < r.dim(); ++i) {
    out.values[i] = double(int64_t(r.values[i])) / (scale * divisor);
  }
  return out;
}

ResidueVector pairwise_mask(uint64_t self_id,
                            const std::vector<uint64_t>& participants,
                            uint64_t round, const MaskSeedTable& table,
                            size_t dim) {
  if (std::find(participants.begin(), participants.end(), self_id) ==
      participants.end()) {
    throw std::invalid_argument("pairwise_mask: self not in participant set");
  }
  ResidueVector mask(std::vector<uint64_t>(dim, 0));
  for (uint64_t peer : participants) {
    if (peer == self_id) continue;
    rng::Engine prg(table.seed_for(self_id, peer) ^ round);
    if (peer > self_id) {
      for (uint64_t& m : mask.values) m += prg.next();
    } else {
      for (uint64_t& m : mask.values) m -= prg.next();
    }
  }
  return mask;
}

ResidueVector mask_update(const ParameterVector& weighted_params,
                          uint64_t sample_count, uint64_t self_id,
                          const std::vector<uint64_t>& participants,
                          uint64_t round, const MaskSeedTable& table,
                          double scale) {
  ResidueVector residue = fp_encode(weighted_params, scale);
  residue.values.push_back(sample_count);
  const ResidueVector mask =
      pairwise_mask(self_id, participants, round, table, residue.dim());
  for (size_t i = 0; i < residue.dim(); ++i) {
    residue.values[i] += mask.values[i];
  }
  return residue;
}

ParameterVector secagg_aggregate(const std::vector<ResidueVector>& masked,
                                 size_t expected_count, double scale) {
  if (masked.size() != expected_count || masked.empty()) {
    throw SecaggDropout("secagg dropout: have " +
                        std::to_string(masked.size()) + " of " +
                        std::to_string(expected_count) + " masked updates");
  }
  const size_t width = masked.front().dim();
  if (width < 2) {
    throw std::invalid_argument("secagg_aggregate: residues too short");
  }
  std::vector<uint64_t> sums(width, 0);
  for (const ResidueVector& r : masked) {
    if (r.dim() != width) {
      throw std::invalid_argument("secagg_aggregate: residue width mismatch");
    }
    for (size_t i = 0; i < width; ++i) sums[i] += r.values[i];
  }
  const uint64_t total_samples = sums.back();
  if (total_samples == 0) {
    throw std::invalid_argument("secagg_aggregate: zero total sample count");
  }
  ResidueVector payload(
      std::vector<uint64_t>(sums.begin(), sums.end() - 1));
  return fp_decode(payload, scale, double(total_samples));
}

}  // namespace flk
