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

#ifndef FLK_PRIVACY_HPP_
#define FLK_PRIVACY_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "flk/types.hpp"

namespace flk {

// Residues modulo 2^64. All arithmetic on these wraps, which is what makes
// pairwise-mask cancellation exact rather than approximate.
struct ResidueVector {
  std::vector<uint64_t> values;

  ResidueVector() = default;
  explicit ResidueVector(std::vector<uint64_t> v) : values(std::move(v)) {}
  size_t dim() const { return values.size(); }
};

// A round is only decodable when every expected masked update arrived; this
// error aborts the round when one is missing.
class SecaggDropout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Symmetric per-pair mask seeds derived from the shared auth token:
// SHA-256(token || u64le(min) || u64le(max)) truncated to its first eight
// bytes, little endian. Stands in for key agreement at desk scale.
class MaskSeedTable {
 public:
  explicit MaskSeedTable(std::string auth_token)
      : token_(std::move(auth_token)) {}

  uint64_t seed_for(uint64_t a, uint64_t b) const;

 private:
  std::string token_;
};

// L2 projection onto the ball of radius clip_norm: delta * min(1, C/||delta||).
ParameterVector clip(const ParameterVector& delta, double clip_norm);

// Gaussian-mechanism scale: sigma = C * sqrt(2 ln(1.25/delta)) / epsilon.
double gaussian_sigma(double clip_norm, double epsilon, double delta);

// delta[i] + sigma * z_i with z_i standard normal from the seeded stream.
ParameterVector add_noise(const ParameterVector& delta, double sigma,
                          uint64_t seed);

// Fixed point: round-half-even(x*scale) embedded two's-complement in u64.
ResidueVector fp_encode(const ParameterVector& x, double scale);

// Inverse of encode over a sum of n contributions: signed(residue)/(scale*n).
ParameterVector fp_decode(const ResidueVector& r, double scale,
                          double divisor);

// This client's additive mask over `dim` residues:
//   sum_{j>i} PRG(seed_ij, round) - sum_{j<i} PRG(seed_ij, round)   (mod 2^64)
// where the PRG stream is seeded by seed_ij XOR round. Masks over any full
// participant set cancel exactly.
ResidueVector pairwise_mask(uint64_t self_id,
                            const std::vector<uint64_t>& participants,
                            uint64_t round, const MaskSeedTable& table,
                            size_t dim);

// Client-side composition: encode the n_k-weighted parameters, append the raw
// sample count as one extra residue, and add this client's pairwise mask.
ResidueVector mask_update(const ParameterVector& weighted_params,
                          uint64_t sample_count, uint64_t self_id,
                          const std::vector<uint64_t>& participants,
                          uint64_t round, const MaskSeedTable& table,
                          double scale);

// Wrap-sum the masked updates (masks cancel), then decode
// sum(n_k * w_k) / sum(n_k). Throws SecaggDropout unless exactly
// expected_count updates are present.
ParameterVector secagg_aggregate(const std::vector<ResidueVector>& masked,
                                 size_t expected_count, double scale);

}  // namespace flk

#endif  // FLK_PRIVACY_HPP_
