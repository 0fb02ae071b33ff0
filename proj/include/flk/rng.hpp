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

#ifndef FLK_RNG_HPP_
#define FLK_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <cstddef>
#include <utility>
#include <vector>

namespace flk::rng {

inline constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// One SplitMix64 step applied to state x: advance by the golden-ratio
// increment, then the standard output mix. Pure function of its input.
inline uint64_t split_mix64(uint64_t x) {
  uint64_t z = x + kGolden;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Seed of the (client, round) stream. All per-client randomness in a round
// descends from this value, which is what makes serial, parallel and
// networked runs interchangeable.
inline uint64_t stream_seed(uint64_t global_seed, uint64_t client_id,
                            uint64_t round) {
  return split_mix64(split_mix64(global_seed + client_id * kGolden) + round);
}

// Domain tags keep independent consumers of the same base seed apart.
enum class Domain : uint64_t {
  kBlobs = 1,
  kPartition = 2,
  kInit = 3,
  kTestSplit = 4,
  kTrainShuffle = 5,
  kDpNoise = 6,
  kSelection = 7,
};

inline uint64_t derive(uint64_t base, Domain tag, uint64_t index = 0) {
  return split_mix64(
      split_mix64(base ^ (static_cast<uint64_t>(tag) * kGolden)) + index);
}

// SplitMix64 sequence generator. The first output for seed s equals
// split_mix64(s), so a stream is fully named by its seed.
class Engine {
 public:
  explicit Engine(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    state_ += kGolden;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in (0, 1]; never returns 0, so log() is safe on it.
  double uniform01() {
    return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Uniform integer in [0, n); n > 0. Lemire reduction, no rejection loop.
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  // Standard normal via Box-Muller. Draws are produced in pairs; the spare
  // is cached, so interleaving other calls between normals changes nothing
  // about values already queued.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = kTwoPi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // In-place Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace flk::rng

#endif  // FLK_RNG_HPP_
