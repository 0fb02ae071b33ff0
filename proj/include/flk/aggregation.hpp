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

#ifndef FLK_AGGREGATION_HPP_
#define FLK_AGGREGATION_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "flk/types.hpp"

namespace flk {

// Weighted mean of client updates by sample count. Updates are summed in
// ascending client_id order regardless of arrival order, so the result is
// bit-identical under any permutation of the input list. A single update
// comes back unchanged (its weight is exactly 1.0).
ParameterVector fedavg(std::vector<LocalUpdate> updates);

// Staleness-discounted mixing for asynchronous rounds:
//   s = (1 + t - tau)^(-a),   w <- (1 - alpha*s)*w + alpha*s*w_update
// where t is the server round and tau the round the update started from.
ParameterVector async_apply(const ParameterVector& global,
                            const ParameterVector& update,
                            uint64_t server_round, uint64_t update_round,
                            double alpha, double staleness_exp);

// Seeded draw of max(1, ceil(fraction * num_clients)) distinct ids from
// [0, num_clients), sorted ascending. `attempt` varies the draw when a
// round has to re-select after a failed quorum; attempt 0 is the normal
// path.
std::vector<uint64_t> select_clients(uint64_t num_clients, double fraction,
                                     uint64_t round, uint64_t seed,
                                     uint64_t attempt = 0);

// Per-client EMA over observed round durations. Feeds the round ETA that
// the server attaches to outgoing models.
class ClientSpeedStats {
 public:
  explicit ClientSpeedStats(double ema_beta = 0.5) : beta_(ema_beta) {}

  void observe(uint64_t client_id, double observed_sec);
  std::optional<double> expected(uint64_t client_id) const;

  // now + max expected duration over `selected`; nullopt until every
  // selected client has at least one observation.
  std::optional<double> round_eta(const std::vector<uint64_t>& selected,
                                  double now) const;

 private:
  struct Entry {
    double expected_sec = 0.0;
    uint64_t observations = 0;
  };
  double beta_;
  std::map<uint64_t, Entry> entries_;
};

}  // namespace flk

#endif  // FLK_AGGREGATION_HPP_
