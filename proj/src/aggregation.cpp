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

#include "flk/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "flk/rng.hpp"

namespace flk {

ParameterVector fedavg(std::vector<LocalUpdate> updates) {
  if (updates.empty()) {
    throw std::invalid_argument("fedavg: empty update list");
  }
  std::sort(updates.begin(), updates.end(),
            [](const LocalUpdate& a, const LocalUpdate& b) {
              return a.client_id < b.client_id;
            });
  const size_t dim = updates.front().params.dim();
  double total_samples = 0.0;
  for (const LocalUpdate& u : updates) {
    if (u.params.dim() != dim) {
      throw std::invalid_argument("fedavg: parameter dimension mismatch");
    }
    total_samples += double(u.sample_count);
  }
  if (total_samples <= 0.0) {
    throw std::invalid_argument("fedavg: no samples across updates");
  }
  ParameterVector out = ParameterVector::zeros(dim);
  for (const LocalUpdate& u : updates) {
    const double weight = double(u.sample_count) / total_samples;
    for (size_t i = 0; i < dim; ++i) {
      out.values[i] += weight * u.params.values[i];
    }
  }
  return out;
}

ParameterVector async_apply(const ParameterVector& global,
                            const ParameterVector& update,
                            uint64_t server_round, uint64_t update_round,
                            double alpha, double staleness_exp) {
  if (server_round < update_round) {
    throw std::invalid_argument("async_apply: update from a future round");
  }
  if (!(alpha > 0.0) || alpha > 1.0) {
    throw std::invalid_argument("async_apply: alpha out of range (0, 1]");
  }
  if (global.dim() != update.dim()) {
    throw std::invalid_argument("async_apply: parameter dimension mismatch");
  }
  const double staleness = double(server_round - update_round);
  const double s = std::pow(1.0 + staleness, -staleness_exp);
  const double mix = alpha * s;
  ParameterVector out = ParameterVector::zeros(global.dim());
  for (size_t i = 0; i < out.dim(); ++i) {
    out.values[i] =
        (1.0 - mix) * global.values[i] + mix * update.values[i];
  }
  return out;
}

std::vector<uint64_t> select_clients(uint64_t num_clients, double fraction,
                                     uint64_t round, uint64_t seed,
                                     uint64_t attempt) {
  if (num_clients == 0) {
    throw std::invalid_argument("select_clients: no clients");
  }
  uint64_t count = uint64_t(std::ceil(fraction * double(num_clients)));
  count = std::clamp<uint64_t>(count, 1, num_clients);

  std::vector<uint64_t> ids(num_clients);
  std::iota(ids.begin(), ids.end(), 0);
  // The selection stream hangs off the client-id slot one past the roster.
  const uint64_t base = rng::stream_seed(seed, num_clients, round);
  rng::Engine engine(rng::derive(base, rng::Domain::kSelection, attempt));
  engine.shuffle(ids);
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

void ClientSpeedStats::observe(uint64_t client_id, double observed_sec) {
  if (!(observed_sec > 0.0)) {
    throw std::invalid_argument("observe: duration must be positive");
  }
  Entry& e = entries_[client_id];
  if (e.observations == 0) {
    e.expected_sec = observed_sec;
  } else {
    e.expected_sec = beta_ * observed_sec + (1.0 - beta_) * e.expected_sec;
  }
  ++e.observations;
}

std::optional<double> ClientSpeedStats::expected(uint64_t client_id) const {
  auto it = entries_.find(client_id);
  if (it == entries_.end() || it->second.observations == 0) {
    return std::nullopt;
  }
  return it->second.expected_sec;
}

std::optional<double> ClientSpeedStats::round_eta(
    const std::vector<uint64_t>& selected, double now) const {
  if (selected.empty()) return std::nullopt;
  double worst = 0.0;
  for (uint64_t id : selected) {
    std::optional<double> est = expected(id);
    if (!est) return std::nullopt;
    worst = std::max(worst, *est);
  }
  return now + worst;
}

}  // namespace flk
