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

#ifndef FLK_HOOKS_HPP_
#define FLK_HOOKS_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flk/aggregation.hpp"
#include "flk/clock.hpp"
#include "flk/metrics.hpp"
#include "flk/partition.hpp"
#include "flk/trainer.hpp"
#include "flk/types.hpp"

namespace flk {

enum class HookEvent : int {
  kOnServerStart = 0,
  kBeforeClientSelection,
  kBeforeAggregation,
  kAfterAggregation,
  kOnExperimentEnd,
  kOnClientStart,
  kBeforeLocalTrain,
  kAfterLocalTrain,
  kBeforeModelUpload,
};
inline constexpr size_t kHookEventCount = 9;

// Throws std::invalid_argument on anything outside the nine names.
HookEvent hook_event_from_name(const std::string& name);
const char* hook_event_name(HookEvent event);

using MetadataValue = std::variant<double, std::string>;
using MetadataMap = std::map<std::string, MetadataValue>;

// What a callback sees of the server. On the server this aliases the real
// round state; on a client it aliases a staging copy whose metrics travel
// back with the update.
struct ServerContext {
  uint64_t round = 0;
  const ParameterVector* global_model = nullptr;
  MetricsStore* metrics = nullptr;
  MetadataMap* metadata = nullptr;
  ClientSpeedStats* speeds = nullptr;
  const std::vector<uint64_t>* roster = nullptr;
  const Clock* clock = nullptr;
};

struct ClientContext {
  uint64_t client_id = 0;
  const Task* task = nullptr;
  const ParameterVector* local_model = nullptr;
  const Dataset* train_data = nullptr;
  const Dataset* test_data = nullptr;
  double spin_up_time_sec = 0.0;
  double shutdown_threshold_sec = 0.0;
  const Clock* clock = nullptr;
  bool terminate = false;  // one-way within a round

  void terminate_self() { terminate = true; }
};

// Ordered callback registry for the nine lifecycle events. Callbacks run in
// ascending priority, ties broken by registration order. Registration is a
// setup-time activity; the registry is not meant to change mid-experiment.
class HookRegistry {
 public:
  using Callback = std::function<void(ServerContext&, ClientContext*)>;

  struct Registration {
    HookEvent event;
    uint64_t seq;
  };

  Registration register_hook(HookEvent event, Callback callback,
                             int priority = 0);
  Registration register_hook(const std::string& event_name, Callback callback,
                             int priority = 0);

  void set_strict(bool strict) { strict_ = strict; }
  bool strict() const { return strict_; }

  // Runs every callback for the event. Default policy: a throwing callback
  // is logged, "hook_error_count" is bumped under scope "server" for the
  // current round, and the rest still run. Strict policy: first failure
  // propagates.
  void emit(HookEvent event, ServerContext& server,
            ClientContext* client = nullptr) const;

  size_t count(HookEvent event) const;

 private:
  struct Item {
    int priority;
    uint64_t seq;
    Callback callback;
  };
  std::array<std::vector<Item>, kHookEventCount> items_;
  uint64_t next_seq_ = 0;
  bool strict_ = false;
};

// Listing-style built-in: evaluate the local model on the client's test
// split and record test_loss / test_acc for (client, round). Registered on
// after_local_train. Skips clients with an empty test split.
void builtin_eval_local(ServerContext& server, ClientContext* client);

// Cost-aware shutdown, split across two events:
//  - server half (before_client_selection): publish metadata "round_eta"
//    as now + worst expected duration over the roster; absent until every
//    roster client has a speed estimate.
//  - client half (after_local_train): idle = max(0, eta - now - spin_up);
//    terminate_self when idle exceeds the shutdown threshold.
void builtin_cost_shutdown_server(ServerContext& server, ClientContext*);
void builtin_cost_shutdown_client(ServerContext& server,
                                  ClientContext* client);

}  // namespace flk

#endif  // FLK_HOOKS_HPP_
