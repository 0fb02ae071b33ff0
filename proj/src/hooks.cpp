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

#include "flk/hooks.hpp"

#include <algorithm>
#include <stdexcept>

#include "flk/log.hpp"

namespace flk {

namespace {

constexpr const char* kEventNames[kHookEventCount] = {
    "on_server_start",    "before_client_selection",
    "before_aggregation", "after_aggregation",
    "on_experiment_end",  "on_client_start",
    "before_local_train", "after_local_train",
    "before_model_upload",
};

}  // namespace

HookEvent hook_event_from_name(const std::string& name) {
  for (size_t i = 0; i < kHookEventCount; ++i) {
    if (name == kEventNames[i]) return HookEvent(int(i));
  }
  throw std::invalid_argument("unknown hook event: " + name);
}

const char* hook_event_name(HookEvent event) {
  return kEventNames[size_t(event)];
}

HookRegistry::Registration HookRegistry::register_hook(HookEvent event,
                                                       Callback callback,
                                                       int priority) {
  std::vector<Item>& list = items_[size_t(event)];
  const uint64_t seq = next_seq_++;
  // Insert after existing callbacks of the same priority: ties keep
  // registration order.
  auto pos = std::upper_bound(
      list.begin(), list.end(), priority,
      [](int p, const Item& item) { return p < item.priority; });
  list.insert(pos, Item{priority, seq, std::move(callback)});
  return Registration{event, seq};
}

HookRegistry::Registration HookRegistry::register_hook(
    const std::string& event_name, Callback callback, int priority) {
  return register_hook(hook_event_from_name(event_name), std::move(callback),
                       priority);
}

void HookRegistry::emit(HookEvent event, ServerContext& server,
                        ClientContext* client) const {
  for (const Item& item : items_[size_t(event)]) {
    try {
      item.callback(server, client);
    } catch (const std::exception& e) {
      if (strict_) throw;
      FLK_LOG_ERROR("hook failure on " << hook_event_name(event) << ": "
                                       << e.what());
      if (server.metrics != nullptr) {
        server.metrics->add("server", server.round, "hook_error_count", 1.0);
      }
    }
  }
}

size_t HookRegistry::count(HookEvent event) const {
  return items_[size_t(event)].size();
}

void builtin_eval_local(ServerContext& server, ClientContext* client) {
  if (client == nullptr || client->test_data == nullptr ||
      client->test_data->n == 0) {
    return;
  }
  const EvalResult r =
      evaluate(*client->task, *client->local_model, *client->test_data);
  server.metrics->put_client(client->client_id, server.round, "test_loss",
                             r.loss);
  server.metrics->put_client(client->client_id, server.round, "test_acc",
                             r.accuracy);
}

void builtin_cost_shutdown_server(ServerContext& server, ClientContext*) {
  const std::optional<double> eta =
      server.speeds->round_eta(*server.roster, server.clock->now());
  if (eta) {
    (*server.metadata)["round_eta"] = *eta;
  } else {
    server.metadata->erase("round_eta");  // no stale estimate may linger
  }
}

void builtin_cost_shutdown_client(ServerContext& server,
                                  ClientContext* client) {
  if (client == nullptr || server.metadata == nullptr) return;
  auto it = server.metadata->find("round_eta");
  if (it == server.metadata->end() ||
      !std::holds_alternative<double>(it->second)) {
    return;  // no ETA yet (first round): never shut down blind
  }
  const double eta = std::get<double>(it->second);
  const double idle =
      std::max(0.0, eta - client->clock->now() - client->spin_up_time_sec);
  if (idle > client->shutdown_threshold_sec) {
    FLK_LOG_DEBUG("client " << client->client_id << " idle " << idle
                            << "s exceeds threshold, shutting down");
    client->terminate_self();
  }
}

}  // namespace flk
