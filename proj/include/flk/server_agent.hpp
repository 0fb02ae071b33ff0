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

#ifndef FLK_SERVER_AGENT_HPP_
#define FLK_SERVER_AGENT_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flk/aggregation.hpp"
#include "flk/channel.hpp"
#include "flk/clock.hpp"
#include "flk/config.hpp"
#include "flk/hooks.hpp"
#include "flk/message.hpp"
#include "flk/metrics.hpp"
#include "flk/partition.hpp"
#include "flk/trainer.hpp"

namespace flk {

// The federation's single writer. Reactive: every transition happens inside
// handle_register / handle_update / tick, so any transport that serializes
// calls into it gets identical behavior. Owns the global model, the round
// loop (sync quorum/timeout or async budget), client speed stats, metrics,
// and the simulated cost model.
//
// Round 0 opens once all `clients` expected participants have registered;
// ids are assigned in registration order, and a name re-registering keeps
// its id (reconnects are idempotent).
class ServerAgent final : public ServerApi {
 public:
  ServerAgent(const ExperimentConfig& cfg, Clock* clock);

  Message handle_register(const RegisterMsg& msg) override;
  std::optional<Message> poll_model(const GetModelMsg& msg) override;
  Message handle_update(const UpdateMsg& msg) override;
  bool tick() override;

  HookRegistry& hooks() { return hooks_; }
  MetricsStore& metrics() { return metrics_; }
  const Clock& clock() const { return *clock_; }

  bool finished() const { return phase_ == Phase::kDone; }
  bool failed() const { return phase_ == Phase::kFailed; }
  const std::string& failure() const { return failure_; }
  uint16_t failure_code() const { return failure_code_; }

  uint64_t round() const { return round_; }
  const ParameterVector& global_model() const { return global_; }
  const std::vector<uint64_t>& current_selection() const { return selection_; }

  // Last closed round's aggregation facts, for invariant probes.
  const std::vector<uint64_t>& last_round_winners() const { return last_winners_; }
  uint64_t last_round_samples() const { return last_samples_; }

 private:
  enum class Phase { kRegistering, kRoundOpen, kDone, kFailed };

  struct Arrival {
    UpdateMsg msg;
    double at = 0.0;  // seconds since round start
  };

  // Simulated instance ledger (Listing-2 accounting). Instances start up at
  // the experiment origin with no charge; spin-up is a lump charged when a
  // down instance is selected; up-time accrues continuously until
  // termination or experiment end.
  struct Instance {
    bool up = true;
    double up_since = 0.0;
    double busy_until = 0.0;
    double cost = 0.0;
  };

  ServerContext server_context();
  void start_experiment();
  void open_round(uint64_t attempt);
  void close_sync_round();
  void apply_async(const UpdateMsg& msg);
  // Returns true when the update carried a termination notice.
  bool merge_client_metrics(const UpdateMsg& msg);
  void record_global_eval();
  void finish_experiment();
  void fail(uint16_t code, const std::string& reason);
  double work_sec(uint64_t client_id) const;
  bool cost_sim_active() const;

  ExperimentConfig cfg_;
  Clock* clock_;
  SimClock* sim_clock_;  // non-null only for simulated clocks

  Task task_;
  Dataset pooled_;
  std::vector<uint64_t> train_sizes_;
  std::vector<uint64_t> roster_all_;

  HookRegistry hooks_;
  MetricsStore metrics_;
  ClientSpeedStats speeds_;
  MetadataMap metadata_;

  Phase phase_ = Phase::kRegistering;
  std::string failure_;
  uint16_t failure_code_ = 0;

  std::map<std::string, uint32_t> name_to_id_;

  ParameterVector global_;
  uint64_t round_ = 0;
  uint64_t attempt_ = 0;
  double round_start_ = 0.0;
  std::vector<uint64_t> selection_;
  std::string model_metadata_json_;
  std::vector<Arrival> arrivals_;
  std::map<uint64_t, double> arrival_offset_;  // sim arrival per selected id

  std::vector<Instance> instances_;
  std::vector<uint64_t> last_winners_;
  uint64_t last_samples_ = 0;
  uint64_t final_round_ = 0;
};

}  // namespace flk

#endif  // FLK_SERVER_AGENT_HPP_
