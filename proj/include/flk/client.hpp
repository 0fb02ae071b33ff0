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

#ifndef FLK_CLIENT_HPP_
#define FLK_CLIENT_HPP_

#include <cstdint>
#include <memory>
#include <semaphore>
#include <string>

#include "flk/channel.hpp"
#include "flk/config.hpp"
#include "flk/hooks.hpp"
#include "flk/metrics.hpp"
#include "flk/partition.hpp"
#include "flk/privacy.hpp"
#include "flk/trainer.hpp"

namespace flk {

// Bounds how many local trainings run at once in parallel simulation (the
// "pool of P workers"). Results never depend on it because every stochastic
// stream is named by (seed, client id, round), not by scheduling.
using TrainGate = std::counting_semaphore<>;

// One federation participant. The same object and the same round code run
// under every mode; only the transport and the clock differ. Identity (and
// with it the data shard and all stochastic streams) comes from the id the
// server assigns at registration, not from the process that hosts it.
class ClientAgent {
 public:
  ClientAgent(const ExperimentConfig& cfg, std::string name,
              const HookRegistry* hooks, TrainGate* train_gate = nullptr);

  // Materializes the shard and task for the assigned id and emits
  // on_client_start. Must run before the first round.
  void adopt_identity(uint32_t client_id);

  // One round of local work: hooks around local_train, the privacy
  // pipeline, and the staged-metrics drain into the returned update.
  UpdateMsg round_once(const ModelMsg& model);

  // Full lifecycle over a transport: register, verify the config digest,
  // then fetch/train/submit until DONE. Throws RemoteError on server-side
  // rejection and ConfigMismatchError on digest disagreement.
  void run(ClientTransport& transport);

  uint32_t client_id() const { return client_id_; }
  const std::string& name() const { return name_; }
  // Whether the last round's cost hook decided to shut this instance down.
  bool terminated_last_round() const { return terminated_last_round_; }

 private:
  ExperimentConfig cfg_;
  std::string name_;
  const HookRegistry* hooks_;
  TrainGate* train_gate_;

  uint32_t client_id_ = 0;
  bool have_identity_ = false;
  Task task_;
  ClientData data_;
  double work_sec_ = 0.0;  // simulated in-round duration, excludes spin-up
  MaskSeedTable mask_seeds_;
  MetricsStore staging_;
  MetadataMap scratch_meta_;
  bool terminated_last_round_ = false;
};

// duration_k = base_round_sec_k + per_sample_sec * |train split k|; zero
// without a cost block.
double sim_work_sec(const ExperimentConfig& cfg, uint32_t client_id);

}  // namespace flk

#endif  // FLK_CLIENT_HPP_
