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

#include "flk/client.hpp"

#include <memory>
#include <stdexcept>
#include <utility>

#include "flk/clock.hpp"
#include "flk/log.hpp"
#include "flk/rng.hpp"
#include "flk/sha256.hpp"
#include "flk/types.hpp"

namespace flk {
namespace {

std::vector<uint64_t> parse_cohort(const MetadataMap& meta) {
  const auto it = meta.find("secagg_cohort");
  if (it == meta.end() || !std::holds_alternative<std::string>(it->second)) {
    throw std::runtime_error("secagg enabled but model metadata carries no cohort");
  }
  const std::string& text = std::get<std::string>(it->second);
  std::vector<uint64_t> ids;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t next = text.find(',', pos);
    if (next == std::string::npos) next = text.size();
    ids.push_back(std::stoull(text.substr(pos, next - pos)));
    pos = next + 1;
  }
  return ids;
}

}  // namespace

double sim_work_sec(const ExperimentConfig& cfg, uint32_t client_id) {
  if (!cfg.cost.has_value()) return 0.0;
  const std::vector<uint64_t> sizes = train_split_sizes(cfg);
  return cfg.cost->base_round_sec[client_id] +
         cfg.cost->per_sample_sec * static_cast<double>(sizes[client_id]);
}

ClientAgent::ClientAgent(const ExperimentConfig& cfg, std::string name,
                         const HookRegistry* hooks, TrainGate* train_gate)
    : cfg_(cfg),
      name_(std::move(name)),
      hooks_(hooks),
      train_gate_(train_gate),
      mask_seeds_(cfg.comm.auth_token) {}

void ClientAgent::adopt_identity(uint32_t client_id) {
  client_id_ = client_id;
  task_ = Task::from_config(cfg_.task);
  const Dataset full = build_full_dataset(cfg_);
  const PartitionPlan plan = build_partition(cfg_, full);
  data_ = materialize_client(cfg_, full, plan, client_id);
  work_sec_ = sim_work_sec(cfg_, client_id);
  have_identity_ = true;

  const bool wall = cfg_.mode == RunMode::kServer || cfg_.mode == RunMode::kClient;
  std::unique_ptr<Clock> clock;
  if (wall) {
    clock = std::make_unique<WallClock>();
  } else {
    clock = std::make_unique<FixedClock>(0.0);  // registration is the origin
  }
  ServerContext sctx;
  sctx.round = 0;
  sctx.metrics = &staging_;
  sctx.metadata = &scratch_meta_;
  sctx.clock = clock.get();
  ClientContext cctx;
  cctx.client_id = client_id_;
  cctx.task = &task_;
  cctx.train_data = &data_.train;
  cctx.test_data = &data_.test;
  cctx.clock = clock.get();
  hooks_->emit(HookEvent::kOnClientStart, sctx, &cctx);
}

UpdateMsg ClientAgent::round_once(const ModelMsg& model) {
  if (!have_identity_) {
    throw std::logic_error("round_once before adopt_identity");
  }
  MetadataMap meta = model.metadata_json.empty()
                         ? MetadataMap{}
                         : metadata_from_json(model.metadata_json);

  // Simulated runs stamp the round's start into the metadata; this client's
  // "now" during hooks is that origin plus its own work time.
  std::unique_ptr<Clock> clock;
  const auto sim_now = meta.find("sim_now");
  if (sim_now != meta.end() &&
      std::holds_alternative<double>(sim_now->second)) {
    clock = std::make_unique<FixedClock>(std::get<double>(sim_now->second) +
                                         work_sec_);
  } else {
    clock = std::make_unique<WallClock>();
  }

  ParameterVector global{model.params};
  ServerContext sctx;
  sctx.round = model.round;
  sctx.global_model = &global;
  sctx.metrics = &staging_;
  sctx.metadata = &meta;
  sctx.clock = clock.get();
  ClientContext cctx;
  cctx.client_id = client_id_;
  cctx.task = &task_;
  cctx.local_model = &global;
  cctx.train_data = &data_.train;
  cctx.test_data = &data_.test;
  if (cfg_.cost.has_value()) {
    cctx.spin_up_time_sec = cfg_.cost->spin_up_time_sec;
    cctx.shutdown_threshold_sec = cfg_.cost->shutdown_threshold_sec;
  }
  cctx.clock = clock.get();

  hooks_->emit(HookEvent::kBeforeLocalTrain, sctx, &cctx);

  TrainSettings settings;
  settings.epochs = cfg_.local_epochs;
  settings.batch_size = cfg_.batch_size;
  settings.learning_rate = cfg_.learning_rate;
  settings.prox_mu = cfg_.prox_mu;
  const uint64_t stream = rng::stream_seed(cfg_.seed, client_id_, model.round);

  LocalUpdate update;
  if (train_gate_ != nullptr) {
    train_gate_->acquire();
    try {
      update = local_train(task_, global, data_.train, settings, stream);
    } catch (...) {
      train_gate_->release();
      throw;
    }
    train_gate_->release();
  } else {
    update = local_train(task_, global, data_.train, settings, stream);
  }
  staging_.put_client(client_id_, model.round, "train_loss",
                      update.train_loss);

  cctx.local_model = &update.params;
  hooks_->emit(HookEvent::kAfterLocalTrain, sctx, &cctx);

  ParameterVector upload = update.params;
  if (cfg_.dp.enabled) {
    const ParameterVector delta = vec_axpy(-1.0, global, update.params);
    const ParameterVector clipped = clip(delta, cfg_.dp.clip);
    const double sigma =
        gaussian_sigma(cfg_.dp.clip, cfg_.dp.epsilon, cfg_.dp.delta);
    const ParameterVector noised = add_noise(
        clipped, sigma, rng::derive(stream, rng::Domain::kDpNoise));
    upload = vec_axpy(1.0, noised, global);
  }

  cctx.local_model = &upload;
  hooks_->emit(HookEvent::kBeforeModelUpload, sctx, &cctx);

  terminated_last_round_ = cctx.terminate;
  if (cctx.terminate) {
    staging_.put_client(client_id_, model.round, "terminated", 1.0);
    FLK_LOG_DEBUG("client " << client_id_ << " terminating after round "
                            << model.round);
  }

  UpdateMsg out;
  out.client_id = client_id_;
  out.round = model.round;
  const uint64_t n = data_.train.n;
  if (cfg_.secagg.enabled) {
    const std::vector<uint64_t> cohort = parse_cohort(meta);
    ParameterVector weighted = upload;
    for (double& v : weighted.values) v *= static_cast<double>(n);
    ResidueVector masked = mask_update(
        weighted, n, client_id_, cohort, model.round, mask_seeds_,
        static_cast<double>(cfg_.secagg.fixed_point_scale));
    out.flag = 1;
    out.masked = std::move(masked.values);
    out.sample_count = 0;  // the true count travels only inside the mask
  } else {
    out.flag = 0;
    out.plain = std::move(upload.values);
    out.sample_count = n;
  }
  out.metrics_json = metric_entries_to_json(staging_.drain_new());
  return out;
}

void ClientAgent::run(ClientTransport& transport) {
  Message reply = transport.register_client(cfg_.comm.auth_token, name_);
  if (const auto* err = std::get_if<ErrorMsg>(&reply)) {
    throw RemoteError(err->code, err->text);
  }
  const auto& ack = std::get<RegisterAckMsg>(reply);
  if (ack.config_digest != config_digest(cfg_)) {
    throw ConfigMismatchError(
        "config digest mismatch: this client's experiment is not the one "
        "the server is running (local " +
        hex(config_digest(cfg_)) + ")");
  }
  adopt_identity(ack.client_id);
  FLK_LOG_INFO("client " << client_id_ << " (" << name_ << ") registered");

  for (;;) {
    Message msg = transport.fetch_model(client_id_);
    if (std::holds_alternative<DoneMsg>(msg)) break;
    if (const auto* err = std::get_if<ErrorMsg>(&msg)) {
      throw RemoteError(err->code, err->text);
    }
    const UpdateMsg update = round_once(std::get<ModelMsg>(msg));
    Message ack_msg = transport.submit_update(update);
    if (const auto* err = std::get_if<ErrorMsg>(&ack_msg)) {
      throw RemoteError(err->code, err->text);
    }
  }
  FLK_LOG_INFO("client " << client_id_ << " done");
}

}  // namespace flk
