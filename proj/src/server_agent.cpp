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

#include "flk/server_agent.hpp"

#include <algorithm>
#include <numeric>
#include <utility>

#include "flk/log.hpp"
#include "flk/privacy.hpp"
#include "flk/rng.hpp"

namespace flk {
namespace {

std::string join_ids(const std::vector<uint64_t>& ids) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(ids[i]);
  }
  return out;
}

}  // namespace

ServerAgent::ServerAgent(const ExperimentConfig& cfg, Clock* clock)
    : cfg_(cfg),
      clock_(clock),
      sim_clock_(dynamic_cast<SimClock*>(clock)),
      task_(Task::from_config(cfg.task)),
      pooled_(build_full_dataset(cfg)),
      train_sizes_(train_split_sizes(cfg)),
      speeds_(cfg.timing.ema_beta) {
  roster_all_.resize(cfg_.clients);
  std::iota(roster_all_.begin(), roster_all_.end(), uint64_t{0});
  global_ = init_params(task_, rng::derive(cfg_.seed, rng::Domain::kInit));
  instances_.resize(cfg_.clients);
  for (Instance& inst : instances_) inst.up_since = clock_->now();
}

ServerContext ServerAgent::server_context() {
  ServerContext ctx;
  ctx.round = round_;
  ctx.global_model = &global_;
  ctx.metrics = &metrics_;
  ctx.metadata = &metadata_;
  ctx.speeds = &speeds_;
  ctx.roster = &roster_all_;
  ctx.clock = clock_;
  return ctx;
}

bool ServerAgent::cost_sim_active() const {
  return cfg_.cost.has_value() && clock_->simulated() &&
         cfg_.aggregator == Aggregator::kFedAvg;
}

double ServerAgent::work_sec(uint64_t client_id) const {
  if (!cfg_.cost.has_value()) return 0.0;
  return cfg_.cost->base_round_sec[client_id] +
         cfg_.cost->per_sample_sec *
             static_cast<double>(train_sizes_[client_id]);
}

Message ServerAgent::handle_register(const RegisterMsg& msg) {
  if (msg.token != cfg_.comm.auth_token) {
    FLK_LOG_ERROR("registration rejected: bad auth token (" << msg.name << ")");
    return ErrorMsg{kErrAuth, "bad auth token"};
  }
  const auto known = name_to_id_.find(msg.name);
  if (known != name_to_id_.end()) {
    // Reconnects are idempotent: the name keeps its id.
    return RegisterAckMsg{known->second, config_digest(cfg_)};
  }
  if (phase_ != Phase::kRegistering) {
    return ErrorMsg{kErrProtocol, "registration closed"};
  }
  const uint32_t id = static_cast<uint32_t>(name_to_id_.size());
  name_to_id_.emplace(msg.name, id);
  FLK_LOG_INFO("registered " << msg.name << " as client " << id << " ("
                             << name_to_id_.size() << "/" << cfg_.clients
                             << ")");
  if (name_to_id_.size() == cfg_.clients) start_experiment();
  return RegisterAckMsg{id, config_digest(cfg_)};
}

void ServerAgent::start_experiment() {
  ServerContext ctx = server_context();
  hooks_.emit(HookEvent::kOnServerStart, ctx);
  if (cfg_.rounds == 0) {
    finish_experiment();
    return;
  }
  if (cfg_.aggregator == Aggregator::kAsync) {
    phase_ = Phase::kRoundOpen;  // no selection; every update is applied
    return;
  }
  open_round(0);
}

void ServerAgent::open_round(uint64_t attempt) {
  phase_ = Phase::kRoundOpen;
  attempt_ = attempt;
  arrivals_.clear();
  arrival_offset_.clear();

  ServerContext ctx = server_context();
  hooks_.emit(HookEvent::kBeforeClientSelection, ctx);
  selection_ = select_clients(cfg_.clients, cfg_.client_fraction, round_,
                              cfg_.seed, attempt);
  round_start_ = clock_->now();

  MetadataMap meta = metadata_;
  if (clock_->simulated()) meta["sim_now"] = round_start_;
  if (cfg_.secagg.enabled) meta["secagg_cohort"] = join_ids(selection_);
  model_metadata_json_ = metadata_to_json(meta);

  for (uint64_t id : selection_) {
    double delay = 0.0;
    double spin = 0.0;
    if (cost_sim_active()) {
      Instance& inst = instances_[id];
      delay = std::max(0.0, inst.busy_until - round_start_);
      if (!inst.up) {
        inst.cost +=
            cfg_.cost->spin_up_time_sec * cfg_.cost->price_per_sec[id];
        inst.up = true;
        inst.up_since = round_start_;
        spin = cfg_.cost->spin_up_time_sec;
      }
    }
    arrival_offset_[id] = delay + spin + work_sec(id);
  }
  FLK_LOG_DEBUG("round " << round_ << " attempt " << attempt << ": "
                         << selection_.size() << " selected");
}

std::optional<Message> ServerAgent::poll_model(const GetModelMsg& msg) {
  if (msg.client_id >= name_to_id_.size()) {
    return Message{ErrorMsg{kErrProtocol, "unknown client id"}};
  }
  switch (phase_) {
    case Phase::kRegistering:
      return std::nullopt;  // the cohort is still assembling
    case Phase::kDone:
      return Message{DoneMsg{static_cast<uint32_t>(final_round_)}};
    case Phase::kFailed:
      return Message{ErrorMsg{failure_code_, failure_}};
    case Phase::kRoundOpen:
      break;
  }
  if (cfg_.aggregator == Aggregator::kAsync) {
    MetadataMap meta = metadata_;
    if (clock_->simulated()) meta["sim_now"] = clock_->now();
    return Message{ModelMsg{static_cast<uint32_t>(round_), global_.values,
                            metadata_to_json(meta)}};
  }
  const bool is_selected = std::find(selection_.begin(), selection_.end(),
                                     msg.client_id) != selection_.end();
  if (!is_selected) return std::nullopt;
  for (const Arrival& a : arrivals_) {
    if (a.msg.client_id == msg.client_id) return std::nullopt;  // already in
  }
  return Message{ModelMsg{static_cast<uint32_t>(round_), global_.values,
                          model_metadata_json_}};
}

Message ServerAgent::handle_update(const UpdateMsg& msg) {
  if (msg.client_id >= name_to_id_.size()) {
    return ErrorMsg{kErrProtocol, "unknown client id"};
  }
  if (phase_ == Phase::kDone) {
    FLK_LOG_DEBUG("update after experiment end from client "
                  << msg.client_id);
    return AckMsg{};
  }
  if (phase_ == Phase::kFailed) return ErrorMsg{failure_code_, failure_};
  if (phase_ == Phase::kRegistering) {
    return ErrorMsg{kErrProtocol, "no round open"};
  }

  const size_t dim = task_.param_dim();
  if (cfg_.secagg.enabled) {
    if (msg.flag != 1 || msg.masked.size() != dim + 1 || !msg.plain.empty()) {
      return ErrorMsg{kErrProtocol, "expected a masked update"};
    }
  } else {
    if (msg.flag != 0 || msg.plain.size() != dim || !msg.masked.empty()) {
      return ErrorMsg{kErrProtocol, "expected a plain update"};
    }
    if (!all_finite(ParameterVector{msg.plain})) {
      return ErrorMsg{kErrProtocol, "non-finite parameters"};
    }
  }

  if (cfg_.aggregator == Aggregator::kAsync) {
    try {
      apply_async(msg);
    } catch (const std::invalid_argument& e) {
      return ErrorMsg{kErrProtocol, e.what()};
    }
    return AckMsg{};
  }

  const bool is_selected = std::find(selection_.begin(), selection_.end(),
                                     msg.client_id) != selection_.end();
  if (msg.round != round_ || !is_selected) {
    FLK_LOG_DEBUG("discarding stale update: client " << msg.client_id
                                                     << " round " << msg.round);
    return AckMsg{};
  }
  for (const Arrival& a : arrivals_) {
    if (a.msg.client_id == msg.client_id) return AckMsg{};  // duplicate resend
  }

  Arrival arrival;
  arrival.msg = msg;
  arrival.at = clock_->simulated() ? arrival_offset_[msg.client_id]
                                   : clock_->now() - round_start_;
  arrivals_.push_back(std::move(arrival));

  // Simulation holds the round until every selected client's simulated
  // arrival is known, then applies quorum/timeout in simulated-time order;
  // a live server closes the instant the quorum is physically met.
  if (clock_->simulated()) {
    if (arrivals_.size() == selection_.size()) close_sync_round();
  } else if (arrivals_.size() >= cfg_.quorum_size(selection_.size())) {
    close_sync_round();
  }
  return AckMsg{};
}

void ServerAgent::close_sync_round() {
  std::sort(arrivals_.begin(), arrivals_.end(),
            [](const Arrival& a, const Arrival& b) {
              if (a.at != b.at) return a.at < b.at;
              return a.msg.client_id < b.msg.client_id;
            });
  const double timeout = cfg_.timing.round_timeout_sec;
  const size_t quorum = cfg_.quorum_size(selection_.size());

  size_t eligible = arrivals_.size();
  if (clock_->simulated() && timeout > 0.0) {
    eligible = 0;
    while (eligible < arrivals_.size() && arrivals_[eligible].at <= timeout) {
      ++eligible;
    }
  }

  if (eligible < quorum) {
    if (sim_clock_ != nullptr) sim_clock_->set(round_start_ + timeout);
    if (attempt_ == 0) {
      FLK_LOG_INFO("round " << round_ << ": quorum " << quorum << " not met ("
                            << eligible << " eligible), reselecting");
      open_round(1);
      return;
    }
    fail(kErrInternal, "round " + std::to_string(round_) +
                           ": quorum not met after retry");
    return;
  }

  // The round closes the moment the quorum-th update lands; anything after
  // that instant was never received.
  std::vector<Arrival> winners(arrivals_.begin(),
                               arrivals_.begin() + quorum);
  const uint64_t dropped = selection_.size() - winners.size();

  ServerContext ctx = server_context();
  hooks_.emit(HookEvent::kBeforeAggregation, ctx);

  uint64_t total_samples = 0;
  if (cfg_.secagg.enabled) {
    std::vector<ResidueVector> masked;
    masked.reserve(winners.size());
    for (const Arrival& w : winners) {
      masked.emplace_back(std::vector<uint64_t>(w.msg.masked));
      total_samples += w.msg.masked.back();  // cancels to sum n_k when whole
    }
    try {
      global_ = secagg_aggregate(
          masked, selection_.size(),
          static_cast<double>(cfg_.secagg.fixed_point_scale));
    } catch (const SecaggDropout& e) {
      fail(kErrSecaggDropout, e.what());
      return;
    }
  } else {
    std::vector<LocalUpdate> updates;
    updates.reserve(winners.size());
    for (const Arrival& w : winners) {
      LocalUpdate lu;
      lu.client_id = w.msg.client_id;
      lu.round = w.msg.round;
      lu.params = ParameterVector{w.msg.plain};
      lu.sample_count = w.msg.sample_count;
      total_samples += lu.sample_count;
      updates.push_back(std::move(lu));
    }
    global_ = fedavg(std::move(updates));
  }
  last_winners_.clear();
  for (const Arrival& w : winners) last_winners_.push_back(w.msg.client_id);
  std::sort(last_winners_.begin(), last_winners_.end());
  last_samples_ = total_samples;
  hooks_.emit(HookEvent::kAfterAggregation, ctx);

  const double close_rel = clock_->simulated()
                               ? winners.back().at
                               : clock_->now() - round_start_;
  if (sim_clock_ != nullptr) sim_clock_->set(round_start_ + close_rel);

  for (const Arrival& w : winners) {
    const bool terminated = merge_client_metrics(w.msg);
    const double observed =
        clock_->simulated() ? work_sec(w.msg.client_id) : w.at;
    if (observed > 0.0) speeds_.observe(w.msg.client_id, observed);
    if (cost_sim_active()) {
      const uint64_t id = w.msg.client_id;
      Instance& inst = instances_[id];
      if (terminated) {
        const double at = round_start_ + work_sec(id);
        inst.cost += (at - inst.up_since) * cfg_.cost->price_per_sec[id];
        inst.up = false;
        inst.busy_until = at;
      } else {
        inst.busy_until =
            std::max(inst.busy_until, round_start_ + arrival_offset_[id]);
      }
    }
  }
  if (cost_sim_active()) {
    // Dropped stragglers keep crunching their now-useless update.
    for (uint64_t id : selection_) {
      if (std::find(last_winners_.begin(), last_winners_.end(), id) !=
          last_winners_.end()) {
        continue;
      }
      instances_[id].busy_until = std::max(instances_[id].busy_until,
                                           round_start_ + arrival_offset_[id]);
    }
  }

  metrics_.put("server", round_, "round_duration", close_rel);
  if (dropped > 0) {
    metrics_.put("server", round_, "straggler_dropped",
                 static_cast<double>(dropped));
  }
  record_global_eval();

  round_ += 1;
  if (round_ >= cfg_.rounds) {
    finish_experiment();
  } else {
    open_round(0);
  }
}

void ServerAgent::apply_async(const UpdateMsg& msg) {
  ServerContext ctx = server_context();
  hooks_.emit(HookEvent::kBeforeAggregation, ctx);
  global_ = async_apply(global_, ParameterVector{msg.plain}, round_,
                        msg.round, cfg_.async_alpha, cfg_.staleness_exponent);
  last_winners_.assign(1, msg.client_id);
  last_samples_ = msg.sample_count;
  hooks_.emit(HookEvent::kAfterAggregation, ctx);
  merge_client_metrics(msg);
  record_global_eval();
  round_ += 1;  // one application = one model version
  if (round_ >= cfg_.async_budget) finish_experiment();
}

bool ServerAgent::merge_client_metrics(const UpdateMsg& msg) {
  bool terminated = false;
  if (msg.metrics_json.empty()) return terminated;
  for (const MetricsStore::Entry& e :
       metric_entries_from_json(msg.metrics_json)) {
    if (e.name == "hook_error_count") {
      metrics_.add(e.scope, e.round, e.name, e.value);
    } else {
      metrics_.put(e.scope, e.round, e.name, e.value);
    }
    if (e.name == "terminated") terminated = true;
  }
  return terminated;
}

void ServerAgent::record_global_eval() {
  const EvalResult r = evaluate(task_, global_, pooled_);
  metrics_.put("server", round_, "global_loss", r.loss);
  metrics_.put("server", round_, "global_acc", r.accuracy);
}

void ServerAgent::finish_experiment() {
  if (cost_sim_active()) {
    const double now = clock_->now();
    for (size_t id = 0; id < instances_.size(); ++id) {
      Instance& inst = instances_[id];
      if (inst.up) {
        inst.cost += (now - inst.up_since) * cfg_.cost->price_per_sec[id];
        inst.up = false;
      }
      metrics_.put_client(id, round_, "cost_total", inst.cost);
    }
  }
  ServerContext ctx = server_context();
  hooks_.emit(HookEvent::kOnExperimentEnd, ctx);
  final_round_ = round_;
  phase_ = Phase::kDone;
  FLK_LOG_INFO("experiment finished after " << round_
                                            << (cfg_.aggregator ==
                                                        Aggregator::kAsync
                                                    ? " applications"
                                                    : " rounds"));
}

void ServerAgent::fail(uint16_t code, const std::string& reason) {
  phase_ = Phase::kFailed;
  failure_ = reason;
  failure_code_ = code;
  FLK_LOG_ERROR("experiment failed: " << reason);
}

bool ServerAgent::tick() {
  if (phase_ != Phase::kRoundOpen) return false;
  if (cfg_.aggregator == Aggregator::kAsync) return false;
  if (clock_->simulated()) return false;  // sim rounds close on arrivals
  const double timeout = cfg_.timing.round_timeout_sec;
  if (timeout <= 0.0) return false;
  if (clock_->now() - round_start_ < timeout) return false;
  if (arrivals_.size() >= cfg_.quorum_size(selection_.size())) return false;
  close_sync_round();
  return true;
}

}  // namespace flk
