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

#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flk/aggregation.hpp"
#include "flk/client.hpp"
#include "flk/orchestrator.hpp"
#include "flk/rng.hpp"
#include "flk/server_agent.hpp"
#include "flk/trainer.hpp"

using namespace flk;

namespace {

// Small but non-trivial federation: heterogeneous shards, full
// participation, a couple of SGD epochs worth of signal.
ExperimentConfig base_cfg(uint32_t clients, uint32_t rounds) {
  ExperimentConfig c;
  c.seed = 42;
  c.rounds = rounds;
  c.clients = clients;
  c.client_fraction = 1.0;
  c.local_epochs = 1;
  c.batch_size = 16;
  c.learning_rate = 0.1;
  c.task.kind = TaskKind::kLogreg;
  c.task.n_per_class = 30;
  c.task.n_classes = 2;
  c.task.feature_dim = 6;
  c.task.class_sep = 3.0;
  c.partition.scheme = PartitionScheme::kDirichlet;
  c.partition.dirichlet_alpha = 0.5;
  return c;
}

std::optional<double> find_metric(const std::vector<MetricsStore::Entry>& es,
                                  const std::string& scope, uint64_t round,
                                  const std::string& name) {
  for (const auto& e : es) {
    if (e.scope == scope && e.round == round && e.name == name) {
      return e.value;
    }
  }
  return std::nullopt;
}

size_t count_metric(const std::vector<MetricsStore::Entry>& es,
                    const std::string& name) {
  size_t n = 0;
  for (const auto& e : es) n += (e.name == name) ? 1 : 0;
  return n;
}

std::string temp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() /
             ("flk_test_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  return dir.string();
}

}  // namespace

TEST_SUITE_BEGIN("orchestrator");

TEST_CASE("model file round-trips and rejects malformed input") {
  const std::string dir = temp_dir("flmd");
  std::filesystem::create_directories(dir);
  const std::string path = dir + "/m.flmd";

  ParameterVector params(std::vector<double>{1.5, -2.25, 0.0, 1e-300});
  Sha256Digest digest{};
  for (size_t i = 0; i < digest.size(); ++i) digest[i] = uint8_t(i * 3);
  write_model_file(path, params, digest);

  const ModelFile mf = read_model_file(path);
  CHECK(mf.params.values == params.values);
  CHECK(mf.digest == digest);

  SUBCASE("bad magic") {
    FILE* f = std::fopen(path.c_str(), "r+b");
    std::fputc('X', f);
    std::fclose(f);
    CHECK_THROWS_AS(read_model_file(path), RunError);
  }
  SUBCASE("truncated body") {
    std::filesystem::resize_file(path, 20);
    CHECK_THROWS_AS(read_model_file(path), RunError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_model_file(dir + "/absent.flmd"), RunError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("serial and parallel simulation produce identical results") {
  const ExperimentConfig cfg = base_cfg(4, 3);

  const RunResult serial = run_simulation(cfg);
  for (unsigned p : {1u, 2u, 4u}) {
    SimOptions opts;
    opts.parallel = p;
    const RunResult par = run_simulation(cfg, opts);
    CHECK(par.model.values == serial.model.values);
    CHECK(par.final_round == serial.final_round);

    // Same journal contents; drain batching may differ, so compare sorted.
    auto key = [](const MetricsStore::Entry& e) {
      return std::tuple(e.round, e.scope, e.name, e.value);
    };
    std::vector<std::tuple<uint64_t, std::string, std::string, double>> a, b;
    for (const auto& e : serial.metrics) a.push_back(key(e));
    for (const auto& e : par.metrics) b.push_back(key(e));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
}

TEST_CASE("parallel parity survives the frame-serialization audit") {
  ExperimentConfig cfg = base_cfg(3, 2);
  cfg.comm.serialize_inproc = true;  // every rpc goes through the codec
  SimOptions opts;
  opts.parallel = 3;
  const RunResult audited = run_simulation(cfg, opts);
  cfg.comm.serialize_inproc = false;
  const RunResult serial = run_simulation(cfg);
  CHECK(audited.model.values == serial.model.values);
}

TEST_CASE("a one-client federation is standalone local training") {
  ExperimentConfig cfg = base_cfg(1, 4);

  const RunResult run = run_simulation(cfg);

  const Task task = Task::from_config(cfg.task);
  const Dataset full = build_full_dataset(cfg);
  const PartitionPlan plan = build_partition(cfg, full);
  const ClientData shard = materialize_client(cfg, full, plan, 0);
  TrainSettings settings;
  settings.epochs = cfg.local_epochs;
  settings.batch_size = cfg.batch_size;
  settings.learning_rate = cfg.learning_rate;
  settings.prox_mu = cfg.prox_mu;

  ParameterVector w =
      init_params(task, rng::derive(cfg.seed, rng::Domain::kInit));
  for (uint32_t r = 0; r < cfg.rounds; ++r) {
    w = local_train(task, w, shard.train, settings,
                    rng::stream_seed(cfg.seed, 0, r))
            .params;
  }
  CHECK(run.model.values == w.values);  // bitwise, not approximately
}

TEST_CASE("eval-local metrics match a direct evaluation of each local model") {
  ExperimentConfig cfg = base_cfg(4, 3);
  cfg.client_fraction = 0.5;  // 2 of 4 per round

  // (client, round) -> evaluation taken inside the hook, at record time.
  std::map<std::pair<uint64_t, uint64_t>, EvalResult> direct;
  SimOptions opts;
  opts.extra_hooks = [&](HookRegistry&, HookRegistry& client_hooks) {
    client_hooks.register_hook(
        HookEvent::kAfterLocalTrain,
        [&](ServerContext& server, ClientContext* client) {
          REQUIRE(client != nullptr);
          direct[{client->client_id, server.round}] =
              evaluate(*client->task, *client->local_model,
                       *client->test_data);
        });
  };
  const RunResult run = run_simulation(cfg, opts);

  // Exactly sum over rounds of |selected| pairs, nothing else.
  size_t expected_pairs = 0;
  for (uint32_t r = 0; r < cfg.rounds; ++r) {
    expected_pairs +=
        select_clients(cfg.clients, cfg.client_fraction, r, cfg.seed).size();
  }
  CHECK(count_metric(run.metrics, "test_acc") == expected_pairs);
  CHECK(count_metric(run.metrics, "test_loss") == expected_pairs);
  CHECK(direct.size() == expected_pairs);

  for (const auto& [key, eval] : direct) {
    const std::string scope = std::to_string(key.first);
    CHECK(find_metric(run.metrics, scope, key.second, "test_acc") ==
          eval.accuracy);
    CHECK(find_metric(run.metrics, scope, key.second, "test_loss") ==
          eval.loss);
  }
}

TEST_CASE("metrics journal is complete, ordered, and file-parseable") {
  const std::string dir = temp_dir("journal");
  ExperimentConfig cfg = base_cfg(2, 3);
  SimOptions opts;
  opts.out_dir = dir;
  const RunResult run = run_simulation(cfg, opts);

  // Per round: 2 train_loss + 2 test_loss + 2 test_acc + round_duration +
  // global_loss + global_acc.
  CHECK(run.metrics.size() == 9 * 3);

  const auto records = read_metrics(dir + "/metrics.jsonl");
  CHECK(records.size() == run.metrics.size());
  std::map<std::string, uint64_t> last_round;
  for (const auto& r : records) {
    CHECK(std::holds_alternative<double>(r.ts));  // simulated clock
    auto it = last_round.find(r.scope);
    if (it != last_round.end()) CHECK(r.round >= it->second);
    last_round[r.scope] = r.round;
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("hook toggles never change the model trajectory") {
  ExperimentConfig cfg = base_cfg(3, 3);
  const RunResult with_eval = run_simulation(cfg);
  cfg.hooks.eval_local = false;
  const RunResult without_eval = run_simulation(cfg);
  CHECK(with_eval.model.values == without_eval.model.values);

  cfg.hooks.strict = true;
  const RunResult strict = run_simulation(cfg);
  CHECK(strict.model.values == without_eval.model.values);
}

TEST_CASE("aggregation conserves the winners' sample counts") {
  ExperimentConfig cfg = base_cfg(4, 3);
  const std::vector<uint64_t> sizes = train_split_sizes(cfg);

  ServerAgent* probe = nullptr;
  struct Closed {
    uint64_t round;
    std::vector<uint64_t> winners;
    uint64_t samples;
  };
  std::vector<Closed> closed;
  SimOptions opts;
  opts.probe = [&](ServerAgent& agent) { probe = &agent; };
  opts.extra_hooks = [&](HookRegistry& server_hooks, HookRegistry&) {
    server_hooks.register_hook(
        HookEvent::kAfterAggregation, [&](ServerContext& ctx, ClientContext*) {
          closed.push_back({ctx.round, probe->last_round_winners(),
                            probe->last_round_samples()});
        });
  };
  run_simulation(cfg, opts);

  REQUIRE(closed.size() == 3);
  for (const Closed& c : closed) {
    uint64_t expected = 0;
    for (uint64_t id : c.winners) expected += sizes[id];
    CHECK(c.samples == expected);
    CHECK(c.winners ==
          select_clients(cfg.clients, cfg.client_fraction, c.round, cfg.seed));
  }
}

TEST_CASE("a straggler past the timeout is dropped but the round closes") {
  ExperimentConfig cfg = base_cfg(3, 3);
  cfg.partition.scheme = PartitionScheme::kIid;  // every test split non-empty
  cfg.hooks.cost_shutdown = false;
  CostConfig cost;
  cost.price_per_sec = {0.0, 0.0, 0.0};
  cost.base_round_sec = {1.0, 1.0, 100.0};  // client 2 is the straggler
  cfg.cost = cost;
  cfg.timing.round_timeout_sec = 10.0;
  cfg.timing.quorum = 2;

  const RunResult run = run_simulation(cfg);
  for (uint64_t r = 0; r < 3; ++r) {
    CHECK(find_metric(run.metrics, "server", r, "straggler_dropped") == 1.0);
    CHECK(find_metric(run.metrics, "server", r, "round_duration") == 1.0);
    // The dropped update never reaches the server store, so neither do the
    // straggler's staged metrics.
    CHECK(find_metric(run.metrics, "2", r, "test_acc") == std::nullopt);
    CHECK(find_metric(run.metrics, "0", r, "test_acc").has_value());
    CHECK(find_metric(run.metrics, "1", r, "test_acc").has_value());
  }
}

TEST_CASE("an unmeetable quorum fails the run after one reselection") {
  ExperimentConfig cfg = base_cfg(3, 2);
  cfg.hooks.cost_shutdown = false;
  CostConfig cost;
  cost.price_per_sec = {0.0, 0.0, 0.0};
  cost.base_round_sec = {1.0, 20.0, 20.0};  // only one client inside timeout
  cfg.cost = cost;
  cfg.timing.round_timeout_sec = 10.0;
  cfg.timing.quorum = 2;

  try {
    run_simulation(cfg);
    FAIL("expected RunError");
  } catch (const RunError& e) {
    CHECK(e.exit_code() == 2);
    CHECK(std::string(e.what()).find("quorum") != std::string::npos);
  }
}

TEST_CASE("cost shutdown: instance ledger matches the hand-computed bill") {
  // Speeds {1,1,1,10}, spin-up 2, threshold 5, unit price, 10 rounds.
  // Fast clients: idle = (start+10) - (start+1) - 2 = 7 > 5, so they
  // terminate every round once the ETA exists (round 1 on). Bill per fast
  // client: up 0..11 = 11, then 8 rounds of spin(2) + work(1) = 24 -> 35.
  // The slow client stays up for all 100 seconds.
  ExperimentConfig cfg = base_cfg(4, 10);
  cfg.hooks.eval_local = false;
  CostConfig cost;
  cost.price_per_sec = {1.0, 1.0, 1.0, 1.0};
  cost.base_round_sec = {1.0, 1.0, 1.0, 10.0};
  cost.spin_up_time_sec = 2.0;
  cost.shutdown_threshold_sec = 5.0;
  cfg.cost = cost;

  const RunResult with_shutdown = run_simulation(cfg);
  for (uint64_t fast : {0, 1, 2}) {
    const std::string scope = std::to_string(fast);
    CHECK(find_metric(with_shutdown.metrics, scope, 10, "cost_total") == 35.0);
    CHECK(find_metric(with_shutdown.metrics, scope, 0, "terminated") ==
          std::nullopt);
    for (uint64_t r = 1; r < 10; ++r) {
      CHECK(find_metric(with_shutdown.metrics, scope, r, "terminated") == 1.0);
    }
  }
  CHECK(find_metric(with_shutdown.metrics, "3", 10, "cost_total") == 100.0);
  CHECK(count_metric(with_shutdown.metrics, "terminated") == 27);

  cfg.hooks.cost_shutdown = false;
  const RunResult baseline = run_simulation(cfg);
  for (uint64_t id : {0, 1, 2, 3}) {
    CHECK(find_metric(baseline.metrics, std::to_string(id), 10,
                      "cost_total") == 100.0);
  }
  CHECK(count_metric(baseline.metrics, "terminated") == 0);

  // Shutting instances down is free, model-wise.
  CHECK(with_shutdown.model.values == baseline.model.values);
}

TEST_CASE("async budget performs exactly that many applications") {
  ExperimentConfig cfg = base_cfg(3, 1);
  cfg.aggregator = Aggregator::kAsync;
  cfg.async_budget = 7;
  cfg.async_alpha = 0.5;
  cfg.staleness_exponent = 0.5;
  cfg.hooks.eval_local = false;
  cfg.hooks.cost_shutdown = false;
  CostConfig cost;  // heterogeneous durations so updates interleave stale
  cost.price_per_sec = {0.0, 0.0, 0.0};
  cost.base_round_sec = {1.0, 2.0, 5.0};
  cfg.cost = cost;

  const RunResult first = run_simulation(cfg);
  CHECK(first.final_round == 7);
  CHECK(count_metric(first.metrics, "global_acc") == 7);

  const RunResult second = run_simulation(cfg);
  CHECK(second.model.values == first.model.values);  // schedule is pinned
}

TEST_CASE("async with uniform zero durations degrades to round-robin") {
  ExperimentConfig cfg = base_cfg(2, 1);
  cfg.aggregator = Aggregator::kAsync;
  cfg.async_budget = 4;
  cfg.hooks.eval_local = false;

  std::vector<uint64_t> appliers;
  ServerAgent* probe = nullptr;
  SimOptions opts;
  opts.probe = [&](ServerAgent& agent) { probe = &agent; };
  opts.extra_hooks = [&](HookRegistry& server_hooks, HookRegistry&) {
    server_hooks.register_hook(
        HookEvent::kAfterAggregation, [&](ServerContext&, ClientContext*) {
          appliers.push_back(probe->last_round_winners().at(0));
        });
  };
  run_simulation(cfg, opts);
  CHECK(appliers == std::vector<uint64_t>{0, 1, 0, 1});
}

TEST_CASE("secagg aggregation tracks plain averaging within fixed point") {
  ExperimentConfig cfg = base_cfg(4, 5);
  const RunResult plain = run_simulation(cfg);

  cfg.secagg.enabled = true;
  const RunResult masked = run_simulation(cfg);

  REQUIRE(masked.model.dim() == plain.model.dim());
  double max_err = 0.0;
  for (size_t i = 0; i < plain.model.dim(); ++i) {
    max_err = std::max(max_err, std::abs(masked.model[i] - plain.model[i]));
  }
  CHECK(max_err <= 1e-4);
  CHECK(max_err > 0.0);  // rounding is real, not a bypassed code path
}

TEST_CASE("secagg cannot survive a quorum that trims the cohort") {
  ExperimentConfig cfg = base_cfg(3, 2);
  cfg.secagg.enabled = true;
  cfg.timing.quorum = 2;  // close with 2 of 3 mask sets: sums cannot cancel

  try {
    run_simulation(cfg);
    FAIL("expected RunError");
  } catch (const RunError& e) {
    CHECK(e.exit_code() == 3);
    CHECK(std::string(e.what()).find("dropout") != std::string::npos);
  }
}

TEST_CASE("registration is idempotent and gated") {
  ExperimentConfig cfg = base_cfg(2, 1);
  cfg.comm.auth_token = "s3cret";
  SimClock clock;
  ServerAgent agent(cfg, &clock);

  SUBCASE("bad token is refused") {
    const Message reply =
        agent.handle_register(RegisterMsg{"wrong", "client-0"});
    REQUIRE(std::holds_alternative<ErrorMsg>(reply));
    CHECK(std::get<ErrorMsg>(reply).code == kErrAuth);
  }

  SUBCASE("same name keeps its id; extras are refused once full") {
    auto ack0 = agent.handle_register(RegisterMsg{"s3cret", "a"});
    auto ack0_again = agent.handle_register(RegisterMsg{"s3cret", "a"});
    CHECK(std::get<RegisterAckMsg>(ack0).client_id == 0);
    CHECK(std::get<RegisterAckMsg>(ack0_again).client_id == 0);

    // Still registering: polls hold.
    CHECK(agent.poll_model(GetModelMsg{0}) == std::nullopt);

    auto ack1 = agent.handle_register(RegisterMsg{"s3cret", "b"});
    CHECK(std::get<RegisterAckMsg>(ack1).client_id == 1);

    // Roster complete: round 0 is open, models are served.
    auto served = agent.poll_model(GetModelMsg{0});
    REQUIRE(served.has_value());
    CHECK(std::holds_alternative<ModelMsg>(*served));

    auto refused = agent.handle_register(RegisterMsg{"s3cret", "c"});
    REQUIRE(std::holds_alternative<ErrorMsg>(refused));
    CHECK(std::get<ErrorMsg>(refused).code == kErrProtocol);

    // Reconnect of a known name stays fine after the gate closed.
    auto back = agent.handle_register(RegisterMsg{"s3cret", "b"});
    CHECK(std::get<RegisterAckMsg>(back).client_id == 1);

    CHECK(std::holds_alternative<ErrorMsg>(
        *agent.poll_model(GetModelMsg{7})));  // unknown id
  }
}

TEST_CASE("duplicate and stale updates are acknowledged and ignored") {
  ExperimentConfig cfg = base_cfg(2, 2);
  SimClock clock;
  ServerAgent agent(cfg, &clock);
  HookRegistry client_hooks;
  register_builtin_hooks(cfg, agent.hooks(), client_hooks);

  ClientAgent c0(cfg, "client-0", &client_hooks);
  ClientAgent c1(cfg, "client-1", &client_hooks);
  c0.adopt_identity(std::get<RegisterAckMsg>(
                        agent.handle_register(RegisterMsg{"", "client-0"}))
                        .client_id);
  c1.adopt_identity(std::get<RegisterAckMsg>(
                        agent.handle_register(RegisterMsg{"", "client-1"}))
                        .client_id);

  auto model0 = std::get<ModelMsg>(*agent.poll_model(GetModelMsg{0}));
  UpdateMsg u0 = c0.round_once(model0);
  CHECK(std::holds_alternative<AckMsg>(agent.handle_update(u0)));
  CHECK(std::holds_alternative<AckMsg>(agent.handle_update(u0)));  // resend

  // Round still open (client 1 pending); client 0 saw its model consumed.
  CHECK(agent.round() == 0);
  auto model1 = std::get<ModelMsg>(*agent.poll_model(GetModelMsg{1}));
  UpdateMsg u1 = c1.round_once(model1);
  CHECK(std::holds_alternative<AckMsg>(agent.handle_update(u1)));
  CHECK(agent.round() == 1);  // the duplicate did not double-count

  // A resend of the round-0 update during round 1 is stale: ack + ignore.
  CHECK(std::holds_alternative<AckMsg>(agent.handle_update(u0)));
  CHECK(agent.round() == 1);
}

TEST_CASE("zero rounds finish instantly with the initial model") {
  ExperimentConfig cfg = base_cfg(2, 0);
  const RunResult run = run_simulation(cfg);
  CHECK(run.final_round == 0);
  CHECK(run.metrics.empty());

  const Task task = Task::from_config(cfg.task);
  const ParameterVector init =
      init_params(task, rng::derive(cfg.seed, rng::Domain::kInit));
  CHECK(run.model.values == init.values);
}

TEST_CASE("dp noise is seeded: reproducible, and actually applied") {
  ExperimentConfig cfg = base_cfg(3, 2);
  cfg.dp.enabled = true;
  cfg.dp.clip = 1.0;
  cfg.dp.epsilon = 2.0;
  cfg.dp.delta = 1e-5;

  const RunResult a = run_simulation(cfg);
  const RunResult b = run_simulation(cfg);
  CHECK(a.model.values == b.model.values);

  cfg.dp.enabled = false;
  const RunResult clean = run_simulation(cfg);
  CHECK(a.model.values != clean.model.values);
  CHECK(a.model.dim() == clean.model.dim());
}

TEST_SUITE_END();
