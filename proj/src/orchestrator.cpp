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

#include "flk/orchestrator.hpp"

#include <atomic>
#include <bit>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <thread>
#include <tuple>

#include "flk/channel.hpp"
#include "flk/client.hpp"
#include "flk/clock.hpp"
#include "flk/log.hpp"
#include "flk/wire.hpp"

namespace flk {
namespace {

constexpr char kModelMagic[4] = {'F', 'L', 'M', 'D'};
constexpr uint32_t kModelVersion = 1;

void put_u32le(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_u64le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

uint32_t get_u32le(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(p[i]) << (8 * i);
  return v;
}

uint64_t get_u64le(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
  return v;
}

int failure_exit_code(const ServerAgent& agent) {
  return agent.failure_code() == kErrSecaggDropout ? 3 : 2;
}

std::string client_name(uint32_t index) {
  return "client-" + std::to_string(index);
}

// Register all M participants and hand each the id the server assigned.
std::vector<std::unique_ptr<ClientAgent>> register_serial_clients(
    const ExperimentConfig& cfg, ServerAgent& agent,
    const HookRegistry& client_hooks) {
  std::vector<std::unique_ptr<ClientAgent>> clients;
  clients.reserve(cfg.clients);
  for (uint32_t k = 0; k < cfg.clients; ++k) {
    auto c = std::make_unique<ClientAgent>(cfg, client_name(k), &client_hooks);
    Message ack =
        agent.handle_register(RegisterMsg{cfg.comm.auth_token, c->name()});
    if (const auto* err = std::get_if<ErrorMsg>(&ack)) {
      throw RunError(2, "registration rejected: " + err->text);
    }
    c->adopt_identity(std::get<RegisterAckMsg>(ack).client_id);
    clients.push_back(std::move(c));
  }
  return clients;
}

void drive_serial(const ExperimentConfig& cfg, ServerAgent& agent,
                  const HookRegistry& client_hooks, SimClock& clock,
                  const std::function<void()>& drain) {
  auto clients = register_serial_clients(cfg, agent, client_hooks);
  drain();

  if (cfg.aggregator == Aggregator::kAsync) {
    // Discrete events per client: a fetch at time t, then the matching
    // submit at t + duration. Other clients' submits land in between, which
    // is where staleness comes from. Events are ordered by (time,
    // participations, id); the participation count turns zero-duration ties
    // into a round-robin, keeping the schedule well defined.
    struct Slot {
      double t = 0.0;
      uint64_t done = 0;
      std::optional<ModelMsg> pending;
    };
    const uint32_t m = cfg.clients;
    std::vector<Slot> slots(m);
    std::vector<double> work(m, 0.0);
    for (uint32_t k = 0; k < m; ++k) work[k] = sim_work_sec(cfg, k);

    while (!agent.finished() && !agent.failed()) {
      uint32_t pick = 0;
      for (uint32_t k = 1; k < m; ++k) {
        if (std::tie(slots[k].t, slots[k].done, k) <
            std::tie(slots[pick].t, slots[pick].done, pick)) {
          pick = k;
        }
      }
      Slot& slot = slots[pick];
      clock.set(slot.t);
      if (!slot.pending.has_value()) {
        auto served = agent.poll_model(GetModelMsg{pick});
        if (!served.has_value() ||
            !std::holds_alternative<ModelMsg>(*served)) {
          break;  // DONE or ERROR: the while condition reports it
        }
        slot.pending = std::move(std::get<ModelMsg>(*served));
        slot.t += work[pick];
      } else {
        UpdateMsg update = clients[pick]->round_once(*slot.pending);
        slot.pending.reset();
        agent.handle_update(update);
        ++slot.done;
        drain();
      }
    }
    return;
  }

  while (!agent.finished() && !agent.failed()) {
    // The round holds until every selected client has answered, so this
    // loop always runs to completion before any close/reopen transition.
    const std::vector<uint64_t> selection = agent.current_selection();
    for (uint64_t id : selection) {
      auto served = agent.poll_model(GetModelMsg{static_cast<uint32_t>(id)});
      UpdateMsg update =
          clients[id]->round_once(std::get<ModelMsg>(*served));
      agent.handle_update(update);
    }
    drain();
  }
}

void drive_parallel(const ExperimentConfig& cfg, ServerAgent& agent,
                    const HookRegistry& client_hooks, unsigned parallel,
                    const std::function<void()>& drain) {
  InprocChannel channel(&agent, cfg.comm.serialize_inproc);
  TrainGate gate(static_cast<std::ptrdiff_t>(parallel));
  const uint32_t m = cfg.clients;
  std::vector<std::exception_ptr> errors(m);
  std::atomic<uint32_t> alive{m};
  std::vector<std::thread> workers;
  workers.reserve(m);
  for (uint32_t k = 0; k < m; ++k) {
    workers.emplace_back([&, k] {
      try {
        InprocTransport transport(&channel);
        ClientAgent c(cfg, client_name(k), &client_hooks, &gate);
        c.run(transport);
      } catch (...) {
        errors[k] = std::current_exception();
      }
      alive.fetch_sub(1);
      channel.notify_all();
    });
  }

  for (;;) {
    const bool settled = channel.with_lock([&] {
      drain();
      return agent.finished() || agent.failed();
    });
    if (settled || alive.load() == 0) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  for (auto& t : workers) t.join();
  channel.with_lock([&] { drain(); });

  if (!agent.failed()) {
    // Client exceptions echo server failures; with the server healthy they
    // are real bugs and must surface.
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  if (!agent.finished() && !agent.failed()) {
    throw RunError(2, "clients exited before the experiment settled");
  }
}

}  // namespace

void write_model_file(const std::string& path, const ParameterVector& params,
                      const Sha256Digest& digest) {
  std::string buf;
  buf.reserve(16 + params.dim() * 8 + digest.size());
  buf.append(kModelMagic, sizeof(kModelMagic));
  put_u32le(buf, kModelVersion);
  put_u64le(buf, params.dim());
  for (double v : params.values) put_u64le(buf, std::bit_cast<uint64_t>(v));
  buf.append(reinterpret_cast<const char*>(digest.data()), digest.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RunError(2, "cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.flush();
  if (!out) throw RunError(2, "short write to " + path);
}

ModelFile read_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RunError(2, "cannot open " + path);
  std::vector<uint8_t> buf{std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>()};
  constexpr size_t kHeader = 4 + 4 + 8;
  constexpr size_t kDigest = 32;
  if (buf.size() < kHeader + kDigest ||
      std::memcmp(buf.data(), kModelMagic, sizeof(kModelMagic)) != 0) {
    throw RunError(2, path + " is not a model file");
  }
  if (get_u32le(buf.data() + 4) != kModelVersion) {
    throw RunError(2, path + ": unsupported model file version");
  }
  const uint64_t dim = get_u64le(buf.data() + 8);
  if (buf.size() != kHeader + dim * 8 + kDigest) {
    throw RunError(2, path + ": size does not match declared dimension");
  }
  ModelFile mf;
  mf.params = ParameterVector::zeros(dim);
  for (uint64_t i = 0; i < dim; ++i) {
    mf.params[i] =
        std::bit_cast<double>(get_u64le(buf.data() + kHeader + i * 8));
  }
  std::memcpy(mf.digest.data(), buf.data() + kHeader + dim * 8, kDigest);
  return mf;
}

void register_builtin_hooks(const ExperimentConfig& cfg,
                            HookRegistry& server_hooks,
                            HookRegistry& client_hooks) {
  server_hooks.set_strict(cfg.hooks.strict);
  client_hooks.set_strict(cfg.hooks.strict);
  if (cfg.hooks.eval_local) {
    client_hooks.register_hook(HookEvent::kAfterLocalTrain,
                               builtin_eval_local);
  }
  if (cfg.cost_model_enabled() && cfg.hooks.cost_shutdown) {
    server_hooks.register_hook(HookEvent::kBeforeClientSelection,
                               builtin_cost_shutdown_server);
    client_hooks.register_hook(HookEvent::kAfterLocalTrain,
                               builtin_cost_shutdown_client);
  }
}

RunResult run_simulation(const ExperimentConfig& cfg, const SimOptions& opts) {
  ExperimentConfig cfg_run = cfg;
  cfg_run.mode = opts.parallel > 0 ? RunMode::kSimulateParallel
                                   : RunMode::kSimulateSerial;
  SimClock clock;
  ServerAgent agent(cfg_run, &clock);
  HookRegistry client_hooks;
  register_builtin_hooks(cfg_run, agent.hooks(), client_hooks);
  if (opts.extra_hooks) opts.extra_hooks(agent.hooks(), client_hooks);
  if (opts.probe) opts.probe(agent);

  std::unique_ptr<MetricsWriter> writer;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    writer =
        std::make_unique<MetricsWriter>(opts.out_dir + "/metrics.jsonl", &clock);
  }
  RunResult result;
  auto drain = [&] {
    for (auto& e : agent.metrics().drain_new()) {
      if (writer) writer->write(e);
      result.metrics.push_back(std::move(e));
    }
    if (writer) writer->flush();
  };

  if (opts.parallel == 0) {
    drive_serial(cfg_run, agent, client_hooks, clock, drain);
    drain();
  } else {
    drive_parallel(cfg_run, agent, client_hooks, opts.parallel, drain);
  }

  if (agent.failed()) {
    throw RunError(failure_exit_code(agent), agent.failure());
  }
  result.model = agent.global_model();
  result.final_round = agent.round();
  if (!opts.out_dir.empty()) {
    write_model_file(opts.out_dir + "/model.flmd", result.model,
                     config_digest(cfg_run));
  }
  return result;
}

RunResult run_server(const ExperimentConfig& cfg, const std::string& out_dir) {
  ExperimentConfig cfg_run = cfg;
  cfg_run.mode = RunMode::kServer;
  WallClock clock;
  ServerAgent agent(cfg_run, &clock);
  HookRegistry client_side;  // client halves live in the client processes
  register_builtin_hooks(cfg_run, agent.hooks(), client_side);

  InprocChannel channel(&agent, /*serialize_frames=*/false);
  WireServer server(cfg_run.comm.host, cfg_run.comm.port, &channel);

  std::unique_ptr<MetricsWriter> writer;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    writer = std::make_unique<MetricsWriter>(out_dir + "/metrics.jsonl", &clock);
  }
  RunResult result;
  auto drain = [&] {
    for (auto& e : agent.metrics().drain_new()) {
      if (writer) writer->write(e);
      result.metrics.push_back(std::move(e));
    }
    if (writer) writer->flush();
  };

  server.start();
  for (;;) {
    channel.tick();
    const bool settled = channel.with_lock([&] {
      drain();
      return agent.finished() || agent.failed();
    });
    if (settled) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
  }
  // Grace window so connected clients can collect their DONE (or the
  // failure) before the listener goes away.
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::seconds(5);
  while (server.active_connections() > 0 &&
         std::chrono::steady_clock::now() < deadline) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  server.stop();
  channel.with_lock([&] { drain(); });

  if (agent.failed()) {
    throw RunError(failure_exit_code(agent), agent.failure());
  }
  result.model = agent.global_model();
  result.final_round = agent.round();
  if (!out_dir.empty()) {
    write_model_file(out_dir + "/model.flmd", result.model,
                     config_digest(cfg_run));
  }
  return result;
}

void run_client(const ExperimentConfig& cfg, uint32_t client_index) {
  ExperimentConfig cfg_run = cfg;
  cfg_run.mode = RunMode::kClient;
  HookRegistry server_side;  // unused here, but keeps the wiring uniform
  HookRegistry client_hooks;
  register_builtin_hooks(cfg_run, server_side, client_hooks);

  WireProxy proxy(cfg_run.comm.host, cfg_run.comm.port);
  ClientAgent agent(cfg_run, client_name(client_index), &client_hooks);
  agent.run(proxy);
}

}  // namespace flk
