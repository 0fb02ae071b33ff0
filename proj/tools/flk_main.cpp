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

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flk/channel.hpp"
#include "flk/config.hpp"
#include "flk/log.hpp"
#include "flk/message.hpp"
#include "flk/metrics.hpp"
#include "flk/orchestrator.hpp"
#include "flk/partition.hpp"

namespace {

// Exit codes: 0 success, 1 config error, 2 runtime error, 3 protocol or
// auth error.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitProtocol = 3;

int cmd_simulate(const std::string& config_path, unsigned parallel,
                 const std::string& out_dir) {
  flk::ExperimentConfig cfg = flk::load_config_file(config_path);
  flk::SimOptions opts;
  opts.parallel = parallel;
  opts.out_dir = out_dir;
  flk::RunResult result = flk::run_simulation(cfg, opts);
  std::printf("completed %llu rounds, %zu metric records, model dim %zu\n",
              static_cast<unsigned long long>(result.final_round),
              result.metrics.size(), result.model.dim());
  return kExitOk;
}

int cmd_server(const std::string& config_path, const std::string& out_dir) {
  flk::ExperimentConfig cfg = flk::load_config_file(config_path);
  flk::RunResult result = flk::run_server(cfg, out_dir);
  std::printf("completed %llu rounds, model dim %zu\n",
              static_cast<unsigned long long>(result.final_round),
              result.model.dim());
  return kExitOk;
}

int cmd_client(const std::string& config_path, uint32_t client_id) {
  flk::ExperimentConfig cfg = flk::load_config_file(config_path);
  flk::run_client(cfg, client_id);
  std::printf("client-%u done\n", client_id);
  return kExitOk;
}

int cmd_partition(const std::string& config_path, const std::string& out_dir) {
  flk::ExperimentConfig cfg = flk::load_config_file(config_path);
  const flk::Dataset full = flk::build_full_dataset(cfg);
  const flk::PartitionPlan plan = flk::build_partition(cfg, full);
  std::filesystem::create_directories(out_dir);
  for (uint32_t k = 0; k < cfg.clients; ++k) {
    const flk::Dataset shard = full.select(plan.client_indices[k]);
    const std::string path =
        out_dir + "/client-" + std::to_string(k) + ".flds";
    flk::write_flds(path, shard);
    std::printf("%s: %llu samples\n", path.c_str(),
                static_cast<unsigned long long>(shard.n));
  }
  return kExitOk;
}

int cmd_inspect(const std::string& metrics_path, bool summary) {
  const std::vector<flk::MetricRecord> records =
      flk::read_metrics(metrics_path);
  if (!summary) {
    for (const auto& r : records) {
      if (const auto* sim = std::get_if<double>(&r.ts)) {
        std::printf("%.6g\t%llu\t%s\t%s\t%.17g\n", *sim,
                    static_cast<unsigned long long>(r.round), r.scope.c_str(),
                    r.name.c_str(), r.value);
      } else {
        std::printf("%s\t%llu\t%s\t%s\t%.17g\n",
                    std::get<std::string>(r.ts).c_str(),
                    static_cast<unsigned long long>(r.round), r.scope.c_str(),
                    r.name.c_str(), r.value);
      }
    }
    return kExitOk;
  }

  bool have_acc = false;
  uint64_t acc_round = 0;
  double acc_value = 0.0;
  std::map<uint64_t, std::pair<double, uint64_t>> test_acc;  // id -> (sum, n)
  for (const auto& r : records) {
    if (r.scope == "server" && r.name == "global_acc" &&
        (!have_acc || r.round >= acc_round)) {
      have_acc = true;
      acc_round = r.round;
      acc_value = r.value;
    }
    if (r.scope != "server" && r.name == "test_acc") {
      auto& slot = test_acc[std::stoull(r.scope)];
      slot.first += r.value;
      slot.second += 1;
    }
  }
  if (have_acc) {
    std::printf("server global_acc (round %llu): %.6f\n",
                static_cast<unsigned long long>(acc_round), acc_value);
  } else {
    std::printf("server global_acc: none recorded\n");
  }
  for (const auto& [id, slot] : test_acc) {
    std::printf("client %llu mean test_acc: %.6f\n",
                static_cast<unsigned long long>(id),
                slot.first / static_cast<double>(slot.second));
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated learning orchestration kernel"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::string metrics_path;
  unsigned parallel = 0;
  uint32_t client_id = 0;
  bool summary = false;

  auto* simulate =
      app.add_subcommand("simulate", "run a full federation in one process");
  simulate->add_option("--config", config_path, "experiment config JSON")
      ->required();
  simulate->add_option("--parallel", parallel,
                       "virtual client threads (0 = serial)");
  simulate->add_option("--out", out_dir, "artifact directory (default .)");

  auto* server =
      app.add_subcommand("server", "host a federation over TCP");
  server->add_option("--config", config_path, "experiment config JSON")
      ->required();
  server->add_option("--out", out_dir, "artifact directory (default .)");

  auto* client = app.add_subcommand("client", "join a federation over TCP");
  client->add_option("--config", config_path, "experiment config JSON")
      ->required();
  client->add_option("--client-id", client_id, "participant index")
      ->required();

  auto* partition = app.add_subcommand(
      "partition", "export per-client dataset shards as .flds files");
  partition->add_option("--config", config_path, "experiment config JSON")
      ->required();
  partition->add_option("--out", out_dir, "output directory")->required();

  auto* inspect = app.add_subcommand("inspect", "read a metrics file");
  inspect->add_option("--metrics", metrics_path, "metrics JSONL file")
      ->required();
  inspect->add_flag("--summary", summary,
                    "print final server accuracy and per-client mean test_acc");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(config_path, parallel, out_dir);
    if (server->parsed()) return cmd_server(config_path, out_dir);
    if (client->parsed()) return cmd_client(config_path, client_id);
    if (partition->parsed()) return cmd_partition(config_path, out_dir);
    if (inspect->parsed()) return cmd_inspect(metrics_path, summary);
  } catch (const flk::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const flk::ConfigMismatchError& e) {
    std::fprintf(stderr, "config mismatch: %s\n", e.what());
    return kExitProtocol;
  } catch (const flk::RemoteError& e) {
    std::fprintf(stderr, "rejected by server: %s\n", e.what());
    return kExitProtocol;
  } catch (const flk::DecodeError& e) {
    std::fprintf(stderr, "protocol error: %s\n", e.what());
    return kExitProtocol;
  } catch (const flk::RunError& e) {
    std::fprintf(stderr, "run failed: %s\n", e.what());
    return e.exit_code();
  } catch (const flk::TransportError& e) {
    std::fprintf(stderr, "transport error: %s\n", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitOk;
}
