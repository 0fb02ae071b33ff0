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

#ifndef FLK_ORCHESTRATOR_HPP_
#define FLK_ORCHESTRATOR_HPP_

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flk/config.hpp"
#include "flk/hooks.hpp"
#include "flk/metrics.hpp"
#include "flk/server_agent.hpp"
#include "flk/types.hpp"

namespace flk {

// Failure that already knows its process exit code: 2 for runtime trouble,
// 3 for protocol-level failures (e.g. an unrecoverable secure-agg dropout).
class RunError : public std::runtime_error {
 public:
  RunError(int exit_code, const std::string& what)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const { return exit_code_; }

 private:
  int exit_code_;
};

// Model artifact: "FLMD", u32 version = 1, u64 dim, dim f64 LE values,
// then the 32-byte config digest of the run that produced it.
struct ModelFile {
  ParameterVector params;
  Sha256Digest digest{};
};

void write_model_file(const std::string& path, const ParameterVector& params,
                      const Sha256Digest& digest);
ModelFile read_model_file(const std::string& path);

struct SimOptions {
  // 0 = serial (clients stepped inline, ascending id); >0 = one thread per
  // client with this many concurrent training slots. Results match serial.
  unsigned parallel = 0;
  std::string out_dir;  // empty: keep artifacts in memory only

  // Test taps. extra_hooks runs after the built-ins are registered;
  // probe sees the server agent before any client registers.
  std::function<void(HookRegistry& server_hooks, HookRegistry& client_hooks)>
      extra_hooks;
  std::function<void(ServerAgent&)> probe;
};

struct RunResult {
  ParameterVector model;
  std::vector<MetricsStore::Entry> metrics;  // full journal, drain order
  uint64_t final_round = 0;
};

// Wires the config-selected built-in hooks into both registries and applies
// the strict flag. Shared by every run mode.
void register_builtin_hooks(const ExperimentConfig& cfg,
                            HookRegistry& server_hooks,
                            HookRegistry& client_hooks);

// Full in-process federation. Throws ConfigError on bad configs and
// RunError when the experiment itself fails.
RunResult run_simulation(const ExperimentConfig& cfg,
                         const SimOptions& opts = {});

// Server process: serve the wire protocol until the experiment finishes,
// then write artifacts to out_dir (when non-empty).
RunResult run_server(const ExperimentConfig& cfg, const std::string& out_dir);

// Client process: register as "client-<index>" and participate until DONE.
void run_client(const ExperimentConfig& cfg, uint32_t client_index);

}  // namespace flk

#endif  // FLK_ORCHESTRATOR_HPP_
