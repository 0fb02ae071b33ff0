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

#ifndef FLK_METRICS_HPP_
#define FLK_METRICS_HPP_

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "flk/clock.hpp"

namespace flk {

// One line of the metrics file. ts is simulated seconds (number) or an
// ISO-8601 UTC instant (string), depending on the run mode's clock.
struct MetricRecord {
  std::variant<double, std::string> ts;
  uint64_t round = 0;
  std::string scope;  // "server" or a decimal client id
  std::string name;
  double value = 0.0;
};

// Append/overwrite store keyed by (scope, round, name). Reads of absent
// keys are explicit nullopt, never a default. The put-order journal feeds
// the JSONL writer; overwriting an undrained entry rewrites it in place so
// each key emits one line.
class MetricsStore {
 public:
  struct Entry {
    std::string scope;
    uint64_t round = 0;
    std::string name;
    double value = 0.0;
  };

  void put(const std::string& scope, uint64_t round, const std::string& name,
           double value);
  void put_client(uint64_t client_id, uint64_t round, const std::string& name,
                  double value);
  // Read-modify-write; absent keys start at zero.
  void add(const std::string& scope, uint64_t round, const std::string& name,
           double delta);

  std::optional<double> get(const std::string& scope, uint64_t round,
                            const std::string& name) const;
  std::optional<double> get_client(uint64_t client_id, uint64_t round,
                                   const std::string& name) const;

  // Entries put since the previous drain, sorted by (round, scope, name)
  // with "server" ordered before client scopes and clients numerically.
  std::vector<Entry> drain_new();

  size_t size() const { return journal_.size(); }
  const std::vector<Entry>& journal() const { return journal_; }

 private:
  std::map<std::tuple<std::string, uint64_t, std::string>, size_t> index_;
  std::vector<Entry> journal_;
  size_t drained_ = 0;
};

// Single-owner JSONL sink. One JSON object per line with exactly the five
// MetricRecord fields; flushed by the orchestrator at least once per round.
class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, const Clock* clock);

  void write(const MetricsStore::Entry& e);
  void write_all(const std::vector<MetricsStore::Entry>& entries);
  void flush();

 private:
  std::ofstream out_;
  const Clock* clock_;
  std::string path_;
};

// Strict reader for `inspect`: every line must be a JSON object with exactly
// the five fields. Throws std::runtime_error naming the offending line.
std::vector<MetricRecord> read_metrics(const std::string& path);

}  // namespace flk

#endif  // FLK_METRICS_HPP_
