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

#include "flk/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <stdexcept>

#include <json.hpp>

namespace flk {

namespace {

// "server" sorts before every client scope; clients sort numerically.
std::pair<int, uint64_t> scope_rank(const std::string& scope) {
  if (scope == "server") return {0, 0};
  uint64_t id = 0;
  for (char c : scope) {
    if (c < '0' || c > '9') return {2, 0};  // non-numeric scopes last
    id = id * 10 + uint64_t(c - '0');
  }
  return {1, id};
}

std::string iso8601_utc(double epoch_sec) {
  const std::time_t t = std::time_t(epoch_sec);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec);
  return buf;
}

}  // namespace

void MetricsStore::put(const std::string& scope, uint64_t round,
                       const std::string& name, double value) {
  const auto key = std::make_tuple(scope, round, name);
  auto it = index_.find(key);
  if (it != index_.end() && it->second >= drained_) {
    journal_[it->second].value = value;
    return;
  }
  index_[key] = journal_.size();
  journal_.push_back(Entry{scope, round, name, value});
}

void MetricsStore::put_client(uint64_t client_id, uint64_t round,
                              const std::string& name, double value) {
  put(std::to_string(client_id), round, name, value);
}

void MetricsStore::add(const std::string& scope, uint64_t round,
                       const std::string& name, double delta) {
  put(scope, round, name, get(scope, round, name).value_or(0.0) + delta);
}

std::optional<double> MetricsStore::get(const std::string& scope,
                                        uint64_t round,
                                        const std::string& name) const {
  auto it = index_.find(std::make_tuple(scope, round, name));
  if (it == index_.end()) return std::nullopt;
  return journal_[it->second].value;
}

std::optional<double> MetricsStore::get_client(uint64_t client_id,
                                               uint64_t round,
                                               const std::string& name) const {
  return get(std::to_string(client_id), round, name);
}

std::vector<MetricsStore::Entry> MetricsStore::drain_new() {
  std::vector<Entry> out(journal_.begin() + long(drained_), journal_.end());
  drained_ = journal_.size();
  std::stable_sort(out.begin(), out.end(),
                   [](const Entry& a, const Entry& b) {
                     return std::make_tuple(a.round, scope_rank(a.scope),
                                            a.name) <
                            std::make_tuple(b.round, scope_rank(b.scope),
                                            b.name);
                   });
  return out;
}

MetricsWriter::MetricsWriter(const std::string& path, const Clock* clock)
    : out_(path, std::ios::trunc), clock_(clock), path_(path) {
  if (!out_) {
    throw std::runtime_error("cannot open metrics file: " + path);
  }
}

void MetricsWriter::write(const MetricsStore::Entry& e) {
  nlohmann::json line;
  if (clock_->simulated()) {
    line["ts"] = clock_->now();
  } else {
    line["ts"] = iso8601_utc(clock_->now());
  }
  line["round"] = e.round;
  line["scope"] = e.scope;
  line["name"] = e.name;
  line["value"] = e.value;
  out_ << line.dump() << '\n';
  if (!out_) {
    throw std::runtime_error("write failed on metrics file: " + path_);
  }
}

void MetricsWriter::write_all(const std::vector<MetricsStore::Entry>& entries) {
  for (const auto& e : entries) write(e);
}

void MetricsWriter::flush() {
  out_.flush();
  if (!out_) {
    throw std::runtime_error("flush failed on metrics file: " + path_);
  }
}

std::vector<MetricRecord> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open metrics file: " + path);
  }
  std::vector<MetricRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw std::runtime_error("metrics line " + std::to_string(lineno) +
                               " is not valid JSON");
    }
    if (!j.is_object() || j.size() != 5 || !j.contains("ts") ||
        !j.contains("round") || !j.contains("scope") || !j.contains("name") ||
        !j.contains("value")) {
      throw std::runtime_error("metrics line " + std::to_string(lineno) +
                               " does not have exactly the five record fields");
    }
    MetricRecord r;
    if (j["ts"].is_string()) {
      r.ts = j["ts"].get<std::string>();
    } else if (j["ts"].is_number()) {
      r.ts = j["ts"].get<double>();
    } else {
      throw std::runtime_error("metrics line " + std::to_string(lineno) +
                               " has a non-scalar ts");
    }
    if (!j["round"].is_number_unsigned() || !j["scope"].is_string() ||
        !j["name"].is_string() || !j["value"].is_number()) {
      throw std::runtime_error("metrics line " + std::to_string(lineno) +
                               " has a mistyped field");
    }
    r.round = j["round"].get<uint64_t>();
    r.scope = j["scope"].get<std::string>();
    r.name = j["name"].get<std::string>();
    r.value = j["value"].get<double>();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace flk
