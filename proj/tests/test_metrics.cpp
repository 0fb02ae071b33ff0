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

#include <cstdio>
#include <fstream>
#include <regex>
#include <string>

#include <json.hpp>

#include "flk/metrics.hpp"

using namespace flk;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name)
      : path("/tmp/flk_test_" + name + "_" + std::to_string(getpid())) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("store reads are explicit about absence") {
  MetricsStore store;
  CHECK(!store.get("server", 0, "loss").has_value());
  store.put("server", 0, "loss", 0.5);
  CHECK(store.get("server", 0, "loss") == 0.5);
  CHECK(!store.get("server", 1, "loss").has_value());
  CHECK(!store.get("server", 0, "acc").has_value());
  store.put_client(3, 2, "test_acc", 0.9);
  CHECK(store.get_client(3, 2, "test_acc") == 0.9);
  CHECK(store.get("3", 2, "test_acc") == 0.9);
}

TEST_CASE("overwrites keep one journal entry per key") {
  MetricsStore store;
  store.put("server", 0, "x", 1.0);
  store.put("server", 0, "x", 2.0);
  CHECK(store.size() == 1);
  CHECK(store.get("server", 0, "x") == 2.0);
  // After a drain the key is frozen in the file; a new write appends.
  store.drain_new();
  store.put("server", 0, "x", 3.0);
  CHECK(store.size() == 2);
  CHECK(store.get("server", 0, "x") == 3.0);
}

TEST_CASE("add accumulates from an implicit zero") {
  MetricsStore store;
  store.add("server", 4, "hook_error_count", 1.0);
  store.add("server", 4, "hook_error_count", 1.0);
  CHECK(store.get("server", 4, "hook_error_count") == 2.0);
}

TEST_CASE("drain sorts by round, then server before numeric clients") {
  MetricsStore store;
  store.put("10", 1, "a", 1.0);
  store.put("2", 1, "a", 2.0);
  store.put("server", 1, "z", 3.0);
  store.put("server", 0, "late", 4.0);
  store.put("2", 1, "b", 5.0);
  auto batch = store.drain_new();
  REQUIRE(batch.size() == 5);
  CHECK(batch[0].name == "late");
  CHECK(batch[1].scope == "server");
  CHECK(batch[2].scope == "2");
  CHECK(batch[2].name == "a");
  CHECK(batch[3].scope == "2");
  CHECK(batch[3].name == "b");
  CHECK(batch[4].scope == "10");
  CHECK(store.drain_new().empty());
  store.put("server", 2, "a", 6.0);
  auto next = store.drain_new();
  REQUIRE(next.size() == 1);
  CHECK(next[0].value == 6.0);
}

TEST_CASE("writer emits five-field JSONL with simulated timestamps") {
  TempFile tmp("metrics_sim");
  SimClock clock;
  clock.set(12.5);
  {
    MetricsWriter writer(tmp.path, &clock);
    MetricsStore store;
    store.put("server", 0, "global_acc", 0.75);
    store.put_client(1, 0, "test_loss", 0.4);
    writer.write_all(store.drain_new());
    writer.flush();
  }
  std::ifstream in(tmp.path);
  std::string line;
  size_t lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    nlohmann::json j = nlohmann::json::parse(line);
    CHECK(j.is_object());
    CHECK(j.size() == 5);
    CHECK(j["ts"] == 12.5);
  }
  CHECK(lines == 2);

  auto records = read_metrics(tmp.path);
  REQUIRE(records.size() == 2);
  CHECK(records[0].scope == "server");
  CHECK(records[0].name == "global_acc");
  CHECK(records[0].value == 0.75);
  CHECK(std::get<double>(records[0].ts) == 12.5);
  CHECK(records[1].scope == "1");
}

TEST_CASE("wall-clock timestamps are ISO-8601 UTC strings") {
  TempFile tmp("metrics_wall");
  WallClock clock;
  {
    MetricsWriter writer(tmp.path, &clock);
    writer.write(MetricsStore::Entry{"server", 3, "round_duration", 1.5});
    writer.flush();
  }
  auto records = read_metrics(tmp.path);
  REQUIRE(records.size() == 1);
  const std::string ts = std::get<std::string>(records[0].ts);
  std::regex iso(R"(^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$)");
  CHECK(std::regex_match(ts, iso));
  CHECK(records[0].round == 3);
}

TEST_CASE("reader rejects malformed lines") {
  TempFile tmp("metrics_bad");
  {
    std::ofstream out(tmp.path);
    out << "not json\n";
  }
  CHECK_THROWS_AS(read_metrics(tmp.path), std::runtime_error);
  {
    std::ofstream out(tmp.path);
    out << R"({"ts":1,"round":0,"scope":"server","name":"x"})" << "\n";
  }
  CHECK_THROWS_AS(read_metrics(tmp.path), std::runtime_error);
  {
    std::ofstream out(tmp.path);
    out << R"({"ts":1,"round":0,"scope":"server","name":"x","value":1,"extra":2})"
        << "\n";
  }
  CHECK_THROWS_AS(read_metrics(tmp.path), std::runtime_error);
  CHECK_THROWS_AS(read_metrics("/nonexistent/flk.jsonl"), std::runtime_error);
}

TEST_SUITE_END();
