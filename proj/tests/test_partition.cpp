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

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>

#include "flk/partition.hpp"
#include "flk/rng.hpp"

using namespace flk;

namespace {

// Disjoint cover: every index lands on exactly one client.
void check_disjoint_cover(const PartitionPlan& plan, uint64_t n) {
  std::set<uint64_t> seen;
  uint64_t total = 0;
  for (const auto& idx : plan.client_indices) {
    CHECK(!idx.empty());
    for (uint64_t i : idx) {
      CHECK(i < n);
      seen.insert(i);
      ++total;
    }
  }
  CHECK(total == n);
  CHECK(seen.size() == n);
}

std::vector<double> label_histogram(const Dataset& data,
                                    const std::vector<uint64_t>& idx) {
  std::vector<double> h(data.k, 0.0);
  for (uint64_t i : idx) h[data.labels[i]] += 1.0;
  for (double& v : h) v /= static_cast<double>(idx.size());
  return h;
}

}  // namespace

TEST_SUITE_BEGIN("partition");

TEST_CASE("make_blobs single class labels everything zero") {
  Dataset d = make_blobs(20, 1, 3, 4.0, 11);
  CHECK(d.n == 20);
  for (uint32_t label : d.labels) CHECK(label == 0);
}

TEST_CASE("make_blobs is deterministic in the seed") {
  Dataset a = make_blobs(50, 2, 4, 4.0, 7);
  Dataset b = make_blobs(50, 2, 4, 4.0, 7);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);
  Dataset c = make_blobs(50, 2, 4, 4.0, 8);
  CHECK(a.features != c.features);
}

TEST_CASE("make_blobs class means sit near their centers") {
  // seed=7, k=2, d=2, 250 per class; sample mean of each class within 0.2
  // of its center (unit variance, n=250 per class).
  Dataset d = make_blobs(250, 2, 2, 4.0, 7);
  for (uint64_t c = 0; c < 2; ++c) {
    double mean0 = 0.0;
    double mean1 = 0.0;
    uint64_t count = 0;
    for (uint64_t i = 0; i < d.n; ++i) {
      if (d.labels[i] != c) continue;
      mean0 += d.row(i)[0];
      mean1 += d.row(i)[1];
      ++count;
    }
    mean0 /= static_cast<double>(count);
    mean1 /= static_cast<double>(count);
    const double c0 = (c == 0) ? 4.0 : 0.0;
    const double c1 = (c == 1) ? 4.0 : 0.0;
    CHECK(std::abs(mean0 - c0) < 0.2);
    CHECK(std::abs(mean1 - c1) < 0.2);
  }
}

TEST_CASE("single client gets every index") {
  Dataset d = make_blobs(10, 2, 2, 4.0, 3);
  PartitionConfig cfg;
  PartitionPlan plan = partition(d, 1, cfg, 5);
  REQUIRE(plan.client_indices.size() == 1);
  CHECK(plan.client_indices[0].size() == d.n);
  check_disjoint_cover(plan, d.n);
}

TEST_CASE("more clients than samples is an error") {
  Dataset d = make_blobs(2, 2, 2, 4.0, 3);  // n = 4
  PartitionConfig cfg;
  CHECK_THROWS_AS(partition(d, 5, cfg, 5), ConfigError);
}

TEST_CASE("shard grid larger than the dataset is an error") {
  Dataset d = make_blobs(3, 2, 2, 4.0, 3);  // n = 6
  PartitionConfig cfg;
  cfg.scheme = PartitionScheme::kShards;
  cfg.shards_per_client = 4;
  CHECK_THROWS_AS(partition(d, 2, cfg, 5), ConfigError);
}

TEST_CASE("two balanced classes with one shard each give single-class clients") {
  Dataset d = make_blobs(5, 2, 2, 4.0, 9);  // 5 of class 0, 5 of class 1
  PartitionConfig cfg;
  cfg.scheme = PartitionScheme::kShards;
  cfg.shards_per_client = 1;
  PartitionPlan plan = partition(d, 2, cfg, 17);
  check_disjoint_cover(plan, d.n);
  for (const auto& idx : plan.client_indices) {
    CHECK(idx.size() == 5);
    std::set<uint32_t> labels;
    for (uint64_t i : idx) labels.insert(d.labels[i]);
    CHECK(labels.size() == 1);
  }
}

TEST_CASE("huge dirichlet alpha approaches uniform sizes") {
  Dataset d = make_blobs(1000, 2, 2, 4.0, 21);  // n = 2000
  PartitionConfig cfg;
  cfg.scheme = PartitionScheme::kDirichlet;
  cfg.dirichlet_alpha = 1000.0;
  PartitionPlan plan = partition(d, 4, cfg, 33);
  check_disjoint_cover(plan, d.n);
  for (const auto& idx : plan.client_indices) {
    CHECK(idx.size() > 450);  // within 10% of 500
    CHECK(idx.size() < 550);
  }
}

TEST_CASE("smaller alpha means more skew") {
  Dataset d = make_blobs(200, 4, 3, 4.0, 2);
  auto mean_tv = [&](double alpha) {
    PartitionConfig cfg;
    cfg.scheme = PartitionScheme::kDirichlet;
    cfg.dirichlet_alpha = alpha;
    double acc = 0.0;
    int runs = 0;
    std::vector<double> pooled = {0.25, 0.25, 0.25, 0.25};
    for (uint64_t seed = 0; seed < 20; ++seed) {
      PartitionPlan plan = partition(d, 5, cfg, seed);
      for (const auto& idx : plan.client_indices) {
        std::vector<double> h = label_histogram(d, idx);
        double tv = 0.0;
        for (size_t c = 0; c < 4; ++c) tv += std::abs(h[c] - pooled[c]);
        acc += 0.5 * tv;
        ++runs;
      }
    }
    return acc / runs;
  };
  CHECK(mean_tv(0.1) > mean_tv(10.0));
}

TEST_CASE("partitions are deterministic in the seed") {
  Dataset d = make_blobs(100, 3, 2, 4.0, 5);
  for (PartitionScheme scheme :
       {PartitionScheme::kIid, PartitionScheme::kDirichlet,
        PartitionScheme::kShards}) {
    PartitionConfig cfg;
    cfg.scheme = scheme;
    PartitionPlan a = partition(d, 4, cfg, 77);
    PartitionPlan b = partition(d, 4, cfg, 77);
    CHECK(a.client_indices == b.client_indices);
  }
}

TEST_CASE("disjoint cover holds across schemes and shapes") {
  rng::Engine rng(123);
  for (int trial = 0; trial < 30; ++trial) {
    const uint64_t n_per_class = 5 + rng.below(40);
    const uint64_t k = 1 + rng.below(4);
    const uint32_t m = static_cast<uint32_t>(1 + rng.below(6));
    Dataset d = make_blobs(n_per_class, k, 2, 4.0, rng.next());
    if (m > d.n) continue;
    for (PartitionScheme scheme :
         {PartitionScheme::kIid, PartitionScheme::kDirichlet,
          PartitionScheme::kShards}) {
      PartitionConfig cfg;
      cfg.scheme = scheme;
      cfg.dirichlet_alpha = 0.1;
      cfg.shards_per_client = 2;
      if (scheme == PartitionScheme::kShards &&
          uint64_t{m} * cfg.shards_per_client > d.n) {
        continue;
      }
      PartitionPlan plan = partition(d, m, cfg, rng.next());
      check_disjoint_cover(plan, d.n);
    }
  }
}

TEST_CASE("tiny alpha with many clients still leaves nobody empty") {
  Dataset d = make_blobs(10, 2, 2, 4.0, 4);  // n = 20
  PartitionConfig cfg;
  cfg.scheme = PartitionScheme::kDirichlet;
  cfg.dirichlet_alpha = 0.01;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    PartitionPlan plan = partition(d, 10, cfg, seed);
    check_disjoint_cover(plan, d.n);
  }
}

TEST_CASE("flds files round-trip") {
  Dataset d = make_blobs(6, 2, 3, 4.0, 13);
  const std::string path = "/tmp/flk_test_roundtrip.flds";
  write_flds(path, d);
  Dataset r = read_flds(path);
  CHECK(r.n == d.n);
  CHECK(r.d == d.d);
  CHECK(r.k == d.k);
  CHECK(r.features == d.features);
  CHECK(r.labels == d.labels);
  std::remove(path.c_str());
}

TEST_CASE("flds header layout is stable") {
  Dataset d;
  d.n = 1;
  d.d = 1;
  d.k = 1;
  d.features = {0.0};
  d.labels = {0};
  const std::string path = "/tmp/flk_test_header.flds";
  write_flds(path, d);
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  // "FLDS" + u32 version + 3 x u64 + one f64 row + one u32 label.
  REQUIRE(bytes.size() == 4 + 4 + 24 + 8 + 4);
  CHECK(bytes[0] == 'F');
  CHECK(bytes[1] == 'L');
  CHECK(bytes[2] == 'D');
  CHECK(bytes[3] == 'S');
  CHECK(bytes[4] == 1);  // version u32 LE
  CHECK(bytes[5] == 0);
  CHECK(bytes[8] == 1);  // n u64 LE
  std::remove(path.c_str());
}

TEST_CASE("client materialization splits 80/20 and is round-stable") {
  ExperimentConfig cfg = parse_config(
      R"({"clients": 4, "task": {"n_per_class": 100, "n_classes": 2,
          "feature_dim": 3}})");
  Dataset full = build_full_dataset(cfg);
  PartitionPlan plan = build_partition(cfg, full);
  for (uint32_t c = 0; c < 4; ++c) {
    ClientData a = materialize_client(cfg, full, plan, c);
    ClientData b = materialize_client(cfg, full, plan, c);
    CHECK(a.train.features == b.train.features);
    CHECK(a.test.features == b.test.features);
    const size_t shard = plan.client_indices[c].size();
    CHECK(a.test.n == shard / 5);
    CHECK(a.train.n == shard - shard / 5);
    CHECK(a.train.n + a.test.n == shard);
  }
}

TEST_CASE("one-sample shard trains on the sample and has no test half") {
  ExperimentConfig cfg = parse_config(
      R"({"clients": 2, "task": {"n_per_class": 1, "n_classes": 2,
          "feature_dim": 2}})");
  Dataset full = build_full_dataset(cfg);
  PartitionPlan plan = build_partition(cfg, full);
  ClientData c0 = materialize_client(cfg, full, plan, 0);
  CHECK(c0.train.n == 1);
  CHECK(c0.test.n == 0);
}

TEST_SUITE_END();
