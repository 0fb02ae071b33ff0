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

#include "flk/partition.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "flk/rng.hpp"

namespace flk {
namespace {

// Marsaglia-Tsang gamma draw, shape alpha, scale 1. The alpha < 1 case is
// boosted from alpha + 1.
double gamma_draw(rng::Engine& rng, double alpha) {
  if (alpha < 1.0) {
    const double g = gamma_draw(rng, alpha + 1.0);
    return g * std::pow(rng.uniform01(), 1.0 / alpha);
  }
  const double d = alpha - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform01();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

// Integer counts proportional to p, summing to total (largest remainder).
std::vector<uint64_t> apportion(const std::vector<double>& p, uint64_t total) {
  const size_t m = p.size();
  std::vector<uint64_t> counts(m, 0);
  std::vector<std::pair<double, size_t>> remainders;
  remainders.reserve(m);
  uint64_t assigned = 0;
  for (size_t i = 0; i < m; ++i) {
    const double exact = p[i] * static_cast<double>(total);
    counts[i] = static_cast<uint64_t>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
  for (size_t i = 0; assigned < total; ++i, ++assigned) {
    counts[remainders[i % m].second] += 1;
  }
  return counts;
}

// Moves single indices from the largest client until nobody is empty.
void repair_empty(PartitionPlan& plan) {
  for (;;) {
    size_t empty = plan.client_indices.size();
    for (size_t i = 0; i < plan.client_indices.size(); ++i) {
      if (plan.client_indices[i].empty()) {
        empty = i;
        break;
      }
    }
    if (empty == plan.client_indices.size()) return;
    size_t largest = 0;
    for (size_t i = 1; i < plan.client_indices.size(); ++i) {
      if (plan.client_indices[i].size() >
          plan.client_indices[largest].size()) {
        largest = i;
      }
    }
    plan.client_indices[empty].push_back(
        plan.client_indices[largest].back());
    plan.client_indices[largest].pop_back();
  }
}

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

Dataset Dataset::select(const std::vector<uint64_t>& indices) const {
  Dataset out;
  out.n = indices.size();
  out.d = d;
  out.k = k;
  out.features.reserve(out.n * d);
  out.labels.reserve(out.n);
  for (uint64_t idx : indices) {
    const double* r = row(idx);
    out.features.insert(out.features.end(), r, r + d);
    out.labels.push_back(labels[idx]);
  }
  return out;
}

Dataset make_blobs(uint64_t n_per_class, uint64_t k, uint64_t d, double sep,
                   uint64_t seed) {
  Dataset data;
  data.n = n_per_class * k;
  data.d = d;
  data.k = k;
  data.features.reserve(data.n * d);
  data.labels.reserve(data.n);
  rng::Engine rng(seed);
  for (uint64_t c = 0; c < k; ++c) {
    const uint64_t center_axis = c % d;
    for (uint64_t i = 0; i < n_per_class; ++i) {
      for (uint64_t j = 0; j < d; ++j) {
        const double center = (j == center_axis) ? sep : 0.0;
        data.features.push_back(center + rng.normal());
      }
      data.labels.push_back(static_cast<uint32_t>(c));
    }
  }
  return data;
}

PartitionPlan partition(const Dataset& data, uint32_t m,
                        const PartitionConfig& cfg, uint64_t seed) {
  if (m == 0) throw ConfigError("partition: zero clients");
  if (m > data.n) {
    throw ConfigError("partition: more clients (" + std::to_string(m) +
                      ") than samples (" + std::to_string(data.n) + ")");
  }
  rng::Engine rng(seed);
  PartitionPlan plan;
  plan.client_indices.assign(m, {});

  switch (cfg.scheme) {
    case PartitionScheme::kIid: {
      std::vector<uint64_t> perm(data.n);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      for (uint64_t i = 0; i < data.n; ++i) {
        plan.client_indices[i % m].push_back(perm[i]);
      }
      break;
    }
    case PartitionScheme::kDirichlet: {
      for (uint64_t c = 0; c < data.k; ++c) {
        std::vector<double> g(m);
        double sum = 0.0;
        for (uint32_t i = 0; i < m; ++i) {
          g[i] = gamma_draw(rng, cfg.dirichlet_alpha);
          sum += g[i];
        }
        for (uint32_t i = 0; i < m; ++i) g[i] /= sum;
        std::vector<uint64_t> class_idx;
        for (uint64_t i = 0; i < data.n; ++i) {
          if (data.labels[i] == c) class_idx.push_back(i);
        }
        rng.shuffle(class_idx);
        const std::vector<uint64_t> counts = apportion(g, class_idx.size());
        size_t pos = 0;
        for (uint32_t i = 0; i < m; ++i) {
          for (uint64_t j = 0; j < counts[i]; ++j) {
            plan.client_indices[i].push_back(class_idx[pos++]);
          }
        }
      }
      break;
    }
    case PartitionScheme::kShards: {
      const uint64_t n_shards = uint64_t{m} * cfg.shards_per_client;
      if (n_shards > data.n) {
        throw ConfigError(
            "partition: clients x shards_per_client exceeds sample count");
      }
      std::vector<uint64_t> order(data.n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](uint64_t a, uint64_t b) {
                         return data.labels[a] < data.labels[b];
                       });
      // Near-equal cut: the first (n mod S) shards take one extra.
      const uint64_t base = data.n / n_shards;
      const uint64_t extra = data.n % n_shards;
      std::vector<std::pair<uint64_t, uint64_t>> shard_bounds;
      uint64_t pos = 0;
      for (uint64_t s = 0; s < n_shards; ++s) {
        const uint64_t len = base + (s < extra ? 1 : 0);
        shard_bounds.emplace_back(pos, pos + len);
        pos += len;
      }
      std::vector<uint64_t> shard_perm(n_shards);
      std::iota(shard_perm.begin(), shard_perm.end(), 0);
      rng.shuffle(shard_perm);
      for (uint32_t i = 0; i < m; ++i) {
        for (uint64_t j = 0; j < cfg.shards_per_client; ++j) {
          const auto [lo, hi] = shard_bounds[shard_perm[i * cfg.shards_per_client + j]];
          for (uint64_t p = lo; p < hi; ++p) {
            plan.client_indices[i].push_back(order[p]);
          }
        }
      }
      break;
    }
  }

  repair_empty(plan);
  return plan;
}

void write_flds(const std::string& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  out.write("FLDS", 4);
  write_raw<uint32_t>(out, 1);
  write_raw<uint64_t>(out, data.n);
  write_raw<uint64_t>(out, data.d);
  write_raw<uint64_t>(out, data.k);
  out.write(reinterpret_cast<const char*>(data.features.data()),
            static_cast<std::streamsize>(data.features.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(data.labels.data()),
            static_cast<std::streamsize>(data.labels.size() * sizeof(uint32_t)));
  if (!out) throw std::runtime_error("short write: " + path);
}

Dataset read_flds(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "FLDS", 4) != 0) {
    throw std::runtime_error("bad dataset magic: " + path);
  }
  const uint32_t version = read_raw<uint32_t>(in);
  if (version != 1) {
    throw std::runtime_error("unsupported dataset version: " + path);
  }
  Dataset data;
  data.n = read_raw<uint64_t>(in);
  data.d = read_raw<uint64_t>(in);
  data.k = read_raw<uint64_t>(in);
  data.features.resize(data.n * data.d);
  data.labels.resize(data.n);
  in.read(reinterpret_cast<char*>(data.features.data()),
          static_cast<std::streamsize>(data.features.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(data.labels.data()),
          static_cast<std::streamsize>(data.labels.size() * sizeof(uint32_t)));
  if (!in) throw std::runtime_error("truncated dataset file: " + path);
  return data;
}

Dataset build_full_dataset(const ExperimentConfig& cfg) {
  return make_blobs(cfg.task.n_per_class, cfg.task.n_classes,
                    cfg.task.feature_dim, cfg.task.class_sep,
                    rng::derive(cfg.seed, rng::Domain::kBlobs));
}

PartitionPlan build_partition(const ExperimentConfig& cfg,
                              const Dataset& full) {
  return partition(full, cfg.clients, cfg.partition,
                   rng::derive(cfg.seed, rng::Domain::kPartition));
}

ClientData materialize_client(const ExperimentConfig& cfg,
                              const Dataset& full, const PartitionPlan& plan,
                              uint32_t client_id) {
  const std::vector<uint64_t>& shard = plan.client_indices.at(client_id);
  std::vector<uint64_t> shuffled = shard;
  rng::Engine rng(rng::derive(cfg.seed, rng::Domain::kTestSplit, client_id));
  rng.shuffle(shuffled);
  const size_t n_test = shuffled.size() / 5;
  std::vector<uint64_t> test_idx(shuffled.begin(), shuffled.begin() + n_test);
  std::vector<uint64_t> train_idx(shuffled.begin() + n_test, shuffled.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  return ClientData{full.select(train_idx), full.select(test_idx)};
}

std::vector<uint64_t> train_split_sizes(const ExperimentConfig& cfg) {
  const Dataset full = build_full_dataset(cfg);
  const PartitionPlan plan = build_partition(cfg, full);
  std::vector<uint64_t> sizes;
  sizes.reserve(cfg.clients);
  for (uint32_t i = 0; i < cfg.clients; ++i) {
    const size_t shard = plan.client_indices[i].size();
    sizes.push_back(shard - shard / 5);
  }
  return sizes;
}

}  // namespace flk
