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

#ifndef FLK_PARTITION_HPP_
#define FLK_PARTITION_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "flk/config.hpp"

namespace flk {

// Dense supervised dataset; features are n x d row-major f64, labels are
// class ids in [0, k).
struct Dataset {
  uint64_t n = 0;
  uint64_t d = 0;
  uint64_t k = 0;
  std::vector<double> features;
  std::vector<uint32_t> labels;

  const double* row(size_t i) const { return features.data() + i * d; }
  Dataset select(const std::vector<uint64_t>& indices) const;
};

// Gaussian blobs: class c is an isotropic unit-variance cluster centered at
// sep * e_{c mod d}. Rows are laid out class-major; labels are dense.
Dataset make_blobs(uint64_t n_per_class, uint64_t k, uint64_t d, double sep,
                   uint64_t seed);

// Assignment of every dataset index to exactly one client.
struct PartitionPlan {
  std::vector<std::vector<uint64_t>> client_indices;
};

// Splits [0, data.n) across m clients per the configured scheme. Every
// client ends up non-empty (an empty client steals one index from the
// largest). Throws ConfigError when m > n or the shard grid exceeds n.
PartitionPlan partition(const Dataset& data, uint32_t m,
                        const PartitionConfig& cfg, uint64_t seed);

// On-disk dataset format used by the partition exporter.
void write_flds(const std::string& path, const Dataset& data);
Dataset read_flds(const std::string& path);

// Client-side view of one shard: an 80/20 train/test split that exists
// whether or not anything consumes the test half, so enabling evaluation
// hooks can never change the training trajectory.
struct ClientData {
  Dataset train;
  Dataset test;
};

Dataset build_full_dataset(const ExperimentConfig& cfg);
PartitionPlan build_partition(const ExperimentConfig& cfg,
                              const Dataset& full);
ClientData materialize_client(const ExperimentConfig& cfg,
                              const Dataset& full, const PartitionPlan& plan,
                              uint32_t client_id);

// Train-split sizes per client, derivable by every process from config.
std::vector<uint64_t> train_split_sizes(const ExperimentConfig& cfg);

}  // namespace flk

#endif  // FLK_PARTITION_HPP_
