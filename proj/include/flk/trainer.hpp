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

#ifndef FLK_TRAINER_HPP_
#define FLK_TRAINER_HPP_

#include <cstdint>
#include <vector>

#include "flk/config.hpp"
#include "flk/partition.hpp"
#include "flk/types.hpp"

namespace flk {

// Model shape. Parameter layout:
//   logreg: [W d x k row-major, b k]
//   mlp:    [W1 d x h, b1 h, W2 h x k, b2 k], tanh hidden activation
struct Task {
  TaskKind kind = TaskKind::kLogreg;
  uint64_t d = 0;
  uint64_t k = 0;
  uint64_t h = 0;  // mlp only

  size_t param_dim() const;
  static Task from_config(const TaskConfig& cfg);
};

// logreg starts at zero; mlp layers draw uniform(-1/sqrt(fan_in),
// 1/sqrt(fan_in)) from the given stream, in layout order.
ParameterVector init_params(const Task& task, uint64_t seed);

// Mean softmax cross-entropy over the batch rows (indices into data), with
// exact analytic gradients in the same layout as the parameters. `grad` may
// be null when only the loss is wanted.
double loss_and_grad(const Task& task, const ParameterVector& w,
                     const Dataset& data, const std::vector<uint64_t>& batch,
                     ParameterVector* grad);

struct TrainSettings {
  uint32_t epochs = 1;
  uint32_t batch_size = 32;
  double learning_rate = 0.1;
  double prox_mu = 0.0;  // adds mu * (w - global) to each step's gradient
};

// E epochs of minibatch SGD from global_params. Epoch e shuffles with a
// stream derived from stream_seed, so the whole trajectory is a pure
// function of (inputs, stream_seed). The last incomplete batch is used.
LocalUpdate local_train(const Task& task, const ParameterVector& global_params,
                        const Dataset& client_data,
                        const TrainSettings& settings, uint64_t stream_seed);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Full-pass loss and argmax accuracy; prediction ties go to the lowest
// class id.
EvalResult evaluate(const Task& task, const ParameterVector& w,
                    const Dataset& data);

}  // namespace flk

#endif  // FLK_TRAINER_HPP_
