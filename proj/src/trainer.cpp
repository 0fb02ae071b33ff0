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

#include "flk/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "flk/rng.hpp"

namespace flk {
namespace {

// Softmax probabilities from logits, numerically stable. Returns the
// cross-entropy -log p[label].
double softmax_xent(std::vector<double>& logits, uint32_t label) {
  double max_logit = logits[0];
  for (double l : logits) max_logit = std::max(max_logit, l);
  double z = 0.0;
  for (double& l : logits) {
    l = std::exp(l - max_logit);
    z += l;
  }
  double loss = -std::log(logits[label] / z);
  for (double& l : logits) l /= z;  // logits now hold probabilities
  return loss;
}

struct LogregView {
  const double* W;  // d x k
  const double* b;  // k
};

struct MlpView {
  const double* W1;  // d x h
  const double* b1;  // h
  const double* W2;  // h x k
  const double* b2;  // k
};

}  // namespace

size_t Task::param_dim() const {
  if (kind == TaskKind::kLogreg) return d * k + k;
  return d * h + h + h * k + k;
}

Task Task::from_config(const TaskConfig& cfg) {
  Task t;
  t.kind = cfg.kind;
  t.d = cfg.feature_dim;
  t.k = cfg.n_classes;
  t.h = cfg.hidden_units;
  return t;
}

ParameterVector init_params(const Task& task, uint64_t seed) {
  ParameterVector w = ParameterVector::zeros(task.param_dim());
  if (task.kind == TaskKind::kLogreg) return w;
  rng::Engine rng(seed);
  auto fill_layer = [&](size_t offset, size_t count, uint64_t fan_in) {
    const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (size_t i = 0; i < count; ++i) {
      w.values[offset + i] = a * (2.0 * rng.uniform01() - 1.0);
    }
  };
  const size_t dh = task.d * task.h;
  fill_layer(0, dh, task.d);               // W1
  fill_layer(dh, task.h, task.d);          // b1
  fill_layer(dh + task.h, task.h * task.k, task.h);  // W2
  fill_layer(dh + task.h + task.h * task.k, task.k, task.h);  // b2
  return w;
}

double loss_and_grad(const Task& task, const ParameterVector& w,
                     const Dataset& data, const std::vector<uint64_t>& batch,
                     ParameterVector* grad) {
  if (w.dim() != task.param_dim()) {
    throw std::invalid_argument("loss_and_grad: parameter dimension mismatch");
  }
  if (batch.empty()) {
    throw std::invalid_argument("loss_and_grad: empty batch");
  }
  if (grad != nullptr) {
    grad->values.assign(task.param_dim(), 0.0);
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const size_t d = task.d;
  const size_t k = task.k;
  double loss = 0.0;

  if (task.kind == TaskKind::kLogreg) {
    LogregView v{w.values.data(), w.values.data() + d * k};
    std::vector<double> logits(k);
    for (uint64_t row : batch) {
      const double* x = data.row(row);
      for (size_t j = 0; j < k; ++j) {
        double acc = v.b[j];
        for (size_t i = 0; i < d; ++i) acc += x[i] * v.W[i * k + j];
        logits[j] = acc;
      }
      const uint32_t y = data.labels[row];
      loss += softmax_xent(logits, y);
      if (grad == nullptr) continue;
      double* gW = grad->values.data();
      double* gb = grad->values.data() + d * k;
      for (size_t j = 0; j < k; ++j) {
        const double dl = (logits[j] - (j == y ? 1.0 : 0.0)) * inv_b;
        for (size_t i = 0; i < d; ++i) gW[i * k + j] += x[i] * dl;
        gb[j] += dl;
      }
    }
  } else {
    const size_t h = task.h;
    const size_t dh = d * h;
    MlpView v{w.values.data(), w.values.data() + dh, w.values.data() + dh + h,
              w.values.data() + dh + h + h * k};
    std::vector<double> a1(h);
    std::vector<double> logits(k);
    std::vector<double> dlogits(k);
    for (uint64_t row : batch) {
      const double* x = data.row(row);
      for (size_t a = 0; a < h; ++a) {
        double acc = v.b1[a];
        for (size_t i = 0; i < d; ++i) acc += x[i] * v.W1[i * h + a];
        a1[a] = std::tanh(acc);
      }
      for (size_t j = 0; j < k; ++j) {
        double acc = v.b2[j];
        for (size_t a = 0; a < h; ++a) acc += a1[a] * v.W2[a * k + j];
        logits[j] = acc;
      }
      const uint32_t y = data.labels[row];
      loss += softmax_xent(logits, y);
      if (grad == nullptr) continue;
      double* gW1 = grad->values.data();
      double* gb1 = grad->values.data() + dh;
      double* gW2 = grad->values.data() + dh + h;
      double* gb2 = grad->values.data() + dh + h + h * k;
      for (size_t j = 0; j < k; ++j) {
        dlogits[j] = (logits[j] - (j == y ? 1.0 : 0.0)) * inv_b;
        gb2[j] += dlogits[j];
      }
      for (size_t a = 0; a < h; ++a) {
        double da1 = 0.0;
        for (size_t j = 0; j < k; ++j) {
          gW2[a * k + j] += a1[a] * dlogits[j];
          da1 += dlogits[j] * v.W2[a * k + j];
        }
        const double dz1 = da1 * (1.0 - a1[a] * a1[a]);
        for (size_t i = 0; i < d; ++i) gW1[i * h + a] += x[i] * dz1;
        gb1[a] += dz1;
      }
    }
  }
  return loss * inv_b;
}

LocalUpdate local_train(const Task& task, const ParameterVector& global_params,
                        const Dataset& client_data,
                        const TrainSettings& settings, uint64_t stream_seed) {
  if (client_data.n == 0) {
    throw std::invalid_argument("local_train: empty client data");
  }
  LocalUpdate update;
  update.params = global_params;
  update.sample_count = client_data.n;

  ParameterVector grad;
  std::vector<uint64_t> order(client_data.n);
  double last_epoch_loss = 0.0;
  uint64_t last_epoch_steps = 0;

  for (uint32_t epoch = 0; epoch < settings.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng::Engine shuffle_rng(
        rng::derive(stream_seed, rng::Domain::kTrainShuffle, epoch));
    shuffle_rng.shuffle(order);
    const bool last_epoch = (epoch + 1 == settings.epochs);
    for (size_t start = 0; start < order.size();
         start += settings.batch_size) {
      const size_t stop =
          std::min(order.size(), start + settings.batch_size);
      const std::vector<uint64_t> batch(order.begin() + start,
                                        order.begin() + stop);
      const double loss =
          loss_and_grad(task, update.params, client_data, batch, &grad);
      if (settings.prox_mu > 0.0) {
        for (size_t i = 0; i < grad.dim(); ++i) {
          grad.values[i] += settings.prox_mu *
                            (update.params.values[i] - global_params.values[i]);
        }
      }
      for (size_t i = 0; i < grad.dim(); ++i) {
        update.params.values[i] -= settings.learning_rate * grad.values[i];
      }
      if (last_epoch) {
        last_epoch_loss += loss;
        ++last_epoch_steps;
      }
    }
  }

  if (last_epoch_steps > 0) {
    update.train_loss = last_epoch_loss / static_cast<double>(last_epoch_steps);
  } else {
    // No steps taken (E=0): report the standing loss instead of a made-up 0.
    std::vector<uint64_t> all(client_data.n);
    std::iota(all.begin(), all.end(), 0);
    update.train_loss =
        loss_and_grad(task, update.params, client_data, all, nullptr);
  }
  return update;
}

EvalResult evaluate(const Task& task, const ParameterVector& w,
                    const Dataset& data) {
  if (data.n == 0) {
    throw std::invalid_argument("evaluate: empty dataset");
  }
  std::vector<uint64_t> all(data.n);
  std::iota(all.begin(), all.end(), 0);
  EvalResult result;
  result.loss = loss_and_grad(task, w, data, all, nullptr);

  // Recompute logits per row for argmax; ties go to the lowest class id.
  const size_t d = task.d;
  const size_t k = task.k;
  uint64_t correct = 0;
  std::vector<double> logits(k);
  for (uint64_t row = 0; row < data.n; ++row) {
    const double* x = data.row(row);
    if (task.kind == TaskKind::kLogreg) {
      for (size_t j = 0; j < k; ++j) {
        double acc = w.values[d * k + j];
        for (size_t i = 0; i < d; ++i) acc += x[i] * w.values[i * k + j];
        logits[j] = acc;
      }
    } else {
      const size_t h = task.h;
      const size_t dh = d * h;
      std::vector<double> a1(h);
      for (size_t a = 0; a < h; ++a) {
        double acc = w.values[dh + a];
        for (size_t i = 0; i < d; ++i) acc += x[i] * w.values[i * h + a];
        a1[a] = std::tanh(acc);
      }
      for (size_t j = 0; j < k; ++j) {
        double acc = w.values[dh + h + h * k + j];
        for (size_t a = 0; a < h; ++a) {
          acc += a1[a] * w.values[dh + h + a * k + j];
        }
        logits[j] = acc;
      }
    }
    size_t argmax = 0;
    for (size_t j = 1; j < k; ++j) {
      if (logits[j] > logits[argmax]) argmax = j;
    }
    if (argmax == data.labels[row]) ++correct;
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(data.n);
  return result;
}

}  // namespace flk
