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

#ifndef FLK_CLOCK_HPP_
#define FLK_CLOCK_HPP_

#include <chrono>

namespace flk {

// Seconds since an epoch: the simulation origin for simulated clocks, the
// Unix epoch for wall clocks. Simulated timestamps serialize as numbers,
// wall timestamps as ISO-8601 strings.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() const = 0;
  virtual bool simulated() const = 0;
};

class SimClock final : public Clock {
 public:
  double now() const override { return t_; }
  bool simulated() const override { return true; }
  void advance(double dt) { t_ += dt; }
  void set(double t) { t_ = t; }

 private:
  double t_ = 0.0;
};

// A frozen reading, used to hand a client its own "now" (round start plus
// that client's simulated duration) during simulated hook emissions.
class FixedClock final : public Clock {
 public:
  explicit FixedClock(double t) : t_(t) {}
  double now() const override { return t_; }
  bool simulated() const override { return true; }

 private:
  double t_;
};

class WallClock final : public Clock {
 public:
  double now() const override {
    return std::chrono::duration<double>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  }
  bool simulated() const override { return false; }
};

}  // namespace flk

#endif  // FLK_CLOCK_HPP_
