// Copyright 2026 The tiger-cpp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Teacher-forced training loop with Adagrad and the constant-then-inverse-
// square-root learning rate.

#ifndef TIGER_TRAINER_HPP_
#define TIGER_TRAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "tiger/transformer.hpp"

namespace tiger {

// base for step <= decay_start, else base * sqrt(decay_start / step).
double learning_rate(std::uint64_t step, double base = 0.01,
                     std::uint64_t decay_start = 10000);

struct TrainConfig {
  std::size_t batch_size = 256;
  // Train until model.step() reaches this value.
  std::uint64_t steps = 200000;
  double base_lr = 0.01;
  std::uint64_t decay_start = 10000;
  std::uint64_t seed = 0;
  std::uint64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::filesystem::path checkpoint_path;
  std::filesystem::path loss_curve_path;  // CSV step,loss,lr
};

struct LossPoint {
  std::uint64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  friend bool operator==(const LossPoint&, const LossPoint&) = default;
};

// One Adagrad update on the batch; increments model.step(). Throws
// NumericError when the loss is not finite.
double train_step(Seq2SeqModel& model, std::span<const TrainingExample> batch, double lr,
                  Rng* dropout_rng);

// Examples of step s (1-based): positions (s-1)·B .. s·B-1 of an endless
// stream of per-epoch shuffles drawn from Rng(seed).split("shuffle").
std::vector<std::size_t> batch_indices(std::uint64_t step, std::size_t batch_size,
                                       std::size_t dataset_size, std::uint64_t seed);

// Runs steps model.step()+1 .. config.steps. Dropout for step s uses
// Rng(seed).split("dropout").split(s), so a resumed run continues exactly.
// The loss curve file is appended to when resuming, otherwise rewritten.
std::vector<LossPoint> train(
    Seq2SeqModel& model, const std::vector<TrainingExample>& data,
    const TrainConfig& config,
    const std::function<void(const LossPoint&)>& on_step = nullptr);

}  // namespace tiger

#endif  // TIGER_TRAINER_HPP_
