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

#include "tiger/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "tiger/errors.hpp"

namespace tiger {

double learning_rate(std::uint64_t step, double base, std::uint64_t decay_start) {
  if (step <= decay_start) return base;
  return base * std::sqrt(static_cast<double>(decay_start) / static_cast<double>(step));
}

double train_step(Seq2SeqModel& model, std::span<const TrainingExample> batch, double lr,
                  Rng* dropout_rng) {
  model.zero_grad();
  const double loss = batch_loss(model, batch, dropout_rng, true);
  if (!std::isfinite(loss)) {
    throw NumericError("training: non-finite loss at step " +
                       std::to_string(model.step() + 1));
  }
  for (Parameter* p : model.parameters()) adagrad_step(*p, lr);
  model.set_step(model.step() + 1);
  return loss;
}

namespace {

std::vector<std::size_t> epoch_order(std::uint64_t epoch, std::size_t n,
                                     std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng(seed).split("shuffle").split(epoch);
  rng.shuffle(order);
  return order;
}

}  // namespace

std::vector<std::size_t> batch_indices(std::uint64_t step, std::size_t batch_size,
                                       std::size_t dataset_size, std::uint64_t seed) {
  if (step == 0 || batch_size == 0 || dataset_size == 0) {
    throw UsageError("batch_indices: step, batch size and dataset must be positive");
  }
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  std::uint64_t pos = (step - 1) * batch_size;
  std::uint64_t cached_epoch = ~std::uint64_t{0};
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < batch_size; ++i, ++pos) {
    const std::uint64_t epoch = pos / dataset_size;
    if (epoch != cached_epoch) {
      order = epoch_order(epoch, dataset_size, seed);
      cached_epoch = epoch;
    }
    out.push_back(order[pos % dataset_size]);
  }
  return out;
}

std::vector<LossPoint> train(Seq2SeqModel& model, const std::vector<TrainingExample>& data,
                             const TrainConfig& config,
                             const std::function<void(const LossPoint&)>& on_step) {
  if (data.empty()) throw UsageError("train: empty dataset");
  std::vector<LossPoint> curve;
  std::ofstream csv;
  if (!config.loss_curve_path.empty()) {
    const bool append = model.step() > 0 && std::filesystem::exists(config.loss_curve_path);
    csv.open(config.loss_curve_path, append ? std::ios::app : std::ios::trunc);
    if (!csv) throw DataError("cannot write " + config.loss_curve_path.string());
    if (!append) csv << "step,loss,lr\n";
    csv.precision(17);
  }
  const Rng dropout_root = Rng(config.seed).split("dropout");
  std::vector<TrainingExample> batch;
  while (model.step() < config.steps) {
    const std::uint64_t step = model.step() + 1;
    batch.clear();
    for (std::size_t i : batch_indices(step, config.batch_size, data.size(), config.seed)) {
      batch.push_back(data[i]);
    }
    const double lr = learning_rate(step, config.base_lr, config.decay_start);
    Rng dropout_rng = dropout_root.split(step);
    const double loss = train_step(model, batch, lr, &dropout_rng);
    const LossPoint point{step, loss, lr};
    curve.push_back(point);
    if (csv.is_open()) csv << step << ',' << loss << ',' << lr << '\n';
    if (on_step) on_step(point);
    if (config.checkpoint_every > 0 && !config.checkpoint_path.empty() &&
        step % config.checkpoint_every == 0) {
      csv.flush();
      save_checkpoint(model, config.checkpoint_path);
    }
  }
  return curve;
}

}  // namespace tiger
