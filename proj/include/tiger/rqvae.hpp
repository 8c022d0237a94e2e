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

// RQ-VAE: MLP encoder, residual quantizer with one codebook per level, MLP
// decoder. Trained with reconstruction + codebook/commitment losses using a
// straight-through estimator across the quantizer.

#ifndef TIGER_RQVAE_HPP_
#define TIGER_RQVAE_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tiger/embeddings.hpp"
#include "tiger/numeric.hpp"
#include "tiger/semantic_ids.hpp"

namespace tiger {

struct RqVaeConfig {
  std::size_t input_dim = 768;
  std::vector<std::size_t> hidden = {512, 256, 128};
  std::size_t latent_dim = 32;
  std::vector<int> levels = {256, 256, 256};
  double beta = 0.25;
  double lr = 0.4;
  std::size_t batch_size = 1024;
  std::size_t epochs = 20000;
  std::size_t kmeans_iters = 10;
  std::size_t log_every = 1;  // epochs between codebook-usage measurements
  std::uint64_t seed = 0;
};

struct DenseLayer {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out
};

class RqVaeModel : public Quantizer {
 public:
  // Random initialization: weights N(0, 1/fan_in), zero biases, codebook
  // entries N(0, 1/latent_dim).
  explicit RqVaeModel(const RqVaeConfig& config);

  const RqVaeConfig& config() const { return config_; }

  std::vector<double> encode(std::span<const double> x) const;
  std::vector<double> decode(std::span<const double> z) const;
  ResidualTrace trace(std::span<const double> x) const;

  std::vector<int> quantize(std::span<const double> x) const override;
  std::vector<int> levels() const override { return config_.levels; }
  IdMethod method() const override { return IdMethod::kRqVae; }

  std::vector<DenseLayer>& encoder() { return encoder_; }
  std::vector<DenseLayer>& decoder() { return decoder_; }
  std::vector<Parameter>& codebooks() { return codebooks_; }
  const std::vector<DenseLayer>& encoder() const { return encoder_; }
  const std::vector<DenseLayer>& decoder() const { return decoder_; }
  const std::vector<Parameter>& codebooks() const { return codebooks_; }
  std::vector<DenseMatrix> codebook_values() const;

  // Encoder layers, decoder layers, then codebooks.
  std::vector<Parameter*> parameters();

 private:
  RqVaeConfig config_;
  std::vector<DenseLayer> encoder_;
  std::vector<DenseLayer> decoder_;
  std::vector<Parameter> codebooks_;
};

struct RqVaeLoss {
  double total = 0.0;
  double recon = 0.0;   // ‖x − x̂‖²
  double rqvae = 0.0;   // Σ_d ‖sg[r_d] − e_{c_d}‖² + β‖r_d − sg[e_{c_d}]‖²
  std::vector<int> codes;
};

// Loss value for one input. Throws NumericError on non-finite intermediates.
RqVaeLoss rqvae_loss(std::span<const double> x, const RqVaeModel& model);

// Mean loss over a batch (rows of `batch`). When `accumulate_grads` is set,
// adds the straight-through gradients of the mean loss to every parameter's
// grad field:
//   decoder  <- reconstruction
//   codebook <- 2 (e_{c_d} − r_d)
//   encoder  <- straight-through reconstruction + 2β (r_d − e_{c_d})
// Residuals entering the commitment term treat earlier codewords as
// constants, so codebooks receive gradient only from their own term.
RqVaeLoss rqvae_batch_loss(const DenseMatrix& batch, RqVaeModel& model,
                           bool accumulate_grads);

// Values of every stop-gradient operand at the current parameters, one
// entry per batch row. rqvae_surrogate_loss evaluates the loss with those
// operands frozen, so its true gradient equals the straight-through gradient
// produced by rqvae_batch_loss; finite differences of the surrogate validate
// the analytic gradients.
struct StopGradients {
  std::vector<std::vector<int>> codes;
  std::vector<std::vector<std::vector<double>>> residuals;  // r_d per level
  std::vector<std::vector<std::vector<double>>> codewords;  // e_{c_d} per level
  std::vector<std::vector<double>> st_offset;               // ẑ − z
};

StopGradients capture_stop_gradients(const DenseMatrix& batch,
                                     const RqVaeModel& model);
double rqvae_surrogate_loss(const DenseMatrix& batch, const RqVaeModel& model,
                            const StopGradients& frozen);

struct RqVaeEpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double recon = 0.0;
  double rqvae = 0.0;
  std::vector<double> usage;  // empty on epochs without a measurement
};

struct RqVaeTrainLog {
  std::vector<RqVaeEpochLog> epochs;
  std::vector<double> final_usage;
  std::vector<std::string> warnings;
};

// Seeds each level's codebook with k-means centroids of the residuals of
// `batch` (level d uses residuals after subtracting levels < d).
void kmeans_init_codebooks(RqVaeModel& model, const DenseMatrix& batch,
                           std::size_t iters, std::uint64_t seed);

// Adagrad training over shuffled mini-batches. The codebooks are k-means
// initialized on the first batch. Records a warning when any level's final
// usage is below 50% and throws NumericError on a non-finite loss.
RqVaeModel train_rqvae(const EmbeddingTable& embeddings, const RqVaeConfig& config,
                       RqVaeTrainLog* log = nullptr);

// Mean ‖r_d‖ for d = 0..m over the table (r_0 = z).
std::vector<double> mean_residual_norms(const RqVaeModel& model,
                                        const EmbeddingTable& embeddings);

// "RQVC" | u32 version | config | f64 parameter blocks (encoder, decoder,
// codebooks), little-endian.
void save_rqvae(const std::filesystem::path& path, const RqVaeModel& model);
RqVaeModel load_rqvae(const std::filesystem::path& path);

}  // namespace tiger

#endif  // TIGER_RQVAE_HPP_
