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


// End-to-end orchestration: run configuration, artifact layout, the
// per-command stages behind the CLI and their manifests.

#ifndef TIGER_PIPELINE_HPP_
#define TIGER_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "tiger/dataset.hpp"
#include "tiger/embeddings.hpp"
#include "tiger/evaluation.hpp"
#include "tiger/rqvae.hpp"
#include "tiger/trainer.hpp"
#include "tiger/transformer.hpp"

namespace tiger {

struct DatasetSettings {
  std::string source = "synthetic";  // synthetic | amazon
  std::filesystem::path reviews;     // amazon: reviews JSON Lines
  std::filesystem::path metadata;    // amazon: metadata JSON Lines
  std::filesystem::path embeddings;  // optional precomputed SEMB table
  std::size_t min_length = 5;
  std::size_t max_history = 20;
  bool all_prefixes = true;
  SyntheticConfig synthetic;               // seed is derived from the run seed
  SyntheticEmbeddingConfig synthetic_embedding;  // ditto
};

struct QuantizerSettings {
  std::string method = "rqvae";  // rqvae | residual_kmeans | lsh | random
  bool normalize_embeddings = false;  // L2-normalize rows before quantizing
  int disambiguator_capacity = 256;
  RqVaeConfig rqvae;  // input_dim is taken from the embedding table
  std::size_t kmeans_k = 256;
  std::size_t kmeans_levels = 3;
  std::size_t kmeans_iters = 25;
  std::size_t lsh_bits = 8;
  std::size_t lsh_bands = 4;
  int random_k = 255;
  std::size_t random_levels = 4;
};

struct TrainingSettings {
  std::size_t batch_size = 256;
  std::uint64_t steps = 200000;
  double base_lr = 0.01;
  std::uint64_t decay_start = 10000;
  std::uint64_t checkpoint_every = 0;
  std::uint64_t validate_every = 0;  // 0 disables periodic validation
  std::size_t validation_users = 500;
};

struct EvalSettings {
  std::vector<std::size_t> k_values = {5, 10};
  std::size_t beam_width = 0;  // 0 means 2 * max(k_values)
  bool constrained = false;
  std::vector<std::size_t> invalid_k = {5, 10, 20};
  std::vector<double> temperatures = {1.0, 1.5, 2.0};
  std::vector<std::size_t> entropy_k = {10, 20, 50};
  bool entropy_base2 = false;
  std::size_t max_sample_attempts = 200;
  std::size_t max_users = 0;            // 0 evaluates every test user
  std::size_t diversity_users = 0;      // 0 uses the evaluated users
  std::size_t invalid_users = 0;        // 0 uses the evaluated users
  bool dump_predictions = true;
};

struct ColdStartSettings {
  bool enabled = false;
  double unseen_fraction = 0.05;
  std::vector<double> epsilons = {0.0, 0.1, 0.2, 0.3, 0.5, 1.0};
  std::size_t k = 10;
  bool knn_baseline = true;
};

// One JSON document per run. Unknown keys are rejected (UsageError naming the
// dotted key path); "seed" is mandatory unless supplied on the command line.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "tiger_out";
  DatasetSettings dataset;
  QuantizerSettings quantizer;
  TransformerConfig model;  // decode_len and max_input_len follow the IDs
  int user_buckets = 2000;
  TrainingSettings training;
  EvalSettings evaluation;
  ColdStartSettings coldstart;

  // seed_override replaces (or supplies) the document's seed.
  static RunConfig parse(std::string_view json_text,
                         std::optional<std::uint64_t> seed_override = std::nullopt);
  // Canonical JSON with sorted keys and every field present.
  std::string to_json() const;
  // 16-hex FNV-1a 64 of to_json().
  std::string digest() const;
  // Throws UsageError for out-of-range values and missing input paths.
  void validate() const;

  // Component seeds derived from the run seed by named splits.
  std::uint64_t component_seed(std::string_view component) const;
};

RunConfig load_run_config(const std::filesystem::path& path,
                          std::optional<std::uint64_t> seed_override = std::nullopt);

// File names inside the output directory.
struct RunPaths {
  explicit RunPaths(std::filesystem::path dir) : root(std::move(dir)) {}
  std::filesystem::path root;

  std::filesystem::path dataset() const { return root / "dataset.json"; }
  std::filesystem::path labels() const { return root / "labels.json"; }
  std::filesystem::path stats() const { return root / "dataset_stats.json"; }
  std::filesystem::path item_text() const { return root / "item_text.jsonl"; }
  std::filesystem::path embeddings() const { return root / "embeddings.semb"; }
  std::filesystem::path assignment() const { return root / "semantic_ids.json"; }
  std::filesystem::path rqvae() const { return root / "rqvae.rqvc"; }
  std::filesystem::path quantize_report() const { return root / "quantize_report.json"; }
  std::filesystem::path hierarchy() const { return root / "hierarchy.csv"; }
  std::filesystem::path checkpoint() const { return root / "model.tgrc"; }
  std::filesystem::path checkpoint_config() const { return root / "model.config"; }
  std::filesystem::path loss_curve() const { return root / "loss_curve.csv"; }
  std::filesystem::path validation_log() const { return root / "validation.csv"; }
  std::filesystem::path predictions() const { return root / "predictions.jsonl"; }
  std::filesystem::path report_json() const { return root / "report.json"; }
  std::filesystem::path report_csv() const { return root / "report.csv"; }
  std::filesystem::path manifest(std::string_view command) const {
    return root / ("manifest_" + std::string(command) + ".json");
  }
};

std::string code_version();

// Each stage reads its inputs from the output directory (or the configured
// external files), writes its artifacts plus manifest_<command>.json, and
// logs progress to `log`.
DatasetStats run_ingest(const RunConfig& config, std::ostream& log);
void run_embed_synthetic(const RunConfig& config, std::ostream& log);
IdAssignment run_quantize(const RunConfig& config, std::ostream& log);
// Resumes from the checkpoint when one exists for the same configuration.
std::vector<LossPoint> run_train(const RunConfig& config, std::ostream& log);
EvalReport run_evaluate(const RunConfig& config, std::ostream& log);
// Top-k items for one user of the processed dataset, or for an explicit
// history when `history` is non-empty. Returns a JSON document.
std::string run_recommend(const RunConfig& config, const std::string& user_id,
                          const std::vector<std::string>& history, std::size_t k);
// Assignment summary, or one item's ID when item_id is non-empty (JSON).
std::string run_inspect_ids(const RunConfig& config, const std::string& item_id);

// ingest, embed-synthetic (synthetic source only), quantize, train, evaluate.
EvalReport run_pipeline(const RunConfig& config, std::ostream& log);

// Embeddings the quantizer consumes: the configured table or the output
// directory's, L2-normalized when configured.
EmbeddingTable quantizer_input(const RunConfig& config);

}  // namespace tiger

#endif  // TIGER_PIPELINE_HPP_
