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

// Retrieval metrics, the cold-start protocol, the Semantic-KNN baseline and
// evaluation reports.

#ifndef TIGER_EVALUATION_HPP_
#define TIGER_EVALUATION_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tiger/dataset.hpp"
#include "tiger/embeddings.hpp"
#include "tiger/generation.hpp"
#include "tiger/numeric.hpp"

namespace tiger {

using Ranking = std::vector<std::string>;

// 1-based rank of truth within the first k entries, or 0.
std::size_t rank_within(const Ranking& ranked, const std::string& truth, std::size_t k);

// Mean over users of [truth in top-k]. Throws UsageError for an empty user
// set or mismatched sizes.
double recall_at_k(const std::vector<Ranking>& ranked, const std::vector<std::string>& truth,
                   std::size_t k);
// Mean over users of 1/log2(1 + rank) when rank <= k, else 0.
double ndcg_at_k(const std::vector<Ranking>& ranked, const std::vector<std::string>& truth,
                 std::size_t k);

struct EntropyResult {
  double mean = 0.0;
  std::size_t unknown = 0;  // predicted items without a label
};

// Mean Shannon entropy of the category distribution of each user's top-k
// predictions; natural log unless base2. Unlabeled items count as
// "unknown".
EntropyResult entropy_at_k(const std::vector<Ranking>& predicted,
                           const std::map<std::string, std::string>& category,
                           std::size_t k, bool base2 = false);

struct ColdStartConfig {
  double unseen_fraction = 0.05;
  double epsilon = 0.1;
  std::size_t k = 10;
  std::uint64_t seed = 0;
};

struct ColdStartSplit {
  std::vector<Example> train;
  std::set<std::string> unseen;
  std::size_t dropped_targets = 0;
  std::size_t filtered_history_entries = 0;
  std::size_t dropped_empty_history = 0;
};

// Marks round(unseen_fraction · |distinct test targets|) of them unseen,
// drawn with Rng(seed).split("coldstart"), and removes them from training:
// examples targeting them are dropped and their history occurrences are
// filtered out (examples left with an empty history are dropped).
ColdStartSplit coldstart_split(const SplitDataset& data, double unseen_fraction,
                               std::uint64_t seed);

struct ColdStartResult {
  Ranking items;
  std::size_t unseen_count = 0;
};

// Walks the predictions in rank order: the prediction's seen item, then the
// unseen items sharing its first `prefix_len` codewords (ascending item id).
// Unseen items are capped at ceil(epsilon·k); output stops at k items.
ColdStartResult coldstart_retrieve(std::span<const BeamHypothesis> predictions,
                                   const ValidIdIndex& index, double epsilon,
                                   std::size_t k, std::size_t prefix_len);

// Exact cosine nearest neighbours by brute force; ties by item id. Items in
// `exclude` are skipped. Throws UsageError for an empty table or a query of
// the wrong dimension.
Ranking semantic_knn(std::span<const double> query, const EmbeddingTable& table,
                     std::size_t k, const std::set<std::string>& exclude = {});

// Same ranking through a normalized matrix product.
class SemanticKnnIndex {
 public:
  explicit SemanticKnnIndex(const EmbeddingTable& table);
  Ranking query(std::span<const double> q, std::size_t k,
                const std::set<std::string>& exclude = {}) const;

 private:
  std::vector<std::string> ids_;
  MatrixRM normalized_;
  std::size_t dim_ = 0;
};

struct MetricRow {
  std::string metric;
  std::size_t k = 0;
  std::string config;
  double value = 0.0;
};

struct EvalReport {
  std::vector<MetricRow> rows;
  std::size_t users = 0;
  std::size_t invalid_predictions = 0;
  std::uint64_t seed = 0;
  std::string checkpoint;
  std::string dataset_hash;

  void add(std::string metric, std::size_t k, std::string config, double value);
  // Throws UsageError if absent.
  double get(const std::string& metric, std::size_t k, const std::string& config) const;
  std::string to_json() const;
  // metric,K,config,value
  std::string to_csv() const;
};

// Hex FNV-1a 64 of the file's bytes. Throws DataError if unreadable.
std::string file_digest(const std::filesystem::path& path);

}  // namespace tiger

#endif  // TIGER_EVALUATION_HPP_
