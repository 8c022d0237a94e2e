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

// Autoregressive decoding of Semantic IDs: beam search, temperature
// sampling, the prefix index of valid IDs and invalid-ID accounting.

#ifndef TIGER_GENERATION_HPP_
#define TIGER_GENERATION_HPP_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tiger/numeric.hpp"
#include "tiger/semantic_ids.hpp"
#include "tiger/transformer.hpp"

namespace tiger {

// Every prefix (length 1..n) of every indexed ID, with the items below it
// split into seen and unseen sets. Item lists are kept in ascending item id.
class ValidIdIndex {
 public:
  ValidIdIndex() = default;

  // Throws UsageError if a second seen item is inserted under the same full
  // ID, or if ID lengths differ.
  void insert(const SemanticId& id, const std::string& item, bool seen);

  std::size_t id_length() const { return id_length_; }
  bool contains_prefix(std::span<const int> prefix) const;
  // Codes c such that prefix ++ [c] is an indexed prefix, ascending.
  std::vector<int> continuations(std::span<const int> prefix) const;
  const std::vector<std::string>& seen_items(std::span<const int> prefix) const;
  const std::vector<std::string>& unseen_items(std::span<const int> prefix) const;
  // Seen item with exactly this ID, or nullptr.
  const std::string* seen_item(const SemanticId& id) const;
  // True when the full ID belongs to any indexed item.
  bool is_valid(const SemanticId& id) const;

 private:
  struct Node {
    std::vector<std::string> seen, unseen;
    std::vector<int> children;
  };
  const Node* find(std::span<const int> prefix) const;

  std::map<std::vector<int>, Node> nodes_;
  std::size_t id_length_ = 0;
};

ValidIdIndex build_valid_index(const IdAssignment& seen,
                               const IdAssignment* unseen = nullptr);

struct BeamHypothesis {
  SemanticId id;
  double log_prob = 0.0;
};

struct BeamConfig {
  std::size_t beam_width = 20;
  std::size_t k = 10;
  bool constrained = false;
};

// Codeword tokens of a partial ID behind BOS: the decoder input that
// predicts position codes.size().
std::vector<int> decoder_prefix(std::span<const int> codes, const TokenVocabulary& vocab);

// Beam search over the ID positions. Each step scores every codeword of the
// position's block (block log-softmax) for every live beam; constrained
// search only expands into indexed prefixes. Hypotheses are ordered by
// log-prob descending, ties by codeword tuple ascending. Returns at most k.
// Throws UsageError if beam_width < k, or if constrained without an index.
std::vector<BeamHypothesis> beam_search(const Seq2SeqModel& model,
                                        std::span<const int> input,
                                        const BeamConfig& config,
                                        const ValidIdIndex* index = nullptr);

struct LookupResult {
  std::vector<std::string> items;  // rank order, first occurrence kept
  std::vector<const std::string*> matches;  // per prediction; nullptr if none
  std::size_t invalid = 0;  // predictions matching no indexed ID
};

LookupResult lookup_items(std::span<const BeamHypothesis> predictions,
                          const ValidIdIndex& index);

// n independent IDs sampled position by position from the block softmax of
// logits / temperature. log_prob is under that tempered distribution.
std::vector<BeamHypothesis> sample_ids(const Seq2SeqModel& model,
                                       std::span<const int> input, double temperature,
                                       std::size_t n, Rng& rng);

struct SamplerConfig {
  double temperature = 1.0;
  std::size_t max_attempts = 200;
  std::size_t k = 10;
};

struct SampleResult {
  std::vector<std::string> items;  // distinct seen items, first-draw order
  std::size_t attempts = 0;
  std::size_t invalid = 0;
};

// Draws IDs until k distinct valid seen items or max_attempts draws.
// Throws UsageError for temperature <= 0.
SampleResult temperature_sample(const Seq2SeqModel& model, std::span<const int> input,
                                const SamplerConfig& config, const ValidIdIndex& index,
                                Rng& rng);

// Fraction of the top-K unconstrained predictions that are invalid, per K in
// the grid, with beam width beam_factor·K.
std::map<std::size_t, double> invalid_fraction(
    const Seq2SeqModel& model, const std::vector<std::vector<int>>& inputs,
    const ValidIdIndex& index, const std::vector<std::size_t>& k_grid,
    std::size_t beam_factor = 2, bool constrained = false);

// One JSON Lines record:
//   {"predictions":[{"id":[..],"item_id":..|null,"logprob":..}],"user_id":..}
std::string prediction_record_json(const std::string& user_id,
                                   std::span<const BeamHypothesis> predictions,
                                   const ValidIdIndex& index);

}  // namespace tiger

#endif  // TIGER_GENERATION_HPP_
