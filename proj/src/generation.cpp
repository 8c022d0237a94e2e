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

#include "tiger/generation.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "tiger/errors.hpp"

namespace tiger {

namespace {

const std::vector<std::string> kNoItems;

void insert_sorted(std::vector<std::string>& v, const std::string& item) {
  auto it = std::lower_bound(v.begin(), v.end(), item);
  if (it == v.end() || *it != item) v.insert(it, item);
}

bool hypothesis_before(const BeamHypothesis& a, const BeamHypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.id < b.id;
}

}  // namespace

void ValidIdIndex::insert(const SemanticId& id, const std::string& item, bool seen) {
  if (id.size() == 0) throw UsageError("ValidIdIndex: empty ID for " + item);
  if (id_length_ == 0) id_length_ = id.size();
  if (id.size() != id_length_) {
    throw UsageError("ValidIdIndex: ID " + id.to_string() + " has length " +
                     std::to_string(id.size()) + ", index holds length " +
                     std::to_string(id_length_));
  }
  if (seen) {
    const std::string* existing = seen_item(id);
    if (existing != nullptr && *existing != item) {
      throw UsageError("ValidIdIndex: seen items " + *existing + " and " + item +
                       " share ID " + id.to_string());
    }
  }
  std::vector<int> prefix;
  nodes_[prefix];  // root
  for (std::size_t l = 0; l < id.size(); ++l) {
    Node& parent = nodes_[prefix];
    auto c = std::lower_bound(parent.children.begin(), parent.children.end(), id[l]);
    if (c == parent.children.end() || *c != id[l]) parent.children.insert(c, id[l]);
    prefix.push_back(id[l]);
    Node& node = nodes_[prefix];
    insert_sorted(seen ? node.seen : node.unseen, item);
  }
}

const ValidIdIndex::Node* ValidIdIndex::find(std::span<const int> prefix) const {
  auto it = nodes_.find(std::vector<int>(prefix.begin(), prefix.end()));
  return it == nodes_.end() ? nullptr : &it->second;
}

bool ValidIdIndex::contains_prefix(std::span<const int> prefix) const {
  return find(prefix) != nullptr;
}

std::vector<int> ValidIdIndex::continuations(std::span<const int> prefix) const {
  const Node* n = find(prefix);
  return n ? n->children : std::vector<int>{};
}

const std::vector<std::string>& ValidIdIndex::seen_items(std::span<const int> prefix) const {
  const Node* n = find(prefix);
  return n ? n->seen : kNoItems;
}

const std::vector<std::string>& ValidIdIndex::unseen_items(
    std::span<const int> prefix) const {
  const Node* n = find(prefix);
  return n ? n->unseen : kNoItems;
}

const std::string* ValidIdIndex::seen_item(const SemanticId& id) const {
  if (id.size() != id_length_) return nullptr;
  const Node* n = find(id.codes);
  return n && !n->seen.empty() ? &n->seen.front() : nullptr;
}

bool ValidIdIndex::is_valid(const SemanticId& id) const {
  return id.size() == id_length_ && find(id.codes) != nullptr;
}

ValidIdIndex build_valid_index(const IdAssignment& seen, const IdAssignment* unseen) {
  ValidIdIndex index;
  for (const auto& [item, id] : seen.ids) index.insert(id, item, true);
  if (unseen) {
    for (const auto& [item, id] : unseen->ids) index.insert(id, item, false);
  }
  return index;
}

std::vector<int> decoder_prefix(std::span<const int> codes, const TokenVocabulary& vocab) {
  std::vector<int> out{TokenVocabulary::kBos};
  for (std::size_t l = 0; l < codes.size(); ++l) {
    out.push_back(vocab.semantic_token(l, codes[l]));
  }
  return out;
}

std::vector<BeamHypothesis> beam_search(const Seq2SeqModel& model,
                                        std::span<const int> input,
                                        const BeamConfig& config,
                                        const ValidIdIndex* index) {
  if (config.k == 0 || config.beam_width < config.k) {
    throw UsageError("beam_search: need 0 < k <= beam_width (k=" +
                     std::to_string(config.k) +
                     ", beam_width=" + std::to_string(config.beam_width) + ")");
  }
  if (config.constrained && index == nullptr) {
    throw UsageError("beam_search: constrained decoding needs an index");
  }
  const auto& vocab = model.vocab();
  const EncodedInput enc = encode(model, input);
  std::vector<BeamHypothesis> beams{BeamHypothesis{}};
  for (std::size_t level = 0; level < vocab.levels(); ++level) {
    std::vector<std::vector<int>> prefixes;
    for (const auto& b : beams) prefixes.push_back(decoder_prefix(b.id.codes, vocab));
    const MatrixRM lp = next_code_log_probs(model, enc, prefixes);
    std::vector<BeamHypothesis> candidates;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      auto extend = [&](int c) {
        BeamHypothesis h = beams[b];
        h.id.codes.push_back(c);
        h.log_prob += lp(static_cast<Eigen::Index>(b), c);
        candidates.push_back(std::move(h));
      };
      if (config.constrained) {
        for (int c : index->continuations(beams[b].id.codes)) {
          if (c < vocab.level_size(level)) extend(c);
        }
      } else {
        for (int c = 0; c < vocab.level_size(level); ++c) extend(c);
      }
    }
    const std::size_t keep = std::min(config.beam_width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<long>(keep),
                      candidates.end(), hypothesis_before);
    candidates.resize(keep);
    beams = std::move(candidates);
    if (beams.empty()) break;
  }
  if (beams.size() > config.k) beams.resize(config.k);
  return beams;
}

LookupResult lookup_items(std::span<const BeamHypothesis> predictions,
                          const ValidIdIndex& index) {
  LookupResult out;
  std::vector<SemanticId> emitted;
  for (const auto& p : predictions) {
    const std::string* item = index.seen_item(p.id);
    out.matches.push_back(item);
    if (!index.is_valid(p.id)) ++out.invalid;
    if (item && std::find(emitted.begin(), emitted.end(), p.id) == emitted.end()) {
      emitted.push_back(p.id);
      out.items.push_back(*item);
    }
  }
  return out;
}

std::vector<BeamHypothesis> sample_ids(const Seq2SeqModel& model,
                                       std::span<const int> input, double temperature,
                                       std::size_t n, Rng& rng) {
  if (!(temperature > 0.0)) throw UsageError("sample_ids: temperature must be positive");
  const auto& vocab = model.vocab();
  const EncodedInput enc = encode(model, input);
  std::vector<BeamHypothesis> draws(n);
  for (std::size_t level = 0; level < vocab.levels() && n > 0; ++level) {
    // Distinct prefixes share one decoder pass.
    std::map<std::vector<int>, Eigen::Index> rows;
    std::vector<std::vector<int>> prefixes;
    for (const auto& d : draws) {
      if (rows.emplace(d.id.codes, static_cast<Eigen::Index>(prefixes.size())).second) {
        prefixes.push_back(decoder_prefix(d.id.codes, vocab));
      }
    }
    const MatrixRM lp = next_code_log_probs(model, enc, prefixes, temperature);
    std::vector<double> probs(static_cast<std::size_t>(lp.cols()));
    for (auto& d : draws) {
      const Eigen::Index r = rows.at(d.id.codes);
      for (std::size_t c = 0; c < probs.size(); ++c) {
        probs[c] = std::exp(lp(r, static_cast<Eigen::Index>(c)));
      }
      const int c = static_cast<int>(rng.categorical(probs));
      d.log_prob += lp(r, c);
      d.id.codes.push_back(c);
    }
  }
  return draws;
}

SampleResult temperature_sample(const Seq2SeqModel& model, std::span<const int> input,
                                const SamplerConfig& config, const ValidIdIndex& index,
                                Rng& rng) {
  if (!(config.temperature > 0.0)) {
    throw UsageError("temperature_sample: temperature must be positive");
  }
  SampleResult out;
  while (out.items.size() < config.k && out.attempts < config.max_attempts) {
    const std::size_t round = std::min(config.k, config.max_attempts - out.attempts);
    for (const auto& d : sample_ids(model, input, config.temperature, round, rng)) {
      ++out.attempts;
      const std::string* item = index.seen_item(d.id);
      if (!item) {
        ++out.invalid;
        continue;
      }
      if (out.items.size() < config.k &&
          std::find(out.items.begin(), out.items.end(), *item) == out.items.end()) {
        out.items.push_back(*item);
      }
    }
  }
  return out;
}

std::map<std::size_t, double> invalid_fraction(
    const Seq2SeqModel& model, const std::vector<std::vector<int>>& inputs,
    const ValidIdIndex& index, const std::vector<std::size_t>& k_grid,
    std::size_t beam_factor, bool constrained) {
  if (inputs.empty()) throw UsageError("invalid_fraction: no inputs");
  std::map<std::size_t, double> out;
  for (std::size_t k : k_grid) {
    std::size_t invalid = 0;
    for (const auto& input : inputs) {
      auto preds = beam_search(model, input, {beam_factor * k, k, constrained}, &index);
      invalid += lookup_items(preds, index).invalid;
    }
    out[k] = static_cast<double>(invalid) / static_cast<double>(k * inputs.size());
  }
  return out;
}

std::string prediction_record_json(const std::string& user_id,
                                   std::span<const BeamHypothesis> predictions,
                                   const ValidIdIndex& index) {
  nlohmann::json preds = nlohmann::json::array();
  for (const auto& p : predictions) {
    const std::string* item = index.seen_item(p.id);
    preds.push_back({{"id", p.id.codes},
                     {"logprob", p.log_prob},
                     {"item_id", item ? nlohmann::json(*item) : nlohmann::json(nullptr)}});
  }
  return nlohmann::json{{"user_id", user_id}, {"predictions", preds}}.dump();
}

}  // namespace tiger
