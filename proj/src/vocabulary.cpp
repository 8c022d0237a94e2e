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

#include "tiger/vocabulary.hpp"

#include "tiger/errors.hpp"
#include "tiger/numeric.hpp"

namespace tiger {

TokenVocabulary::TokenVocabulary(std::vector<int> level_sizes, int user_buckets)
    : level_sizes_(std::move(level_sizes)), user_buckets_(user_buckets) {
  if (user_buckets_ < 0) throw UsageError("vocabulary: negative user bucket count");
  int next = kSpecials;
  for (int k : level_sizes_) {
    if (k <= 0) throw UsageError("vocabulary: level sizes must be positive");
    offsets_.push_back(next);
    next += k;
  }
  size_ = next + user_buckets_;
}

int TokenVocabulary::semantic_token(std::size_t level, int code) const {
  if (level >= level_sizes_.size() || code < 0 || code >= level_sizes_[level]) {
    throw UsageError("vocabulary: no token for level " + std::to_string(level) +
                     " code " + std::to_string(code));
  }
  return offsets_[level] + code;
}

int TokenVocabulary::user_token(int bucket) const {
  if (bucket < 0 || bucket >= user_buckets_) {
    throw UsageError("vocabulary: user bucket out of range");
  }
  return size_ - user_buckets_ + bucket;
}

TokenVocabulary::Decoded TokenVocabulary::decode(int token) const {
  if (token < 0 || token >= size_) {
    throw UsageError("vocabulary: token " + std::to_string(token) + " out of range");
  }
  if (token < kSpecials) return {Kind::kSpecial, 0, token};
  const int user_start = size_ - user_buckets_;
  if (token >= user_start) return {Kind::kUser, 0, token - user_start};
  for (std::size_t l = level_sizes_.size(); l-- > 0;) {
    if (token >= offsets_[l]) return {Kind::kSemantic, l, token - offsets_[l]};
  }
  throw UsageError("vocabulary: unreachable token");
}

TokenVocabulary vocabulary_for(const IdAssignment& assignment, int user_buckets) {
  std::vector<int> sizes;
  for (std::size_t l = 0; l < assignment.length(); ++l) {
    sizes.push_back(assignment.code_bound(l));
  }
  return TokenVocabulary(std::move(sizes), user_buckets);
}

int hash_user(std::string_view raw_user_id, int buckets) {
  if (buckets <= 0) throw UsageError("hash_user: buckets must be positive");
  return static_cast<int>(fnv1a64(raw_user_id) % static_cast<std::uint64_t>(buckets));
}

std::vector<int> encode_target(const SemanticId& id, const TokenVocabulary& vocab) {
  if (id.size() != vocab.levels()) {
    throw UsageError("encode_target: ID " + id.to_string() + " has " +
                     std::to_string(id.size()) + " codewords, vocabulary has " +
                     std::to_string(vocab.levels()) + " levels");
  }
  std::vector<int> out;
  for (std::size_t l = 0; l < id.size(); ++l) out.push_back(vocab.semantic_token(l, id[l]));
  return out;
}

std::vector<int> encode_input(std::string_view user_id,
                              const std::vector<std::string>& history,
                              const IdAssignment& assignment,
                              const TokenVocabulary& vocab,
                              std::size_t max_history, bool use_user_token) {
  if (history.empty()) throw UsageError("encode_input: empty history");
  std::vector<int> out;
  if (use_user_token) out.push_back(vocab.user_token(hash_user(user_id, vocab.user_buckets())));
  std::size_t begin = history.size() > max_history ? history.size() - max_history : 0;
  for (std::size_t i = begin; i < history.size(); ++i) {
    auto t = encode_target(assignment.at(history[i]), vocab);
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

TrainingExample encode_example(std::string_view user_id,
                               const std::vector<std::string>& history,
                               const std::string& target,
                               const IdAssignment& assignment,
                               const TokenVocabulary& vocab,
                               std::size_t max_history, bool use_user_token) {
  return {encode_input(user_id, history, assignment, vocab, max_history, use_user_token),
          encode_target(assignment.at(target), vocab)};
}

std::vector<SemanticId> decode_history(const std::vector<int>& input,
                                       const TokenVocabulary& vocab) {
  std::vector<SemanticId> out;
  SemanticId current;
  for (int tok : input) {
    auto d = vocab.decode(tok);
    if (d.kind != TokenVocabulary::Kind::kSemantic) continue;
    if (d.level != current.size()) {
      throw UsageError("decode_history: codeword out of level order");
    }
    current.codes.push_back(d.value);
    if (current.size() == vocab.levels()) {
      out.push_back(std::move(current));
      current = {};
    }
  }
  if (!current.codes.empty()) throw UsageError("decode_history: truncated ID");
  return out;
}

}  // namespace tiger
