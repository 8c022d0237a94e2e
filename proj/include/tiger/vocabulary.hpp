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

// Token vocabulary for the retriever: specials, one block of codeword tokens
// per Semantic-ID position, then hashed user tokens.

#ifndef TIGER_VOCABULARY_HPP_
#define TIGER_VOCABULARY_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tiger/semantic_ids.hpp"

namespace tiger {

class TokenVocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kSpecials = 2;

  TokenVocabulary() = default;
  TokenVocabulary(std::vector<int> level_sizes, int user_buckets);

  int size() const { return size_; }
  std::size_t levels() const { return level_sizes_.size(); }
  int level_size(std::size_t level) const { return level_sizes_.at(level); }
  const std::vector<int>& level_sizes() const { return level_sizes_; }
  int user_buckets() const { return user_buckets_; }

  // First token id of a level's block.
  int level_offset(std::size_t level) const { return offsets_.at(level); }
  // Throws UsageError when level or code is out of range.
  int semantic_token(std::size_t level, int code) const;
  int user_token(int bucket) const;

  enum class Kind { kSpecial, kSemantic, kUser };
  struct Decoded {
    Kind kind = Kind::kSpecial;
    std::size_t level = 0;  // semantic tokens only
    int value = 0;          // codeword, user bucket or special id
  };
  // Throws UsageError for ids outside [0, size()).
  Decoded decode(int token) const;

  friend bool operator==(const TokenVocabulary&, const TokenVocabulary&) = default;

 private:
  std::vector<int> level_sizes_;
  std::vector<int> offsets_;
  int user_buckets_ = 0;
  int size_ = kSpecials;
};

// One block per ID position sized by the assignment's code bound.
TokenVocabulary vocabulary_for(const IdAssignment& assignment, int user_buckets);

// FNV-1a 64-bit of the UTF-8 bytes, modulo buckets.
int hash_user(std::string_view raw_user_id, int buckets = 2000);

struct TrainingExample {
  std::vector<int> input;   // [user token] ++ 4 tokens per history item
  std::vector<int> target;  // codeword tokens of the target item
};

// Input tokens for a history: optional user token, then the codeword tokens
// of the most recent max_history items, oldest first. Throws UsageError for
// an empty history or an item without an ID.
std::vector<int> encode_input(std::string_view user_id,
                              const std::vector<std::string>& history,
                              const IdAssignment& assignment,
                              const TokenVocabulary& vocab,
                              std::size_t max_history = 20,
                              bool use_user_token = true);

std::vector<int> encode_target(const SemanticId& id, const TokenVocabulary& vocab);

TrainingExample encode_example(std::string_view user_id,
                               const std::vector<std::string>& history,
                               const std::string& target,
                               const IdAssignment& assignment,
                               const TokenVocabulary& vocab,
                               std::size_t max_history = 20,
                               bool use_user_token = true);

// Inverse of encode_input's history part: the Semantic-ID tuples in order.
std::vector<SemanticId> decode_history(const std::vector<int>& input,
                                       const TokenVocabulary& vocab);

}  // namespace tiger

#endif  // TIGER_VOCABULARY_HPP_
