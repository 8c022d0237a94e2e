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

// Per-item content embeddings: the binary table format, the text template
// handed to an external sentence encoder, and synthetic hierarchical
// embeddings.

#ifndef TIGER_EMBEDDINGS_HPP_
#define TIGER_EMBEDDINGS_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tiger/dataset.hpp"

namespace tiger {

using ContentEmbedding = std::vector<double>;

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // Throws UsageError on length mismatch or non-finite values.
  void insert(const std::string& item_id, ContentEmbedding values);
  bool contains(const std::string& item_id) const {
    return entries_.count(item_id) > 0;
  }
  // Throws UsageError for unknown items.
  const ContentEmbedding& at(const std::string& item_id) const;

  // Sorted by item id.
  const std::map<std::string, ContentEmbedding>& entries() const {
    return entries_;
  }
  std::vector<std::string> ids() const;

  // New table restricted to the given items (missing ones are skipped).
  EmbeddingTable subset(const std::vector<std::string>& item_ids) const;

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;

 private:
  std::size_t dim_ = 0;
  std::map<std::string, ContentEmbedding> entries_;
};

// "Title: {title}. Brand: {brand}. Price: {price}. Category: {a > b > c}."
// with clauses for empty fields omitted. The category clause uses the
// deepest category path.
std::string build_content_text(const ItemMeta& meta);

// Binary format, little-endian:
//   "SEMB" | u32 version=1 | u32 rows | u32 dim |
//   rows x [u16 id_len | id bytes | dim x f32]
// Values are stored as f32, so save() rounds; load(save(t)) is exact for
// tables that already hold f32-representable values.
void save_embeddings(const std::filesystem::path& path,
                     const EmbeddingTable& table);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

// Rounds every value to the nearest f32, as a round trip through the file
// format would.
EmbeddingTable round_to_f32(const EmbeddingTable& table);

// embedding = coarse mean + fine offset + noise. Coarse means are standard
// normal directions scaled to norm coarse_radius, fine offsets to norm
// fine_radius, and the noise is standard normal per coordinate times
// noise_scale.
struct SyntheticEmbeddingConfig {
  std::size_t dim = 64;
  double coarse_radius = 1.0;
  double fine_radius = 0.5;
  double noise_scale = 0.1;
  std::uint64_t seed = 0;
};

// labels maps every item to (coarse index, fine index within coarse).
EmbeddingTable synthetic_embeddings(
    const std::map<std::string, std::pair<std::size_t, std::size_t>>& labels,
    const SyntheticEmbeddingConfig& config);

// Convenience overload for the synthetic dataset's catalog.
EmbeddingTable synthetic_embeddings(const SyntheticDataset& data,
                                    std::size_t n_fine_per_coarse,
                                    const SyntheticEmbeddingConfig& config);

}  // namespace tiger

#endif  // TIGER_EMBEDDINGS_HPP_
