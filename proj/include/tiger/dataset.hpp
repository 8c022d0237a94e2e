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

// Interaction logs, per-user sequences, leave-one-out splits and the
// synthetic desk-scale generator.

#ifndef TIGER_DATASET_HPP_
#define TIGER_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace tiger {

struct Interaction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct ItemMeta {
  std::string item_id;
  std::string title;
  std::string brand;
  std::string price;
  // Each entry is one category path, root first.
  std::vector<std::vector<std::string>> categories;
};

struct InteractionSequence {
  std::string user_id;
  std::vector<std::string> items;  // ascending timestamp

  friend bool operator==(const InteractionSequence&,
                         const InteractionSequence&) = default;
};

// One (history -> next item) pair.
struct Example {
  std::string user_id;
  std::vector<std::string> history;
  std::string target;

  friend bool operator==(const Example&, const Example&) = default;
};

struct SplitDataset {
  std::vector<Example> train;
  std::vector<Example> validation;
  std::vector<Example> test;
  std::vector<std::string> catalog;  // sorted, unique
  std::size_t excluded_short = 0;    // sequences with fewer than 3 items
};

// Coarse and fine category label per item. For Amazon metadata the fine
// label is the last element of the deepest category path and the coarse
// label is the element below the root of that path.
struct CategoryLabels {
  std::map<std::string, std::string> coarse;
  std::map<std::string, std::string> fine;
};

struct ParseReport {
  std::vector<Interaction> interactions;
  std::vector<std::size_t> malformed_lines;  // 1-based
  std::size_t total_lines = 0;               // non-empty lines
};

// Reads JSON Lines with reviewerID, asin and unixReviewTime. Throws
// DataError if the file cannot be opened or more than 10% of the non-empty
// lines are malformed.
ParseReport parse_reviews(const std::filesystem::path& path);

// Reads JSON Lines metadata (asin, title, brand, price, categories). Lines
// without an asin are skipped; the first record for an asin wins.
std::vector<ItemMeta> parse_metadata(const std::filesystem::path& path);

// Drops interactions whose item has no metadata record. Returns the number
// of dropped interactions and writes the distinct dropped items count.
std::size_t drop_items_without_metadata(std::vector<Interaction>& interactions,
                                        const std::vector<ItemMeta>& metadata,
                                        std::size_t* dropped_items = nullptr);

CategoryLabels labels_from_metadata(const std::vector<ItemMeta>& metadata);

// Groups by user, sorts each user's items by (timestamp, item_id) and drops
// users with fewer than min_len interactions. Output is ordered by user_id.
// Repeated interactions with the same item are kept.
std::vector<InteractionSequence> build_sequences(
    const std::vector<Interaction>& interactions, std::size_t min_len = 5);

// Leave-one-out: last item is the test target, second to last the
// validation target. With all_prefixes the training set holds every
// growing prefix pair whose target precedes the validation item; otherwise
// only the longest one. Histories keep the most recent max_history items.
SplitDataset leave_one_out_split(const std::vector<InteractionSequence>& sequences,
                                 std::size_t max_history = 20,
                                 bool all_prefixes = true);

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  double mean_length = 0.0;
  double median_length = 0.0;
};

DatasetStats dataset_stats(const std::vector<InteractionSequence>& sequences);

// Catalog = sorted distinct items across the sequences.
std::vector<std::string> catalog_of(
    const std::vector<InteractionSequence>& sequences);

// Versioned processed-dataset file with sorted keys:
//   {"catalog":[...],"users":[{"items":[...],"user_id":...}],"version":1}
void save_processed_dataset(const std::filesystem::path& path,
                            const std::vector<InteractionSequence>& sequences,
                            const std::vector<std::string>& catalog);
std::vector<InteractionSequence> load_processed_dataset(
    const std::filesystem::path& path, std::vector<std::string>* catalog = nullptr);

void save_category_labels(const std::filesystem::path& path,
                          const CategoryLabels& labels);
CategoryLabels load_category_labels(const std::filesystem::path& path);

// Synthetic catalog: n_coarse x n_fine_per_coarse fine categories with
// balanced item counts. User sequences follow a Markov chain over fine
// categories; the item inside a category is drawn with Zipf popularity
// weight 1 / (rank + 1)^zipf_exponent over a seeded rank order.
//
// Default transition from fine category f to g:
//   stay_prob                          if g == f
//   sibling_prob / (n_fine - 1)        if g shares f's coarse category
//   (1 - stay_prob - sibling_prob) / F for every g (uniform jump)
struct SyntheticConfig {
  std::size_t n_users = 5000;
  std::size_t n_items = 2000;
  std::size_t n_coarse = 4;
  std::size_t n_fine_per_coarse = 8;
  double stay_prob = 0.6;
  double sibling_prob = 0.3;
  double zipf_exponent = 1.0;
  std::size_t min_length = 5;
  double mean_extra_length = 4.0;  // geometric tail above min_length
  std::size_t max_length = 50;
  std::uint64_t seed = 0;
  // Optional explicit F x F row-stochastic matrix overriding the above.
  std::vector<std::vector<double>> transition;
};

struct SyntheticDataset {
  std::vector<InteractionSequence> sequences;
  std::vector<std::string> catalog;
  CategoryLabels labels;
  std::map<std::string, std::size_t> fine_index;    // item -> fine category
  std::map<std::string, std::size_t> coarse_index;  // item -> coarse category
  std::vector<std::vector<double>> transition;
};

std::vector<std::vector<double>> synthetic_transition_matrix(
    const SyntheticConfig& config);

SyntheticDataset synthetic_dataset(const SyntheticConfig& config);

std::string synthetic_item_id(std::size_t index);
std::string synthetic_coarse_label(std::size_t coarse);
std::string synthetic_fine_label(std::size_t coarse, std::size_t fine);

}  // namespace tiger

#endif  // TIGER_DATASET_HPP_
