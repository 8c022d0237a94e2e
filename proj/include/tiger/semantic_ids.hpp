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

// Semantic ID construction: residual quantization, the quantizer family
// (residual k-means, LSH, random), collision disambiguation and codebook
// diagnostics.

#ifndef TIGER_SEMANTIC_IDS_HPP_
#define TIGER_SEMANTIC_IDS_HPP_

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tiger/dataset.hpp"
#include "tiger/embeddings.hpp"
#include "tiger/kmeans.hpp"
#include "tiger/numeric.hpp"

namespace tiger {

// Full ID tuple: the m learned/hash codewords followed by the disambiguator
// when the assignment has one.
struct SemanticId {
  std::vector<int> codes;

  std::size_t size() const { return codes.size(); }
  int operator[](std::size_t i) const { return codes[i]; }
  std::string to_string() const;

  friend auto operator<=>(const SemanticId&, const SemanticId&) = default;
  friend bool operator==(const SemanticId&, const SemanticId&) = default;
};

enum class IdMethod { kRqVae, kResidualKMeans, kLsh, kRandom };

std::string to_string(IdMethod m);
IdMethod id_method_from_string(const std::string& s);

struct IdAssignment {
  IdMethod method = IdMethod::kRqVae;
  std::size_t m = 0;               // codeword levels before the disambiguator
  bool has_disambiguator = true;
  // Cardinality per tuple position, disambiguator included when present.
  std::vector<int> k_per_level;
  // Smallest code value per position (1 for random IDs, 0 otherwise).
  int min_code = 0;
  std::map<std::string, SemanticId> ids;
  std::map<SemanticId, std::string> reverse;
  std::size_t max_collision_group = 0;

  std::size_t length() const { return k_per_level.size(); }
  // Exclusive upper bound on the code value at `level`.
  int code_bound(std::size_t level) const {
    return k_per_level[level] + min_code;
  }
  const SemanticId& at(const std::string& item_id) const;
  const std::string* item_for(const SemanticId& id) const;
  // Histogram of collision group sizes (size -> number of groups).
  std::map<std::size_t, std::size_t> collision_histogram() const;
};

// Maps an embedding to m codewords.
class Quantizer {
 public:
  virtual ~Quantizer() = default;
  virtual std::vector<int> quantize(std::span<const double> x) const = 0;
  virtual std::vector<int> levels() const = 0;  // codebook size per level
  virtual IdMethod method() const = 0;
};

struct ResidualTrace {
  std::vector<int> codes;
  std::vector<double> quantized;               // ẑ = Σ e_{c_d}
  std::vector<std::vector<double>> residuals;  // r_0 .. r_m
};

// Greedy residual quantization against one codebook per level (K_d x dim).
// Ties go to the lowest codeword index.
ResidualTrace quantize_residual(std::span<const double> z,
                                std::span<const DenseMatrix> codebooks);

// Training-free residual k-means: level d clusters the residuals left by
// levels < d and subtracts the assigned centroid.
class ResidualKMeansQuantizer : public Quantizer {
 public:
  ResidualKMeansQuantizer() = default;
  explicit ResidualKMeansQuantizer(std::vector<DenseMatrix> centroids)
      : centroids_(std::move(centroids)) {}

  std::vector<int> quantize(std::span<const double> x) const override;
  std::vector<int> levels() const override;
  IdMethod method() const override { return IdMethod::kResidualKMeans; }
  const std::vector<DenseMatrix>& centroids() const { return centroids_; }

 private:
  std::vector<DenseMatrix> centroids_;
};

struct ResidualKMeansResult {
  ResidualKMeansQuantizer quantizer;
  IdAssignment assignment;
  std::vector<double> mean_residual_norm;  // after each level, m entries
};

ResidualKMeansResult residual_kmeans_ids(const EmbeddingTable& embeddings,
                                         std::size_t k, std::size_t m,
                                         std::size_t iters, std::uint64_t seed,
                                         int disambiguator_capacity = 256);

// Sign-random-projection hashing: band b maps x to
//   Σ_i 2^i · [w_{b,i} · x > 0],  i = 0 .. h-1
// with hyperplane normals drawn from a standard normal.
class LshHasher : public Quantizer {
 public:
  LshHasher(std::size_t dim, std::size_t bits, std::size_t bands,
            std::uint64_t seed);
  // planes[b] is bits x dim.
  explicit LshHasher(std::vector<DenseMatrix> planes);

  std::vector<int> quantize(std::span<const double> x) const override;
  std::vector<int> levels() const override;
  IdMethod method() const override { return IdMethod::kLsh; }
  std::size_t bits() const { return planes_.empty() ? 0 : planes_[0].rows(); }

 private:
  std::vector<DenseMatrix> planes_;
};

IdAssignment lsh_ids(const EmbeddingTable& embeddings, std::size_t bits,
                     std::size_t bands, std::uint64_t seed,
                     int disambiguator_capacity = 256);

// m codewords uniform on {1..k}; colliding tuples are re-drawn so the IDs
// are unique without a disambiguator. Throws UsageError when the catalog is
// larger than k^m.
IdAssignment random_ids(const std::vector<std::string>& catalog, int k = 255,
                        std::size_t m = 4, std::uint64_t seed = 0);

// Groups items by their m-tuple and appends a disambiguator 0, 1, 2, ... in
// ascending item-id order within each group. The disambiguator cardinality is
// max(disambiguator_capacity, largest group).
IdAssignment disambiguate(const std::map<std::string, std::vector<int>>& tuples,
                          IdMethod method, const std::vector<int>& levels,
                          int disambiguator_capacity = 256);

IdAssignment assign_semantic_ids(const Quantizer& quantizer,
                                 const EmbeddingTable& embeddings,
                                 int disambiguator_capacity = 256);

// IDs for items outside `seen` (e.g. cold-start items). Their disambiguators
// continue after the seen items sharing the same m-tuple, so seen and unseen
// IDs never collide.
IdAssignment extend_assignment(const IdAssignment& seen,
                               const Quantizer& quantizer,
                               const EmbeddingTable& unseen_embeddings);

// |distinct codewords emitted| / K per level over the table's items.
std::vector<double> codebook_usage(const Quantizer& quantizer,
                                   const EmbeddingTable& embeddings);
std::vector<double> codebook_usage(const IdAssignment& assignment);

// Category histograms conditioned on c1 (coarse labels) and on (c1, c2)
// (fine labels).
struct HierarchyRow {
  std::vector<int> prefix;
  std::string category;
  std::size_t count = 0;
  double fraction = 0.0;  // within the prefix bucket
};

struct HierarchyReport {
  std::vector<HierarchyRow> by_first;
  std::vector<HierarchyRow> by_first_two;
  std::string to_csv() const;
  // For each c1 value: share of the bucket taken by its most common coarse
  // category.
  std::map<int, double> modal_share_by_first() const;
};

HierarchyReport hierarchy_report(const IdAssignment& assignment,
                                 const CategoryLabels& labels);

// JSON with sorted keys:
//   {"K_per_level":[...],"ids":{item:[c0,...]},"m":3,"method":"rqvae",...}
void save_assignment(const std::filesystem::path& path, const IdAssignment& a);
IdAssignment load_assignment(const std::filesystem::path& path);
std::string assignment_to_json(const IdAssignment& a);

}  // namespace tiger

#endif  // TIGER_SEMANTIC_IDS_HPP_
