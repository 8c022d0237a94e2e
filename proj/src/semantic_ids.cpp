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

#include "tiger/semantic_ids.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tiger/errors.hpp"

namespace tiger {

using nlohmann::json;

std::string SemanticId::to_string() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (i) os << ',';
    os << codes[i];
  }
  os << ')';
  return os.str();
}

std::string to_string(IdMethod m) {
  switch (m) {
    case IdMethod::kRqVae: return "rqvae";
    case IdMethod::kResidualKMeans: return "residual_kmeans";
    case IdMethod::kLsh: return "lsh";
    case IdMethod::kRandom: return "random";
  }
  return "unknown";
}

IdMethod id_method_from_string(const std::string& s) {
  if (s == "rqvae") return IdMethod::kRqVae;
  if (s == "residual_kmeans") return IdMethod::kResidualKMeans;
  if (s == "lsh") return IdMethod::kLsh;
  if (s == "random") return IdMethod::kRandom;
  throw UsageError("unknown quantizer method '" + s +
                   "' (expected rqvae, residual_kmeans, lsh or random)");
}

const SemanticId& IdAssignment::at(const std::string& item_id) const {
  auto it = ids.find(item_id);
  if (it == ids.end()) throw UsageError("item " + item_id + " has no Semantic ID");
  return it->second;
}

const std::string* IdAssignment::item_for(const SemanticId& id) const {
  auto it = reverse.find(id);
  return it == reverse.end() ? nullptr : &it->second;
}

std::map<std::size_t, std::size_t> IdAssignment::collision_histogram() const {
  std::map<std::vector<int>, std::size_t> groups;
  for (const auto& [_, id] : ids) {
    std::vector<int> prefix(id.codes.begin(),
                            id.codes.begin() + static_cast<std::ptrdiff_t>(m));
    ++groups[prefix];
  }
  std::map<std::size_t, std::size_t> hist;
  for (const auto& [_, n] : groups) ++hist[n];
  return hist;
}

ResidualTrace quantize_residual(std::span<const double> z,
                                std::span<const DenseMatrix> codebooks) {
  ResidualTrace t;
  std::vector<double> r(z.begin(), z.end());
  t.quantized.assign(z.size(), 0.0);
  t.residuals.push_back(r);
  for (const auto& cb : codebooks) {
    if (cb.cols() != z.size()) {
      throw UsageError("quantize_residual: latent has dim " +
                       std::to_string(z.size()) + ", codebook is " +
                       cb.shape_string());
    }
    int c = nearest_row(cb, r);
    t.codes.push_back(c);
    auto e = cb.row(static_cast<std::size_t>(c));
    for (std::size_t i = 0; i < r.size(); ++i) {
      r[i] -= e[i];
      t.quantized[i] += e[i];
    }
    t.residuals.push_back(r);
  }
  return t;
}

std::vector<int> ResidualKMeansQuantizer::quantize(std::span<const double> x) const {
  return quantize_residual(x, centroids_).codes;
}

std::vector<int> ResidualKMeansQuantizer::levels() const {
  std::vector<int> out;
  for (const auto& c : centroids_) out.push_back(static_cast<int>(c.rows()));
  return out;
}

namespace {

DenseMatrix table_matrix(const EmbeddingTable& t) {
  DenseMatrix m(t.size(), t.dim());
  std::size_t i = 0;
  for (const auto& [_, v] : t.entries()) {
    std::copy(v.begin(), v.end(), m.row(i++).begin());
  }
  return m;
}

}  // namespace

ResidualKMeansResult residual_kmeans_ids(const EmbeddingTable& embeddings,
                                         std::size_t k, std::size_t m,
                                         std::size_t iters, std::uint64_t seed,
                                         int disambiguator_capacity) {
  DenseMatrix points = table_matrix(embeddings);
  const std::vector<std::string> ids = embeddings.ids();
  std::vector<std::vector<int>> codes(ids.size());
  std::vector<DenseMatrix> centroids;
  ResidualKMeansResult out;
  Rng root(seed);
  for (std::size_t level = 0; level < m; ++level) {
    KMeansResult km = kmeans(points, k, iters, root.split(level).next_u64());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      int c = km.assignments[i];
      codes[i].push_back(c);
      auto p = points.row(i);
      auto e = km.centroids.row(static_cast<std::size_t>(c));
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= e[j];
    }
    double norm_sum = 0.0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      norm_sum += points.mat().row(static_cast<Eigen::Index>(i)).norm();
    }
    out.mean_residual_norm.push_back(ids.empty() ? 0.0
                                                 : norm_sum / static_cast<double>(ids.size()));
    centroids.push_back(std::move(km.centroids));
  }
  std::map<std::string, std::vector<int>> tuples;
  for (std::size_t i = 0; i < ids.size(); ++i) tuples[ids[i]] = codes[i];
  out.quantizer = ResidualKMeansQuantizer(std::move(centroids));
  out.assignment = disambiguate(tuples, IdMethod::kResidualKMeans,
                                std::vector<int>(m, static_cast<int>(k)),
                                disambiguator_capacity);
  return out;
}

LshHasher::LshHasher(std::size_t dim, std::size_t bits, std::size_t bands,
                     std::uint64_t seed) {
  if (bits == 0 || bits > 30) throw UsageError("lsh: bits must be in [1, 30]");
  Rng rng = Rng(seed).split("lsh");
  for (std::size_t b = 0; b < bands; ++b) {
    DenseMatrix p(bits, dim);
    fill_normal(p, rng, 1.0);
    planes_.push_back(std::move(p));
  }
}

LshHasher::LshHasher(std::vector<DenseMatrix> planes) : planes_(std::move(planes)) {
  for (const auto& p : planes_) {
    if (p.rows() == 0 || p.rows() > 30) {
      throw UsageError("lsh: bits must be in [1, 30]");
    }
  }
}

std::vector<int> LshHasher::quantize(std::span<const double> x) const {
  std::vector<int> out;
  out.reserve(planes_.size());
  for (const auto& p : planes_) {
    if (p.cols() != x.size()) {
      throw UsageError("lsh: embedding dim " + std::to_string(x.size()) +
                       " does not match hyperplanes " + p.shape_string());
    }
    int code = 0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double dot = 0.0;
      auto w = p.row(i);
      for (std::size_t j = 0; j < x.size(); ++j) dot += w[j] * x[j];
      if (dot > 0.0) code |= 1 << i;
    }
    out.push_back(code);
  }
  return out;
}

std::vector<int> LshHasher::levels() const {
  std::vector<int> out;
  for (const auto& p : planes_) out.push_back(1 << p.rows());
  return out;
}

IdAssignment lsh_ids(const EmbeddingTable& embeddings, std::size_t bits,
                     std::size_t bands, std::uint64_t seed,
                     int disambiguator_capacity) {
  LshHasher hasher(embeddings.dim(), bits, bands, seed);
  return assign_semantic_ids(hasher, embeddings, disambiguator_capacity);
}

IdAssignment random_ids(const std::vector<std::string>& catalog, int k,
                        std::size_t m, std::uint64_t seed) {
  if (k < 1 || m == 0) throw UsageError("random_ids: k and m must be positive");
  const double capacity = std::pow(static_cast<double>(k), static_cast<double>(m));
  if (static_cast<double>(catalog.size()) > capacity) {
    throw UsageError("random_ids: catalog of " + std::to_string(catalog.size()) +
                     " items exceeds k^m capacity");
  }
  std::vector<std::string> items = catalog;
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());

  IdAssignment a;
  a.method = IdMethod::kRandom;
  a.m = m;
  a.has_disambiguator = false;
  a.k_per_level.assign(m, k);
  a.min_code = 1;
  Rng rng = Rng(seed).split("random_ids");
  for (const auto& item : items) {
    SemanticId id;
    do {
      id.codes.clear();
      for (std::size_t l = 0; l < m; ++l) {
        id.codes.push_back(1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(k))));
      }
    } while (a.reverse.count(id));
    a.reverse[id] = item;
    a.ids[item] = std::move(id);
  }
  a.max_collision_group = items.empty() ? 0 : 1;
  return a;
}

IdAssignment disambiguate(const std::map<std::string, std::vector<int>>& tuples,
                          IdMethod method, const std::vector<int>& levels,
                          int disambiguator_capacity) {
  IdAssignment a;
  a.method = method;
  a.m = levels.size();
  a.has_disambiguator = true;
  a.k_per_level = levels;
  std::map<std::vector<int>, int> next;
  // tuples is ordered by item id, so each group is numbered in ascending
  // item-id order.
  for (const auto& [item, codes] : tuples) {
    if (codes.size() != levels.size()) {
      throw UsageError("disambiguate: tuple for " + item + " has wrong length");
    }
    int d = next[codes]++;
    SemanticId id{codes};
    id.codes.push_back(d);
    a.reverse[id] = item;
    a.ids[item] = std::move(id);
  }
  int largest = 0;
  for (const auto& [_, n] : next) largest = std::max(largest, n);
  a.max_collision_group = static_cast<std::size_t>(largest);
  a.k_per_level.push_back(std::max(disambiguator_capacity, largest));
  return a;
}

IdAssignment assign_semantic_ids(const Quantizer& quantizer,
                                 const EmbeddingTable& embeddings,
                                 int disambiguator_capacity) {
  std::map<std::string, std::vector<int>> tuples;
  for (const auto& [id, x] : embeddings.entries()) tuples[id] = quantizer.quantize(x);
  return disambiguate(tuples, quantizer.method(), quantizer.levels(),
                      disambiguator_capacity);
}

IdAssignment extend_assignment(const IdAssignment& seen, const Quantizer& quantizer,
                               const EmbeddingTable& unseen_embeddings) {
  if (!seen.has_disambiguator) {
    throw UsageError("extend_assignment: assignment has no disambiguator level");
  }
  std::map<std::vector<int>, int> next;
  for (const auto& [_, id] : seen.ids) {
    std::vector<int> prefix(id.codes.begin(),
                            id.codes.begin() + static_cast<std::ptrdiff_t>(seen.m));
    next[prefix] = std::max(next[prefix], id.codes.back() + 1);
  }
  IdAssignment out;
  out.method = seen.method;
  out.m = seen.m;
  out.has_disambiguator = true;
  out.k_per_level = seen.k_per_level;
  int largest = 0;
  for (const auto& [item, x] : unseen_embeddings.entries()) {
    if (seen.ids.count(item)) continue;
    std::vector<int> codes = quantizer.quantize(x);
    int d = next[codes]++;
    largest = std::max(largest, d + 1);
    SemanticId id{codes};
    id.codes.push_back(d);
    out.reverse[id] = item;
    out.ids[item] = std::move(id);
  }
  out.max_collision_group = static_cast<std::size_t>(largest);
  out.k_per_level.back() = std::max(out.k_per_level.back(), largest);
  return out;
}

std::vector<double> codebook_usage(const Quantizer& quantizer,
                                   const EmbeddingTable& embeddings) {
  const std::vector<int> levels = quantizer.levels();
  std::vector<std::set<int>> used(levels.size());
  for (const auto& [_, x] : embeddings.entries()) {
    std::vector<int> codes = quantizer.quantize(x);
    for (std::size_t l = 0; l < levels.size(); ++l) used[l].insert(codes[l]);
  }
  std::vector<double> out;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    out.push_back(static_cast<double>(used[l].size()) / levels[l]);
  }
  return out;
}

std::vector<double> codebook_usage(const IdAssignment& a) {
  std::vector<std::set<int>> used(a.m);
  for (const auto& [_, id] : a.ids) {
    for (std::size_t l = 0; l < a.m; ++l) used[l].insert(id.codes[l]);
  }
  std::vector<double> out;
  for (std::size_t l = 0; l < a.m; ++l) {
    out.push_back(static_cast<double>(used[l].size()) / a.k_per_level[l]);
  }
  return out;
}

std::string HierarchyReport::to_csv() const {
  std::ostringstream os;
  os << "level,prefix,category,count,fraction\n";
  auto emit = [&](int level, const std::vector<HierarchyRow>& rows) {
    for (const auto& r : rows) {
      os << level << ',';
      for (std::size_t i = 0; i < r.prefix.size(); ++i) {
        if (i) os << '-';
        os << r.prefix[i];
      }
      os << ',' << r.category << ',' << r.count << ',' << r.fraction << '\n';
    }
  };
  emit(1, by_first);
  emit(2, by_first_two);
  return os.str();
}

std::map<int, double> HierarchyReport::modal_share_by_first() const {
  std::map<int, double> out;
  for (const auto& r : by_first) {
    double& v = out[r.prefix.front()];
    v = std::max(v, r.fraction);
  }
  return out;
}

HierarchyReport hierarchy_report(const IdAssignment& assignment,
                                 const CategoryLabels& labels) {
  std::map<std::vector<int>, std::map<std::string, std::size_t>> first, first_two;
  for (const auto& [item, id] : assignment.ids) {
    auto coarse = labels.coarse.find(item);
    auto fine = labels.fine.find(item);
    const std::string c = coarse == labels.coarse.end() ? "unknown" : coarse->second;
    const std::string f = fine == labels.fine.end() ? "unknown" : fine->second;
    ++first[{id.codes[0]}][c];
    if (id.size() > 1) ++first_two[{id.codes[0], id.codes[1]}][f];
  }
  auto flatten = [](const auto& groups) {
    std::vector<HierarchyRow> rows;
    for (const auto& [prefix, hist] : groups) {
      std::size_t total = 0;
      for (const auto& [_, n] : hist) total += n;
      for (const auto& [cat, n] : hist) {
        rows.push_back({prefix, cat, n,
                        static_cast<double>(n) / static_cast<double>(total)});
      }
    }
    return rows;
  };
  return {flatten(first), flatten(first_two)};
}

std::string assignment_to_json(const IdAssignment& a) {
  json ids = json::object();
  for (const auto& [item, id] : a.ids) ids[item] = id.codes;
  json doc = {{"method", to_string(a.method)},
              {"m", a.m},
              {"K_per_level", a.k_per_level},
              {"has_disambiguator", a.has_disambiguator},
              {"min_code", a.min_code},
              {"max_collision_group", a.max_collision_group},
              {"ids", ids}};
  return doc.dump() + "\n";
}

void save_assignment(const std::filesystem::path& path, const IdAssignment& a) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << assignment_to_json(a);
}

IdAssignment load_assignment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    json doc = json::parse(in);
    IdAssignment a;
    a.method = id_method_from_string(doc.at("method").get<std::string>());
    a.m = doc.at("m").get<std::size_t>();
    a.k_per_level = doc.at("K_per_level").get<std::vector<int>>();
    a.has_disambiguator = doc.value("has_disambiguator", true);
    a.min_code = doc.value("min_code", 0);
    a.max_collision_group = doc.value("max_collision_group", std::size_t{0});
    for (const auto& [item, codes] : doc.at("ids").items()) {
      SemanticId id{codes.get<std::vector<int>>()};
      if (id.size() != a.length()) {
        throw DataError(path.string() + ": ID of " + item + " has wrong length");
      }
      a.reverse[id] = item;
      a.ids[item] = std::move(id);
    }
    if (a.reverse.size() != a.ids.size()) {
      throw DataError(path.string() + ": Semantic IDs are not unique");
    }
    return a;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const UsageError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace tiger
