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

#include "tiger/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tiger/errors.hpp"

namespace tiger {

namespace {

void check_users(const std::vector<Ranking>& ranked, const std::vector<std::string>& truth) {
  if (ranked.empty()) throw UsageError("metrics: empty user set");
  if (ranked.size() != truth.size()) {
    throw UsageError("metrics: " + std::to_string(ranked.size()) + " rankings for " +
                     std::to_string(truth.size()) + " ground-truth items");
  }
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

struct Scored {
  double score;
  const std::string* id;
};

Ranking top_k(std::vector<Scored>& scored, std::size_t k) {
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<long>(keep), scored.end(),
                    [](const Scored& a, const Scored& b) {
                      if (a.score != b.score) return a.score > b.score;
                      return *a.id < *b.id;
                    });
  Ranking out;
  for (std::size_t i = 0; i < keep; ++i) out.push_back(*scored[i].id);
  return out;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::size_t rank_within(const Ranking& ranked, const std::string& truth, std::size_t k) {
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (ranked[i] == truth) return i + 1;
  }
  return 0;
}

double recall_at_k(const std::vector<Ranking>& ranked, const std::vector<std::string>& truth,
                   std::size_t k) {
  check_users(ranked, truth);
  double hits = 0.0;
  for (std::size_t u = 0; u < ranked.size(); ++u) hits += rank_within(ranked[u], truth[u], k) > 0;
  return hits / static_cast<double>(ranked.size());
}

double ndcg_at_k(const std::vector<Ranking>& ranked, const std::vector<std::string>& truth,
                 std::size_t k) {
  check_users(ranked, truth);
  double total = 0.0;
  for (std::size_t u = 0; u < ranked.size(); ++u) {
    const std::size_t r = rank_within(ranked[u], truth[u], k);
    if (r > 0) total += 1.0 / std::log2(1.0 + static_cast<double>(r));
  }
  return total / static_cast<double>(ranked.size());
}

EntropyResult entropy_at_k(const std::vector<Ranking>& predicted,
                           const std::map<std::string, std::string>& category,
                           std::size_t k, bool base2) {
  if (predicted.empty()) throw UsageError("entropy_at_k: empty user set");
  EntropyResult out;
  double total = 0.0;
  for (const auto& items : predicted) {
    std::map<std::string, std::size_t> counts;
    const std::size_t n = std::min(k, items.size());
    for (std::size_t i = 0; i < n; ++i) {
      auto it = category.find(items[i]);
      if (it == category.end()) {
        ++out.unknown;
        ++counts["unknown"];
      } else {
        ++counts[it->second];
      }
    }
    double h = 0.0;
    for (const auto& [_, c] : counts) {
      const double p = static_cast<double>(c) / static_cast<double>(n);
      h -= p * std::log(p);
    }
    total += base2 ? h / std::log(2.0) : h;
  }
  out.mean = total / static_cast<double>(predicted.size());
  return out;
}

ColdStartSplit coldstart_split(const SplitDataset& data, double unseen_fraction,
                               std::uint64_t seed) {
  if (!(unseen_fraction >= 0.0 && unseen_fraction < 1.0)) {
    throw UsageError("coldstart_split: unseen_fraction must be in [0, 1)");
  }
  std::set<std::string> test_items;
  for (const auto& ex : data.test) test_items.insert(ex.target);
  std::vector<std::string> pool(test_items.begin(), test_items.end());
  const auto n = static_cast<std::size_t>(
      std::llround(unseen_fraction * static_cast<double>(pool.size())));
  Rng rng = Rng(seed).split("coldstart");
  rng.shuffle(pool);
  ColdStartSplit out;
  out.unseen.insert(pool.begin(), pool.begin() + static_cast<long>(n));
  for (const auto& ex : data.train) {
    if (out.unseen.count(ex.target)) {
      ++out.dropped_targets;
      continue;
    }
    Example kept{ex.user_id, {}, ex.target};
    for (const auto& h : ex.history) {
      if (out.unseen.count(h)) {
        ++out.filtered_history_entries;
      } else {
        kept.history.push_back(h);
      }
    }
    if (kept.history.empty()) {
      ++out.dropped_empty_history;
      continue;
    }
    out.train.push_back(std::move(kept));
  }
  return out;
}

ColdStartResult coldstart_retrieve(std::span<const BeamHypothesis> predictions,
                                   const ValidIdIndex& index, double epsilon,
                                   std::size_t k, std::size_t prefix_len) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw UsageError("coldstart_retrieve: epsilon must be in [0, 1]");
  }
  const auto cap = static_cast<std::size_t>(
      std::ceil(epsilon * static_cast<double>(k) - 1e-9));
  ColdStartResult out;
  std::set<std::string> used;
  for (const auto& p : predictions) {
    if (out.items.size() >= k) break;
    if (const std::string* seen = index.seen_item(p.id)) {
      if (used.insert(*seen).second) out.items.push_back(*seen);
    }
    if (p.id.size() < prefix_len) continue;
    std::span<const int> prefix(p.id.codes.data(), prefix_len);
    for (const auto& item : index.unseen_items(prefix)) {
      if (out.items.size() >= k || out.unseen_count >= cap) break;
      if (used.insert(item).second) {
        out.items.push_back(item);
        ++out.unseen_count;
      }
    }
  }
  if (out.items.size() > k) out.items.resize(k);
  return out;
}

Ranking semantic_knn(std::span<const double> query, const EmbeddingTable& table,
                     std::size_t k, const std::set<std::string>& exclude) {
  if (table.empty()) throw UsageError("semantic_knn: empty embedding table");
  if (query.size() != table.dim()) {
    throw UsageError("semantic_knn: query dim " + std::to_string(query.size()) +
                     " vs table dim " + std::to_string(table.dim()));
  }
  const double qn = norm(query);
  std::vector<Scored> scored;
  for (const auto& [id, v] : table.entries()) {
    if (exclude.count(id)) continue;
    double dot = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += query[i] * v[i];
    const double denom = qn * norm(v);
    scored.push_back({denom > 0.0 ? dot / denom : 0.0, &id});
  }
  return top_k(scored, k);
}

SemanticKnnIndex::SemanticKnnIndex(const EmbeddingTable& table) : dim_(table.dim()) {
  if (table.empty()) throw UsageError("semantic_knn: empty embedding table");
  normalized_.resize(static_cast<Eigen::Index>(table.size()),
                     static_cast<Eigen::Index>(dim_));
  Eigen::Index r = 0;
  for (const auto& [id, v] : table.entries()) {
    ids_.push_back(id);
    const double n = norm(v);
    for (std::size_t i = 0; i < dim_; ++i) {
      normalized_(r, static_cast<Eigen::Index>(i)) = n > 0.0 ? v[i] / n : 0.0;
    }
    ++r;
  }
}

Ranking SemanticKnnIndex::query(std::span<const double> q, std::size_t k,
                                const std::set<std::string>& exclude) const {
  if (q.size() != dim_) throw UsageError("semantic_knn: query dim mismatch");
  Eigen::Map<const Eigen::VectorXd> qv(q.data(), static_cast<Eigen::Index>(q.size()));
  const double qn = qv.norm();
  const Eigen::VectorXd sims = normalized_ * (qn > 0.0 ? Eigen::VectorXd(qv / qn)
                                                       : Eigen::VectorXd(qv * 0.0));
  std::vector<Scored> scored;
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (exclude.count(ids_[i])) continue;
    scored.push_back({sims[static_cast<Eigen::Index>(i)], &ids_[i]});
  }
  return top_k(scored, k);
}

void EvalReport::add(std::string metric, std::size_t k, std::string config, double value) {
  rows.push_back({std::move(metric), k, std::move(config), value});
}

double EvalReport::get(const std::string& metric, std::size_t k,
                       const std::string& config) const {
  for (const auto& r : rows) {
    if (r.metric == metric && r.k == k && r.config == config) return r.value;
  }
  throw UsageError("report has no " + metric + "@" + std::to_string(k) + " [" + config + "]");
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json metrics = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    metrics.push_back({{"metric", r.metric}, {"K", r.k}, {"config", r.config},
                       {"value", r.value}});
  }
  nlohmann::ordered_json j;
  j["users"] = users;
  j["invalid_predictions"] = invalid_predictions;
  j["seed"] = seed;
  j["checkpoint"] = checkpoint;
  j["dataset_hash"] = dataset_hash;
  j["metrics"] = metrics;
  return j.dump(2) + "\n";
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "metric,K,config,value\n";
  for (const auto& r : rows) {
    out << csv_escape(r.metric) << ',' << r.k << ',' << csv_escape(r.config) << ','
        << r.value << '\n';
  }
  return out.str();
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(ss.str())));
  return buf;
}

}  // namespace tiger
