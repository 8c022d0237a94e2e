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

#include "tiger/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tiger/errors.hpp"
#include "tiger/numeric.hpp"

namespace tiger {

using nlohmann::json;

namespace {

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

std::string string_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number()) return it->dump();
  return {};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

json read_json(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace

ParseReport parse_reviews(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  ParseReport report;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    ++report.total_lines;
    try {
      json j = json::parse(line);
      const auto& user = j.at("reviewerID");
      const auto& item = j.at("asin");
      const auto& ts = j.at("unixReviewTime");
      if (!user.is_string() || !item.is_string() || !ts.is_number_integer()) {
        throw std::invalid_argument("field type");
      }
      Interaction x{user.get<std::string>(), item.get<std::string>(),
                    ts.get<std::int64_t>()};
      if (x.user_id.empty() || x.item_id.empty() || x.timestamp < 0) {
        throw std::invalid_argument("field value");
      }
      report.interactions.push_back(std::move(x));
    } catch (const std::exception&) {
      report.malformed_lines.push_back(line_no);
    }
  }
  if (report.total_lines > 0 &&
      report.malformed_lines.size() * 10 > report.total_lines) {
    std::ostringstream os;
    os << path.string() << ": " << report.malformed_lines.size() << " of "
       << report.total_lines << " lines malformed (first at line "
       << report.malformed_lines.front() << ")";
    throw DataError(os.str());
  }
  return report;
}

std::vector<ItemMeta> parse_metadata(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  std::vector<ItemMeta> out;
  std::set<std::string> seen;
  std::string line;
  while (std::getline(in, line)) {
    if (blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      continue;
    }
    ItemMeta m;
    m.item_id = string_field(j, "asin");
    if (m.item_id.empty() || !seen.insert(m.item_id).second) continue;
    m.title = string_field(j, "title");
    m.brand = string_field(j, "brand");
    m.price = string_field(j, "price");
    if (auto it = j.find("categories"); it != j.end() && it->is_array()) {
      for (const auto& path_json : *it) {
        if (!path_json.is_array()) continue;
        std::vector<std::string> p;
        for (const auto& c : path_json) {
          if (c.is_string()) p.push_back(c.get<std::string>());
        }
        if (!p.empty()) m.categories.push_back(std::move(p));
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::size_t drop_items_without_metadata(std::vector<Interaction>& interactions,
                                        const std::vector<ItemMeta>& metadata,
                                        std::size_t* dropped_items) {
  std::set<std::string> known;
  for (const auto& m : metadata) known.insert(m.item_id);
  std::set<std::string> dropped;
  auto keep_end = std::stable_partition(
      interactions.begin(), interactions.end(), [&](const Interaction& x) {
        if (known.count(x.item_id)) return true;
        dropped.insert(x.item_id);
        return false;
      });
  std::size_t n = static_cast<std::size_t>(interactions.end() - keep_end);
  interactions.erase(keep_end, interactions.end());
  if (dropped_items) *dropped_items = dropped.size();
  return n;
}

CategoryLabels labels_from_metadata(const std::vector<ItemMeta>& metadata) {
  CategoryLabels labels;
  for (const auto& m : metadata) {
    const std::vector<std::string>* deepest = nullptr;
    for (const auto& p : m.categories) {
      if (!deepest || p.size() > deepest->size()) deepest = &p;
    }
    if (!deepest) continue;
    labels.fine[m.item_id] = deepest->back();
    labels.coarse[m.item_id] =
        deepest->size() > 1 ? (*deepest)[1] : deepest->front();
  }
  return labels;
}

std::vector<InteractionSequence> build_sequences(
    const std::vector<Interaction>& interactions, std::size_t min_len) {
  std::map<std::string, std::vector<std::pair<std::int64_t, std::string>>> by_user;
  for (const auto& x : interactions) {
    by_user[x.user_id].emplace_back(x.timestamp, x.item_id);
  }
  std::vector<InteractionSequence> out;
  for (auto& [user, events] : by_user) {
    if (events.size() < min_len) continue;
    std::stable_sort(events.begin(), events.end());
    InteractionSequence s{user, {}};
    s.items.reserve(events.size());
    for (auto& e : events) s.items.push_back(std::move(e.second));
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::vector<std::string> capped_history(const std::vector<std::string>& items,
                                        std::size_t end, std::size_t max_history) {
  std::size_t begin = end > max_history ? end - max_history : 0;
  return {items.begin() + static_cast<std::ptrdiff_t>(begin),
          items.begin() + static_cast<std::ptrdiff_t>(end)};
}

}  // namespace

SplitDataset leave_one_out_split(const std::vector<InteractionSequence>& sequences,
                                 std::size_t max_history, bool all_prefixes) {
  SplitDataset split;
  std::set<std::string> catalog;
  for (const auto& s : sequences) {
    const std::size_t n = s.items.size();
    if (n < 3) {
      ++split.excluded_short;
      continue;
    }
    catalog.insert(s.items.begin(), s.items.end());
    std::size_t first_target = all_prefixes ? 1 : n - 3;
    if (first_target == 0) first_target = 1;
    for (std::size_t j = first_target; j + 2 < n; ++j) {
      split.train.push_back({s.user_id, capped_history(s.items, j, max_history),
                             s.items[j]});
    }
    split.validation.push_back(
        {s.user_id, capped_history(s.items, n - 2, max_history), s.items[n - 2]});
    split.test.push_back(
        {s.user_id, capped_history(s.items, n - 1, max_history), s.items[n - 1]});
  }
  split.catalog.assign(catalog.begin(), catalog.end());
  return split;
}

DatasetStats dataset_stats(const std::vector<InteractionSequence>& sequences) {
  DatasetStats st;
  st.users = sequences.size();
  st.items = catalog_of(sequences).size();
  if (sequences.empty()) return st;
  std::vector<std::size_t> lengths;
  double total = 0.0;
  for (const auto& s : sequences) {
    lengths.push_back(s.items.size());
    total += static_cast<double>(s.items.size());
  }
  std::sort(lengths.begin(), lengths.end());
  st.mean_length = total / static_cast<double>(lengths.size());
  std::size_t mid = lengths.size() / 2;
  st.median_length = lengths.size() % 2 == 1
                         ? static_cast<double>(lengths[mid])
                         : 0.5 * static_cast<double>(lengths[mid - 1] + lengths[mid]);
  return st;
}

std::vector<std::string> catalog_of(
    const std::vector<InteractionSequence>& sequences) {
  std::set<std::string> items;
  for (const auto& s : sequences) items.insert(s.items.begin(), s.items.end());
  return {items.begin(), items.end()};
}

void save_processed_dataset(const std::filesystem::path& path,
                            const std::vector<InteractionSequence>& sequences,
                            const std::vector<std::string>& catalog) {
  json users = json::array();
  for (const auto& s : sequences) {
    users.push_back({{"user_id", s.user_id}, {"items", s.items}});
  }
  json doc = {{"version", 1}, {"users", users}, {"catalog", catalog}};
  write_text(path, doc.dump() + "\n");
}

std::vector<InteractionSequence> load_processed_dataset(
    const std::filesystem::path& path, std::vector<std::string>* catalog) {
  json doc = read_json(path);
  try {
    if (doc.at("version").get<int>() != 1) {
      throw DataError(path.string() + ": unsupported dataset version");
    }
    std::vector<InteractionSequence> out;
    for (const auto& u : doc.at("users")) {
      out.push_back({u.at("user_id").get<std::string>(),
                     u.at("items").get<std::vector<std::string>>()});
    }
    if (catalog) *catalog = doc.at("catalog").get<std::vector<std::string>>();
    return out;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void save_category_labels(const std::filesystem::path& path,
                          const CategoryLabels& labels) {
  json doc = {{"version", 1}, {"coarse", labels.coarse}, {"fine", labels.fine}};
  write_text(path, doc.dump() + "\n");
}

CategoryLabels load_category_labels(const std::filesystem::path& path) {
  json doc = read_json(path);
  try {
    CategoryLabels labels;
    labels.coarse = doc.at("coarse").get<std::map<std::string, std::string>>();
    labels.fine = doc.at("fine").get<std::map<std::string, std::string>>();
    return labels;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string synthetic_item_id(std::size_t index) {
  std::ostringstream os;
  os << "item_" << std::setw(5) << std::setfill('0') << index;
  return os.str();
}

std::string synthetic_coarse_label(std::size_t coarse) {
  return "C" + std::to_string(coarse);
}

std::string synthetic_fine_label(std::size_t coarse, std::size_t fine) {
  return "C" + std::to_string(coarse) + "F" + std::to_string(fine);
}

std::vector<std::vector<double>> synthetic_transition_matrix(
    const SyntheticConfig& config) {
  const std::size_t nf = config.n_fine_per_coarse;
  const std::size_t total = config.n_coarse * nf;
  if (!config.transition.empty()) {
    if (config.transition.size() != total) {
      throw UsageError("synthetic transition matrix must be F x F");
    }
    for (const auto& row : config.transition) {
      double sum = 0.0;
      for (double v : row) {
        if (v < 0.0) throw UsageError("transition probabilities must be >= 0");
        sum += v;
      }
      if (row.size() != total || std::abs(sum - 1.0) > 1e-9) {
        throw UsageError("transition rows must have F entries summing to 1");
      }
    }
    return config.transition;
  }
  const double jump = 1.0 - config.stay_prob - config.sibling_prob;
  if (config.stay_prob < 0.0 || config.sibling_prob < 0.0 || jump < -1e-12) {
    throw UsageError("stay_prob and sibling_prob must be >= 0 and sum to <= 1");
  }
  std::vector<std::vector<double>> t(total, std::vector<double>(total, 0.0));
  for (std::size_t f = 0; f < total; ++f) {
    for (std::size_t g = 0; g < total; ++g) {
      double p = std::max(jump, 0.0) / static_cast<double>(total);
      if (g == f) {
        p += config.stay_prob;
      } else if (g / nf == f / nf && nf > 1) {
        p += config.sibling_prob / static_cast<double>(nf - 1);
      }
      t[f][g] = p;
    }
    if (nf == 1) t[f][f] += config.sibling_prob;
  }
  return t;
}

SyntheticDataset synthetic_dataset(const SyntheticConfig& config) {
  const std::size_t total_fine = config.n_coarse * config.n_fine_per_coarse;
  if (total_fine == 0) throw UsageError("synthetic_dataset: no categories");
  if (config.n_items < total_fine) {
    throw UsageError("synthetic_dataset: n_items < n_coarse * n_fine_per_coarse");
  }
  if (config.min_length < 1 || config.max_length < config.min_length) {
    throw UsageError("synthetic_dataset: bad length bounds");
  }
  Rng root(config.seed);
  Rng assign_rng = root.split("catalog");
  Rng walk_rng = root.split("data");

  SyntheticDataset out;
  out.transition = synthetic_transition_matrix(config);

  // Balanced assignment: a seeded permutation of items dealt round-robin.
  std::vector<std::size_t> order(config.n_items);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  assign_rng.shuffle(order);
  std::vector<std::vector<std::size_t>> members(total_fine);
  for (std::size_t k = 0; k < order.size(); ++k) {
    members[k % total_fine].push_back(order[k]);
  }
  for (std::size_t f = 0; f < total_fine; ++f) {
    std::sort(members[f].begin(), members[f].end());
    // Popularity rank is the order after a second seeded shuffle.
    assign_rng.shuffle(members[f]);
  }

  std::vector<std::vector<double>> popularity(total_fine);
  for (std::size_t f = 0; f < total_fine; ++f) {
    const std::size_t coarse = f / config.n_fine_per_coarse;
    const std::size_t fine = f % config.n_fine_per_coarse;
    for (std::size_t rank = 0; rank < members[f].size(); ++rank) {
      popularity[f].push_back(
          1.0 / std::pow(static_cast<double>(rank + 1), config.zipf_exponent));
      const std::string id = synthetic_item_id(members[f][rank]);
      out.fine_index[id] = f;
      out.coarse_index[id] = coarse;
      out.labels.coarse[id] = synthetic_coarse_label(coarse);
      out.labels.fine[id] = synthetic_fine_label(coarse, fine);
    }
  }
  for (std::size_t i = 0; i < config.n_items; ++i) {
    out.catalog.push_back(synthetic_item_id(i));
  }

  const double p_continue =
      config.mean_extra_length / (1.0 + config.mean_extra_length);
  std::vector<double> start(total_fine, 1.0);
  for (std::size_t u = 0; u < config.n_users; ++u) {
    std::ostringstream uid;
    uid << "user_" << std::setw(6) << std::setfill('0') << u;
    std::size_t length = config.min_length;
    while (length < config.max_length && walk_rng.uniform() < p_continue) {
      ++length;
    }
    InteractionSequence seq{uid.str(), {}};
    std::size_t cat = walk_rng.categorical(start);
    for (std::size_t t = 0; t < length; ++t) {
      if (t > 0) cat = walk_rng.categorical(out.transition[cat]);
      std::size_t pick = walk_rng.categorical(popularity[cat]);
      seq.items.push_back(synthetic_item_id(members[cat][pick]));
    }
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

}  // namespace tiger
