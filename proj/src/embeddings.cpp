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

#include "tiger/embeddings.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tiger/errors.hpp"
#include "tiger/numeric.hpp"

namespace tiger {

void EmbeddingTable::insert(const std::string& item_id, ContentEmbedding values) {
  if (values.size() != dim_) {
    throw UsageError("embedding for " + item_id + " has length " +
                     std::to_string(values.size()) + ", table dim is " +
                     std::to_string(dim_));
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw UsageError("embedding for " + item_id + " is not finite");
    }
  }
  entries_[item_id] = std::move(values);
}

const ContentEmbedding& EmbeddingTable::at(const std::string& item_id) const {
  auto it = entries_.find(item_id);
  if (it == entries_.end()) throw UsageError("no embedding for item " + item_id);
  return it->second;
}

std::vector<std::string> EmbeddingTable::ids() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [id, _] : entries_) out.push_back(id);
  return out;
}

EmbeddingTable EmbeddingTable::subset(const std::vector<std::string>& item_ids) const {
  EmbeddingTable out(dim_);
  for (const auto& id : item_ids) {
    auto it = entries_.find(id);
    if (it != entries_.end()) out.entries_.insert(*it);
  }
  return out;
}

std::string build_content_text(const ItemMeta& meta) {
  std::ostringstream os;
  auto clause = [&](const char* name, const std::string& value) {
    if (value.empty()) return;
    if (os.tellp() > 0) os << ' ';
    os << name << ": " << value << '.';
  };
  clause("Title", meta.title);
  clause("Brand", meta.brand);
  clause("Price", meta.price);
  const std::vector<std::string>* deepest = nullptr;
  for (const auto& p : meta.categories) {
    if (!deepest || p.size() > deepest->size()) deepest = &p;
  }
  if (deepest) {
    std::string joined;
    for (std::size_t i = 0; i < deepest->size(); ++i) {
      if (i) joined += " > ";
      joined += (*deepest)[i];
    }
    clause("Category", joined);
  }
  return os.str();
}

namespace {

constexpr char kMagic[4] = {'S', 'E', 'M', 'B'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& buf, std::uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_f32(std::string& buf, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(buf, bits);
}

class Reader {
 public:
  Reader(std::string data, std::string name)
      : data_(std::move(data)), name_(std::move(name)) {}

  void need(std::size_t n) {
    if (pos_ + n > data_.size()) {
      throw DataError(name_ + ": truncated embedding file");
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::uint16_t u16() {
    need(2);
    auto lo = static_cast<unsigned char>(data_[pos_]);
    auto hi = static_cast<unsigned char>(data_[pos_ + 1]);
    pos_ += 2;
    return static_cast<std::uint16_t>(lo | (hi << 8));
  }
  float f32() {
    std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  std::string data_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_embeddings(const std::filesystem::path& path,
                     const EmbeddingTable& table) {
  std::string buf(kMagic, 4);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(table.size()));
  put_u32(buf, static_cast<std::uint32_t>(table.dim()));
  for (const auto& [id, values] : table.entries()) {
    if (id.size() > 0xffff) throw UsageError("item id too long: " + id);
    put_u16(buf, static_cast<std::uint16_t>(id.size()));
    buf += id;
    for (double v : values) put_f32(buf, static_cast<float>(v));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  Reader r(std::move(data), path.string());
  if (r.bytes(4) != std::string(kMagic, 4)) {
    throw DataError(path.string() + ": bad magic, expected SEMB");
  }
  if (std::uint32_t v = r.u32(); v != kVersion) {
    throw DataError(path.string() + ": unsupported version " + std::to_string(v));
  }
  std::uint32_t rows = r.u32();
  std::uint32_t dim = r.u32();
  if (dim == 0) throw DataError(path.string() + ": dim must be positive");
  EmbeddingTable table(dim);
  for (std::uint32_t i = 0; i < rows; ++i) {
    std::string id = r.bytes(r.u16());
    ContentEmbedding values(dim);
    for (auto& v : values) v = r.f32();
    if (table.contains(id)) throw DataError(path.string() + ": duplicate id " + id);
    try {
      table.insert(id, std::move(values));
    } catch (const UsageError& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  if (!r.at_end()) throw DataError(path.string() + ": trailing bytes after last row");
  return table;
}

EmbeddingTable round_to_f32(const EmbeddingTable& table) {
  EmbeddingTable out(table.dim());
  for (const auto& [id, values] : table.entries()) {
    ContentEmbedding v(values.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = static_cast<double>(static_cast<float>(values[i]));
    }
    out.insert(id, std::move(v));
  }
  return out;
}

namespace {

std::vector<double> random_direction(Rng& rng, std::size_t dim, double norm) {
  std::vector<double> v(dim);
  double sq = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    sq += x * x;
  }
  double scale = sq > 0.0 ? norm / std::sqrt(sq) : 0.0;
  for (auto& x : v) x *= scale;
  return v;
}

}  // namespace

EmbeddingTable synthetic_embeddings(
    const std::map<std::string, std::pair<std::size_t, std::size_t>>& labels,
    const SyntheticEmbeddingConfig& config) {
  if (config.dim < 8) throw UsageError("synthetic_embeddings: dim must be >= 8");
  Rng root(config.seed);
  Rng mean_rng = root.split("category_means");
  Rng noise_rng = root.split("noise");

  std::size_t n_coarse = 0, n_fine = 0;
  for (const auto& [_, cf] : labels) {
    n_coarse = std::max(n_coarse, cf.first + 1);
    n_fine = std::max(n_fine, cf.second + 1);
  }
  std::vector<std::vector<double>> coarse(n_coarse);
  for (auto& c : coarse) c = random_direction(mean_rng, config.dim, config.coarse_radius);
  std::vector<std::vector<std::vector<double>>> fine(
      n_coarse, std::vector<std::vector<double>>(n_fine));
  for (auto& per_coarse : fine) {
    for (auto& f : per_coarse) {
      f = random_direction(mean_rng, config.dim, config.fine_radius);
    }
  }

  const double sigma = config.noise_scale;
  EmbeddingTable table(config.dim);
  for (const auto& [id, cf] : labels) {
    ContentEmbedding v(config.dim);
    for (std::size_t k = 0; k < config.dim; ++k) {
      v[k] = coarse[cf.first][k] + fine[cf.first][cf.second][k];
      if (sigma > 0.0) v[k] += sigma * noise_rng.normal();
    }
    table.insert(id, std::move(v));
  }
  return table;
}

EmbeddingTable synthetic_embeddings(const SyntheticDataset& data,
                                    std::size_t n_fine_per_coarse,
                                    const SyntheticEmbeddingConfig& config) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> labels;
  for (const auto& [id, f] : data.fine_index) {
    labels[id] = {f / n_fine_per_coarse, f % n_fine_per_coarse};
  }
  return synthetic_embeddings(labels, config);
}

}  // namespace tiger
