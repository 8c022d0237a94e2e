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


#include "tiger/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tiger/errors.hpp"
#include "tiger/generation.hpp"
#include "tiger/semantic_ids.hpp"
#include "tiger/vocabulary.hpp"

#ifndef TIGER_VERSION
#define TIGER_VERSION "0.0.0"
#endif

namespace tiger {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Reads keys of one config object and rejects the ones never asked for.
class ConfigObject {
 public:
  ConfigObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw UsageError("config: '" + where() + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw UsageError("config key '" + name(key) + "' has the wrong type");
    }
  }

  void get_path(const char* key, fs::path& out) {
    std::string s = out.string();
    get(key, s);
    out = s;
  }

  bool has(const char* key) const { return j_.contains(key); }

  ConfigObject child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return ConfigObject(it == j_.end() ? empty() : *it, name(key));
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) throw UsageError("unknown config key '" + name(k) + "'");
    }
  }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  std::string where() const { return path_.empty() ? "<root>" : path_; }
  std::string name(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw UsageError(what + " not found: " + path.string());
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

struct Artifact {
  std::string name;
  fs::path path;
};

void write_manifest(const RunConfig& config, std::string_view command,
                    const std::vector<Artifact>& inputs,
                    const std::vector<Artifact>& outputs) {
  auto listing = [](const std::vector<Artifact>& items) {
    json j = json::object();
    for (const auto& a : items) {
      j[a.name] = {{"path", a.path.filename().string()}, {"digest", file_digest(a.path)}};
    }
    return j;
  };
  json doc = {{"command", std::string(command)},
              {"code_version", code_version()},
              {"config", json::parse(config.to_json())},
              {"config_digest", config.digest()},
              {"inputs", listing(inputs)},
              {"outputs", listing(outputs)}};
  write_text(RunPaths(config.output_dir).manifest(command), doc.dump(2) + "\n");
}

struct LoadedData {
  std::vector<InteractionSequence> sequences;
  std::vector<std::string> catalog;
  SplitDataset split;
  std::set<std::string> unseen;  // cold-start items withheld from training
  std::vector<Example> train;
};

LoadedData load_data(const RunConfig& config) {
  RunPaths paths(config.output_dir);
  require_file(paths.dataset(), "processed dataset (run ingest first)");
  LoadedData d;
  d.sequences = load_processed_dataset(paths.dataset(), &d.catalog);
  d.split = leave_one_out_split(d.sequences, config.dataset.max_history,
                                config.dataset.all_prefixes);
  if (config.coldstart.enabled) {
    ColdStartSplit cs = coldstart_split(d.split, config.coldstart.unseen_fraction,
                                        config.component_seed("coldstart"));
    d.unseen = std::move(cs.unseen);
    d.train = std::move(cs.train);
  } else {
    d.train = d.split.train;
  }
  return d;
}

IdAssignment load_ids(const RunConfig& config) {
  RunPaths paths(config.output_dir);
  require_file(paths.assignment(), "Semantic ID assignment (run quantize first)");
  return load_assignment(paths.assignment());
}

// Seen and unseen partitions of an assignment.
std::pair<IdAssignment, IdAssignment> partition(const IdAssignment& a,
                                                const std::set<std::string>& unseen) {
  IdAssignment seen = a, hidden = a;
  seen.ids.clear();
  seen.reverse.clear();
  hidden.ids.clear();
  hidden.reverse.clear();
  for (const auto& [item, id] : a.ids) {
    IdAssignment& dst = unseen.count(item) ? hidden : seen;
    dst.ids[item] = id;
    dst.reverse[id] = item;
  }
  return {seen, hidden};
}

ValidIdIndex index_for(const IdAssignment& a, const std::set<std::string>& unseen) {
  if (unseen.empty()) return build_valid_index(a);
  auto [seen, hidden] = partition(a, unseen);
  return build_valid_index(seen, &hidden);
}

TransformerConfig model_config(const RunConfig& config, const IdAssignment& a) {
  TransformerConfig mc = config.model;
  mc.decode_len = a.length();
  mc.max_input_len =
      config.dataset.max_history * a.length() + (mc.use_user_token ? 1 : 0);
  return mc;
}

Seq2SeqModel load_model(const RunConfig& config, const IdAssignment& a) {
  RunPaths paths(config.output_dir);
  require_file(paths.checkpoint(), "checkpoint (run train first)");
  Seq2SeqModel model = load_checkpoint(paths.checkpoint());
  if (!(model.vocab() == vocabulary_for(a, config.user_buckets))) {
    throw DataError(paths.checkpoint().string() +
                    ": vocabulary does not match the Semantic ID assignment");
  }
  return model;
}

std::size_t beam_width_for(const RunConfig& config) {
  if (config.evaluation.beam_width > 0) return config.evaluation.beam_width;
  std::size_t k = *std::max_element(config.evaluation.k_values.begin(),
                                    config.evaluation.k_values.end());
  if (config.coldstart.enabled) k = std::max(k, config.coldstart.k);
  return 2 * k;
}

std::vector<int> input_for(const RunConfig& config, const Example& ex,
                           const IdAssignment& a, const TokenVocabulary& vocab) {
  return encode_input(ex.user_id, ex.history, a, vocab, config.dataset.max_history,
                      config.model.use_user_token);
}

double validation_recall(const RunConfig& config, const Seq2SeqModel& model,
                         const std::vector<Example>& examples, const IdAssignment& a,
                         const ValidIdIndex& index, std::size_t k) {
  std::vector<Ranking> ranked;
  std::vector<std::string> truth;
  BeamConfig bc{2 * k, 2 * k, config.evaluation.constrained};
  for (const auto& ex : examples) {
    std::vector<int> input = input_for(config, ex, a, model.vocab());
    auto preds = beam_search(model, input, bc, &index);
    ranked.push_back(lookup_items(preds, index).items);
    truth.push_back(ex.target);
  }
  return recall_at_k(ranked, truth, k);
}

EmbeddingTable normalized(const EmbeddingTable& t) {
  EmbeddingTable out(t.dim());
  for (const auto& [id, v] : t.entries()) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    ContentEmbedding w = v;
    if (n > 0.0) {
      for (double& x : w) x /= n;
    }
    out.insert(id, std::move(w));
  }
  return out;
}

fs::path embeddings_path(const RunConfig& config) {
  return config.dataset.embeddings.empty() ? RunPaths(config.output_dir).embeddings()
                                           : config.dataset.embeddings;
}

EmbeddingTable catalog_embeddings(const RunConfig& config,
                                  const std::vector<std::string>& catalog) {
  const fs::path path = embeddings_path(config);
  require_file(path, "embedding table");
  EmbeddingTable table = load_embeddings(path).subset(catalog);
  if (table.size() != catalog.size()) {
    throw DataError(path.string() + ": " + std::to_string(catalog.size() - table.size()) +
                    " catalog items have no embedding");
  }
  return table;
}

SyntheticDataset synthetic_data(const RunConfig& config) {
  SyntheticConfig sc = config.dataset.synthetic;
  sc.seed = config.component_seed("synthetic_data");
  return synthetic_dataset(sc);
}

}  // namespace

std::string code_version() { return std::string("tiger-cpp ") + TIGER_VERSION; }

RunConfig RunConfig::parse(std::string_view json_text,
                           std::optional<std::uint64_t> seed_override) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  ConfigObject root(doc, "");
  if (!root.has("seed") && !seed_override) {
    throw UsageError("config is missing required key 'seed'");
  }
  root.get("seed", c.seed);
  if (seed_override) c.seed = *seed_override;
  root.get_path("output_dir", c.output_dir);
  root.get("user_buckets", c.user_buckets);

  {
    ConfigObject d = root.child("dataset");
    d.get("source", c.dataset.source);
    d.get_path("reviews", c.dataset.reviews);
    d.get_path("metadata", c.dataset.metadata);
    d.get_path("embeddings", c.dataset.embeddings);
    d.get("min_length", c.dataset.min_length);
    d.get("max_history", c.dataset.max_history);
    d.get("all_prefixes", c.dataset.all_prefixes);
    ConfigObject s = d.child("synthetic");
    auto& sc = c.dataset.synthetic;
    s.get("n_users", sc.n_users);
    s.get("n_items", sc.n_items);
    s.get("n_coarse", sc.n_coarse);
    s.get("n_fine_per_coarse", sc.n_fine_per_coarse);
    s.get("stay_prob", sc.stay_prob);
    s.get("sibling_prob", sc.sibling_prob);
    s.get("zipf_exponent", sc.zipf_exponent);
    s.get("min_length", sc.min_length);
    s.get("mean_extra_length", sc.mean_extra_length);
    s.get("max_length", sc.max_length);
    s.get("transition", sc.transition);
    s.finish();
    ConfigObject e = d.child("synthetic_embedding");
    auto& ec = c.dataset.synthetic_embedding;
    e.get("dim", ec.dim);
    e.get("coarse_radius", ec.coarse_radius);
    e.get("fine_radius", ec.fine_radius);
    e.get("noise_scale", ec.noise_scale);
    e.finish();
    d.finish();
  }
  {
    ConfigObject q = root.child("quantizer");
    auto& qc = c.quantizer;
    q.get("method", qc.method);
    q.get("normalize_embeddings", qc.normalize_embeddings);
    q.get("disambiguator_capacity", qc.disambiguator_capacity);
    ConfigObject r = q.child("rqvae");
    r.get("hidden", qc.rqvae.hidden);
    r.get("latent_dim", qc.rqvae.latent_dim);
    r.get("levels", qc.rqvae.levels);
    r.get("beta", qc.rqvae.beta);
    r.get("lr", qc.rqvae.lr);
    r.get("batch_size", qc.rqvae.batch_size);
    r.get("epochs", qc.rqvae.epochs);
    r.get("kmeans_iters", qc.rqvae.kmeans_iters);
    r.get("log_every", qc.rqvae.log_every);
    r.finish();
    ConfigObject k = q.child("residual_kmeans");
    k.get("k", qc.kmeans_k);
    k.get("levels", qc.kmeans_levels);
    k.get("iters", qc.kmeans_iters);
    k.finish();
    ConfigObject l = q.child("lsh");
    l.get("bits", qc.lsh_bits);
    l.get("bands", qc.lsh_bands);
    l.finish();
    ConfigObject rnd = q.child("random");
    rnd.get("k", qc.random_k);
    rnd.get("levels", qc.random_levels);
    rnd.finish();
    q.finish();
  }
  {
    ConfigObject m = root.child("model");
    auto& mc = c.model;
    m.get("enc_layers", mc.enc_layers);
    m.get("dec_layers", mc.dec_layers);
    m.get("heads", mc.heads);
    m.get("head_dim", mc.head_dim);
    m.get("model_dim", mc.model_dim);
    m.get("mlp_dim", mc.mlp_dim);
    m.get("dropout", mc.dropout);
    m.get("use_user_token", mc.use_user_token);
    m.finish();
  }
  {
    ConfigObject t = root.child("training");
    auto& tc = c.training;
    t.get("batch_size", tc.batch_size);
    t.get("steps", tc.steps);
    t.get("base_lr", tc.base_lr);
    t.get("decay_start", tc.decay_start);
    t.get("checkpoint_every", tc.checkpoint_every);
    t.get("validate_every", tc.validate_every);
    t.get("validation_users", tc.validation_users);
    t.finish();
  }
  {
    ConfigObject e = root.child("evaluation");
    auto& ev = c.evaluation;
    e.get("k_values", ev.k_values);
    e.get("beam_width", ev.beam_width);
    e.get("constrained", ev.constrained);
    e.get("invalid_k", ev.invalid_k);
    e.get("temperatures", ev.temperatures);
    e.get("entropy_k", ev.entropy_k);
    e.get("entropy_base2", ev.entropy_base2);
    e.get("max_sample_attempts", ev.max_sample_attempts);
    e.get("max_users", ev.max_users);
    e.get("diversity_users", ev.diversity_users);
    e.get("invalid_users", ev.invalid_users);
    e.get("dump_predictions", ev.dump_predictions);
    e.finish();
  }
  {
    ConfigObject s = root.child("coldstart");
    auto& cs = c.coldstart;
    s.get("enabled", cs.enabled);
    s.get("unseen_fraction", cs.unseen_fraction);
    s.get("epsilons", cs.epsilons);
    s.get("k", cs.k);
    s.get("knn_baseline", cs.knn_baseline);
    s.finish();
  }
  root.finish();
  return c;
}

std::string RunConfig::to_json() const {
  const auto& sc = dataset.synthetic;
  const auto& ec = dataset.synthetic_embedding;
  const auto& qc = quantizer;
  json doc = {
      {"seed", seed},
      {"output_dir", output_dir.string()},
      {"user_buckets", user_buckets},
      {"dataset",
       {{"source", dataset.source},
        {"reviews", dataset.reviews.string()},
        {"metadata", dataset.metadata.string()},
        {"embeddings", dataset.embeddings.string()},
        {"min_length", dataset.min_length},
        {"max_history", dataset.max_history},
        {"all_prefixes", dataset.all_prefixes},
        {"synthetic",
         {{"n_users", sc.n_users},
          {"n_items", sc.n_items},
          {"n_coarse", sc.n_coarse},
          {"n_fine_per_coarse", sc.n_fine_per_coarse},
          {"stay_prob", sc.stay_prob},
          {"sibling_prob", sc.sibling_prob},
          {"zipf_exponent", sc.zipf_exponent},
          {"min_length", sc.min_length},
          {"mean_extra_length", sc.mean_extra_length},
          {"max_length", sc.max_length},
          {"transition", sc.transition}}},
        {"synthetic_embedding",
         {{"dim", ec.dim},
          {"coarse_radius", ec.coarse_radius},
          {"fine_radius", ec.fine_radius},
          {"noise_scale", ec.noise_scale}}}}},
      {"quantizer",
       {{"method", qc.method},
        {"normalize_embeddings", qc.normalize_embeddings},
        {"disambiguator_capacity", qc.disambiguator_capacity},
        {"rqvae",
         {{"hidden", qc.rqvae.hidden},
          {"latent_dim", qc.rqvae.latent_dim},
          {"levels", qc.rqvae.levels},
          {"beta", qc.rqvae.beta},
          {"lr", qc.rqvae.lr},
          {"batch_size", qc.rqvae.batch_size},
          {"epochs", qc.rqvae.epochs},
          {"kmeans_iters", qc.rqvae.kmeans_iters},
          {"log_every", qc.rqvae.log_every}}},
        {"residual_kmeans",
         {{"k", qc.kmeans_k}, {"levels", qc.kmeans_levels}, {"iters", qc.kmeans_iters}}},
        {"lsh", {{"bits", qc.lsh_bits}, {"bands", qc.lsh_bands}}},
        {"random", {{"k", qc.random_k}, {"levels", qc.random_levels}}}}},
      {"model",
       {{"enc_layers", model.enc_layers},
        {"dec_layers", model.dec_layers},
        {"heads", model.heads},
        {"head_dim", model.head_dim},
        {"model_dim", model.model_dim},
        {"mlp_dim", model.mlp_dim},
        {"dropout", model.dropout},
        {"use_user_token", model.use_user_token}}},
      {"training",
       {{"batch_size", training.batch_size},
        {"steps", training.steps},
        {"base_lr", training.base_lr},
        {"decay_start", training.decay_start},
        {"checkpoint_every", training.checkpoint_every},
        {"validate_every", training.validate_every},
        {"validation_users", training.validation_users}}},
      {"evaluation",
       {{"k_values", evaluation.k_values},
        {"beam_width", evaluation.beam_width},
        {"constrained", evaluation.constrained},
        {"invalid_k", evaluation.invalid_k},
        {"temperatures", evaluation.temperatures},
        {"entropy_k", evaluation.entropy_k},
        {"entropy_base2", evaluation.entropy_base2},
        {"max_sample_attempts", evaluation.max_sample_attempts},
        {"max_users", evaluation.max_users},
        {"diversity_users", evaluation.diversity_users},
        {"invalid_users", evaluation.invalid_users},
        {"dump_predictions", evaluation.dump_predictions}}},
      {"coldstart",
       {{"enabled", coldstart.enabled},
        {"unseen_fraction", coldstart.unseen_fraction},
        {"epsilons", coldstart.epsilons},
        {"k", coldstart.k},
        {"knn_baseline", coldstart.knn_baseline}}}};
  return doc.dump(2) + "\n";
}

std::string RunConfig::digest() const { return hex64(fnv1a64(to_json())); }

std::uint64_t RunConfig::component_seed(std::string_view component) const {
  return Rng(seed).split(component).next_u64();
}

void RunConfig::validate() const {
  if (dataset.source == "amazon") {
    if (dataset.reviews.empty()) throw UsageError("dataset.reviews is required for amazon");
    if (dataset.metadata.empty()) throw UsageError("dataset.metadata is required for amazon");
    require_file(dataset.reviews, "dataset.reviews");
    require_file(dataset.metadata, "dataset.metadata");
  } else if (dataset.source != "synthetic") {
    throw UsageError("dataset.source must be synthetic or amazon, got '" +
                     dataset.source + "'");
  }
  if (!dataset.embeddings.empty()) require_file(dataset.embeddings, "dataset.embeddings");
  if (dataset.max_history == 0) throw UsageError("dataset.max_history must be positive");
  id_method_from_string(quantizer.method);
  if (user_buckets < 1) throw UsageError("user_buckets must be positive");
  TransformerConfig mc = model;
  mc.validate();
  if (training.batch_size == 0) throw UsageError("training.batch_size must be positive");
  if (evaluation.k_values.empty()) throw UsageError("evaluation.k_values must not be empty");
  for (std::size_t k : evaluation.k_values) {
    if (k == 0) throw UsageError("evaluation.k_values entries must be positive");
  }
  for (double t : evaluation.temperatures) {
    if (!(t > 0.0)) throw UsageError("evaluation.temperatures must be positive");
  }
  if (evaluation.beam_width > 0) {
    std::size_t k = *std::max_element(evaluation.k_values.begin(),
                                      evaluation.k_values.end());
    if (evaluation.beam_width < k) {
      throw UsageError("evaluation.beam_width must be at least max(k_values)");
    }
  }
  if (!(coldstart.unseen_fraction >= 0.0 && coldstart.unseen_fraction < 1.0)) {
    throw UsageError("coldstart.unseen_fraction must be in [0, 1)");
  }
  for (double e : coldstart.epsilons) {
    if (!(e >= 0.0 && e <= 1.0)) throw UsageError("coldstart.epsilons must lie in [0, 1]");
  }
}

RunConfig load_run_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  require_file(path, "config file");
  return RunConfig::parse(read_text(path), seed_override);
}

EmbeddingTable quantizer_input(const RunConfig& config) {
  RunPaths paths(config.output_dir);
  require_file(paths.dataset(), "processed dataset (run ingest first)");
  std::vector<std::string> catalog;
  load_processed_dataset(paths.dataset(), &catalog);
  EmbeddingTable t = catalog_embeddings(config, catalog);
  return config.quantizer.normalize_embeddings ? normalized(t) : t;
}

DatasetStats run_ingest(const RunConfig& config, std::ostream& log) {
  config.validate();
  RunPaths paths(config.output_dir);
  fs::create_directories(paths.root);
  std::vector<InteractionSequence> sequences;
  std::vector<std::string> catalog;
  CategoryLabels labels;
  std::vector<Artifact> inputs;
  json extra = json::object();
  if (config.dataset.source == "synthetic") {
    SyntheticDataset data = synthetic_data(config);
    sequences = std::move(data.sequences);
    catalog = std::move(data.catalog);
    labels = std::move(data.labels);
  } else {
    ParseReport reviews = parse_reviews(config.dataset.reviews);
    std::vector<ItemMeta> metadata = parse_metadata(config.dataset.metadata);
    std::size_t dropped_items = 0;
    std::size_t dropped = drop_items_without_metadata(reviews.interactions, metadata,
                                                      &dropped_items);
    sequences = build_sequences(reviews.interactions, config.dataset.min_length);
    catalog = catalog_of(sequences);
    labels = labels_from_metadata(metadata);
    std::set<std::string> in_catalog(catalog.begin(), catalog.end());
    std::ostringstream text;
    for (const auto& meta : metadata) {
      if (!in_catalog.count(meta.item_id)) continue;
      text << json{{"item_id", meta.item_id}, {"text", build_content_text(meta)}}.dump()
           << "\n";
    }
    write_text(paths.item_text(), text.str());
    extra = {{"malformed_lines", reviews.malformed_lines.size()},
             {"total_lines", reviews.total_lines},
             {"dropped_interactions_without_metadata", dropped},
             {"dropped_items_without_metadata", dropped_items}};
    inputs = {{"reviews", config.dataset.reviews}, {"metadata", config.dataset.metadata}};
    log << "ingest: " << reviews.malformed_lines.size() << " malformed lines skipped, "
        << dropped << " interactions without metadata dropped\n";
  }
  if (sequences.empty()) throw DataError("ingest: no user sequences survive filtering");
  save_processed_dataset(paths.dataset(), sequences, catalog);
  save_category_labels(paths.labels(), labels);
  DatasetStats stats = dataset_stats(sequences);
  json s = {{"users", stats.users},
            {"items", stats.items},
            {"mean_length", stats.mean_length},
            {"median_length", stats.median_length}};
  for (const auto& [k, v] : extra.items()) s[k] = v;
  write_text(paths.stats(), s.dump(2) + "\n");
  log << "ingest: " << stats.users << " users, " << stats.items << " items, mean length "
      << stats.mean_length << ", median " << stats.median_length << "\n";
  std::vector<Artifact> outputs{{"dataset", paths.dataset()},
                                {"labels", paths.labels()},
                                {"stats", paths.stats()}};
  if (config.dataset.source != "synthetic") outputs.push_back({"item_text", paths.item_text()});
  write_manifest(config, "ingest", inputs, outputs);
  return stats;
}

void run_embed_synthetic(const RunConfig& config, std::ostream& log) {
  config.validate();
  if (config.dataset.source != "synthetic") {
    throw UsageError("embed-synthetic requires dataset.source = synthetic");
  }
  RunPaths paths(config.output_dir);
  require_file(paths.dataset(), "processed dataset (run ingest first)");
  SyntheticDataset data = synthetic_data(config);
  SyntheticEmbeddingConfig ec = config.dataset.synthetic_embedding;
  ec.seed = config.component_seed("synthetic_embedding");
  EmbeddingTable table =
      synthetic_embeddings(data, config.dataset.synthetic.n_fine_per_coarse, ec);
  save_embeddings(paths.embeddings(), table);
  log << "embed-synthetic: " << table.size() << " items, dim " << table.dim() << "\n";
  write_manifest(config, "embed-synthetic", {{"dataset", paths.dataset()}},
                 {{"embeddings", paths.embeddings()}});
}

IdAssignment run_quantize(const RunConfig& config, std::ostream& log) {
  config.validate();
  RunPaths paths(config.output_dir);
  require_file(paths.dataset(), "processed dataset (run ingest first)");
  std::vector<std::string> catalog;
  load_processed_dataset(paths.dataset(), &catalog);
  const auto& qc = config.quantizer;
  const IdMethod method = id_method_from_string(qc.method);
  const std::uint64_t seed = config.component_seed("quantizer");

  IdAssignment a;
  json report = {{"method", qc.method}};
  std::vector<Artifact> inputs{{"dataset", paths.dataset()}};
  std::vector<Artifact> outputs;
  std::vector<std::string> warnings;
  if (method == IdMethod::kRandom) {
    a = random_ids(catalog, qc.random_k, qc.random_levels, seed);
    report["usage"] = nullptr;
  } else {
    EmbeddingTable table = quantizer_input(config);
    inputs.push_back({"embeddings", embeddings_path(config)});
    if (method == IdMethod::kRqVae) {
      RqVaeConfig rc = qc.rqvae;
      rc.input_dim = table.dim();
      rc.seed = seed;
      RqVaeTrainLog train_log;
      RqVaeModel model = train_rqvae(table, rc, &train_log);
      save_rqvae(paths.rqvae(), model);
      outputs.push_back({"rqvae", paths.rqvae()});
      a = assign_semantic_ids(model, table, qc.disambiguator_capacity);
      warnings = train_log.warnings;
      report["mean_residual_norm"] = mean_residual_norms(model, table);
      if (!train_log.epochs.empty()) {
        const auto& last = train_log.epochs.back();
        report["final_loss"] = {{"total", last.loss}, {"recon", last.recon},
                                {"rqvae", last.rqvae}};
      }
      log << "quantize: rqvae trained for " << rc.epochs << " epochs\n";
    } else if (method == IdMethod::kResidualKMeans) {
      ResidualKMeansResult r = residual_kmeans_ids(table, qc.kmeans_k, qc.kmeans_levels,
                                                   qc.kmeans_iters, seed,
                                                   qc.disambiguator_capacity);
      a = std::move(r.assignment);
      report["mean_residual_norm"] = r.mean_residual_norm;
    } else {
      a = lsh_ids(table, qc.lsh_bits, qc.lsh_bands, seed, qc.disambiguator_capacity);
    }
    std::vector<double> usage = codebook_usage(a);
    report["usage"] = usage;
    for (std::size_t d = 0; d < usage.size(); ++d) {
      if (usage[d] < 0.5 && method != IdMethod::kRqVae) {
        warnings.push_back("codebook collapse risk: level " + std::to_string(d) +
                           " usage " + std::to_string(usage[d]));
      }
    }
  }
  save_assignment(paths.assignment(), a);
  outputs.insert(outputs.begin(), {"assignment", paths.assignment()});

  json hist = json::object();
  for (const auto& [size, n] : a.collision_histogram()) hist[std::to_string(size)] = n;
  report["K_per_level"] = a.k_per_level;
  report["max_collision_group"] = a.max_collision_group;
  report["collision_histogram"] = hist;
  report["items"] = a.ids.size();
  report["warnings"] = warnings;
  if (fs::exists(paths.labels())) {
    CategoryLabels labels = load_category_labels(paths.labels());
    inputs.push_back({"labels", paths.labels()});
    HierarchyReport h = hierarchy_report(a, labels);
    write_text(paths.hierarchy(), h.to_csv());
    outputs.push_back({"hierarchy", paths.hierarchy()});
    json modal = json::object();
    for (const auto& [c1, share] : h.modal_share_by_first()) modal[std::to_string(c1)] = share;
    report["modal_coarse_share_by_c1"] = modal;
  }
  write_text(paths.quantize_report(), report.dump(2) + "\n");
  outputs.push_back({"report", paths.quantize_report()});
  for (const auto& w : warnings) log << "quantize: warning: " << w << "\n";
  log << "quantize: " << a.ids.size() << " items, max collision group "
      << a.max_collision_group << "\n";
  write_manifest(config, "quantize", inputs, outputs);
  return a;
}

std::vector<LossPoint> run_train(const RunConfig& config, std::ostream& log) {
  config.validate();
  RunPaths paths(config.output_dir);
  LoadedData data = load_data(config);
  IdAssignment a = load_ids(config);
  TokenVocabulary vocab = vocabulary_for(a, config.user_buckets);
  if (data.train.empty()) throw DataError("train: no training examples");

  std::vector<TrainingExample> examples;
  examples.reserve(data.train.size());
  for (const auto& ex : data.train) {
    examples.push_back(encode_example(ex.user_id, ex.history, ex.target, a, vocab,
                                      config.dataset.max_history,
                                      config.model.use_user_token));
  }

  const std::string digest = config.digest();
  const bool resume = fs::exists(paths.checkpoint()) &&
                      fs::exists(paths.checkpoint_config()) &&
                      read_text(paths.checkpoint_config()) == digest + "\n";
  Seq2SeqModel model = resume ? load_checkpoint(paths.checkpoint())
                              : Seq2SeqModel(model_config(config, a), vocab,
                                             config.component_seed("model"));
  if (!(model.vocab() == vocab)) {
    throw DataError(paths.checkpoint().string() + ": vocabulary mismatch on resume");
  }
  if (resume) {
    log << "train: resuming from step " << model.step() << "\n";
  } else {
    write_text(paths.checkpoint_config(), digest + "\n");
    write_text(paths.validation_log(), "step,recall@10\n");
  }
  log << "train: " << examples.size() << " examples, " << model.parameter_count()
      << " parameters\n";

  TrainConfig tc;
  tc.batch_size = config.training.batch_size;
  tc.steps = config.training.steps;
  tc.base_lr = config.training.base_lr;
  tc.decay_start = config.training.decay_start;
  tc.seed = config.component_seed("training");
  tc.checkpoint_every = config.training.checkpoint_every;
  tc.checkpoint_path = paths.checkpoint();
  tc.loss_curve_path = paths.loss_curve();

  std::vector<Example> validation(
      data.split.validation.begin(),
      data.split.validation.begin() +
          static_cast<long>(std::min(config.training.validation_users,
                                     data.split.validation.size())));
  const ValidIdIndex index = index_for(a, data.unseen);
  const std::uint64_t report_every = std::max<std::uint64_t>(1, tc.steps / 20);
  auto on_step = [&](const LossPoint& p) {
    if (p.step % report_every == 0 || p.step == tc.steps) {
      log << "train: step " << p.step << " loss " << p.loss << " lr " << p.lr << "\n";
    }
    if (config.training.validate_every > 0 && !validation.empty() &&
        (p.step % config.training.validate_every == 0 || p.step == tc.steps)) {
      double r = validation_recall(config, model, validation, a, index, 10);
      std::ofstream out(paths.validation_log(), std::ios::app);
      out << p.step << ',' << r << '\n';
      log << "train: step " << p.step << " validation recall@10 " << r << "\n";
    }
  };
  std::vector<LossPoint> curve = train(model, examples, tc, on_step);
  save_checkpoint(model, paths.checkpoint());
  if (!fs::exists(paths.loss_curve())) write_text(paths.loss_curve(), "step,loss,lr\n");
  write_manifest(config, "train",
                 {{"dataset", paths.dataset()}, {"assignment", paths.assignment()}},
                 {{"checkpoint", paths.checkpoint()},
                  {"loss_curve", paths.loss_curve()},
                  {"validation", paths.validation_log()}});
  return curve;
}

EvalReport run_evaluate(const RunConfig& config, std::ostream& log) {
  config.validate();
  RunPaths paths(config.output_dir);
  LoadedData data = load_data(config);
  IdAssignment a = load_ids(config);
  Seq2SeqModel model = load_model(config, a);
  const ValidIdIndex index = index_for(a, data.unseen);
  const auto& ev = config.evaluation;

  std::vector<Example> test = data.split.test;
  if (ev.max_users > 0 && test.size() > ev.max_users) test.resize(ev.max_users);
  if (test.empty()) throw UsageError("evaluate: no test users");

  EvalReport report;
  report.seed = config.seed;
  report.checkpoint = file_digest(paths.checkpoint());
  report.dataset_hash = file_digest(paths.dataset());

  const std::size_t width = beam_width_for(config);
  const BeamConfig bc{width, width, ev.constrained};
  std::vector<std::vector<int>> inputs;
  std::vector<std::vector<BeamHypothesis>> beams;
  std::vector<Ranking> ranked;
  std::vector<std::string> truth;
  std::ostringstream dump;
  for (const auto& ex : test) {
    inputs.push_back(input_for(config, ex, a, model.vocab()));
    beams.push_back(beam_search(model, inputs.back(), bc, &index));
    LookupResult lookup = lookup_items(beams.back(), index);
    report.invalid_predictions += lookup.invalid;
    ranked.push_back(std::move(lookup.items));
    truth.push_back(ex.target);
    if (ev.dump_predictions) {
      dump << prediction_record_json(ex.user_id, beams.back(), index) << "\n";
    }
  }
  report.users = test.size();
  const std::string mode = ev.constrained ? "tiger_constrained" : "tiger";
  for (std::size_t k : ev.k_values) {
    report.add("recall", k, mode, recall_at_k(ranked, truth, k));
    report.add("ndcg", k, mode, ndcg_at_k(ranked, truth, k));
  }
  log << "evaluate: " << test.size() << " users, beam width " << width << "\n";

  if (!ev.invalid_k.empty()) {
    std::vector<std::vector<int>> subset = inputs;
    if (ev.invalid_users > 0 && subset.size() > ev.invalid_users) {
      subset.resize(ev.invalid_users);
    }
    for (bool constrained : {false, true}) {
      auto fractions = invalid_fraction(model, subset, index, ev.invalid_k, 2, constrained);
      for (const auto& [k, f] : fractions) {
        report.add("invalid_fraction", k, constrained ? "constrained" : "unconstrained", f);
      }
    }
  }

  if (!ev.temperatures.empty() && !ev.entropy_k.empty()) {
    CategoryLabels labels;
    if (fs::exists(paths.labels())) labels = load_category_labels(paths.labels());
    const std::size_t n = ev.diversity_users > 0 ? std::min(ev.diversity_users, test.size())
                                                 : test.size();
    const std::size_t kmax = *std::max_element(ev.entropy_k.begin(), ev.entropy_k.end());
    const Rng sampling(config.component_seed("sampling"));
    for (std::size_t ti = 0; ti < ev.temperatures.size(); ++ti) {
      const double t = ev.temperatures[ti];
      SamplerConfig sc{t, ev.max_sample_attempts, kmax};
      std::vector<Ranking> samples;
      for (std::size_t u = 0; u < n; ++u) {
        Rng rng = sampling.split(test[u].user_id).split(static_cast<std::uint64_t>(ti));
        samples.push_back(temperature_sample(model, inputs[u], sc, index, rng).items);
      }
      for (std::size_t k : ev.entropy_k) {
        EntropyResult e = entropy_at_k(samples, labels.fine, k, ev.entropy_base2);
        report.add("entropy", k, "T=" + fmt_number(t), e.mean);
      }
    }
  }

  if (config.coldstart.enabled) {
    const auto& cs = config.coldstart;
    std::vector<std::size_t> unseen_users;
    for (std::size_t u = 0; u < test.size(); ++u) {
      if (data.unseen.count(test[u].target)) unseen_users.push_back(u);
    }
    report.add("users", 0, "coldstart_unseen_targets", static_cast<double>(unseen_users.size()));
    report.add("items", 0, "coldstart_unseen", static_cast<double>(data.unseen.size()));
    auto subset_recall = [&](const std::vector<Ranking>& r) {
      if (unseen_users.empty()) return 0.0;
      std::vector<Ranking> rs;
      std::vector<std::string> ts;
      for (std::size_t u : unseen_users) {
        rs.push_back(r[u]);
        ts.push_back(truth[u]);
      }
      return recall_at_k(rs, ts, cs.k);
    };
    for (double eps : cs.epsilons) {
      std::vector<Ranking> mixed;
      double unseen_total = 0.0;
      for (const auto& beam : beams) {
        ColdStartResult r = coldstart_retrieve(beam, index, eps, cs.k, a.m);
        unseen_total += static_cast<double>(r.unseen_count);
        mixed.push_back(std::move(r.items));
      }
      const std::string tag = "eps=" + fmt_number(eps);
      report.add("recall", cs.k, "coldstart_all:" + tag, recall_at_k(mixed, truth, cs.k));
      report.add("recall", cs.k, "coldstart_unseen:" + tag, subset_recall(mixed));
      report.add("unseen_per_list", cs.k, "coldstart:" + tag,
                 unseen_total / static_cast<double>(beams.size()));
    }
    if (cs.knn_baseline) {
      EmbeddingTable table = catalog_embeddings(config, data.catalog);
      SemanticKnnIndex knn(table);
      std::vector<Ranking> nn;
      for (const auto& ex : test) {
        const std::string& last = ex.history.back();
        nn.push_back(knn.query(table.at(last), cs.k, {last}));
      }
      report.add("recall", cs.k, "knn_all", recall_at_k(nn, truth, cs.k));
      report.add("recall", cs.k, "knn_unseen", subset_recall(nn));
    }
  }

  write_text(paths.report_json(), report.to_json());
  write_text(paths.report_csv(), report.to_csv());
  std::vector<Artifact> outputs{{"report_json", paths.report_json()},
                                {"report_csv", paths.report_csv()}};
  if (ev.dump_predictions) {
    write_text(paths.predictions(), dump.str());
    outputs.push_back({"predictions", paths.predictions()});
  }
  for (const auto& row : report.rows) {
    log << "evaluate: " << row.metric << "@" << row.k << " [" << row.config
        << "] = " << row.value << "\n";
  }
  write_manifest(config, "evaluate",
                 {{"dataset", paths.dataset()},
                  {"assignment", paths.assignment()},
                  {"checkpoint", paths.checkpoint()}},
                 outputs);
  return report;
}

std::string run_recommend(const RunConfig& config, const std::string& user_id,
                          const std::vector<std::string>& history, std::size_t k) {
  if (k == 0) throw UsageError("recommend: k must be positive");
  LoadedData data = load_data(config);
  IdAssignment a = load_ids(config);
  Seq2SeqModel model = load_model(config, a);
  const ValidIdIndex index = index_for(a, data.unseen);
  std::vector<std::string> items = history;
  if (items.empty()) {
    auto it = std::find_if(data.sequences.begin(), data.sequences.end(),
                           [&](const InteractionSequence& s) { return s.user_id == user_id; });
    if (it == data.sequences.end()) throw UsageError("recommend: unknown user '" + user_id + "'");
    items = it->items;
  }
  for (const auto& item : items) {
    if (!a.ids.count(item)) throw UsageError("recommend: unknown item '" + item + "'");
  }
  std::vector<int> input = encode_input(user_id, items, a, model.vocab(),
                                        config.dataset.max_history,
                                        config.model.use_user_token);
  const std::size_t width = std::max(beam_width_for(config), 2 * k);
  auto preds = beam_search(model, input, {width, width, config.evaluation.constrained},
                           &index);
  LookupResult lookup = lookup_items(preds, index);
  if (lookup.items.size() > k) lookup.items.resize(k);
  json doc = json::parse(prediction_record_json(user_id, preds, index));
  doc["items"] = lookup.items;
  return doc.dump(2) + "\n";
}

std::string run_inspect_ids(const RunConfig& config, const std::string& item_id) {
  IdAssignment a = load_ids(config);
  if (!item_id.empty()) {
    json doc = {{"item_id", item_id}, {"id", a.at(item_id).codes}};
    return doc.dump(2) + "\n";
  }
  json hist = json::object();
  for (const auto& [size, n] : a.collision_histogram()) hist[std::to_string(size)] = n;
  json doc = {{"method", to_string(a.method)},
              {"items", a.ids.size()},
              {"length", a.length()},
              {"K_per_level", a.k_per_level},
              {"max_collision_group", a.max_collision_group},
              {"collision_histogram", hist}};
  if (a.method != IdMethod::kRandom) {
    doc["usage"] = codebook_usage(a);
  } else {
    doc["usage"] = nullptr;
  }
  RunPaths paths(config.output_dir);
  if (fs::exists(paths.labels())) {
    HierarchyReport h = hierarchy_report(a, load_category_labels(paths.labels()));
    json modal = json::object();
    for (const auto& [c1, share] : h.modal_share_by_first()) modal[std::to_string(c1)] = share;
    doc["modal_coarse_share_by_c1"] = modal;
  }
  return doc.dump(2) + "\n";
}

EvalReport run_pipeline(const RunConfig& config, std::ostream& log) {
  run_ingest(config, log);
  if (config.dataset.source == "synthetic" && config.dataset.embeddings.empty()) {
    run_embed_synthetic(config, log);
  }
  run_quantize(config, log);
  run_train(config, log);
  return run_evaluate(config, log);
}

}  // namespace tiger
