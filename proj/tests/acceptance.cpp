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

// Runs the acceptance criteria and prints one PASS/FAIL/SKIP line each.
// Usage: acceptance [criterion numbers...]  (default: all)
// TIGER_ACCEPTANCE_DIR sets the scratch directory for desk-scale runs.
// TIGER_AMAZON_CONFIG names a run config for the optional Amazon Beauty run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tiger/errors.hpp"
#include "tiger/evaluation.hpp"
#include "tiger/generation.hpp"
#include "tiger/numeric.hpp"
#include "tiger/pipeline.hpp"
#include "tiger/rqvae.hpp"
#include "tiger/semantic_ids.hpp"
#include "tiger/transformer.hpp"

namespace fs = std::filesystem;
using namespace tiger;

namespace {

struct Outcome {
  enum class Status { kPass, kFail, kSkip } status = Status::kFail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) {
  return {ok ? Outcome::Status::kPass : Outcome::Status::kFail, std::move(detail)};
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

fs::path scratch_dir() {
  const char* env = std::getenv("TIGER_ACCEPTANCE_DIR");
  return env ? fs::path(env) : fs::path(TIGER_BINARY_DIR) / "acceptance_runs";
}

RunConfig desk_config(std::uint64_t seed, const std::string& method, const std::string& name) {
  RunConfig c = load_run_config(fs::path(TIGER_SOURCE_DIR) / "configs" / "desk.json", seed);
  c.quantizer.method = method;
  c.output_dir = scratch_dir() / name;
  return c;
}

// ---- criterion 1

Outcome gradients() {
  Stopwatch clock;
  std::size_t checked = 0;
  double worst_rq = 0.0;
  double worst_tf = 0.0;
  std::size_t failures = 0;

  for (std::uint64_t seed : {1u, 2u, 3u}) {
    RqVaeConfig c;
    c.input_dim = 6;
    c.hidden = {5, 4};
    c.latent_dim = 3;
    c.levels = {4, 3, 3};
    c.beta = 0.25;
    c.seed = seed;
    RqVaeModel m(c);
    Rng brng(seed + 100);
    for (auto* layers : {&m.encoder(), &m.decoder()})
      for (auto& l : *layers)
        for (double& v : l.bias.value.data()) v = 0.3 * brng.normal();
    Rng xrng(seed + 50);
    DenseMatrix batch(8, 6);
    for (double& v : batch.data()) v = xrng.normal();
    StopGradients frozen = capture_stop_gradients(batch, m);
    auto params = m.parameters();
    for (Parameter* p : params) p->zero_grad();
    rqvae_batch_loss(batch, m, true);
    GradCheckOptions opt;
    opt.h = 1e-5;
    opt.tol = 1e-4;
    auto report =
        finite_diff_check([&] { return rqvae_surrogate_loss(batch, m, frozen); }, params, opt);
    checked += report.entries.size();
    failures += report.failures + (report.entries.empty() ? 1 : 0);
    worst_rq = std::max(worst_rq, report.max_rel_error);
  }

  for (std::uint64_t seed : {1u, 2u, 3u}) {
    TransformerConfig c;
    c.enc_layers = 1;
    c.dec_layers = 1;
    c.heads = 2;
    c.head_dim = 4;
    c.model_dim = 8;
    c.mlp_dim = 16;
    c.dropout = 0.0;
    c.max_input_len = 13;
    c.decode_len = 3;
    const TokenVocabulary vocab({4, 4, 4}, 5);
    Seq2SeqModel m(c, vocab, seed);
    Rng rng(seed + 10);
    std::vector<TrainingExample> batch;
    for (int e = 0; e < 3; ++e) {
      TrainingExample ex;
      ex.input.push_back(vocab.user_token(static_cast<int>(rng.uniform_int(5))));
      const std::size_t items = 1 + rng.uniform_int(3);
      for (std::size_t i = 0; i < items; ++i)
        for (std::size_t l = 0; l < 3; ++l)
          ex.input.push_back(vocab.semantic_token(l, static_cast<int>(rng.uniform_int(4))));
      for (std::size_t l = 0; l < 3; ++l)
        ex.target.push_back(vocab.semantic_token(l, static_cast<int>(rng.uniform_int(4))));
      batch.push_back(std::move(ex));
    }
    m.zero_grad();
    batch_loss(m, batch, nullptr, true);
    auto params = m.parameters();
    GradCheckOptions opt;
    opt.h = 1e-5;
    opt.tol = 1e-3;
    auto report = finite_diff_check([&] { return batch_loss(m, batch, nullptr, false); },
                                    params, opt);
    checked += report.entries.size();
    failures += report.failures + (report.entries.empty() ? 1 : 0);
    worst_tf = std::max(worst_tf, report.max_rel_error);
  }
  const double t = clock.seconds();
  return verdict(failures == 0 && t < 120.0,
                 std::to_string(checked) + " coordinates, " + std::to_string(failures) +
                     " failures, max rel err rqvae " + fmt("%.2e", worst_rq) + " transformer " +
                     fmt("%.2e", worst_tf) + ", " + fmt("%.1fs", t));
}

// ---- criterion 2

Outcome loss_oracle() {
  RqVaeConfig c;
  c.input_dim = 1;
  c.hidden = {};
  c.latent_dim = 1;
  c.levels = {2, 2};
  c.beta = 0.25;
  RqVaeModel m(c);
  m.encoder()[0].weight.value(0, 0) = 1.0;
  m.encoder()[0].bias.value(0, 0) = 0.0;
  m.decoder()[0].weight.value(0, 0) = 1.0;
  m.decoder()[0].bias.value(0, 0) = 0.0;
  m.codebooks()[0].value = DenseMatrix::from_rows({{-1.0}, {1.0}});
  m.codebooks()[1].value = DenseMatrix::from_rows({{-0.25}, {0.25}});
  std::vector<double> x{0.6};
  RqVaeLoss l = rqvae_loss(x, m);
  const bool ok = std::abs(l.total - 0.250625) <= 1e-9 && std::abs(l.recon - 0.0225) <= 1e-9 &&
                  std::abs(l.rqvae - 0.228125) <= 1e-9;
  return verdict(ok, "total " + fmt("%.12f", l.total) + " recon " + fmt("%.12f", l.recon) +
                         " rqvae " + fmt("%.12f", l.rqvae));
}

// ---- desk-scale runs shared by criteria 3-8 and 11

struct DeskRun {
  RunConfig config;
  EvalReport report;
  double seconds = 0.0;
  double quantize_seconds = 0.0;
  bool ok = false;
  std::string error;
};

DeskRun execute(RunConfig config) {
  DeskRun run{config, {}, 0.0, 0.0, false, ""};
  std::ostringstream log;
  Stopwatch clock;
  try {
    fs::remove_all(config.output_dir);
    run_ingest(config, log);
    if (config.dataset.source == "synthetic" && config.dataset.embeddings.empty())
      run_embed_synthetic(config, log);
    Stopwatch q;
    run_quantize(config, log);
    run.quantize_seconds = q.seconds();
    run_train(config, log);
    run.report = run_evaluate(config, log);
    run.ok = true;
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  run.seconds = clock.seconds();
  std::cerr << "acceptance: " << config.output_dir.filename().string() << " "
            << fmt("%.0fs", run.seconds) << (run.ok ? "" : " error: " + run.error) << "\n";
  return run;
}

class DeskRuns {
 public:
  const DeskRun& ablation(std::uint64_t seed, const std::string& method) {
    const std::string name = method + "_s" + std::to_string(seed);
    auto it = runs_.find(name);
    if (it != runs_.end()) return it->second;
    RunConfig c = desk_config(seed, method, name);
    if (!(seed == 0 && method == "rqvae")) {
      c.evaluation.temperatures.clear();
      c.evaluation.invalid_k.clear();
    }
    return runs_.emplace(name, execute(c)).first->second;
  }
  const DeskRun& primary() { return ablation(0, "rqvae"); }
  const DeskRun& repeat() {
    auto it = runs_.find("repeat");
    if (it != runs_.end()) return it->second;
    return runs_.emplace("repeat", execute(desk_config(0, "rqvae", "rqvae_s0_repeat")))
        .first->second;
  }
  const DeskRun& coldstart() {
    auto it = runs_.find("coldstart");
    if (it != runs_.end()) return it->second;
    RunConfig c = desk_config(0, "rqvae", "coldstart_s0");
    c.coldstart.enabled = true;
    c.coldstart.unseen_fraction = 0.05;
    c.evaluation.temperatures.clear();
    c.evaluation.invalid_k.clear();
    return runs_.emplace("coldstart", execute(c)).first->second;
  }

 private:
  std::map<std::string, DeskRun> runs_;
};

Outcome failed_run(const DeskRun& r) { return verdict(false, "run failed: " + r.error); }

// ---- criterion 3

Outcome residual_decay(DeskRuns& runs) {
  const DeskRun& r = runs.primary();
  if (!r.ok) return failed_run(r);
  const auto& s = r.config.dataset.synthetic;
  const auto& e = r.config.dataset.synthetic_embedding;
  const bool setup = s.n_items == 2000 && s.n_coarse == 4 && s.n_fine_per_coarse == 8 &&
                     e.dim == 64 &&
                     r.config.quantizer.rqvae.levels == std::vector<int>{4, 16, 256};
  RqVaeModel model = load_rqvae(RunPaths(r.config.output_dir).rqvae());
  EmbeddingTable table = quantizer_input(r.config);
  std::vector<double> norms = mean_residual_norms(model, table);
  std::vector<double> usage = codebook_usage(model, table);
  bool decreasing = true;
  for (std::size_t d = 1; d < norms.size(); ++d) decreasing &= norms[d] < norms[d - 1];
  bool used = !usage.empty();
  for (double u : usage) used &= u >= 0.8;
  std::string detail = "norms";
  for (double n : norms) detail += " " + fmt("%.4f", n);
  detail += ", usage";
  for (double u : usage) detail += " " + fmt("%.3f", u);
  detail += ", quantize " + fmt("%.1fs", r.quantize_seconds);
  return verdict(setup && decreasing && used && r.quantize_seconds < 600.0, detail);
}

// ---- criterion 4

Outcome hierarchy(DeskRuns& runs) {
  const DeskRun& r = runs.primary();
  if (!r.ok) return failed_run(r);
  RunPaths p(r.config.output_dir);
  HierarchyReport h =
      hierarchy_report(load_assignment(p.assignment()), load_category_labels(p.labels()));
  auto shares = h.modal_share_by_first();
  bool ok = !shares.empty() && r.config.dataset.synthetic_embedding.noise_scale <= 0.1;
  std::string detail = "modal coarse share by c1:";
  for (const auto& [c1, share] : shares) {
    ok &= share >= 0.8;
    detail += " " + std::to_string(c1) + "=" + fmt("%.3f", share);
  }
  return verdict(ok, detail);
}

// ---- criterion 5

Outcome ablation(DeskRuns& runs) {
  double total = 0.0;
  int satisfied = 0;
  std::string detail;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    std::map<std::string, double> recall;
    for (const std::string method : {"rqvae", "lsh", "random"}) {
      const DeskRun& r = runs.ablation(seed, method);
      if (!r.ok) return failed_run(r);
      total += r.seconds;
      recall[method] = r.report.get("recall", 10, "tiger");
    }
    const bool ordered = recall["rqvae"] - recall["lsh"] >= 0.02 &&
                         recall["lsh"] - recall["random"] >= 0.02;
    satisfied += ordered ? 1 : 0;
    detail += "seed " + std::to_string(seed) + ": " + fmt("%.4f", recall["rqvae"]) + " > " +
              fmt("%.4f", recall["lsh"]) + " > " + fmt("%.4f", recall["random"]) +
              (ordered ? " ok; " : " no; ");
  }
  const RunConfig& c = runs.primary().config;
  const bool setup = c.dataset.synthetic.n_items == 2000 && c.dataset.synthetic.n_users == 5000 &&
                     c.training.steps >= 5000;
  detail += fmt("%.0fs total", total);
  return verdict(setup && satisfied >= 2 && total < 3600.0, detail);
}

// ---- criterion 6

Outcome invalid_ids(DeskRuns& runs) {
  const DeskRun& r = runs.primary();
  if (!r.ok) return failed_run(r);
  const double f5 = r.report.get("invalid_fraction", 5, "unconstrained");
  const double f10 = r.report.get("invalid_fraction", 10, "unconstrained");
  const double f20 = r.report.get("invalid_fraction", 20, "unconstrained");
  double constrained = 0.0;
  for (std::size_t k : {5u, 10u, 20u})
    constrained = std::max(constrained, r.report.get("invalid_fraction", k, "constrained"));
  return verdict(f20 <= 0.10 && f5 <= f10 && f10 <= f20 && constrained == 0.0,
                 "unconstrained " + fmt("%.5f", f5) + " " + fmt("%.5f", f10) + " " +
                     fmt("%.5f", f20) + ", constrained max " + fmt("%g", constrained));
}

// ---- criterion 7

Outcome diversity(DeskRuns& runs) {
  const DeskRun& r = runs.primary();
  if (!r.ok) return failed_run(r);
  const double e1 = r.report.get("entropy", 10, "T=1");
  const double e15 = r.report.get("entropy", 10, "T=1.5");
  const double e2 = r.report.get("entropy", 10, "T=2");
  return verdict(e1 <= e15 && e15 <= e2, "Entropy@10 " + fmt("%.4f", e1) + " " +
                                             fmt("%.4f", e15) + " " + fmt("%.4f", e2));
}

// ---- criterion 8

Outcome coldstart(DeskRuns& runs) {
  const DeskRun& r = runs.coldstart();
  if (!r.ok) return failed_run(r);
  const double unseen0 = r.report.get("recall", 10, "coldstart_unseen:eps=0");
  const double unseen1 = r.report.get("recall", 10, "coldstart_unseen:eps=0.1");
  const double all1 = r.report.get("recall", 10, "coldstart_all:eps=0.1");
  const double knn = r.report.get("recall", 10, "knn_all");
  return verdict(unseen0 == 0.0 && unseen1 > 0.0 && all1 >= knn,
                 "unseen recall eps=0 " + fmt("%g", unseen0) + ", eps=0.1 " +
                     fmt("%.4f", unseen1) + "; Recall@10 eps=0.1 " + fmt("%.4f", all1) +
                     " vs KNN " + fmt("%.4f", knn));
}

// ---- criterion 9

Outcome metric_oracles() {
  Rng rng(2026);
  std::size_t mismatches = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t users = 1 + rng.uniform_int(6);
    const std::size_t catalog = 3 + rng.uniform_int(10);
    const std::size_t k = 1 + rng.uniform_int(catalog);
    std::vector<Ranking> ranked(users);
    std::vector<std::string> truth(users);
    std::map<std::string, std::string> category;
    for (std::size_t i = 0; i < catalog; ++i)
      category["i" + std::to_string(i)] = "c" + std::to_string(rng.uniform_int(3));
    for (std::size_t u = 0; u < users; ++u) {
      std::vector<std::string> items;
      for (std::size_t i = 0; i < catalog; ++i) items.push_back("i" + std::to_string(i));
      for (std::size_t i = items.size(); i > 1; --i)
        std::swap(items[i - 1], items[rng.uniform_int(i)]);
      items.resize(1 + rng.uniform_int(catalog));
      ranked[u] = items;
      truth[u] = "i" + std::to_string(rng.uniform_int(catalog + 2));
    }
    double hits = 0.0;
    double gain = 0.0;
    double entropy = 0.0;
    for (std::size_t u = 0; u < users; ++u) {
      for (std::size_t pos = 0; pos < std::min(k, ranked[u].size()); ++pos) {
        if (ranked[u][pos] == truth[u]) {
          hits += 1.0;
          gain += 1.0 / std::log2(static_cast<double>(pos) + 2.0);
          break;
        }
      }
      std::map<std::string, double> counts;
      double n = 0.0;
      for (std::size_t pos = 0; pos < std::min(k, ranked[u].size()); ++pos) {
        counts[category[ranked[u][pos]]] += 1.0;
        n += 1.0;
      }
      double h = 0.0;
      for (const auto& [cat, cnt] : counts) h -= (cnt / n) * std::log(cnt / n);
      entropy += h;
    }
    const double n = static_cast<double>(users);
    mismatches += recall_at_k(ranked, truth, k) != hits / n;
    mismatches += ndcg_at_k(ranked, truth, k) != gain / n;
    mismatches += std::abs(entropy_at_k(ranked, category, k).mean - entropy / n) > 1e-12;
  }
  const double rank4 = ndcg_at_k({{"a", "b", "c", "t"}}, {"t"}, 10);
  const bool ok = mismatches == 0 && std::abs(rank4 - 1.0 / std::log2(5.0)) <= 1e-12;
  return verdict(ok, "50 instances, " + std::to_string(mismatches) + " mismatches, rank-4 NDCG " +
                         fmt("%.15f", rank4));
}

// ---- criterion 10

Outcome beam_oracle() {
  const TokenVocabulary vocab({2, 2}, 3);
  TransformerConfig c;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.heads = 2;
  c.head_dim = 4;
  c.model_dim = 8;
  c.mlp_dim = 16;
  c.dropout = 0.0;
  c.max_input_len = 9;
  c.decode_len = 2;
  const std::vector<int> input{vocab.user_token(1), vocab.semantic_token(0, 0),
                               vocab.semantic_token(1, 0), vocab.semantic_token(0, 1),
                               vocab.semantic_token(1, 1)};
  auto block_log_probs = [&](const DenseMatrix& logits, std::size_t row, std::size_t level) {
    const int off = vocab.level_offset(level);
    std::vector<double> v;
    for (int j = 0; j < vocab.level_size(level); ++j) v.push_back(logits(row, off + j));
    const double mx = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    for (double& x : v) x = x - mx - std::log(s);
    return v;
  };
  std::size_t mismatches = 0;
  for (std::uint64_t draw = 0; draw < 100; ++draw) {
    Seq2SeqModel m(c, vocab, 5000 + draw);
    for (Parameter* p : m.parameters()) p->value.mat() *= 2.0;
    std::vector<std::pair<double, std::vector<int>>> all;
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const std::vector<int> dec{TokenVocabulary::kBos, vocab.semantic_token(0, a)};
        DenseMatrix logits = forward(m, input, dec);
        const double lp = block_log_probs(logits, 0, 0)[a] + block_log_probs(logits, 1, 1)[b];
        all.push_back({lp, {a, b}});
      }
    }
    std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    auto beam = beam_search(m, input, {4, 4, false});
    if (beam.size() != 4) {
      ++mismatches;
      continue;
    }
    for (std::size_t i = 0; i < 4; ++i) {
      mismatches += beam[i].id.codes != all[i].second ||
                    std::abs(beam[i].log_prob - all[i].first) > 1e-12;
    }
  }
  return verdict(mismatches == 0,
                 "100 draws, " + std::to_string(mismatches) + " ranking mismatches");
}

// ---- criterion 11

Outcome determinism(DeskRuns& runs) {
  const DeskRun& a = runs.primary();
  const DeskRun& b = runs.repeat();
  if (!a.ok) return failed_run(a);
  if (!b.ok) return failed_run(b);
  RunPaths pa(a.config.output_dir);
  RunPaths pb(b.config.output_dir);
  std::string differing;
  const std::vector<std::pair<std::string, std::function<fs::path(const RunPaths&)>>> files = {
      {"model.tgrc", [](const RunPaths& p) { return p.checkpoint(); }},
      {"rqvae.rqvc", [](const RunPaths& p) { return p.rqvae(); }},
      {"semantic_ids.json", [](const RunPaths& p) { return p.assignment(); }},
      {"quantize_report.json", [](const RunPaths& p) { return p.quantize_report(); }},
      {"loss_curve.csv", [](const RunPaths& p) { return p.loss_curve(); }},
      {"predictions.jsonl", [](const RunPaths& p) { return p.predictions(); }},
      {"report.json", [](const RunPaths& p) { return p.report_json(); }},
      {"report.csv", [](const RunPaths& p) { return p.report_csv(); }},
  };
  for (const auto& [name, path] : files) {
    const std::string x = file_bytes(path(pa));
    if (x.empty() || x != file_bytes(path(pb))) differing += " " + name;
  }
  return verdict(differing.empty(), differing.empty()
                                        ? std::to_string(files.size()) + " artifacts identical"
                                        : "differing:" + differing);
}

// ---- criterion 12

Outcome amazon() {
  const char* env = std::getenv("TIGER_AMAZON_CONFIG");
  if (!env || !fs::exists(env)) {
    return {Outcome::Status::kSkip, "set TIGER_AMAZON_CONFIG to a config with Beauty data"};
  }
  RunConfig c = load_run_config(env);
  DeskRun r = execute(c);
  if (!r.ok) return failed_run(r);
  const double recall = r.report.get("recall", 5, "tiger");
  return verdict(std::abs(recall - 0.0454) <= 0.2 * 0.0454,
                 "Recall@5 " + fmt("%.4f", recall) + " vs 0.0454");
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  DeskRuns runs;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradients},
      {"RQ-VAE loss oracle", loss_oracle},
      {"residual decay and codebook usage", [&] { return residual_decay(runs); }},
      {"hierarchy recovery", [&] { return hierarchy(runs); }},
      {"ablation ordering RQ-VAE > LSH > Random", [&] { return ablation(runs); }},
      {"invalid-ID behavior", [&] { return invalid_ids(runs); }},
      {"diversity under temperature", [&] { return diversity(runs); }},
      {"cold-start behavior", [&] { return coldstart(runs); }},
      {"metric oracles", metric_oracles},
      {"beam-search oracle", beam_oracle},
      {"determinism", [&] { return determinism(runs); }},
      {"Amazon Beauty reproduction", amazon},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = verdict(false, std::string("exception: ") + e.what());
    }
    const char* tag = o.status == Outcome::Status::kPass   ? "PASS"
                      : o.status == Outcome::Status::kSkip ? "SKIP"
                                                           : "FAIL";
    failed += o.status == Outcome::Status::kFail;
    std::cout << tag << " " << n << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
