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

#include <sys/wait.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "gtest/gtest.h"
#include <json.hpp>
#include "tiger/errors.hpp"
#include "tiger/pipeline.hpp"

namespace fs = std::filesystem;
using tiger::RunConfig;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = fs::temp_directory_path() /
            ("tiger_pl_" + tag + "_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

nlohmann::json tiny(const fs::path& out) {
  nlohmann::json j = nlohmann::json::parse(R"({
    "seed": 3,
    "dataset": {
      "synthetic": {"n_users": 150, "n_items": 48, "n_coarse": 2, "n_fine_per_coarse": 3},
      "synthetic_embedding": {"dim": 8, "noise_scale": 0.1}
    },
    "quantizer": {
      "method": "rqvae",
      "rqvae": {"hidden": [16], "latent_dim": 4, "levels": [2, 4], "epochs": 5,
                "batch_size": 64, "lr": 0.01}
    },
    "model": {"enc_layers": 1, "dec_layers": 1, "heads": 1, "head_dim": 8,
              "model_dim": 8, "mlp_dim": 16},
    "user_buckets": 16,
    "training": {"batch_size": 16, "steps": 12, "decay_start": 4, "validate_every": 6,
                 "validation_users": 10},
    "evaluation": {"max_users": 40, "diversity_users": 8, "entropy_k": [5],
                   "max_sample_attempts": 20},
    "coldstart": {"enabled": true, "unseen_fraction": 0.1, "epsilons": [0.0, 0.5]}
  })");
  j["output_dir"] = out.string();
  return j;
}

RunConfig parse(const nlohmann::json& j) { return RunConfig::parse(j.dump()); }

int run_cli(const std::string& args) {
  std::string cmd = std::string(TIGER_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string usage_message(const std::string& text) {
  try {
    RunConfig::parse(text);
  } catch (const tiger::UsageError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(RunConfig, DefaultsFillMissingKeys) {
  RunConfig c = RunConfig::parse(R"({"seed": 7})");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.quantizer.method, "rqvae");
  EXPECT_EQ(c.user_buckets, 2000);
  EXPECT_EQ(c.dataset.max_history, 20u);
  EXPECT_EQ(c.training.base_lr, 0.01);
}

TEST(RunConfig, UnknownKeyIsNamed) {
  std::string msg = usage_message(R"({"seed": 1, "training": {"stepz": 5}})");
  EXPECT_NE(msg.find("training.stepz"), std::string::npos) << msg;
  msg = usage_message(R"({"seed": 1, "colour": "red"})");
  EXPECT_NE(msg.find("colour"), std::string::npos) << msg;
}

TEST(RunConfig, MissingSeedIsRejectedUnlessOverridden) {
  EXPECT_NE(usage_message(R"({"output_dir": "x"})").find("seed"), std::string::npos);
  RunConfig c = RunConfig::parse(R"({"output_dir": "x"})", 11);
  EXPECT_EQ(c.seed, 11u);
  EXPECT_EQ(RunConfig::parse(R"({"seed": 4})", 9).seed, 9u);
}

TEST(RunConfig, WrongTypeAndBadJsonAreUsageErrors) {
  EXPECT_THROW(RunConfig::parse(R"({"seed": "one"})"), tiger::UsageError);
  EXPECT_THROW(RunConfig::parse("{"), tiger::UsageError);
  EXPECT_THROW(RunConfig::parse(R"({"seed": 1, "training": 3})"), tiger::UsageError);
}

TEST(RunConfig, CanonicalJsonRoundTrips) {
  TempDir dir("rt");
  RunConfig c = parse(tiny(dir.path()));
  RunConfig back = RunConfig::parse(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.digest(), c.digest());
  EXPECT_EQ(c.digest().size(), 16u);
  RunConfig other = RunConfig::parse(c.to_json(), c.seed + 1);
  EXPECT_NE(other.digest(), c.digest());
}

TEST(RunConfig, ComponentSeedsDifferByNameAndSeed) {
  RunConfig a = RunConfig::parse(R"({"seed": 1})");
  RunConfig b = RunConfig::parse(R"({"seed": 2})");
  EXPECT_NE(a.component_seed("model"), a.component_seed("training"));
  EXPECT_NE(a.component_seed("model"), b.component_seed("model"));
  EXPECT_EQ(a.component_seed("model"), RunConfig::parse(R"({"seed": 1})").component_seed("model"));
}

TEST(RunConfig, ValidateRejectsBadValues) {
  TempDir dir("val");
  auto base = tiny(dir.path());
  auto bad = [&](const std::string& patch) {
    auto j = base;
    j.merge_patch(nlohmann::json::parse(patch));
    return parse(j);
  };
  EXPECT_NO_THROW(parse(base).validate());
  EXPECT_THROW(bad(R"({"dataset": {"source": "csv"}})").validate(), tiger::UsageError);
  EXPECT_THROW(bad(R"({"evaluation": {"temperatures": [0.0]}})").validate(), tiger::UsageError);
  EXPECT_THROW(bad(R"({"evaluation": {"beam_width": 3}})").validate(), tiger::UsageError);
  EXPECT_THROW(bad(R"({"coldstart": {"unseen_fraction": 1.0}})").validate(), tiger::UsageError);
  EXPECT_THROW(bad(R"({"training": {"batch_size": 0}})").validate(), tiger::UsageError);
  EXPECT_THROW(bad(R"({"dataset": {"source": "amazon"}})").validate(), tiger::UsageError);
}

TEST(RunConfig, MissingInputPathIsNamed) {
  TempDir dir("miss");
  auto j = tiny(dir.path());
  j["dataset"]["embeddings"] = (dir / "nope.semb").string();
  try {
    parse(j).validate();
    FAIL() << "expected UsageError";
  } catch (const tiger::UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("nope.semb"), std::string::npos);
  }
}

TEST(Pipeline, EndToEndProducesArtifactsAndIsRerunStable) {
  TempDir dir("e2e");
  RunConfig c = parse(tiny(dir / "run"));
  std::ostringstream log;
  tiger::EvalReport r = tiger::run_pipeline(c, log);
  tiger::RunPaths p(c.output_dir);
  for (const fs::path& f :
       {p.dataset(), p.labels(), p.stats(), p.embeddings(), p.assignment(), p.rqvae(),
        p.quantize_report(), p.hierarchy(), p.checkpoint(), p.loss_curve(),
        p.validation_log(), p.predictions(), p.report_json(), p.report_csv(),
        p.manifest("ingest"), p.manifest("quantize"), p.manifest("train"),
        p.manifest("evaluate")}) {
    EXPECT_TRUE(fs::exists(f)) << f;
  }
  for (std::size_t k : {5u, 10u}) {
    double recall = r.get("recall", k, "tiger");
    EXPECT_GE(recall, 0.0);
    EXPECT_LE(recall, 1.0);
    EXPECT_LE(r.get("ndcg", k, "tiger"), recall + 1e-12);
  }
  EXPECT_EQ(r.get("invalid_fraction", 20, "constrained"), 0.0);
  EXPECT_EQ(r.get("recall", 10, "coldstart_unseen:eps=0"), 0.0);
  EXPECT_EQ(r.get("unseen_per_list", 10, "coldstart:eps=0"), 0.0);
  EXPECT_GT(r.get("items", 0, "coldstart_unseen"), 0.0);
  EXPECT_EQ(r.seed, 3u);
  EXPECT_EQ(r.checkpoint, tiger::file_digest(p.checkpoint()));

  auto manifest = nlohmann::json::parse(file_bytes(p.manifest("evaluate")));
  EXPECT_EQ(manifest["config_digest"], c.digest());
  EXPECT_EQ(manifest["command"], "evaluate");

  const std::string ckpt = file_bytes(p.checkpoint());
  const std::string ids = file_bytes(p.assignment());
  const std::string report = file_bytes(p.report_json());
  const std::string curve = file_bytes(p.loss_curve());
  std::ostringstream log2;
  tiger::run_pipeline(c, log2);
  EXPECT_EQ(file_bytes(p.checkpoint()), ckpt);
  EXPECT_EQ(file_bytes(p.assignment()), ids);
  EXPECT_EQ(file_bytes(p.report_json()), report);
  EXPECT_EQ(file_bytes(p.loss_curve()), curve);

  RunConfig c2 = parse(tiny(dir / "run2"));
  std::ostringstream log3;
  tiger::run_pipeline(c2, log3);
  tiger::RunPaths p2(c2.output_dir);
  EXPECT_EQ(file_bytes(p2.checkpoint()), ckpt);
  EXPECT_EQ(file_bytes(p2.assignment()), ids);
  EXPECT_EQ(file_bytes(p2.report_csv()), file_bytes(p.report_csv()));
}

TEST(Pipeline, SeedChangesArtifacts) {
  TempDir dir("seed");
  auto j = tiny(dir / "a");
  j["coldstart"]["enabled"] = false;
  j["training"]["steps"] = 2;
  RunConfig a = parse(j);
  j["seed"] = 4;
  j["output_dir"] = (dir / "b").string();
  RunConfig b = parse(j);
  std::ostringstream log;
  tiger::run_ingest(a, log);
  tiger::run_embed_synthetic(a, log);
  tiger::run_ingest(b, log);
  tiger::run_embed_synthetic(b, log);
  EXPECT_NE(file_bytes(tiger::RunPaths(a.output_dir).dataset()),
            file_bytes(tiger::RunPaths(b.output_dir).dataset()));
}

TEST(Pipeline, RecommendAndInspect) {
  TempDir dir("rec");
  auto j = tiny(dir / "run");
  j["coldstart"]["enabled"] = false;
  RunConfig c = parse(j);
  std::ostringstream log;
  tiger::run_ingest(c, log);
  tiger::run_embed_synthetic(c, log);
  tiger::run_quantize(c, log);
  tiger::run_train(c, log);
  std::string out = tiger::run_recommend(c, "fresh_user", {"item_00000", "item_00001"}, 3);
  auto rec = nlohmann::json::parse(out);
  EXPECT_FALSE(rec.empty());
  EXPECT_THROW(tiger::run_recommend(c, "fresh_user", {}, 3), tiger::UsageError);
  EXPECT_THROW(tiger::run_recommend(c, "fresh_user", {"item_00000"}, 0), tiger::UsageError);
  EXPECT_FALSE(tiger::run_inspect_ids(c, "item_00000").empty());
  EXPECT_THROW(tiger::run_recommend(c, "fresh_user", {"no_such_item"}, 3), tiger::UsageError);
  EXPECT_THROW(tiger::run_inspect_ids(c, "no_such_item"), tiger::UsageError);
}

TEST(Cli, ExitCodes) {
  TempDir dir("cli");
  auto j = tiny(dir / "run");
  j["coldstart"]["enabled"] = false;
  {
    std::ofstream(dir / "ok.json") << j.dump();
    auto bad = j;
    bad["training"]["stepz"] = 1;
    std::ofstream(dir / "bad.json") << bad.dump();
    auto missing = j;
    missing["dataset"]["embeddings"] = (dir / "nope.semb").string();
    std::ofstream(dir / "missing.json") << missing.dump();
    std::ofstream(dir / "garbage.semb") << "not an embedding table";
    auto garbage = j;
    garbage["dataset"]["embeddings"] = (dir / "garbage.semb").string();
    std::ofstream(dir / "garbage.json") << garbage.dump();
  }
  const std::string ok = "--config " + (dir / "ok.json").string();
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli("ingest"), 2);
  EXPECT_EQ(run_cli(ok + " frobnicate"), 2);
  EXPECT_EQ(run_cli("--config " + (dir / "bad.json").string() + " ingest"), 2);
  EXPECT_EQ(run_cli("--config " + (dir / "missing.json").string() + " ingest"), 2);
  EXPECT_EQ(run_cli("--config " + (dir / "absent.json").string() + " ingest"), 2);
  EXPECT_EQ(run_cli(ok + " train"), 2);
  EXPECT_EQ(run_cli(ok + " ingest"), 0);
  EXPECT_EQ(run_cli(ok + " embed-synthetic"), 0);
  EXPECT_EQ(run_cli(ok + " quantize"), 0);
  EXPECT_EQ(run_cli(ok + " inspect-ids --item no_such_item"), 2);
  EXPECT_EQ(run_cli(ok + " recommend --user u --history item_00000 --k 2"), 2);
  EXPECT_EQ(run_cli(ok + " train"), 0);
  EXPECT_EQ(run_cli(ok + " recommend --user u --history item_00000 --k 2"), 0);
  EXPECT_EQ(run_cli("--config " + (dir / "garbage.json").string() + " quantize"), 3);
}
