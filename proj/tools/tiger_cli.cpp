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


#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tiger/errors.hpp"
#include "tiger/pipeline.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TIGER generative retrieval recommender"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  app.add_option("--config", config_path, "Run configuration (JSON)")->required();
  app.add_option("--seed", seed, "Overrides the configured seed");
  app.add_option("--out", out_dir, "Overrides the configured output directory");

  auto* ingest = app.add_subcommand("ingest", "Build the processed dataset");
  auto* embed = app.add_subcommand("embed-synthetic", "Write synthetic content embeddings");
  auto* quantize = app.add_subcommand("quantize", "Assign Semantic IDs");
  auto* train = app.add_subcommand("train", "Train the retriever (resumes when possible)");
  auto* evaluate = app.add_subcommand("evaluate", "Write the evaluation report");
  auto* run = app.add_subcommand("run", "ingest, embed-synthetic, quantize, train, evaluate");

  auto* recommend = app.add_subcommand("recommend", "Top-K items for one user as JSON");
  std::string user;
  std::string history;
  std::size_t k = 10;
  recommend->add_option("--user", user, "User id")->required();
  recommend->add_option("--history", history,
                        "Comma-separated item ids (default: the user's dataset sequence)");
  recommend->add_option("--k", k, "Number of items");

  auto* inspect = app.add_subcommand("inspect-ids", "Summarize the Semantic ID assignment");
  std::string item;
  inspect->add_option("--item", item, "Print one item's Semantic ID");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    tiger::RunConfig config = tiger::load_run_config(config_path, seed);
    if (!out_dir.empty()) config.output_dir = out_dir;
    std::ostream& log = std::cerr;
    if (ingest->parsed()) {
      tiger::run_ingest(config, log);
    } else if (embed->parsed()) {
      tiger::run_embed_synthetic(config, log);
    } else if (quantize->parsed()) {
      tiger::run_quantize(config, log);
    } else if (train->parsed()) {
      tiger::run_train(config, log);
    } else if (evaluate->parsed()) {
      tiger::run_evaluate(config, log);
    } else if (run->parsed()) {
      tiger::run_pipeline(config, log);
    } else if (recommend->parsed()) {
      std::cout << tiger::run_recommend(config, user, split_list(history), k);
    } else if (inspect->parsed()) {
      std::cout << tiger::run_inspect_ids(config, item);
    }
  } catch (const tiger::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case tiger::ErrorKind::kUsage:
        return kExitUsage;
      case tiger::ErrorKind::kData:
        return kExitData;
      case tiger::ErrorKind::kNumeric:
        return kExitNumeric;
    }
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
