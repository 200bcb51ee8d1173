//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "molrat/error.hpp"
#include "molrat/pipeline.hpp"

namespace {

using molrat::pipeline::Stage;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitArtifact = 3;
constexpr int kExitNumeric = 4;

struct Options {
  std::string config;
  std::string run_dir;
  bool force = false;
  bool quiet = false;
  std::optional<unsigned> threads;
  std::optional<std::size_t> n;
};

void add_common(CLI::App *cmd, Options &opt) {
  cmd->add_option("-c,--config", opt.config, "YAML run configuration")->required()->check(CLI::ExistingFile);
  cmd->add_option("--run-dir", opt.run_dir, "override run_dir from the config");
  cmd->add_option("--threads", opt.threads, "worker threads (0 = all cores)");
  cmd->add_flag("--force", opt.force, "accept artifacts produced under a different config");
  cmd->add_flag("-q,--quiet", opt.quiet, "only log warnings and errors");
}

int run(const Options &opt, const std::vector<Stage> &stages) {
  auto cfg = molrat::pipeline::RunConfig::load(opt.config);
  if (!opt.run_dir.empty()) cfg.run_dir = opt.run_dir;
  if (opt.threads) cfg.threads = *opt.threads;
  if (opt.quiet) spdlog::set_level(spdlog::level::warn);

  molrat::pipeline::StageOptions so;
  so.force = opt.force;
  so.n = opt.n;
  so.out = &std::cout;
  so.log = [](molrat::pipeline::LogLevel level, const std::string &msg) {
    if (level == molrat::pipeline::LogLevel::Warn)
      spdlog::warn("{}", msg);
    else
      spdlog::info("{}", msg);
  };
  spdlog::info("run directory {} (config {})", cfg.run_dir.string(), cfg.hash().substr(0, 12));
  for (Stage s : stages) molrat::pipeline::run_stage(s, cfg, so);
  return kExitOk;
}

}  // namespace

int main(int argc, char **argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("molrat"));
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

  CLI::App app{"molrat: rationale-based multi-objective molecule generation"};
  app.require_subcommand(1);

  Options opt;
  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen-synthetic", "generate a labelled synthetic corpus with planted motifs"},
      {"ingest", "import a labelled SMILES CSV (data.labels) and optional corpus"},
      {"train-predictor", "train one random-forest property predictor per property"},
      {"extract", "search single-property rationales of labelled positives"},
      {"merge", "combine property vocabularies into multi-property rationales"},
      {"pretrain", "pre-train the graph completion model on the corpus"},
      {"finetune", "fine-tune toward the properties and fit the rationale distribution"},
      {"sample", "sample molecules from the fine-tuned model"},
      {"evaluate", "score samples for success, diversity and novelty"},
      {"faithfulness", "compare extracted rationales with the planted motifs"},
  };
  const std::vector<Stage> stages{Stage::GenSynthetic, Stage::Ingest, Stage::TrainPredictor, Stage::Extract,
                                  Stage::Merge,        Stage::Pretrain, Stage::Finetune,     Stage::Sample,
                                  Stage::Evaluate,     Stage::Faithfulness};
  std::vector<CLI::App *> subs;
  for (const auto &[name, help] : commands) {
    auto *cmd = app.add_subcommand(name, help);
    add_common(cmd, opt);
    subs.push_back(cmd);
  }
  subs[7]->add_option("-n,--n", opt.n, "number of molecules (overrides sample.n)");
  auto *all = app.add_subcommand("run", "run every stage from corpus to evaluation");
  add_common(all, opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (all->parsed()) {
      auto cfg = molrat::pipeline::RunConfig::load(opt.config);
      std::vector<Stage> chain{cfg.labels_file.empty() ? Stage::GenSynthetic : Stage::Ingest,
                               Stage::TrainPredictor, Stage::Extract, Stage::Merge, Stage::Pretrain,
                               Stage::Finetune, Stage::Sample, Stage::Evaluate};
      return run(opt, chain);
    }
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) return run(opt, {stages[i]});
  } catch (const molrat::ConfigError &e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const molrat::ArtifactError &e) {
    spdlog::error("{}", e.what());
    return kExitArtifact;
  } catch (const molrat::NumericError &e) {
    spdlog::error("{}", e.what());
    return kExitNumeric;
  } catch (const std::exception &e) {
    spdlog::error("{}", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
