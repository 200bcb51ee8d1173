//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "molrat/extract.hpp"
#include "molrat/forest.hpp"
#include "molrat/genmodel.hpp"
#include "molrat/merge.hpp"
#include "molrat/metrics.hpp"
#include "molrat/synthetic.hpp"
#include "molrat/train.hpp"

namespace molrat::pipeline {

inline constexpr int kSchemaVersion = 1;

struct PropertyConfig {
  std::string name;
  std::string motif;  // SMILES; required by gen-synthetic and faithfulness
  double threshold = 0.5;
};

struct RunConfig {
  std::string preset = "desk";
  std::filesystem::path run_dir = "run";
  std::uint64_t seed = 1;
  unsigned threads = 0;

  std::filesystem::path corpus_file;  // ingest: one SMILES per line
  std::filesystem::path labels_file;  // ingest: smiles,label1,...
  int corpus_size = 2000;
  SyntheticParams synthetic;
  double plant_prob = 0.5;
  std::vector<PropertyConfig> properties;

  ForestParams forest;
  double holdout_fraction = 0.2;

  MctsParams mcts;
  int extract_max_molecules = 200;  // 0 = every positive
  MergeParams merge;

  GenModelConfig model;
  TrainConfig train;
  int pretrain_molecules = 0;  // 0 = whole corpus

  std::size_t sample_n = 500;
  int faithfulness_max_molecules = 0;  // 0 = every positive

  /// Preset values first, then the file's keys. Throws ConfigError on
  /// unknown keys, bad types, or invalid values.
  static RunConfig from_yaml(const std::string &text);
  static RunConfig load(const std::filesystem::path &file);
  static RunConfig preset_defaults(const std::string &preset);

  void validate() const;
  /// Effective configuration; run_dir and threads are left out because
  /// they do not affect results.
  nlohmann::json to_json() const;
  /// SHA-256 of to_json().dump().
  std::string hash() const;

  std::vector<std::string> property_names() const;
};

enum class LogLevel { Info, Warn };
using Logger = std::function<void(LogLevel, const std::string &)>;

std::string sha256_hex(const std::string &bytes);
std::string sha256_file(const std::filesystem::path &file);

/// Stage options that are not part of the configuration.
struct StageOptions {
  bool force = false;               // accept config-hash mismatches
  std::optional<std::size_t> n;     // sample: override sample_n
  Logger log;
  std::ostream *out = nullptr;  // evaluate and faithfulness print their tables here
};

/// Pipeline stages in dependency order.
enum class Stage {
  GenSynthetic,
  Ingest,
  TrainPredictor,
  Extract,
  Merge,
  Pretrain,
  Finetune,
  Sample,
  Evaluate,
  Faithfulness,
};

std::string stage_name(Stage s);

/// Runs one stage inside cfg.run_dir. Upstream artifacts must exist and
/// carry manifests with the current config hash (unless forced) and
/// unchanged file hashes. Throws ArtifactError naming the missing command.
void run_stage(Stage stage, const RunConfig &cfg, const StageOptions &options = {});

/// Every stage from corpus generation (or ingestion when a corpus file is
/// configured) to evaluation.
void run_all(const RunConfig &cfg, const StageOptions &options = {});

struct MatchResult {
  bool exact = false;
  double partial = 0.0;  // fraction of motif atoms covered
};

/// Exact: rationale graph isomorphic to the motif. Partial: the largest
/// fraction of motif atoms, over motif embeddings in the molecule, that map
/// onto rationale atoms (via rationale.source_atoms).
MatchResult match_rationale(const Rationale &rationale, const MolGraph &molecule, const MolGraph &motif);

struct FaithfulnessReport {
  std::size_t molecules = 0;
  std::size_t with_rationale = 0;
  double exact_rate = 0.0;
  double partial_mean = 0.0;
  std::vector<MatchResult> per_molecule;
  nlohmann::json to_json() const;
};

/// Best rationale per molecule (extract_rationales + best_rationale) scored
/// against the motif; molecules without a rationale count as no match.
FaithfulnessReport faithfulness(std::span<const MolGraph> positives, const PropertySpec &prop, const MolGraph &motif,
                                const MctsParams &params, unsigned threads = 0);

}  // namespace molrat::pipeline
