//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <istream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "molrat/fingerprint.hpp"
#include "molrat/mol_graph.hpp"

namespace molrat {

struct ForestParams {
  int num_trees = 100;
  int max_depth = 12;
  std::uint64_t seed = 0;
  int fingerprint_radius = kDefaultFingerprintRadius;
  int fingerprint_width = kDefaultFingerprintWidth;
  unsigned threads = 0;  // 0 = hardware concurrency
};

/// Array-encoded binary tree. Node i is a leaf when feature[i] < 0; its
/// value is the positive fraction of the bootstrap samples reaching it.
struct DecisionTree {
  std::vector<int> feature;
  std::vector<int> left;
  std::vector<int> right;
  std::vector<double> value;

  double predict(const BitFingerprint &x) const;
  friend bool operator==(const DecisionTree &, const DecisionTree &) = default;
};

class ForestModel {
public:
  ForestModel() = default;
  ForestModel(std::vector<DecisionTree> trees, ForestParams params);

  const std::vector<DecisionTree> &trees() const { return trees_; }
  const ForestParams &params() const { return params_; }

  /// Mean leaf value over trees.
  double predict(const BitFingerprint &x) const;
  double predict(const MolGraph &g) const;
  BitFingerprint featurize(const MolGraph &g) const;

  nlohmann::json to_json() const;
  static ForestModel from_json(const nlohmann::json &j);

private:
  std::vector<DecisionTree> trees_;
  ForestParams params_;
};

/// Trains on precomputed fingerprints. Each tree draws a stratified
/// bootstrap (positives and negatives resampled separately) from a seed
/// derived from (seed, tree index) and splits on the best Gini decrease among
/// round(sqrt(width)) bits sampled from those that vary at the node.
ForestModel train_forest(std::span<const BitFingerprint> x, std::span<const int> labels,
                         const ForestParams &params);
ForestModel train_forest(std::span<const MolGraph> molecules, std::span<const int> labels,
                         const ForestParams &params);

double predict_score(const ForestModel &m, const MolGraph &g);

/// Rank-based AUROC with midranks for tied scores.
double auroc(std::span<const double> scores, std::span<const int> labels);
double auroc(const ForestModel &m, std::span<const MolGraph> molecules, std::span<const int> labels);

/// A property constraint: score >= threshold.
struct PropertySpec {
  std::string name;
  double threshold = 0.5;
  std::shared_ptr<const ForestModel> predictor;

  double score(const MolGraph &g) const { return predictor->predict(g); }
  bool satisfied(const MolGraph &g) const { return score(g) >= threshold; }
};

/// `smiles,label1,label2,...` table.
struct LabelTable {
  std::vector<std::string> property_names;
  std::vector<std::string> smiles;
  std::vector<std::vector<int>> labels;  // labels[property][row]
};

LabelTable read_label_csv(std::istream &in);
void write_label_csv(std::ostream &out, const LabelTable &table);

}  // namespace molrat
