//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "molrat/fingerprint.hpp"
#include "molrat/forest.hpp"
#include "molrat/mol_graph.hpp"

namespace molrat {

inline constexpr double kNoveltyThreshold = 0.4;

/// True when every property is satisfied.
bool all_satisfied(const MolGraph &g, std::span<const PropertySpec> props);

/// Fraction of samples satisfying every property. Throws on an empty set.
double success_rate(std::span<const MolGraph> samples, std::span<const PropertySpec> props);

/// One minus the mean Tanimoto similarity over unordered pairs; absent for
/// fewer than two molecules.
std::optional<double> diversity(std::span<const BitFingerprint> fps);

struct NearestNeighbor {
  int index = -1;  // into the reference set, lowest index on ties
  double similarity = 0.0;
};

std::vector<NearestNeighbor> nearest_neighbors(std::span<const BitFingerprint> queries,
                                               std::span<const BitFingerprint> reference);

/// Fraction of molecules whose nearest reference similarity is strictly
/// below kNoveltyThreshold. Throws when either set is empty.
double novelty(std::span<const BitFingerprint> fps, std::span<const BitFingerprint> reference);

struct EvalReport {
  std::size_t n = 0;
  std::size_t positives = 0;
  double success = 0.0;
  std::optional<double> diversity;  // over positives
  std::optional<double> novelty;    // over positives
  std::optional<double> diversity_all;
  std::optional<double> novelty_all;
  std::vector<std::pair<std::string, double>> property_rates;

  static std::string csv_header(std::span<const std::string> property_names);
  /// Fixed six-decimal formatting; absent values are empty fields.
  std::string csv_row() const;
  nlohmann::json to_json() const;
};

/// Success, per-property rates, and diversity/novelty over positives (plus
/// all-sample variants). Novelty is absent when `train_positives` is empty.
EvalReport evaluate(std::span<const MolGraph> samples, std::span<const PropertySpec> props,
                    std::span<const MolGraph> train_positives);

std::vector<BitFingerprint> fingerprints(std::span<const MolGraph> molecules);

}  // namespace molrat
