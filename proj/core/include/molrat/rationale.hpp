//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "molrat/mol_graph.hpp"

namespace molrat {

/// A rationale: one or more fragments (connected components of `graph`)
/// with per-property scores and the atoms the generator may grow from.
struct Rationale {
  MolGraph graph;                       // atoms in canonical SMILES order
  std::vector<int> peripheral;          // sorted atom indices into graph
  std::map<std::string, double> scores;
  std::string source;                   // canonical key of the source molecule
  std::vector<int> source_atoms;        // source atom per graph atom; empty after merging

  int num_fragments() const;
  std::vector<MolGraph> fragments() const;
  std::string key() const;
};

/// Builds a rationale from a subgraph `sub` of `source`, where `origin[i]` is
/// the source atom of sub atom i. Peripheral atoms are those that lost a
/// neighbour relative to the source, plus degree-1 atoms. The result is
/// relabeled into canonical order.
Rationale make_rationale(const MolGraph &source, const MolGraph &sub, std::span<const int> origin);

/// Relabels `graph` canonically and carries peripheral atoms and source
/// atoms along.
Rationale canonicalize(MolGraph graph, std::span<const int> peripheral, std::vector<int> source_atoms = {});

/// Rationales deduplicated by canonical key; the first occurrence wins.
class RationaleVocab {
public:
  RationaleVocab() = default;
  explicit RationaleVocab(std::vector<std::string> properties) : properties_(std::move(properties)) {}

  const std::vector<std::string> &properties() const { return properties_; }
  const std::vector<Rationale> &items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const Rationale &operator[](std::size_t i) const { return items_[i]; }

  /// Returns false when a rationale with the same key is already present.
  bool add(Rationale r);
  bool contains(const std::string &key) const { return index_.count(key) != 0; }

  nlohmann::json to_json() const;
  static RationaleVocab from_json(const nlohmann::json &j);

private:
  std::vector<std::string> properties_;
  std::vector<Rationale> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace molrat
