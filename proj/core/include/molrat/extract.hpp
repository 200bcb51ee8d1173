//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "molrat/deletion.hpp"
#include "molrat/forest.hpp"
#include "molrat/mol_graph.hpp"
#include "molrat/rationale.hpp"

namespace molrat {

/// Statistics of one (state, deletion) edge.
struct EdgeStats {
  int visits = 0;            // N
  double total_value = 0.0;  // W
  double prior = 0.0;        // R: score of the child state

  /// Q = W / N, and 0 before the first visit.
  double mean_value() const { return visits > 0 ? total_value / visits : 0.0; }
};

/// Index of the edge maximising Q + c_puct * R * sqrt(sum N) / (1 + N); ties
/// go to the higher R, then the lower index. Throws on an empty edge list.
int select_action(std::span<const EdgeStats> edges, double c_puct);

/// Adds one visit and `reward` to every edge on the path.
void backup(std::span<EdgeStats *const> path, double reward);

struct MctsParams {
  int iterations = 20;
  double c_puct = 10.0;
  int max_atoms = 20;  // N_s
};

using ScoreFn = std::function<double(const MolGraph &)>;

/// One search state. States with equal canonical keys share a node.
struct SearchNode {
  MolGraph state;
  std::vector<int> origin;  // root atom of each state atom (first discovery)
  std::string key;
  double score = 0.0;
  bool expanded = false;
  int visits = 0;  // iterations that selected an action here
  std::vector<Deletion> actions;
  std::vector<EdgeStats> edges;
  std::vector<int> children;  // node ids, parallel to actions
};

/// Tree search over peripheral-deletion sequences from one molecule.
///
/// An iteration walks from the root choosing select_action until it reaches
/// a terminal state and backs up that state's score. A state is terminal
/// when it has no legal deletion, or when it has fewer than max_atoms atoms
/// and no child keeps the score at or above the threshold; below max_atoms
/// only such score-keeping children are eligible, so walks keep shrinking a
/// qualifying state until it is minimal.
class RationaleSearch {
public:
  struct Step {
    int node;
    int action;
  };

  RationaleSearch(MolGraph root, ScoreFn score, double threshold, MctsParams params);

  /// Runs one iteration and returns the visited path; the last node is the
  /// terminal state.
  std::vector<int> iterate();
  void run();

  const SearchNode &node(int id) const { return nodes_[id]; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  bool is_terminal(int id);

  /// Distinct qualifying states (score >= threshold, fewer than max_atoms
  /// atoms) that ended an iteration or were the first state below
  /// max_atoms on an iteration's path, in discovery order.
  const std::vector<int> &found() const { return found_; }

private:
  int intern(MolGraph g, std::vector<int> origin);
  void expand(int id);
  std::vector<int> eligible(int id);

  ScoreFn score_;
  double threshold_;
  MctsParams params_;
  std::vector<SearchNode> nodes_;
  std::unordered_map<std::string, int> by_key_;
  std::vector<int> found_;
  std::vector<char> is_found_;
};

/// Runs the search and converts qualifying states into rationales scored
/// under `property_name`.
std::vector<Rationale> extract_rationales(const MolGraph &g, const ScoreFn &score, double threshold,
                                          const std::string &property_name, const MctsParams &params);
std::vector<Rationale> extract_rationales(const MolGraph &g, const PropertySpec &prop, const MctsParams &params);

/// Most specific rationale: fewest atoms, then highest score, then key.
const Rationale *best_rationale(std::span<const Rationale> found, const std::string &property_name);

struct VocabStats {
  int skipped_negative = 0;
  int molecules_without_rationale = 0;
};

/// Union of extract_rationales over the inputs predicted positive,
/// deduplicated by key in input order. Throws when no input is positive.
RationaleVocab build_vocab(std::span<const MolGraph> positives, const PropertySpec &prop, const MctsParams &params,
                           VocabStats *stats = nullptr, unsigned threads = 0);

}  // namespace molrat
