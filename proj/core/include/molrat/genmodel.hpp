//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "molrat/mol_graph.hpp"
#include "molrat/rationale.hpp"
#include "molrat/rng.hpp"
#include "molrat/tensor.hpp"

namespace molrat {

/// Bond classes predicted by the decoder: the four bond orders, then no-bond.
inline constexpr int kNumBondClasses = 5;
inline constexpr int kNoBond = 4;
int bond_class(BondOrder order);
BondOrder bond_order_of_class(int cls);

inline constexpr int kUnknownAtomType = 0;

/// Atom types (element, charge, aromatic) known to a model. Index 0 is the
/// reserved unknown type: it has an embedding but is never generated.
class AtomVocab {
public:
  AtomVocab() = default;
  explicit AtomVocab(std::vector<Atom> atoms);
  static AtomVocab from_molecules(std::span<const MolGraph> molecules);

  int size() const { return static_cast<int>(atoms_.size()) + 1; }
  /// kUnknownAtomType when the atom was not seen.
  int index(const Atom &atom) const;
  /// Requires 1 <= type < size().
  const Atom &atom(int type) const;

  nlohmann::json to_json() const;
  static AtomVocab from_json(const nlohmann::json &j);

private:
  std::vector<Atom> atoms_;
  std::map<std::uint32_t, int> index_;
};

struct GenModelConfig {
  int hidden = 64;
  int latent = 16;
  int depth = 3;  // message passing rounds
  std::uint64_t seed = 0;
  double init_scale = 1.0;  // 0 gives an all-zero model
};

/// Approximate posterior. `logvar` holds the log-scale head output; the
/// standard deviation is latent_std(logvar).
struct LatentParams {
  std::vector<double> mu;
  std::vector<double> logvar;
};

/// Standard deviation for a log-scale head output: exp(logvar), used as the
/// standard deviation directly.
double latent_std(double logvar);

/// mu + latent_std(logvar) * eps with eps drawn from `rng`.
std::vector<double> sample_latent(const LatentParams &p, Rng &rng);
/// Draw from the N(0, I) prior.
std::vector<double> sample_prior(int latent, Rng &rng);

/// Subgraph-conditioned encoder/decoder parameters. Move-only; clone()
/// gives an independent copy.
class GenModel {
public:
  enum class Network { Encoder, Decoder };

  GenModel(AtomVocab atoms, GenModelConfig config);
  GenModel(GenModel &&) = default;
  GenModel &operator=(GenModel &&) = default;
  GenModel(const GenModel &) = delete;
  GenModel &operator=(const GenModel &) = delete;

  GenModel clone() const;

  const AtomVocab &atoms() const { return atoms_; }
  const GenModelConfig &config() const { return config_; }
  nn::ParamStore &params() { return params_; }
  const nn::ParamStore &params() const { return params_; }
  const nn::Tensor &param(const std::string &name) const { return params_.at(name); }

  /// Per-atom vectors from the encoder or decoder message passing network;
  /// row i belongs to atom i.
  std::vector<std::vector<double>> embed_atoms(const MolGraph &g, Network net) const;

  LatentParams encode(const MolGraph &g) const;
  /// Mean and log-scale rows (one per molecule) with gradient tracking.
  std::pair<nn::Tensor, nn::Tensor> encode_batch(std::span<const MolGraph> molecules) const;

  /// Writes `<prefix>.json` (vocabulary, widths, parameter manifest) and
  /// `<prefix>.bin` (parameter values).
  void save(const std::filesystem::path &prefix) const;
  static GenModel load(const std::filesystem::path &prefix);
  nlohmann::json header() const;

private:
  GenModel(AtomVocab atoms, GenModelConfig config, nn::ParamStore params);

  AtomVocab atoms_;
  GenModelConfig config_;
  nn::ParamStore params_;
};

/// Step-by-step breadth-first completion of a rationale. The graph starts as
/// the rationale's fragments and the queue as its peripheral atoms in
/// ascending order. Each step either stops the front atom (dequeue) or adds
/// an atom bonded to the front, then decides its bonds to every queue member
/// in order, and finally enqueues it.
class Decoder {
public:
  Decoder(const GenModel &model, const Rationale &start, std::span<const double> z);

  bool finished() const { return queue_.empty() && !adding_; }
  int front() const;
  const std::deque<int> &queue() const { return queue_; }
  /// Graph so far (without an atom whose bonds are still being placed).
  MolGraph graph() const;
  int num_added() const { return added_; }

  /// Probability that the front atom grows a new neighbour; 0 when no atom
  /// type can bond to it. Unmasked gives the raw sigmoid output.
  double expand_probability(bool masked = true);
  void stop();

  /// Distribution over atom types for the new atom. Masked entries (the
  /// unknown type and types that cannot bond to the front) are zero.
  std::vector<double> atom_type_distribution(bool masked = true);
  void add_atom(int type);

  bool placing_bonds() const { return adding_; }
  /// Queue member the next bond decision refers to.
  int bond_partner() const;
  /// Distribution over bond classes to bond_partner(). Bond orders that
  /// overflow either valence are masked, and no-bond is masked for the
  /// front atom.
  std::vector<double> bond_distribution(bool masked = true);
  void place_bond(int cls);

private:
  void refresh();
  nn::Tensor head_input() const;

  const GenModel *model_;
  nn::Tensor z_;
  MolGraphBuilder builder_;
  std::vector<int> half_valence_;
  std::deque<int> queue_;
  int added_ = 0;

  bool fresh_ = false;
  nn::Tensor atom_h_;   // decoder MPN rows of the current graph
  nn::Tensor graph_h_;  // their sum

  bool adding_ = false;
  int new_type_ = 0;
  int new_half_valence_ = 0;
  std::size_t bond_index_ = 0;
  std::vector<int> partners_;
  std::vector<std::pair<int, int>> placed_;  // (partner, class)
  nn::Tensor message_sum_;
};

struct CompleteOptions {
  int max_steps = 60;  // added atoms
  bool greedy = false;
};

/// Completion hit CompleteOptions::max_steps; carries the partial graph.
class TruncationError : public Error {
public:
  explicit TruncationError(MolGraph partial)
      : Error("completion exceeded the step limit"), partial_(std::move(partial)) {}
  const MolGraph &partial() const { return partial_; }

private:
  MolGraph partial_;
};

/// Samples a completion. Rationale atoms keep their indices; added atoms
/// follow in creation order.
MolGraph complete(const GenModel &model, const Rationale &s, std::span<const double> z, Rng &rng,
                  const CompleteOptions &options = {});

/// A molecule in decoding order: atoms 0..rationale_atoms-1 are the rationale
/// (in its stored order) and the rest appear in creation order.
struct DecodeTrace {
  MolGraph graph;
  int rationale_atoms = 0;
  std::vector<int> initial_queue;
};

/// Validates that `ordered` is reachable by the decoder from `s` with atoms
/// in the given order. Throws GraphError otherwise.
DecodeTrace make_trace(const MolGraph &ordered, const Rationale &s);

/// Breadth-first decoding order: rationale atoms first (through
/// `embedding`, s atom -> g atom, or the first embedding found), then the
/// remaining atoms from the peripheral queue, neighbours in ascending
/// canonical rank.
DecodeTrace canonical_trace(const MolGraph &g, const Rationale &s, std::span<const int> embedding = {});

enum class DecodeOrder { Canonical, AsGiven };

/// Log-probability of the decisions that produce g from s.
double log_likelihood(const GenModel &model, const MolGraph &g, const Rationale &s, std::span<const double> z,
                      DecodeOrder order = DecodeOrder::Canonical);

/// Sum over traces of the negative log-likelihood, with row i of `z` used
/// for trace i. All prefix graphs are batched into one network pass.
nn::Tensor trace_nll(const GenModel &model, std::span<const DecodeTrace> traces, const nn::Tensor &z);

}  // namespace molrat
