//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "molrat/forest.hpp"
#include "molrat/genmodel.hpp"
#include "molrat/rationale.hpp"
#include "molrat/rng.hpp"

namespace molrat {

struct TrainConfig {
  double entropy_weight = 0.02;     // temperature of the rationale distribution
  int samples_per_rationale = 200;  // per fine-tuning iteration
  int iterations = 50;              // fine-tuning iterations
  double kl_weight = 0.3;
  double learning_rate = 1e-3;
  double max_grad_norm = 0.0;
  int batch_size = 32;
  int pretrain_epochs = 10;
  int max_subgraph_atoms = 20;  // pre-training pair size cap
  int pairs_per_molecule = 1;
  int estimate_samples = 20;  // completions per rationale for the reward estimate
  int max_decode_steps = 60;
  std::uint64_t seed = 0;
  unsigned threads = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// A pre-training example: a random connected subgraph of `molecule` and the
/// molecule in canonical decoding order relative to it.
struct PretrainPair {
  Rationale rationale;
  MolGraph molecule;
  DecodeTrace trace;
};

/// Per molecule, `per_molecule` draws of a connected subgraph whose size is
/// uniform in [1, min(max_atoms, |g|)], grown from a uniform seed atom by
/// adding a uniform frontier atom at a time. Peripheral atoms follow
/// make_rationale.
std::vector<PretrainPair> make_pretrain_pairs(std::span<const MolGraph> corpus, int max_atoms, int per_molecule,
                                              Rng &rng);

/// Sorted atoms of one random connected subgraph of `g` with `size` atoms.
std::vector<int> random_connected_subgraph(const MolGraph &g, int size, Rng &rng);

struct PretrainStats {
  // Per-pair means for each epoch.
  std::vector<double> loss;
  std::vector<double> reconstruction;
  std::vector<double> kl;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Minimizes reconstruction NLL + kl_weight * KL with reparameterized
/// latents, over shuffled mini-batches. Throws NumericError on a
/// non-finite loss.
PretrainStats pretrain(GenModel &model, std::span<const PretrainPair> pairs, const TrainConfig &cfg,
                       const EpochCallback &on_epoch = {});

/// A sampled completion with the latent used to produce it.
struct Completion {
  int rationale = -1;
  MolGraph graph;  // rationale atoms first, then added atoms in creation order
  std::vector<double> z;
  bool truncated = false;
};

/// `per_rationale` completions of every vocabulary entry with prior
/// latents. Sample j of rationale k uses the stream keyed by
/// (stream, k, j), so results do not depend on the thread count.
std::vector<Completion> sample_completions(const GenModel &model, const RationaleVocab &vocab, int per_rationale,
                                           std::uint64_t seed, std::uint64_t stream, int max_steps,
                                           unsigned threads = 0);

/// Summed negative log-likelihood of completions in their creation order,
/// under the latents that produced them.
nn::Tensor completion_nll(const GenModel &model, const RationaleVocab &vocab, std::span<const Completion> samples);

struct IterationStats {
  int iteration = 0;
  std::size_t sampled = 0;
  std::size_t kept = 0;
  std::size_t truncated = 0;
  double success = 0.0;  // kept / completed (truncated samples excluded)
  std::optional<double> diversity;
  std::optional<double> novelty;
  bool updated = false;
  double loss = 0.0;  // mean NLL over kept samples before the update

  static std::string csv_header();
  std::string csv_row() const;
};

using IterationCallback = std::function<void(const IterationStats &)>;

/// Alternates sampling `samples_per_rationale` completions per rationale
/// with one pass of likelihood training on those satisfying every
/// property. Iterations without positives skip the update; throws Error
/// when every iteration is empty.
std::vector<IterationStats> finetune(GenModel &model, const RationaleVocab &vocab,
                                     std::span<const PropertySpec> props, const TrainConfig &cfg,
                                     std::span<const MolGraph> train_positives = {},
                                     const IterationCallback &on_iteration = {});

/// Softmax of reward / temperature. Entries are clamped away from zero so
/// every rationale keeps positive mass.
std::vector<double> closed_form_distribution(std::span<const double> rewards, double temperature);

struct RationaleDistribution {
  std::vector<std::string> keys;  // vocabulary keys in vocabulary order
  std::vector<double> reward;     // fraction of successful completions
  std::vector<double> probability;

  std::size_t size() const { return keys.size(); }
  nlohmann::json to_json() const;
  static RationaleDistribution from_json(const nlohmann::json &j);
};

RationaleDistribution rationale_distribution(const GenModel &model, const RationaleVocab &vocab,
                                             std::span<const PropertySpec> props, const TrainConfig &cfg);

struct SampledMolecule {
  MolGraph graph;
  int rationale = -1;
};

struct SampleBatch {
  std::vector<SampledMolecule> molecules;
  std::size_t attempts = 0;
  std::size_t truncated = 0;
};

/// n draws of rationale ~ distribution followed by a completion. Truncated
/// completions are redrawn up to 10n attempts in total, so fewer than n
/// molecules come back only when that budget runs out.
SampleBatch sample_molecules(const GenModel &model, const RationaleVocab &vocab, const RationaleDistribution &dist,
                             std::size_t n, std::uint64_t seed, int max_steps = 60, unsigned threads = 0);

}  // namespace molrat
