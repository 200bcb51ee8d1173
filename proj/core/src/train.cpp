//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include "molrat/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "molrat/error.hpp"
#include "molrat/metrics.hpp"
#include "molrat/parallel.hpp"

namespace molrat {

namespace {

// Stream tags keep the keyed RNG domains of different stages apart.
enum Stream : std::uint64_t {
  kShuffleStream = 1,
  kNoiseStream = 2,
  kFinetuneStream = 3,
  kUpdateStream = 4,
  kEstimateStream = 5,
  kSampleStream = 6,
};

void require(bool ok, const std::string &what) {
  if (!ok) throw ConfigError("train config: " + what);
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fixed(const std::optional<double> &v) { return v ? fixed(*v) : std::string(); }

void check_finite(double loss, const std::string &where) {
  if (!std::isfinite(loss)) throw NumericError("non-finite loss " + std::to_string(loss) + " at " + where);
}

nn::Tensor stack_rows(std::span<const std::vector<double>> rows, int cols) {
  std::vector<double> values;
  values.reserve(rows.size() * cols);
  for (const auto &r : rows) {
    if (static_cast<int>(r.size()) != cols) throw Error("latent width mismatch");
    values.insert(values.end(), r.begin(), r.end());
  }
  return nn::Tensor(static_cast<int>(rows.size()), cols, std::move(values));
}

}  // namespace

void TrainConfig::validate() const {
  require(entropy_weight > 0.0, "entropy_weight must be positive");
  require(samples_per_rationale >= 1, "samples_per_rationale must be at least 1");
  require(iterations >= 1, "iterations must be at least 1");
  require(kl_weight >= 0.0, "kl_weight must be non-negative");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(max_grad_norm >= 0.0, "max_grad_norm must be non-negative");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(pretrain_epochs >= 1, "pretrain_epochs must be at least 1");
  require(max_subgraph_atoms >= 1, "max_subgraph_atoms must be at least 1");
  require(pairs_per_molecule >= 1, "pairs_per_molecule must be at least 1");
  require(estimate_samples >= 1, "estimate_samples must be at least 1");
  require(max_decode_steps >= 1, "max_decode_steps must be at least 1");
}

std::vector<int> random_connected_subgraph(const MolGraph &g, int size, Rng &rng) {
  if (size < 1 || size > g.num_atoms()) throw Error("subgraph size out of range");
  std::vector<char> in(g.num_atoms(), 0), on_frontier(g.num_atoms(), 0);
  std::vector<int> chosen, frontier;
  auto take = [&](int a) {
    in[a] = 1;
    chosen.push_back(a);
    for (const auto &nb : g.neighbors(a))
      if (!in[nb.atom] && !on_frontier[nb.atom]) {
        on_frontier[nb.atom] = 1;
        frontier.push_back(nb.atom);
      }
  };
  take(rng.below(g.num_atoms()));
  while (static_cast<int>(chosen.size()) < size) {
    if (frontier.empty()) throw GraphError("subgraph growth ran out of frontier atoms");
    const int pick = rng.below(static_cast<int>(frontier.size()));
    const int a = frontier[pick];
    frontier[pick] = frontier.back();
    frontier.pop_back();
    on_frontier[a] = 0;
    take(a);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<PretrainPair> make_pretrain_pairs(std::span<const MolGraph> corpus, int max_atoms, int per_molecule,
                                              Rng &rng) {
  if (corpus.empty()) throw Error("pre-training corpus is empty");
  if (max_atoms < 1) throw ConfigError("max subgraph atoms must be at least 1");
  std::vector<PretrainPair> pairs;
  for (const auto &g : corpus) {
    if (g.empty() || !g.is_connected()) throw GraphError("pre-training molecules must be connected and non-empty");
    for (int c = 0; c < per_molecule; ++c) {
      const int size = rng.between(1, std::min(max_atoms, g.num_atoms()));
      const auto keep = random_connected_subgraph(g, size, rng);
      Rationale r = make_rationale(g, g.subgraph(keep), keep);
      DecodeTrace trace = canonical_trace(g, r, r.source_atoms);
      pairs.push_back({std::move(r), g, std::move(trace)});
    }
  }
  return pairs;
}

PretrainStats pretrain(GenModel &model, std::span<const PretrainPair> pairs, const TrainConfig &cfg,
                       const EpochCallback &on_epoch) {
  cfg.validate();
  if (pairs.empty()) throw Error("no pre-training pairs");
  nn::Adam adam({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.max_grad_norm});
  const int latent = model.config().latent;
  PretrainStats stats;
  std::vector<std::size_t> order(pairs.size());
  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(Rng::derive(cfg.seed, kShuffleStream, epoch));
    shuffle.shuffle(order.begin(), order.end());
    double total = 0.0, recon = 0.0, kl_total = 0.0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const int rows = static_cast<int>(end - start);
      std::vector<MolGraph> molecules;
      std::vector<DecodeTrace> traces;
      for (std::size_t i = start; i < end; ++i) {
        molecules.push_back(pairs[order[i]].molecule);
        traces.push_back(pairs[order[i]].trace);
      }
      Rng noise(Rng::derive(cfg.seed, kNoiseStream, epoch, batch));
      std::vector<double> eps(static_cast<std::size_t>(rows) * latent);
      for (double &e : eps) e = noise.normal();

      const auto [mu, log_sigma] = model.encode_batch(molecules);
      const nn::Tensor z = nn::add(mu, nn::mul(nn::exp(log_sigma), nn::Tensor(rows, latent, std::move(eps))));
      const nn::Tensor nll = trace_nll(model, traces, z);
      const nn::Tensor kl = nn::gaussian_kl(mu, log_sigma);
      const nn::Tensor loss = nn::scale(nn::add(nll, nn::scale(kl, cfg.kl_weight)), 1.0 / rows);
      check_finite(loss.item(), "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch));
      model.params().zero_grad();
      nn::backward(loss);
      adam.step(model.params());
      total += loss.item() * rows;
      recon += nll.item();
      kl_total += kl.item();
    }
    const double n = static_cast<double>(pairs.size());
    stats.loss.push_back(total / n);
    stats.reconstruction.push_back(recon / n);
    stats.kl.push_back(kl_total / n);
    if (on_epoch) on_epoch(epoch, stats.loss.back());
  }
  return stats;
}

std::vector<Completion> sample_completions(const GenModel &model, const RationaleVocab &vocab, int per_rationale,
                                           std::uint64_t seed, std::uint64_t stream, int max_steps,
                                           unsigned threads) {
  const std::size_t k = static_cast<std::size_t>(per_rationale);
  std::vector<Completion> out(vocab.size() * k);
  parallel_for(
      vocab.size(),
      [&](std::size_t r) {
        for (std::size_t j = 0; j < k; ++j) {
          Rng rng(Rng::derive(seed, stream, r, j));
          Completion &c = out[r * k + j];
          c.rationale = static_cast<int>(r);
          c.z = sample_prior(model.config().latent, rng);
          try {
            c.graph = complete(model, vocab[r], c.z, rng, {max_steps, false});
          } catch (const TruncationError &e) {
            c.graph = e.partial();
            c.truncated = true;
          }
        }
      },
      threads);
  return out;
}

nn::Tensor completion_nll(const GenModel &model, const RationaleVocab &vocab, std::span<const Completion> samples) {
  if (samples.empty()) return nn::Tensor::scalar(0.0);
  std::vector<DecodeTrace> traces;
  std::vector<std::vector<double>> zs;
  for (const auto &c : samples) {
    traces.push_back(make_trace(c.graph, vocab[c.rationale]));
    zs.push_back(c.z);
  }
  return trace_nll(model, traces, stack_rows(zs, model.config().latent));
}

std::string IterationStats::csv_header() { return "iteration,sampled,kept,truncated,success,diversity,novelty,loss"; }

std::string IterationStats::csv_row() const {
  return std::to_string(iteration) + "," + std::to_string(sampled) + "," + std::to_string(kept) + "," +
         std::to_string(truncated) + "," + fixed(success) + "," + fixed(diversity) + "," + fixed(novelty) + "," +
         (updated ? fixed(loss) : std::string());
}

std::vector<IterationStats> finetune(GenModel &model, const RationaleVocab &vocab,
                                     std::span<const PropertySpec> props, const TrainConfig &cfg,
                                     std::span<const MolGraph> train_positives, const IterationCallback &on_iteration) {
  cfg.validate();
  if (vocab.empty()) throw Error("fine-tuning needs a non-empty rationale vocabulary");
  nn::Adam adam({cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.max_grad_norm});
  const auto reference = fingerprints(train_positives);
  std::vector<IterationStats> history;
  int empty_run = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    auto samples = sample_completions(model, vocab, cfg.samples_per_rationale, Rng::derive(cfg.seed, kFinetuneStream),
                                      static_cast<std::uint64_t>(it), cfg.max_decode_steps, cfg.threads);
    IterationStats st;
    st.iteration = it;
    st.sampled = samples.size();
    std::vector<Completion> kept;
    for (auto &c : samples) {
      if (c.truncated) {
        ++st.truncated;
        continue;
      }
      if (all_satisfied(c.graph, props)) kept.push_back(std::move(c));
    }
    st.kept = kept.size();
    const std::size_t completed = st.sampled - st.truncated;
    st.success = completed == 0 ? 0.0 : static_cast<double>(st.kept) / static_cast<double>(completed);
    if (!kept.empty()) {
      std::vector<MolGraph> graphs;
      for (const auto &c : kept) graphs.push_back(c.graph);
      const auto fps = fingerprints(graphs);
      st.diversity = diversity(fps);
      if (!reference.empty()) st.novelty = novelty(fps, reference);

      std::vector<std::size_t> order(kept.size());
      std::iota(order.begin(), order.end(), 0);
      Rng shuffle(Rng::derive(cfg.seed, kUpdateStream, it));
      shuffle.shuffle(order.begin(), order.end());
      double total = 0.0;
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        std::vector<Completion> batch;
        for (std::size_t i = start; i < end; ++i) batch.push_back(kept[order[i]]);
        const nn::Tensor nll = completion_nll(model, vocab, batch);
        const nn::Tensor loss = nn::scale(nll, 1.0 / static_cast<double>(batch.size()));
        check_finite(loss.item(), "fine-tuning iteration " + std::to_string(it));
        model.params().zero_grad();
        nn::backward(loss);
        adam.step(model.params());
        total += nll.item();
      }
      st.updated = true;
      st.loss = total / static_cast<double>(kept.size());
      empty_run = 0;
    } else {
      ++empty_run;
    }
    history.push_back(st);
    if (on_iteration) on_iteration(st);
    if (empty_run == cfg.iterations) throw Error("fine-tuning produced no positive samples in any iteration");
  }
  return history;
}

std::vector<double> closed_form_distribution(std::span<const double> rewards, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("rationale distribution temperature must be positive");
  if (rewards.empty()) return {};
  const double top = *std::max_element(rewards.begin(), rewards.end());
  std::vector<double> p(rewards.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < rewards.size(); ++i) sum += p[i] = std::exp((rewards[i] - top) / temperature);
  for (double &v : p) v = std::max(v / sum, std::numeric_limits<double>::min());
  sum = std::accumulate(p.begin(), p.end(), 0.0);
  for (double &v : p) v /= sum;
  return p;
}

RationaleDistribution rationale_distribution(const GenModel &model, const RationaleVocab &vocab,
                                             std::span<const PropertySpec> props, const TrainConfig &cfg) {
  cfg.validate();
  const auto samples = sample_completions(model, vocab, cfg.estimate_samples, cfg.seed, kEstimateStream,
                                          cfg.max_decode_steps, cfg.threads);
  RationaleDistribution d;
  d.reward.assign(vocab.size(), 0.0);
  for (const auto &c : samples)
    if (!c.truncated && all_satisfied(c.graph, props)) d.reward[c.rationale] += 1.0;
  for (double &r : d.reward) r /= cfg.estimate_samples;
  for (const auto &r : vocab.items()) d.keys.push_back(r.key());
  d.probability = closed_form_distribution(d.reward, cfg.entropy_weight);
  return d;
}

nlohmann::json RationaleDistribution::to_json() const {
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t i = 0; i < keys.size(); ++i)
    items.push_back({{"rationale", keys[i]}, {"reward", reward[i]}, {"probability", probability[i]}});
  return {{"format", "molrat.distribution"}, {"version", 1}, {"items", items}};
}

RationaleDistribution RationaleDistribution::from_json(const nlohmann::json &j) {
  try {
    if (j.at("format") != "molrat.distribution") throw ArtifactError("not a rationale distribution");
    RationaleDistribution d;
    for (const auto &item : j.at("items")) {
      d.keys.push_back(item.at("rationale").get<std::string>());
      d.reward.push_back(item.at("reward").get<double>());
      d.probability.push_back(item.at("probability").get<double>());
    }
    return d;
  } catch (const nlohmann::json::exception &e) {
    throw ArtifactError(std::string("malformed rationale distribution: ") + e.what());
  }
}

SampleBatch sample_molecules(const GenModel &model, const RationaleVocab &vocab, const RationaleDistribution &dist,
                             std::size_t n, std::uint64_t seed, int max_steps, unsigned threads) {
  if (dist.size() != vocab.size()) throw Error("distribution does not match the vocabulary");
  const double total = std::accumulate(dist.probability.begin(), dist.probability.end(), 0.0);
  if (n > 0 && std::abs(total - 1.0) > 1e-9) throw Error("rationale distribution is not normalized");
  std::vector<double> cumulative(dist.size());
  std::partial_sum(dist.probability.begin(), dist.probability.end(), cumulative.begin());

  SampleBatch out;
  const std::size_t budget = 10 * n;
  while (out.molecules.size() < n && out.attempts < budget) {
    const std::size_t block = std::min(n - out.molecules.size(), budget - out.attempts);
    std::vector<std::optional<SampledMolecule>> drawn(block);
    const std::size_t first = out.attempts;
    parallel_for(
        block,
        [&](std::size_t i) {
          Rng rng(Rng::derive(seed, kSampleStream, first + i));
          const double u = rng.uniform() * cumulative.back();
          int k = static_cast<int>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
          k = std::min(k, static_cast<int>(dist.size()) - 1);
          while (dist.probability[k] == 0.0) --k;
          const auto z = sample_prior(model.config().latent, rng);
          try {
            drawn[i] = SampledMolecule{complete(model, vocab[k], z, rng, {max_steps, false}), k};
          } catch (const TruncationError &) {
          }
        },
        threads);
    out.attempts += block;
    for (auto &d : drawn) {
      if (d) {
        out.molecules.push_back(std::move(*d));
      } else {
        ++out.truncated;
      }
    }
  }
  return out;
}

}  // namespace molrat
