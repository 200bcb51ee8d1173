//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include "molrat/metrics.hpp"

#include <cstdio>

#include "molrat/error.hpp"
#include "molrat/parallel.hpp"

namespace molrat {

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fixed(const std::optional<double> &v) { return v ? fixed(*v) : std::string(); }

nlohmann::json optional_json(const std::optional<double> &v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

bool all_satisfied(const MolGraph &g, std::span<const PropertySpec> props) {
  for (const auto &p : props)
    if (!p.satisfied(g)) return false;
  return true;
}

double success_rate(std::span<const MolGraph> samples, std::span<const PropertySpec> props) {
  if (samples.empty()) throw Error("success rate of an empty sample set");
  std::size_t hits = 0;
  for (const auto &g : samples) hits += all_satisfied(g, props);
  return static_cast<double>(hits) / samples.size();
}

std::optional<double> diversity(std::span<const BitFingerprint> fps) {
  const std::size_t n = fps.size();
  if (n < 2) return std::nullopt;
  std::vector<double> row(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < n; ++j) row[i] += tanimoto(fps[i], fps[j]);
  });
  double total = 0.0;
  for (double r : row) total += r;
  return 1.0 - total / (static_cast<double>(n) * (n - 1) / 2.0);
}

std::vector<NearestNeighbor> nearest_neighbors(std::span<const BitFingerprint> queries,
                                               std::span<const BitFingerprint> reference) {
  std::vector<NearestNeighbor> out(queries.size());
  parallel_for(queries.size(), [&](std::size_t i) {
    for (std::size_t j = 0; j < reference.size(); ++j) {
      const double s = tanimoto(queries[i], reference[j]);
      if (out[i].index < 0 || s > out[i].similarity) out[i] = {static_cast<int>(j), s};
    }
  });
  return out;
}

double novelty(std::span<const BitFingerprint> fps, std::span<const BitFingerprint> reference) {
  if (fps.empty()) throw Error("novelty of an empty set");
  if (reference.empty()) throw Error("novelty needs a non-empty reference set");
  std::size_t novel = 0;
  for (const auto &nn : nearest_neighbors(fps, reference)) novel += nn.similarity < kNoveltyThreshold;
  return static_cast<double>(novel) / fps.size();
}

std::vector<BitFingerprint> fingerprints(std::span<const MolGraph> molecules) {
  std::vector<BitFingerprint> out(molecules.size());
  parallel_for(molecules.size(), [&](std::size_t i) { out[i] = morgan_fingerprint(molecules[i]); });
  return out;
}

EvalReport evaluate(std::span<const MolGraph> samples, std::span<const PropertySpec> props,
                    std::span<const MolGraph> train_positives) {
  EvalReport report;
  report.n = samples.size();
  report.success = success_rate(samples, props);
  for (const auto &p : props) {
    std::size_t hits = 0;
    for (const auto &g : samples) hits += p.satisfied(g);
    report.property_rates.emplace_back(p.name, static_cast<double>(hits) / samples.size());
  }
  const auto all = fingerprints(samples);
  std::vector<BitFingerprint> pos;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (all_satisfied(samples[i], props)) pos.push_back(all[i]);
  report.positives = pos.size();
  const auto reference = fingerprints(train_positives);
  report.diversity = diversity(pos);
  report.diversity_all = diversity(all);
  if (!reference.empty()) {
    if (!pos.empty()) report.novelty = novelty(pos, reference);
    report.novelty_all = novelty(all, reference);
  }
  return report;
}

std::string EvalReport::csv_header(std::span<const std::string> property_names) {
  std::string h = "n,positives,success,diversity,novelty,diversity_all,novelty_all";
  for (const auto &name : property_names) h += ",rate_" + name;
  return h;
}

std::string EvalReport::csv_row() const {
  std::string row = std::to_string(n) + "," + std::to_string(positives) + "," + fixed(success) + "," +
                    fixed(diversity) + "," + fixed(novelty) + "," + fixed(diversity_all) + "," + fixed(novelty_all);
  for (const auto &[name, rate] : property_rates) row += "," + fixed(rate);
  return row;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rates = nlohmann::json::object();
  for (const auto &[name, rate] : property_rates) rates[name] = rate;
  return {{"n", n},
          {"positives", positives},
          {"success", success},
          {"diversity", optional_json(diversity)},
          {"novelty", optional_json(novelty)},
          {"diversity_all", optional_json(diversity_all)},
          {"novelty_all", optional_json(novelty_all)},
          {"property_rates", rates}};
}

}  // namespace molrat
