//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include "molrat/rationale.hpp"

#include <algorithm>

#include "molrat/canonical.hpp"
#include "molrat/smiles.hpp"

namespace molrat {

namespace {

constexpr int kVocabFormatVersion = 1;

}  // namespace

int Rationale::num_fragments() const {
  int count = 0;
  graph.components(&count);
  return count;
}

std::vector<MolGraph> Rationale::fragments() const {
  int count = 0;
  const auto comp = graph.components(&count);
  std::vector<MolGraph> out;
  for (int c = 0; c < count; ++c) {
    std::vector<int> keep;
    for (int a = 0; a < graph.num_atoms(); ++a)
      if (comp[a] == c) keep.push_back(a);
    out.push_back(graph.subgraph(keep));
  }
  return out;
}

std::string Rationale::key() const { return canonical_key(graph); }

Rationale canonicalize(MolGraph graph, std::span<const int> peripheral, std::vector<int> source_atoms) {
  std::vector<int> order;
  Rationale r;
  r.graph = canonical_relabel(graph, &order);
  std::vector<int> pos(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = static_cast<int>(i);
  for (int p : peripheral) {
    if (p < 0 || p >= graph.num_atoms()) throw GraphError("rationale: peripheral atom out of range");
    r.peripheral.push_back(pos[p]);
  }
  std::sort(r.peripheral.begin(), r.peripheral.end());
  r.peripheral.erase(std::unique(r.peripheral.begin(), r.peripheral.end()), r.peripheral.end());
  if (!source_atoms.empty()) {
    if (source_atoms.size() != order.size()) throw GraphError("rationale: source atom map has wrong length");
    for (int o : order) r.source_atoms.push_back(source_atoms[o]);
  }
  return r;
}

Rationale make_rationale(const MolGraph &source, const MolGraph &sub, std::span<const int> origin) {
  if (static_cast<int>(origin.size()) != sub.num_atoms()) throw GraphError("rationale: origin map has wrong length");
  std::vector<int> peripheral;
  for (int a = 0; a < sub.num_atoms(); ++a)
    if (sub.degree(a) < source.degree(origin[a]) || sub.degree(a) == 1) peripheral.push_back(a);
  Rationale r = canonicalize(sub, peripheral, std::vector<int>(origin.begin(), origin.end()));
  r.source = canonical_key(source);
  return r;
}

bool RationaleVocab::add(Rationale r) {
  std::string key = r.key();
  if (index_.count(key) != 0) return false;
  index_.emplace(std::move(key), items_.size());
  items_.push_back(std::move(r));
  return true;
}

nlohmann::json RationaleVocab::to_json() const {
  nlohmann::json items = nlohmann::json::array();
  for (const auto &r : items_) {
    nlohmann::json scores = nlohmann::json::object();
    for (const auto &[name, v] : r.scores) scores[name] = v;
    nlohmann::json item = {{"fragments", {canonical_key(r.graph)}},
                           {"scores", scores},
                           {"peripheral", r.peripheral},
                           {"source", r.source}};
    if (!r.source_atoms.empty()) item["source_atoms"] = r.source_atoms;
    items.push_back(std::move(item));
  }
  return {{"format", "molrat.vocab"},
          {"version", kVocabFormatVersion},
          {"properties", properties_},
          {"rationales", items}};
}

RationaleVocab RationaleVocab::from_json(const nlohmann::json &j) {
  if (j.value("format", "") != "molrat.vocab") throw ArtifactError("not a rationale vocabulary");
  if (j.at("version").get<int>() != kVocabFormatVersion)
    throw ArtifactError("unsupported vocabulary version " + j.at("version").dump());
  RationaleVocab vocab(j.at("properties").get<std::vector<std::string>>());
  for (const auto &item : j.at("rationales")) {
    std::string text;
    for (const auto &f : item.at("fragments")) {
      if (!text.empty()) text += '.';
      text += f.get<std::string>();
    }
    Rationale r;
    r.graph = parse_smiles(text);
    r.peripheral = item.at("peripheral").get<std::vector<int>>();
    for (int p : r.peripheral)
      if (p < 0 || p >= r.graph.num_atoms()) throw ArtifactError("vocabulary: peripheral atom out of range");
    for (const auto &[name, v] : item.at("scores").items()) r.scores[name] = v.get<double>();
    r.source = item.value("source", "");
    if (item.contains("source_atoms")) r.source_atoms = item.at("source_atoms").get<std::vector<int>>();
    vocab.add(std::move(r));
  }
  return vocab;
}

}  // namespace molrat
