//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include <fstream>
#include <set>
#include <sstream>

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "molrat/error.hpp"
#include "molrat/pipeline.hpp"
#include "molrat/smiles.hpp"

namespace molrat::pipeline {

namespace fs = std::filesystem;

namespace {

// A YAML mapping whose keys are read once each; leftovers are errors.
class Section {
public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(where() + "expected a mapping");
  }

  template <class T>
  void read(const std::string &key, T &out) {
    seen_.insert(key);
    if (!node_ || node_.IsNull()) return;
    const YAML::Node value = node_[key];
    if (!value) return;
    try {
      out = value.as<T>();
    } catch (const YAML::Exception &) {
      throw ConfigError(where() + key + ": invalid value '" + YAML::Dump(value) + "'");
    }
  }

  void read(const std::string &key, fs::path &out) {
    std::string s = out.string();
    read(key, s);
    out = s;
  }

  YAML::Node child(const std::string &key) {
    seen_.insert(key);
    if (!node_ || node_.IsNull()) return YAML::Node();
    return node_[key];
  }

  std::string where() const { return path_.empty() ? "config: " : "config: " + path_ + "."; }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto &kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(where() + key + ": unknown key");
    }
  }

private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string &message) {
  if (!ok) throw ConfigError("config: " + message);
}

bool valid_name(const std::string &s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
  return true;
}

}  // namespace

RunConfig RunConfig::preset_defaults(const std::string &preset) {
  RunConfig cfg;
  cfg.preset = preset;
  if (preset == "desk") return cfg;
  if (preset == "paper") {
    cfg.mcts.c_puct = 10.0;
    cfg.mcts.max_atoms = 20;
    cfg.model.hidden = 400;
    cfg.model.latent = 20;
    cfg.train.entropy_weight = 0.02;
    return cfg;
  }
  throw ConfigError("config: preset: expected 'desk' or 'paper', got '" + preset + "'");
}

RunConfig RunConfig::from_yaml(const std::string &text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception &e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  Section top(root, "");
  std::string preset = "desk";
  top.read("preset", preset);
  RunConfig cfg = preset_defaults(preset);

  top.read("run_dir", cfg.run_dir);
  top.read("seed", cfg.seed);
  top.read("threads", cfg.threads);

  Section data(top.child("data"), "data");
  data.read("corpus", cfg.corpus_file);
  data.read("labels", cfg.labels_file);
  data.read("size", cfg.corpus_size);
  data.read("min_atoms", cfg.synthetic.min_atoms);
  data.read("max_atoms", cfg.synthetic.max_atoms);
  data.read("ring_prob", cfg.synthetic.ring_prob);
  data.read("plant_prob", cfg.plant_prob);
  data.finish();

  const YAML::Node props = top.child("properties");
  if (props) {
    if (!props.IsSequence()) throw ConfigError("config: properties: expected a list");
    for (std::size_t i = 0; i < props.size(); ++i) {
      Section p(props[i], "properties[" + std::to_string(i) + "]");
      PropertyConfig pc;
      p.read("name", pc.name);
      p.read("motif", pc.motif);
      p.read("threshold", pc.threshold);
      p.finish();
      cfg.properties.push_back(std::move(pc));
    }
  }

  Section forest(top.child("predictor"), "predictor");
  forest.read("trees", cfg.forest.num_trees);
  forest.read("max_depth", cfg.forest.max_depth);
  forest.read("radius", cfg.forest.fingerprint_radius);
  forest.read("width", cfg.forest.fingerprint_width);
  forest.read("holdout", cfg.holdout_fraction);
  forest.finish();

  Section extract(top.child("extract"), "extract");
  extract.read("iterations", cfg.mcts.iterations);
  extract.read("c_puct", cfg.mcts.c_puct);
  extract.read("max_atoms", cfg.mcts.max_atoms);
  extract.read("max_molecules", cfg.extract_max_molecules);
  extract.finish();

  Section merge(top.child("merge"), "merge");
  merge.read("shortlist", cfg.merge.shortlist);
  merge.finish();

  Section model(top.child("model"), "model");
  model.read("hidden", cfg.model.hidden);
  model.read("latent", cfg.model.latent);
  model.read("depth", cfg.model.depth);
  model.read("init_scale", cfg.model.init_scale);
  model.finish();

  Section train(top.child("train"), "train");
  train.read("entropy_weight", cfg.train.entropy_weight);
  train.read("samples_per_rationale", cfg.train.samples_per_rationale);
  train.read("iterations", cfg.train.iterations);
  train.read("kl_weight", cfg.train.kl_weight);
  train.read("learning_rate", cfg.train.learning_rate);
  train.read("max_grad_norm", cfg.train.max_grad_norm);
  train.read("batch_size", cfg.train.batch_size);
  train.read("epochs", cfg.train.pretrain_epochs);
  train.read("max_subgraph_atoms", cfg.train.max_subgraph_atoms);
  train.read("pairs_per_molecule", cfg.train.pairs_per_molecule);
  train.read("estimate_samples", cfg.train.estimate_samples);
  train.read("max_decode_steps", cfg.train.max_decode_steps);
  train.read("pretrain_molecules", cfg.pretrain_molecules);
  train.finish();

  Section sample(top.child("sample"), "sample");
  sample.read("n", cfg.sample_n);
  sample.finish();

  Section faith(top.child("faithfulness"), "faithfulness");
  faith.read("max_molecules", cfg.faithfulness_max_molecules);
  faith.finish();

  top.finish();
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const fs::path &file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = from_yaml(ss.str());
  // Relative paths are relative to the config file.
  const fs::path base = file.parent_path();
  auto anchor = [&](fs::path &p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  anchor(cfg.corpus_file);
  anchor(cfg.labels_file);
  anchor(cfg.run_dir);
  cfg.validate();
  return cfg;
}

void RunConfig::validate() const {
  require(preset == "desk" || preset == "paper", "preset must be 'desk' or 'paper'");
  require(!run_dir.empty(), "run_dir must not be empty");
  require(!properties.empty(), "at least one property is required");
  std::set<std::string> names;
  for (const auto &p : properties) {
    require(valid_name(p.name), "property name '" + p.name + "' must be non-empty [A-Za-z0-9_-]");
    require(names.insert(p.name).second, "duplicate property '" + p.name + "'");
    require(p.threshold >= 0.0 && p.threshold <= 1.0, "property " + p.name + ": threshold must be in [0, 1]");
    if (!p.motif.empty()) {
      try {
        (void)parse_smiles(p.motif);
      } catch (const ParseError &e) {
        throw ConfigError("config: property " + p.name + ": motif: " + e.what());
      }
    }
  }
  if (labels_file.empty()) {
    require(corpus_file.empty(), "data.corpus requires data.labels");
    require(corpus_size >= 2, "data.size must be at least 2");
    require(synthetic.min_atoms >= 1 && synthetic.min_atoms <= synthetic.max_atoms,
            "data.min_atoms must be in [1, data.max_atoms]");
    require(synthetic.ring_prob >= 0.0 && synthetic.ring_prob <= 1.0, "data.ring_prob must be in [0, 1]");
    require(plant_prob >= 0.0 && plant_prob <= 1.0, "data.plant_prob must be in [0, 1]");
  } else {
    require(fs::is_regular_file(labels_file), "data.labels: no such file " + labels_file.string());
    require(corpus_file.empty() || fs::is_regular_file(corpus_file),
            "data.corpus: no such file " + corpus_file.string());
  }
  require(forest.num_trees >= 1, "predictor.trees must be at least 1");
  require(forest.max_depth >= 1, "predictor.max_depth must be at least 1");
  require(forest.fingerprint_radius >= 0, "predictor.radius must be non-negative");
  require(forest.fingerprint_width >= 64, "predictor.width must be at least 64");
  require(holdout_fraction > 0.0 && holdout_fraction < 1.0, "predictor.holdout must be in (0, 1)");
  require(mcts.iterations >= 1, "extract.iterations must be at least 1");
  require(mcts.c_puct >= 0.0, "extract.c_puct must be non-negative");
  require(mcts.max_atoms >= 2, "extract.max_atoms must be at least 2");
  require(extract_max_molecules >= 0, "extract.max_molecules must be non-negative");
  require(merge.shortlist >= 1, "merge.shortlist must be at least 1");
  require(model.hidden >= 1 && model.latent >= 1 && model.depth >= 1, "model widths and depth must be positive");
  require(model.init_scale >= 0.0, "model.init_scale must be non-negative");
  require(pretrain_molecules >= 0, "train.pretrain_molecules must be non-negative");
  require(faithfulness_max_molecules >= 0, "faithfulness.max_molecules must be non-negative");
  try {
    train.validate();
  } catch (const ConfigError &e) {
    throw ConfigError(std::string("config: train: ") + e.what());
  }
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json props = nlohmann::json::array();
  for (const auto &p : properties) props.push_back({{"name", p.name}, {"motif", p.motif}, {"threshold", p.threshold}});
  return {
      {"format", "molrat.config"},
      {"version", kSchemaVersion},
      {"preset", preset},
      {"seed", seed},
      {"data",
       {{"corpus", corpus_file.string()},
        {"labels", labels_file.string()},
        {"size", corpus_size},
        {"min_atoms", synthetic.min_atoms},
        {"max_atoms", synthetic.max_atoms},
        {"ring_prob", synthetic.ring_prob},
        {"plant_prob", plant_prob}}},
      {"properties", props},
      {"predictor",
       {{"trees", forest.num_trees},
        {"max_depth", forest.max_depth},
        {"radius", forest.fingerprint_radius},
        {"width", forest.fingerprint_width},
        {"holdout", holdout_fraction}}},
      {"extract",
       {{"iterations", mcts.iterations},
        {"c_puct", mcts.c_puct},
        {"max_atoms", mcts.max_atoms},
        {"max_molecules", extract_max_molecules}}},
      {"merge", {{"shortlist", merge.shortlist}}},
      {"model",
       {{"hidden", model.hidden}, {"latent", model.latent}, {"depth", model.depth}, {"init_scale", model.init_scale}}},
      {"train",
       {{"entropy_weight", train.entropy_weight},
        {"samples_per_rationale", train.samples_per_rationale},
        {"iterations", train.iterations},
        {"kl_weight", train.kl_weight},
        {"learning_rate", train.learning_rate},
        {"max_grad_norm", train.max_grad_norm},
        {"batch_size", train.batch_size},
        {"epochs", train.pretrain_epochs},
        {"max_subgraph_atoms", train.max_subgraph_atoms},
        {"pairs_per_molecule", train.pairs_per_molecule},
        {"estimate_samples", train.estimate_samples},
        {"max_decode_steps", train.max_decode_steps},
        {"pretrain_molecules", pretrain_molecules}}},
      {"sample", {{"n", sample_n}}},
      {"faithfulness", {{"max_molecules", faithfulness_max_molecules}}},
  };
}

std::string RunConfig::hash() const { return sha256_hex(to_json().dump()); }

std::vector<std::string> RunConfig::property_names() const {
  std::vector<std::string> out;
  for (const auto &p : properties) out.push_back(p.name);
  return out;
}

std::string sha256_hex(const std::string &bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static const char *hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string sha256_file(const fs::path &file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ArtifactError("cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace molrat::pipeline
