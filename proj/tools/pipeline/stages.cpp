//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "molrat/canonical.hpp"
#include "molrat/error.hpp"
#include "molrat/parallel.hpp"
#include "molrat/pipeline.hpp"
#include "molrat/smiles.hpp"
#include "molrat/substructure.hpp"

namespace molrat::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Seed streams per stage.
enum : std::uint64_t {
  kCorpusStream = 1,
  kForestStream = 2,
  kSplitStream = 3,
  kModelStream = 4,
  kTrainStream = 5,
  kSampleStream = 6,
  kPairStream = 7,
};

const char *kCorpus = "corpus.smi";
const char *kLabels = "labels.csv";
const char *kPredictorMetrics = "predictor/metrics.json";
const char *kMergedVocab = "vocab/merged.json";
const char *kPretrained = "model/pretrained";
const char *kFinetuned = "model/finetuned";
const char *kPretrainLog = "pretrain.csv";
const char *kFinetuneLog = "finetune.csv";
const char *kDistribution = "distribution.json";
const char *kSamples = "samples.csv";
const char *kReportCsv = "report.csv";
const char *kReportJson = "report.json";
const char *kFaithfulness = "faithfulness.json";

std::string predictor_file(const std::string &prop) { return "predictor/" + prop + ".json"; }
std::string vocab_file(const std::string &prop) { return "vocab/" + prop + ".json"; }

std::string read_text(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ArtifactError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write-then-rename so an interrupted stage never leaves a partial file.
void write_text(const fs::path &p, const std::string &text) {
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ArtifactError("cannot write " + p.string());
    out << text;
    if (!out) throw ArtifactError("cannot write " + p.string());
  }
  fs::rename(tmp, p);
}

json read_json(const fs::path &p) {
  try {
    return json::parse(read_text(p));
  } catch (const json::exception &e) {
    throw ArtifactError(p.string() + ": " + e.what());
  }
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// One stage invocation: checks inputs against upstream manifests and records
// its own manifest when committed.
class StageRun {
public:
  StageRun(Stage stage, const RunConfig &cfg, const StageOptions &options)
      : stage_(stage), cfg_(cfg), options_(options), hash_(cfg.hash()) {}

  const fs::path &dir() const { return cfg_.run_dir; }
  fs::path path(const std::string &rel) const { return cfg_.run_dir / rel; }

  void info(const std::string &msg) const {
    if (options_.log) options_.log(LogLevel::Info, stage_name(stage_) + ": " + msg);
  }
  void warn(const std::string &msg) const {
    if (options_.log) options_.log(LogLevel::Warn, stage_name(stage_) + ": " + msg);
  }

  // Returns the absolute path of a verified upstream artifact.
  fs::path input(const std::string &rel, Stage producer) {
    const std::string cmd = stage_name(producer);
    const fs::path file = path(rel);
    const fs::path manifest = path("manifests/" + cmd + ".json");
    if (!fs::exists(file) || !fs::exists(manifest))
      throw ArtifactError("missing " + file.string() + "; run `molrat " + cmd + "` first");
    const json m = read_json(manifest);
    if (m.value("schema_version", 0) != kSchemaVersion)
      throw ArtifactError(manifest.string() + ": unsupported schema version; rerun `molrat " + cmd + "`");
    const std::string recorded = m.value("config_hash", "");
    if (recorded != hash_) {
      if (!options_.force)
        throw ConfigError("config changed since `molrat " + cmd + "` ran (" + recorded.substr(0, 12) + " vs " +
                          hash_.substr(0, 12) + "); rerun it or pass --force");
      warn("using " + rel + " produced under config " + recorded.substr(0, 12));
    }
    const auto outputs = m.value("outputs", json::object());
    const std::string digest = sha256_file(file);
    if (!outputs.contains(rel) || outputs[rel].get<std::string>() != digest)
      throw ArtifactError(file.string() + " does not match the manifest of `molrat " + cmd + "`; rerun it");
    inputs_[rel] = digest;
    return file;
  }

  void external_input(const fs::path &file) { inputs_[file.string()] = sha256_file(file); }

  void output(const std::string &rel, const std::string &text) {
    write_text(path(rel), text);
    outputs_[rel] = sha256_hex(text);
  }
  void output_file(const std::string &rel) { outputs_[rel] = sha256_file(path(rel)); }

  void set_override(const std::string &key, json value) { overrides_[key] = std::move(value); }

  void commit() {
    json m = {{"format", "molrat.manifest"},
              {"schema_version", kSchemaVersion},
              {"stage", stage_name(stage_)},
              {"config_hash", hash_},
              {"inputs", inputs_},
              {"outputs", outputs_}};
    if (!overrides_.empty()) m["overrides"] = overrides_;
    write_text(path("manifests/" + stage_name(stage_) + ".json"), m.dump(2) + "\n");
    json snapshot = cfg_.to_json();
    snapshot["config_hash"] = hash_;
    write_text(path("config.json"), snapshot.dump(2) + "\n");
  }

private:
  Stage stage_;
  const RunConfig &cfg_;
  const StageOptions &options_;
  std::string hash_;
  json inputs_ = json::object();
  json outputs_ = json::object();
  json overrides_ = json::object();
};

Stage corpus_stage(const RunConfig &cfg) { return cfg.labels_file.empty() ? Stage::GenSynthetic : Stage::Ingest; }

std::vector<MolGraph> read_smiles_file(const fs::path &p) {
  std::istringstream in(read_text(p));
  std::vector<MolGraph> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    try {
      out.push_back(parse_smiles(line));
    } catch (const ParseError &e) {
      throw ArtifactError(p.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

struct Labeled {
  std::vector<MolGraph> molecules;
  std::vector<std::vector<int>> labels;  // per configured property
};

// Label columns reordered to the configured property order.
Labeled read_labels(const fs::path &p, const RunConfig &cfg) {
  std::istringstream in(read_text(p));
  LabelTable table;
  try {
    table = read_label_csv(in);
  } catch (const Error &e) {
    throw ArtifactError(p.string() + ": " + e.what());
  }
  Labeled out;
  for (const auto &prop : cfg.properties) {
    const auto it = std::find(table.property_names.begin(), table.property_names.end(), prop.name);
    if (it == table.property_names.end())
      throw ConfigError(p.string() + ": no label column for property " + prop.name);
    out.labels.push_back(table.labels[it - table.property_names.begin()]);
  }
  for (std::size_t i = 0; i < table.smiles.size(); ++i) {
    try {
      out.molecules.push_back(parse_smiles(table.smiles[i]));
    } catch (const ParseError &e) {
      throw ArtifactError(p.string() + ": row " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

std::string labels_csv(const RunConfig &cfg, const Labeled &data) {
  LabelTable table;
  table.property_names = cfg.property_names();
  for (const auto &g : data.molecules) table.smiles.push_back(write_smiles(g));
  table.labels = data.labels;
  std::ostringstream out;
  write_label_csv(out, table);
  return out.str();
}

std::vector<MolGraph> all_positive(const Labeled &data) {
  std::vector<MolGraph> out;
  for (std::size_t i = 0; i < data.molecules.size(); ++i) {
    bool ok = true;
    for (const auto &col : data.labels) ok = ok && col[i] == 1;
    if (ok) out.push_back(data.molecules[i]);
  }
  return out;
}

std::vector<PropertySpec> load_predictors(StageRun &run, const RunConfig &cfg) {
  std::vector<PropertySpec> props;
  for (const auto &p : cfg.properties) {
    const auto file = run.input(predictor_file(p.name), Stage::TrainPredictor);
    ForestModel model;
    try {
      model = ForestModel::from_json(read_json(file));
    } catch (const json::exception &e) {
      throw ArtifactError(file.string() + ": " + e.what());
    }
    props.push_back({p.name, p.threshold, std::make_shared<const ForestModel>(std::move(model))});
  }
  return props;
}

RationaleVocab load_vocab(StageRun &run, const std::string &rel, Stage producer) {
  const auto file = run.input(rel, producer);
  try {
    return RationaleVocab::from_json(read_json(file));
  } catch (const json::exception &e) {
    throw ArtifactError(file.string() + ": " + e.what());
  }
}

GenModel load_model(StageRun &run, const std::string &prefix, Stage producer) {
  run.input(prefix + ".json", producer);
  run.input(prefix + ".bin", producer);
  return GenModel::load(run.path(prefix));
}

void save_model(StageRun &run, const GenModel &model, const std::string &prefix) {
  fs::create_directories(run.path(prefix).parent_path());
  model.save(run.path(prefix));
  run.output_file(prefix + ".json");
  run.output_file(prefix + ".bin");
}

TrainConfig train_config(const RunConfig &cfg) {
  TrainConfig t = cfg.train;
  t.seed = Rng::derive(cfg.seed, kTrainStream);
  t.threads = cfg.threads;
  return t;
}

std::string format_rate(const std::optional<double> &v) { return v ? fixed(*v, 4) : "-"; }

std::string report_table(const EvalReport &r) {
  std::ostringstream out;
  auto row = [&](const std::string &k, const std::string &v) {
    out << "  ";
    out.width(16);
    out << std::left << k << v << "\n";
  };
  row("samples", std::to_string(r.n));
  row("positives", std::to_string(r.positives));
  row("success", fixed(r.success, 4));
  row("diversity", format_rate(r.diversity));
  row("novelty", format_rate(r.novelty));
  row("diversity_all", format_rate(r.diversity_all));
  row("novelty_all", format_rate(r.novelty_all));
  for (const auto &[name, rate] : r.property_rates) row("rate_" + name, fixed(rate, 4));
  return out.str();
}

void gen_synthetic(StageRun &run, const RunConfig &cfg) {
  if (!cfg.labels_file.empty()) throw ConfigError("gen-synthetic: data.labels is set; use `molrat ingest`");
  std::vector<MolGraph> motifs;
  for (const auto &p : cfg.properties) {
    if (p.motif.empty()) throw ConfigError("gen-synthetic: property " + p.name + " has no motif");
    motifs.push_back(parse_smiles(p.motif));
  }
  Rng rng(Rng::derive(cfg.seed, kCorpusStream));
  LabeledCorpus corpus = synthetic_corpus(rng, cfg.corpus_size, motifs, cfg.plant_prob, cfg.synthetic);
  Labeled data{std::move(corpus.molecules), std::move(corpus.labels)};
  std::string smi;
  for (const auto &g : data.molecules) smi += write_smiles(g) + "\n";
  run.output(kCorpus, smi);
  run.output(kLabels, labels_csv(cfg, data));
  for (std::size_t k = 0; k < cfg.properties.size(); ++k) {
    const auto pos = std::count(data.labels[k].begin(), data.labels[k].end(), 1);
    run.info(cfg.properties[k].name + ": " + std::to_string(pos) + " positive / " +
             std::to_string(data.molecules.size() - pos) + " negative");
  }
}

void ingest(StageRun &run, const RunConfig &cfg) {
  if (cfg.labels_file.empty()) throw ConfigError("ingest: data.labels is not set");
  run.external_input(cfg.labels_file);
  Labeled data = read_labels(cfg.labels_file, cfg);
  std::string smi;
  for (const auto &g : data.molecules) smi += write_smiles(g) + "\n";
  if (!cfg.corpus_file.empty()) {
    run.external_input(cfg.corpus_file);
    for (const auto &g : read_smiles_file(cfg.corpus_file)) smi += write_smiles(g) + "\n";
  }
  run.output(kCorpus, smi);
  run.output(kLabels, labels_csv(cfg, data));
  run.info(std::to_string(data.molecules.size()) + " labelled molecules");
}

void train_predictor(StageRun &run, const RunConfig &cfg) {
  const Labeled data = read_labels(run.input(kLabels, corpus_stage(cfg)), cfg);
  const std::size_t n = data.molecules.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split(Rng::derive(cfg.seed, kSplitStream));
  split.shuffle(order.begin(), order.end());
  const auto held = static_cast<std::size_t>(std::llround(cfg.holdout_fraction * n));
  if (held == 0 || held >= n) throw ConfigError("predictor.holdout leaves an empty split");
  std::vector<std::size_t> train_idx(order.begin() + held, order.end()), test_idx(order.begin(), order.begin() + held);
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::vector<MolGraph> train_x, test_x;
  for (auto i : train_idx) train_x.push_back(data.molecules[i]);
  for (auto i : test_idx) test_x.push_back(data.molecules[i]);

  json metrics = {{"format", "molrat.predictor_metrics"},
                  {"version", kSchemaVersion},
                  {"train", train_idx.size()},
                  {"holdout", test_idx.size()},
                  {"properties", json::array()}};
  for (std::size_t k = 0; k < cfg.properties.size(); ++k) {
    const auto &name = cfg.properties[k].name;
    std::vector<int> train_y, test_y;
    for (auto i : train_idx) train_y.push_back(data.labels[k][i]);
    for (auto i : test_idx) test_y.push_back(data.labels[k][i]);
    ForestParams params = cfg.forest;
    params.seed = Rng::derive(cfg.seed, kForestStream, k);
    params.threads = cfg.threads;
    const ForestModel model = train_forest(train_x, train_y, params);
    run.output(predictor_file(name), model.to_json().dump() + "\n");
    const auto pos = std::count(test_y.begin(), test_y.end(), 1);
    json entry = {{"name", name}, {"holdout_positives", pos}, {"auroc", nullptr}};
    if (pos > 0 && pos < static_cast<long>(test_y.size())) {
      const double a = auroc(model, test_x, test_y);
      entry["auroc"] = a;
      run.info(name + ": held-out AUROC " + fixed(a, 4));
    } else {
      run.warn(name + ": held-out split has a single class; AUROC undefined");
    }
    metrics["properties"].push_back(entry);
  }
  run.output(kPredictorMetrics, metrics.dump(2) + "\n");
}

void extract(StageRun &run, const RunConfig &cfg) {
  const Labeled data = read_labels(run.input(kLabels, corpus_stage(cfg)), cfg);
  const auto props = load_predictors(run, cfg);
  for (std::size_t k = 0; k < props.size(); ++k) {
    std::vector<MolGraph> positives;
    for (std::size_t i = 0; i < data.molecules.size(); ++i)
      if (data.labels[k][i] == 1) positives.push_back(data.molecules[i]);
    if (cfg.extract_max_molecules > 0 && positives.size() > static_cast<std::size_t>(cfg.extract_max_molecules))
      positives.resize(cfg.extract_max_molecules);
    if (positives.empty()) throw Error("extract: no labelled positives for " + props[k].name);
    VocabStats stats;
    const RationaleVocab vocab = build_vocab(positives, props[k], cfg.mcts, &stats, cfg.threads);
    run.output(vocab_file(props[k].name), vocab.to_json().dump() + "\n");
    run.info(props[k].name + ": " + std::to_string(vocab.size()) + " rationales from " +
             std::to_string(positives.size()) + " positives (" + std::to_string(stats.skipped_negative) +
             " predicted negative, " + std::to_string(stats.molecules_without_rationale) + " without rationale)");
  }
}

void merge(StageRun &run, const RunConfig &cfg) {
  const auto props = load_predictors(run, cfg);
  std::vector<RationaleVocab> vocabs;
  for (const auto &p : props) vocabs.push_back(load_vocab(run, vocab_file(p.name), Stage::Extract));
  RationaleVocab merged;
  if (vocabs.size() == 1) {
    merged = std::move(vocabs[0]);
  } else {
    MergeParams params = cfg.merge;
    params.threads = cfg.threads;
    MergeStats stats;
    merged = build_multi_vocab(vocabs, props, params, {}, &stats);
    run.info(std::to_string(stats.candidates) + " candidates, " + std::to_string(stats.oversized_pairs) +
             " oversized pairs, " + std::to_string(stats.accepted) + " accepted");
  }
  if (merged.empty()) throw Error("merge: no rationale satisfies every property");
  run.output(kMergedVocab, merged.to_json().dump() + "\n");
  run.info(std::to_string(merged.size()) + " multi-property rationales");
}

void pretrain_stage(StageRun &run, const RunConfig &cfg) {
  std::vector<MolGraph> corpus = read_smiles_file(run.input(kCorpus, corpus_stage(cfg)));
  if (cfg.pretrain_molecules > 0 && corpus.size() > static_cast<std::size_t>(cfg.pretrain_molecules))
    corpus.resize(cfg.pretrain_molecules);
  if (corpus.empty()) throw Error("pretrain: empty corpus");
  GenModelConfig mc = cfg.model;
  mc.seed = Rng::derive(cfg.seed, kModelStream);
  GenModel model(AtomVocab::from_molecules(corpus), mc);
  const TrainConfig t = train_config(cfg);
  Rng pair_rng(Rng::derive(cfg.seed, kPairStream));
  const auto pairs = make_pretrain_pairs(corpus, t.max_subgraph_atoms, t.pairs_per_molecule, pair_rng);
  run.info(std::to_string(pairs.size()) + " pairs from " + std::to_string(corpus.size()) + " molecules");
  const PretrainStats stats =
      pretrain(model, pairs, t, [&](int epoch, double loss) { run.info("epoch " + std::to_string(epoch + 1) +
                                                                       " loss " + fixed(loss, 4)); });
  std::string csv = "epoch,loss,reconstruction,kl\n";
  for (std::size_t e = 0; e < stats.loss.size(); ++e)
    csv += std::to_string(e + 1) + "," + fixed(stats.loss[e]) + "," + fixed(stats.reconstruction[e]) + "," +
           fixed(stats.kl[e]) + "\n";
  run.output(kPretrainLog, csv);
  save_model(run, model, kPretrained);
}

void finetune_stage(StageRun &run, const RunConfig &cfg) {
  GenModel model = load_model(run, kPretrained, Stage::Pretrain);
  const RationaleVocab vocab = load_vocab(run, kMergedVocab, Stage::Merge);
  const auto props = load_predictors(run, cfg);
  const Labeled data = read_labels(run.input(kLabels, corpus_stage(cfg)), cfg);
  const auto reference = all_positive(data);
  const TrainConfig t = train_config(cfg);
  std::string csv = IterationStats::csv_header() + "\n";
  finetune(model, vocab, props, t, reference, [&](const IterationStats &s) {
    csv += s.csv_row() + "\n";
    run.info("iteration " + std::to_string(s.iteration + 1) + ": kept " + std::to_string(s.kept) + "/" +
             std::to_string(s.sampled) + ", success " + fixed(s.success, 4));
  });
  run.output(kFinetuneLog, csv);
  save_model(run, model, kFinetuned);
  const RationaleDistribution dist = rationale_distribution(model, vocab, props, t);
  run.output(kDistribution, dist.to_json().dump(2) + "\n");
}

void sample_stage(StageRun &run, const RunConfig &cfg, const StageOptions &options) {
  const GenModel model = load_model(run, kFinetuned, Stage::Finetune);
  const RationaleVocab vocab = load_vocab(run, kMergedVocab, Stage::Merge);
  const auto dist_file = run.input(kDistribution, Stage::Finetune);
  RationaleDistribution dist;
  try {
    dist = RationaleDistribution::from_json(read_json(dist_file));
  } catch (const json::exception &e) {
    throw ArtifactError(dist_file.string() + ": " + e.what());
  }
  if (dist.size() != vocab.size()) throw ArtifactError(dist_file.string() + " does not match " + kMergedVocab);
  for (std::size_t i = 0; i < vocab.size(); ++i)
    if (dist.keys[i] != vocab[i].key()) throw ArtifactError(dist_file.string() + " does not match " + kMergedVocab);
  const std::size_t n = options.n.value_or(cfg.sample_n);
  if (options.n) run.set_override("n", n);
  const SampleBatch batch =
      sample_molecules(model, vocab, dist, n, Rng::derive(cfg.seed, kSampleStream), cfg.train.max_decode_steps,
                       cfg.threads);
  std::string csv = "smiles,rationale\n";
  for (const auto &m : batch.molecules) csv += write_smiles(m.graph) + "," + vocab[m.rationale].key() + "\n";
  run.output(kSamples, csv);
  run.info(std::to_string(batch.molecules.size()) + " molecules from " + std::to_string(batch.attempts) +
           " attempts (" + std::to_string(batch.truncated) + " truncated)");
  if (batch.molecules.size() < n) run.warn("attempt budget exhausted before reaching n");
}

void evaluate_stage(StageRun &run, const RunConfig &cfg, const StageOptions &options) {
  const auto file = run.input(kSamples, Stage::Sample);
  std::istringstream in(read_text(file));
  std::string line;
  std::getline(in, line);
  if (line != "smiles,rationale") throw ArtifactError(file.string() + ": unexpected header");
  std::vector<MolGraph> samples;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    samples.push_back(parse_smiles(line.substr(0, line.find(','))));
  }
  if (samples.empty()) throw Error("evaluate: " + file.string() + " has no molecules");
  const auto props = load_predictors(run, cfg);
  const Labeled data = read_labels(run.input(kLabels, corpus_stage(cfg)), cfg);
  const EvalReport report = evaluate(samples, props, all_positive(data));
  const auto names = cfg.property_names();
  run.output(kReportCsv, EvalReport::csv_header(names) + "\n" + report.csv_row() + "\n");
  run.output(kReportJson, report.to_json().dump(2) + "\n");
  if (options.out != nullptr) *options.out << report_table(report);
}

void faithfulness_stage(StageRun &run, const RunConfig &cfg, const StageOptions &options) {
  const Labeled data = read_labels(run.input(kLabels, corpus_stage(cfg)), cfg);
  const auto props = load_predictors(run, cfg);
  json out = {{"format", "molrat.faithfulness"}, {"version", kSchemaVersion}, {"properties", json::array()}};
  for (std::size_t k = 0; k < props.size(); ++k) {
    const auto &pc = cfg.properties[k];
    if (pc.motif.empty()) throw ConfigError("faithfulness: property " + pc.name + " has no motif");
    std::vector<MolGraph> positives;
    for (std::size_t i = 0; i < data.molecules.size(); ++i)
      if (data.labels[k][i] == 1) positives.push_back(data.molecules[i]);
    if (cfg.faithfulness_max_molecules > 0 &&
        positives.size() > static_cast<std::size_t>(cfg.faithfulness_max_molecules))
      positives.resize(cfg.faithfulness_max_molecules);
    const FaithfulnessReport r = faithfulness(positives, props[k], parse_smiles(pc.motif), cfg.mcts, cfg.threads);
    json entry = r.to_json();
    entry["name"] = pc.name;
    out["properties"].push_back(entry);
    const std::string line = pc.name + ": exact " + fixed(r.exact_rate, 4) + ", partial " + fixed(r.partial_mean, 4) +
                             " over " + std::to_string(r.molecules) + " positives";
    run.info(line);
    if (options.out != nullptr) *options.out << line << "\n";
  }
  run.output(kFaithfulness, out.dump(2) + "\n");
}

}  // namespace

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::GenSynthetic: return "gen-synthetic";
    case Stage::Ingest: return "ingest";
    case Stage::TrainPredictor: return "train-predictor";
    case Stage::Extract: return "extract";
    case Stage::Merge: return "merge";
    case Stage::Pretrain: return "pretrain";
    case Stage::Finetune: return "finetune";
    case Stage::Sample: return "sample";
    case Stage::Evaluate: return "evaluate";
    case Stage::Faithfulness: return "faithfulness";
  }
  throw Error("unknown stage");
}

void run_stage(Stage stage, const RunConfig &cfg, const StageOptions &options) {
  cfg.validate();
  fs::create_directories(cfg.run_dir);
  StageRun run(stage, cfg, options);
  switch (stage) {
    case Stage::GenSynthetic: gen_synthetic(run, cfg); break;
    case Stage::Ingest: ingest(run, cfg); break;
    case Stage::TrainPredictor: train_predictor(run, cfg); break;
    case Stage::Extract: extract(run, cfg); break;
    case Stage::Merge: merge(run, cfg); break;
    case Stage::Pretrain: pretrain_stage(run, cfg); break;
    case Stage::Finetune: finetune_stage(run, cfg); break;
    case Stage::Sample: sample_stage(run, cfg, options); break;
    case Stage::Evaluate: evaluate_stage(run, cfg, options); break;
    case Stage::Faithfulness: faithfulness_stage(run, cfg, options); break;
  }
  run.commit();
}

void run_all(const RunConfig &cfg, const StageOptions &options) {
  for (Stage s : {corpus_stage(cfg), Stage::TrainPredictor, Stage::Extract, Stage::Merge, Stage::Pretrain,
                  Stage::Finetune, Stage::Sample, Stage::Evaluate})
    run_stage(s, cfg, options);
}

MatchResult match_rationale(const Rationale &rationale, const MolGraph &molecule, const MolGraph &motif) {
  MatchResult r;
  r.exact = isomorphic(rationale.graph, motif);
  if (motif.num_atoms() == 0) return r;
  std::vector<char> covered(molecule.num_atoms(), 0);
  for (int a : rationale.source_atoms)
    if (a >= 0 && a < molecule.num_atoms()) covered[a] = 1;
  int best = 0;
  for (const auto &emb : all_embeddings(molecule, motif)) {
    int hits = 0;
    for (int a : emb) hits += covered[a];
    best = std::max(best, hits);
  }
  r.partial = static_cast<double>(best) / motif.num_atoms();
  return r;
}

json FaithfulnessReport::to_json() const {
  return {{"molecules", molecules},
          {"with_rationale", with_rationale},
          {"exact_rate", exact_rate},
          {"partial_mean", partial_mean}};
}

FaithfulnessReport faithfulness(std::span<const MolGraph> positives, const PropertySpec &prop, const MolGraph &motif,
                                const MctsParams &params, unsigned threads) {
  FaithfulnessReport report;
  report.molecules = positives.size();
  report.per_molecule.assign(positives.size(), {});
  std::vector<char> found(positives.size(), 0);
  parallel_for(
      positives.size(),
      [&](std::size_t i) {
        const auto rationales = extract_rationales(positives[i], prop, params);
        const Rationale *best = best_rationale(rationales, prop.name);
        if (best == nullptr) return;
        found[i] = 1;
        report.per_molecule[i] = match_rationale(*best, positives[i], motif);
      },
      threads);
  if (positives.empty()) return report;
  double exact = 0.0, partial = 0.0;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    report.with_rationale += found[i];
    exact += report.per_molecule[i].exact;
    partial += report.per_molecule[i].partial;
  }
  report.exact_rate = exact / positives.size();
  report.partial_mean = partial / positives.size();
  return report;
}

}  // namespace molrat::pipeline
