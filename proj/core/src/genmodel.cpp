//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include "molrat/genmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "molrat/canonical.hpp"
#include "molrat/substructure.hpp"

namespace molrat {

using nn::Tensor;

int bond_class(BondOrder order) {
  switch (order) {
  case BondOrder::Single: return 0;
  case BondOrder::Double: return 1;
  case BondOrder::Triple: return 2;
  case BondOrder::Aromatic: return 3;
  }
  return 0;
}

BondOrder bond_order_of_class(int cls) {
  switch (cls) {
  case 0: return BondOrder::Single;
  case 1: return BondOrder::Double;
  case 2: return BondOrder::Triple;
  case 3: return BondOrder::Aromatic;
  default: throw GraphError("bond class " + std::to_string(cls) + " has no bond order");
  }
}

AtomVocab::AtomVocab(std::vector<Atom> atoms) {
  std::sort(atoms.begin(), atoms.end(),
            [](const Atom &a, const Atom &b) { return atom_label(a) < atom_label(b); });
  for (const Atom &a : atoms) {
    if (index_.contains(atom_label(a))) continue;
    atoms_.push_back(a);
    index_.emplace(atom_label(a), static_cast<int>(atoms_.size()));
  }
}

AtomVocab AtomVocab::from_molecules(std::span<const MolGraph> molecules) {
  std::vector<Atom> atoms;
  for (const auto &g : molecules) atoms.insert(atoms.end(), g.atoms().begin(), g.atoms().end());
  return AtomVocab(std::move(atoms));
}

int AtomVocab::index(const Atom &atom) const {
  const auto it = index_.find(atom_label(atom));
  return it == index_.end() ? kUnknownAtomType : it->second;
}

const Atom &AtomVocab::atom(int type) const {
  if (type < 1 || type >= size()) throw Error("atom vocabulary: type " + std::to_string(type) + " out of range");
  return atoms_[type - 1];
}

nlohmann::json AtomVocab::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const Atom &a : atoms_)
    out.push_back({{"element", element_symbol(a.element)}, {"charge", a.charge}, {"aromatic", a.aromatic}});
  return out;
}

AtomVocab AtomVocab::from_json(const nlohmann::json &j) {
  if (!j.is_array()) throw ArtifactError("atom vocabulary: expected an array");
  std::vector<Atom> atoms;
  for (const auto &e : j) {
    Atom a;
    if (!element_from_symbol(e.at("element").get<std::string>(), a.element))
      throw ArtifactError("atom vocabulary: unknown element " + e.at("element").dump());
    a.charge = e.at("charge").get<int>();
    a.aromatic = e.at("aromatic").get<bool>();
    atoms.push_back(a);
  }
  return AtomVocab(std::move(atoms));
}

double latent_std(double logvar) { return std::exp(logvar); }

std::vector<double> sample_latent(const LatentParams &p, Rng &rng) {
  if (p.mu.size() != p.logvar.size()) throw NumericError("sample_latent: mean and log-scale lengths differ");
  std::vector<double> z(p.mu.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = p.mu[i] + latent_std(p.logvar[i]) * rng.normal();
  return z;
}

std::vector<double> sample_prior(int latent, Rng &rng) {
  std::vector<double> z(latent);
  for (double &v : z) v = rng.normal();
  return z;
}

namespace {

// Disjoint union of graphs (or their leading atoms) for one network pass.
struct GraphBatch {
  std::vector<int> types;
  std::vector<int> graph_of_atom;
  std::vector<int> src, dst, cls, rev;
  int num_graphs = 0;

  int num_atoms() const { return static_cast<int>(types.size()); }

  int append(const MolGraph &g, const AtomVocab &vocab, int limit = -1) {
    const int n = limit < 0 ? g.num_atoms() : limit;
    const int off = num_atoms();
    for (int i = 0; i < n; ++i) {
      types.push_back(vocab.index(g.atom(i)));
      graph_of_atom.push_back(num_graphs);
    }
    for (const Bond &b : g.bonds()) {
      if (b.begin >= n || b.end >= n) continue;
      const int e = static_cast<int>(src.size());
      src.insert(src.end(), {off + b.begin, off + b.end});
      dst.insert(dst.end(), {off + b.end, off + b.begin});
      cls.insert(cls.end(), 2, bond_class(b.order));
      rev.insert(rev.end(), {e + 1, e});
    }
    ++num_graphs;
    return off;
  }
};

Tensor mpn(const GenModel &m, const std::string &net, const GraphBatch &b) {
  const int hidden = m.config().hidden;
  const Tensor atoms = gather_rows(m.param("atom_emb"), b.types);
  Tensor incoming;
  if (!b.src.empty()) {
    const Tensor base =
        add_row(add(matmul(gather_rows(atoms, b.src), m.param(net + ".w_atom")),
                    matmul(gather_rows(m.param("bond_emb"), b.cls), m.param(net + ".w_bond"))),
                m.param(net + ".b_msg"));
    Tensor msg = relu(base);
    for (int t = 1; t < m.config().depth; ++t) {
      const Tensor in = group_sum_rows(msg, b.dst, b.num_atoms());
      const Tensor others = sub(gather_rows(in, b.src), gather_rows(msg, b.rev));
      msg = relu(add(base, matmul(others, m.param(net + ".w_msg"))));
    }
    incoming = group_sum_rows(msg, b.dst, b.num_atoms());
  } else {
    incoming = Tensor::zeros(b.num_atoms(), hidden);
  }
  return relu(add_row(add(matmul(atoms, m.param(net + ".u_atom")), matmul(incoming, m.param(net + ".u_msg"))),
                      m.param(net + ".b_node")));
}

Tensor mlp(const GenModel &m, const std::string &head, const Tensor &x) {
  const Tensor h = relu(add_row(matmul(x, m.param(head + ".w1")), m.param(head + ".b1")));
  return add_row(matmul(h, m.param(head + ".w2")), m.param(head + ".b2"));
}

// Contribution of one decided bond (partner vector, bond class) to the new
// atom's state.
Tensor bond_messages(const GenModel &m, const Tensor &partner_h, std::span<const int> cls) {
  const Tensor parts[] = {partner_h, gather_rows(m.param("bond_emb"), cls)};
  return relu(add_row(matmul(concat_cols(parts), m.param("bondmsg.w")), m.param("bondmsg.b")));
}

Tensor new_atom_state(const GenModel &m, std::span<const int> types, const Tensor &message_sum) {
  const Tensor parts[] = {gather_rows(m.param("atom_emb"), types), message_sum};
  return relu(add_row(matmul(concat_cols(parts), m.param("newatom.w")), m.param("newatom.b")));
}

bool bond_fits(const Atom &a, int half, int cls) {
  if (cls == kNoBond) return true;
  const BondOrder order = bond_order_of_class(cls);
  if (order == BondOrder::Aromatic && !a.aromatic) return false;
  return (half + half_order(order)) / 2 <= max_valence(a);
}

std::vector<char> atom_mask(const AtomVocab &vocab, const Atom &front, int front_half) {
  std::vector<char> mask(vocab.size(), 0);
  for (int t = 1; t < vocab.size(); ++t)
    for (int c = 0; c < kNoBond && !mask[t]; ++c)
      mask[t] = bond_fits(vocab.atom(t), 0, c) && bond_fits(front, front_half, c);
  return mask;
}

std::vector<char> bond_mask(const Atom &fresh, int fresh_half, const Atom &partner, int partner_half, bool first) {
  std::vector<char> mask(kNumBondClasses, 0);
  for (int c = 0; c < kNoBond; ++c) mask[c] = bond_fits(fresh, fresh_half, c) && bond_fits(partner, partner_half, c);
  mask[kNoBond] = !first;
  return mask;
}

bool any_of(const std::vector<char> &mask) {
  return std::any_of(mask.begin(), mask.end(), [](char c) { return c != 0; });
}

std::vector<double> masked_distribution(const Tensor &logits, const std::vector<char> &mask, bool masked) {
  const Tensor p = masked ? nn::exp(log_softmax(logits, mask)) : softmax(logits);
  return {p.values().begin(), p.values().end()};
}

std::vector<int> half_valences(const MolGraph &g, int limit) {
  std::vector<int> half(g.num_atoms(), 0);
  for (const Bond &b : g.bonds()) {
    if (b.begin >= limit || b.end >= limit) continue;
    half[b.begin] += half_order(b.order);
    half[b.end] += half_order(b.order);
  }
  return half;
}

// Decisions that produce a trace's molecule, in decoder order.
struct Replay {
  struct Expand {
    int prefix, front;
    double grows;
  };
  struct AtomStep {
    int prefix, front, type;
    std::vector<char> mask;
  };
  struct BondStep {
    int prefix, creation, k, partner, cls;
    bool forced;
    std::vector<char> mask;
  };
  std::vector<Expand> expands;
  std::vector<AtomStep> atoms;
  std::vector<BondStep> bonds;
  std::vector<int> creation_type;
  int num_prefixes = 1;
};

Replay replay(const DecodeTrace &t, const AtomVocab *vocab) {
  const MolGraph &g = t.graph;
  const int n = g.num_atoms(), r = t.rationale_atoms;
  std::vector<int> half = half_valences(g, r);
  std::deque<int> queue(t.initial_queue.begin(), t.initial_queue.end());
  Replay out;
  int next = r, prefix = 0;
  while (!queue.empty()) {
    const int v = queue.front();
    const bool grows = next < n && g.bond_between(next, v) >= 0;
    std::vector<char> amask;
    bool possible = true;
    if (vocab != nullptr) {
      amask = atom_mask(*vocab, g.atom(v), half[v]);
      possible = any_of(amask);
    }
    if (!grows) {
      if (possible) out.expands.push_back({prefix, v, 0.0});
      queue.pop_front();
      continue;
    }
    if (!possible) throw GraphError("decode order: atom " + std::to_string(v) + " cannot grow a neighbour");
    out.expands.push_back({prefix, v, 1.0});
    if (vocab != nullptr) {
      const int type = vocab->index(g.atom(next));
      if (type == kUnknownAtomType || !amask[type])
        throw GraphError("decode order: atom " + std::to_string(next) + " has a type the model cannot generate");
      out.atoms.push_back({prefix, v, type, std::move(amask)});
      out.creation_type.push_back(type);
    }
    int fresh_half = 0, placed = 0;
    for (std::size_t k = 0; k < queue.size(); ++k) {
      const int q = queue[k];
      const int bi = g.bond_between(next, q);
      const int cls = bi < 0 ? kNoBond : bond_class(g.bond(bi).order);
      std::vector<char> mask = bond_mask(g.atom(next), fresh_half, g.atom(q), half[q], k == 0);
      if (!mask[cls])
        throw GraphError("decode order: bond " + std::to_string(next) + "-" + std::to_string(q) + " is not decodable");
      const bool forced = std::count(mask.begin(), mask.end(), 1) == 1;
      out.bonds.push_back({prefix, prefix, static_cast<int>(k), q, cls, forced, std::move(mask)});
      if (cls != kNoBond) {
        const int h = half_order(g.bond(bi).order);
        fresh_half += h;
        half[q] += h;
        ++placed;
      }
    }
    int earlier = 0;
    for (const auto &nb : g.neighbors(next)) earlier += nb.atom < next ? 1 : 0;
    if (earlier != placed)
      throw GraphError("decode order: atom " + std::to_string(next) + " bonds to an atom outside the queue");
    half[next] = fresh_half;
    queue.push_back(next);
    ++next;
    ++prefix;
  }
  if (next != n) throw GraphError("decode order: atoms unreachable from the peripheral queue");
  out.num_prefixes = prefix + 1;
  return out;
}

std::vector<double> glorot(Rng &rng, int rows, int cols, double scale) {
  const double limit = scale * std::sqrt(6.0 / (rows + cols));
  std::vector<double> v(static_cast<std::size_t>(rows) * cols);
  for (double &x : v) x = limit * (2.0 * rng.uniform() - 1.0);
  return v;
}

nn::ParamStore init_params(const AtomVocab &vocab, const GenModelConfig &c) {
  if (c.hidden < 1 || c.latent < 1 || c.depth < 1) throw ConfigError("generator: widths and depth must be positive");
  Rng rng(c.seed);
  nn::ParamStore p;
  const int h = c.hidden, z = c.latent, head_in = 2 * h + z;
  auto weight = [&](const std::string &name, int rows, int cols, double extra = 1.0) {
    p.add(name, rows, cols, glorot(rng, rows, cols, c.init_scale * extra));
  };
  auto bias = [&](const std::string &name, int cols) { p.add(name, 1, cols, std::vector<double>(cols, 0.0)); };
  weight("atom_emb", vocab.size(), h);
  weight("bond_emb", kNumBondClasses, h);
  for (const std::string net : {"enc", "dec"}) {
    weight(net + ".w_atom", h, h);
    weight(net + ".w_bond", h, h);
    weight(net + ".w_msg", h, h);
    bias(net + ".b_msg", h);
    weight(net + ".u_atom", h, h);
    weight(net + ".u_msg", h, h);
    bias(net + ".b_node", h);
  }
  weight("mu.w", h, z);
  bias("mu.b", z);
  weight("sigma.w", h, z, 0.1);
  bias("sigma.b", z);
  auto head = [&](const std::string &name, int in, int out) {
    weight(name + ".w1", in, h);
    bias(name + ".b1", h);
    weight(name + ".w2", h, out);
    bias(name + ".b2", out);
  };
  head("expand", head_in, 1);
  head("atom", head_in, vocab.size());
  weight("bondmsg.w", 2 * h, h);
  bias("bondmsg.b", h);
  weight("newatom.w", 2 * h, h);
  bias("newatom.b", h);
  head("bond", 3 * h + z, kNumBondClasses);
  return p;
}

constexpr int kGenModelVersion = 1;

}  // namespace

GenModel::GenModel(AtomVocab atoms, GenModelConfig config)
    : atoms_(std::move(atoms)), config_(config), params_(init_params(atoms_, config_)) {}

GenModel::GenModel(AtomVocab atoms, GenModelConfig config, nn::ParamStore params)
    : atoms_(std::move(atoms)), config_(config), params_(std::move(params)) {}

GenModel GenModel::clone() const { return GenModel(atoms_, config_, params_.clone()); }

std::vector<std::vector<double>> GenModel::embed_atoms(const MolGraph &g, Network net) const {
  nn::NoGradGuard guard;
  GraphBatch b;
  b.append(g, atoms_);
  const Tensor h = mpn(*this, net == Network::Encoder ? "enc" : "dec", b);
  std::vector<std::vector<double>> out(h.rows());
  for (int i = 0; i < h.rows(); ++i) out[i].assign(h.values().begin() + i * h.cols(), h.values().begin() + (i + 1) * h.cols());
  return out;
}

std::pair<Tensor, Tensor> GenModel::encode_batch(std::span<const MolGraph> molecules) const {
  GraphBatch b;
  for (const auto &g : molecules) b.append(g, atoms_);
  const Tensor pooled = group_sum_rows(mpn(*this, "enc", b), b.graph_of_atom, b.num_graphs);
  return {add_row(matmul(pooled, param("mu.w")), param("mu.b")),
          add_row(matmul(pooled, param("sigma.w")), param("sigma.b"))};
}

LatentParams GenModel::encode(const MolGraph &g) const {
  nn::NoGradGuard guard;
  const auto [mu, logvar] = encode_batch(std::span(&g, 1));
  return {{mu.values().begin(), mu.values().end()}, {logvar.values().begin(), logvar.values().end()}};
}

nlohmann::json GenModel::header() const {
  return {{"format", "molrat.genmodel"},
          {"version", kGenModelVersion},
          {"hidden", config_.hidden},
          {"latent", config_.latent},
          {"depth", config_.depth},
          {"seed", config_.seed},
          {"atom_vocab", atoms_.to_json()},
          {"bond_classes", {"single", "double", "triple", "aromatic", "none"}},
          {"params", nn::params_manifest(params_)}};
}

void GenModel::save(const std::filesystem::path &prefix) const {
  std::ofstream bin(prefix.string() + ".bin", std::ios::binary);
  if (!bin) throw ArtifactError("cannot write " + prefix.string() + ".bin");
  nn::write_params(bin, params_);
  std::ofstream js(prefix.string() + ".json");
  if (!js) throw ArtifactError("cannot write " + prefix.string() + ".json");
  js << header().dump(2) << '\n';
}

GenModel GenModel::load(const std::filesystem::path &prefix) {
  std::ifstream js(prefix.string() + ".json");
  if (!js) throw ArtifactError("missing model header " + prefix.string() + ".json");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception &e) {
    throw ArtifactError("model header: " + std::string(e.what()));
  }
  if (h.value("format", "") != "molrat.genmodel" || h.value("version", 0) != kGenModelVersion)
    throw ArtifactError("model header: unsupported format or version");
  GenModelConfig config;
  config.hidden = h.at("hidden").get<int>();
  config.latent = h.at("latent").get<int>();
  config.depth = h.at("depth").get<int>();
  config.seed = h.at("seed").get<std::uint64_t>();
  AtomVocab vocab = AtomVocab::from_json(h.at("atom_vocab"));
  std::ifstream bin(prefix.string() + ".bin", std::ios::binary);
  if (!bin) throw ArtifactError("missing model parameters " + prefix.string() + ".bin");
  nn::ParamStore params = nn::read_params(bin);
  const nn::ParamStore expected = init_params(vocab, config);
  if (nn::params_manifest(params) != nn::params_manifest(expected) || h.at("params") != nn::params_manifest(params))
    throw ArtifactError("model parameters do not match the header");
  return GenModel(std::move(vocab), config, std::move(params));
}

Decoder::Decoder(const GenModel &model, const Rationale &start, std::span<const double> z)
    : model_(&model), builder_(start.graph), half_valence_(half_valences(start.graph, start.graph.num_atoms())),
      queue_(start.peripheral.begin(), start.peripheral.end()) {
  if (static_cast<int>(z.size()) != model.config().latent)
    throw NumericError("decoder: latent vector of length " + std::to_string(z.size()) + ", expected " +
                       std::to_string(model.config().latent));
  z_ = Tensor(1, model.config().latent, {z.begin(), z.end()});
  for (int p : start.peripheral)
    if (p < 0 || p >= start.graph.num_atoms()) throw GraphError("decoder: peripheral atom out of range");
}

int Decoder::front() const {
  if (queue_.empty()) throw Error("decoder: queue is empty");
  return queue_.front();
}

MolGraph Decoder::graph() const { return builder_.peek(); }

void Decoder::refresh() {
  if (fresh_) return;
  GraphBatch b;
  b.append(builder_.peek(), model_->atoms());
  atom_h_ = mpn(*model_, "dec", b);
  graph_h_ = column_sum(atom_h_);
  fresh_ = true;
}

Tensor Decoder::head_input() const {
  const int v = front();
  const Tensor parts[] = {gather_rows(atom_h_, std::span(&v, 1)), graph_h_, z_};
  return concat_cols(parts);
}

double Decoder::expand_probability(bool masked) {
  if (adding_) throw Error("decoder: bonds of the new atom are still pending");
  nn::NoGradGuard guard;
  const int v = front();
  if (masked && !any_of(atom_mask(model_->atoms(), builder_.peek().atom(v), half_valence_[v]))) return 0.0;
  refresh();
  return sigmoid(mlp(*model_, "expand", head_input())).item();
}

void Decoder::stop() {
  if (adding_) throw Error("decoder: bonds of the new atom are still pending");
  front();
  queue_.pop_front();
}

std::vector<double> Decoder::atom_type_distribution(bool masked) {
  if (adding_) throw Error("decoder: bonds of the new atom are still pending");
  nn::NoGradGuard guard;
  const int v = front();
  refresh();
  const auto mask = atom_mask(model_->atoms(), builder_.peek().atom(v), half_valence_[v]);
  if (masked && !any_of(mask)) throw Error("decoder: no atom type can bond to the front atom");
  return masked_distribution(mlp(*model_, "atom", head_input()), mask, masked);
}

void Decoder::add_atom(int type) {
  if (adding_) throw Error("decoder: bonds of the new atom are still pending");
  const int v = front();
  const auto mask = atom_mask(model_->atoms(), builder_.peek().atom(v), half_valence_[v]);
  if (type < 0 || type >= static_cast<int>(mask.size()) || !mask[type])
    throw Error("decoder: atom type " + std::to_string(type) + " cannot bond to the front atom");
  adding_ = true;
  new_type_ = type;
  new_half_valence_ = 0;
  bond_index_ = 0;
  partners_.assign(queue_.begin(), queue_.end());
  placed_.clear();
  message_sum_ = Tensor::zeros(1, model_->config().hidden);
}

int Decoder::bond_partner() const {
  if (!adding_) throw Error("decoder: no atom is being added");
  return partners_[bond_index_];
}

std::vector<double> Decoder::bond_distribution(bool masked) {
  nn::NoGradGuard guard;
  const int q = bond_partner();
  refresh();
  const Atom &fresh = model_->atoms().atom(new_type_);
  const auto mask = bond_mask(fresh, new_half_valence_, builder_.peek().atom(q), half_valence_[q], bond_index_ == 0);
  const Tensor g = new_atom_state(*model_, std::span(&new_type_, 1), message_sum_);
  const Tensor parts[] = {g, gather_rows(atom_h_, std::span(&q, 1)), graph_h_, z_};
  return masked_distribution(mlp(*model_, "bond", concat_cols(parts)), mask, masked);
}

void Decoder::place_bond(int cls) {
  nn::NoGradGuard guard;
  const int q = bond_partner();
  const Atom &fresh = model_->atoms().atom(new_type_);
  const auto mask = bond_mask(fresh, new_half_valence_, builder_.peek().atom(q), half_valence_[q], bond_index_ == 0);
  if (cls < 0 || cls >= kNumBondClasses || !mask[cls])
    throw Error("decoder: bond class " + std::to_string(cls) + " is not allowed here");
  refresh();
  message_sum_ = add(message_sum_, bond_messages(*model_, gather_rows(atom_h_, std::span(&q, 1)), std::span(&cls, 1)));
  if (cls != kNoBond) {
    const int h = half_order(bond_order_of_class(cls));
    new_half_valence_ += h;
    half_valence_[q] += h;
    placed_.emplace_back(q, cls);
  }
  if (++bond_index_ < partners_.size()) return;
  const int u = builder_.add_atom(fresh);
  for (const auto &[partner, c] : placed_) builder_.add_bond(u, partner, bond_order_of_class(c));
  half_valence_.push_back(new_half_valence_);
  queue_.push_back(u);
  ++added_;
  adding_ = false;
  fresh_ = false;
}

namespace {

int choose(const std::vector<double> &p, Rng &rng, bool greedy) {
  if (greedy) return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
  const double u = rng.uniform();
  double cum = 0.0;
  int last = -1;
  for (int i = 0; i < static_cast<int>(p.size()); ++i) {
    if (p[i] <= 0.0) continue;
    cum += p[i];
    last = i;
    if (u < cum) return i;
  }
  return last;
}

}  // namespace

MolGraph complete(const GenModel &model, const Rationale &s, std::span<const double> z, Rng &rng,
                  const CompleteOptions &options) {
  Decoder d(model, s, z);
  while (!d.finished()) {
    const double p = d.expand_probability();
    const bool grow = options.greedy ? p >= 0.5 : rng.uniform() < p;
    if (!grow) {
      d.stop();
      continue;
    }
    if (d.num_added() >= options.max_steps) throw TruncationError(d.graph());
    d.add_atom(choose(d.atom_type_distribution(), rng, options.greedy));
    while (d.placing_bonds()) d.place_bond(choose(d.bond_distribution(), rng, options.greedy));
  }
  return MolGraphBuilder(d.graph()).build(true);
}

DecodeTrace make_trace(const MolGraph &ordered, const Rationale &s) {
  const int r = s.graph.num_atoms();
  if (ordered.num_atoms() < r) throw GraphError("decode order: molecule is smaller than the rationale");
  for (int i = 0; i < r; ++i)
    if (!(ordered.atom(i) == s.graph.atom(i))) throw GraphError("decode order: rationale atoms must come first");
  int inner = 0;
  for (const Bond &b : ordered.bonds()) {
    if (b.begin >= r || b.end >= r) continue;
    ++inner;
    const int sb = s.graph.bond_between(b.begin, b.end);
    if (sb < 0 || s.graph.bond(sb).order != b.order)
      throw GraphError("decode order: bonds among rationale atoms differ from the rationale");
  }
  if (inner != s.graph.num_bonds()) throw GraphError("decode order: bonds among rationale atoms differ from the rationale");
  DecodeTrace t{ordered, r, s.peripheral};
  replay(t, nullptr);
  return t;
}

namespace {

DecodeTrace bfs_trace(const MolGraph &g, const Rationale &s, std::span<const int> emb, const std::vector<int> &rank) {
  if (static_cast<int>(emb.size()) != s.graph.num_atoms()) throw GraphError("decode order: embedding size mismatch");
  std::vector<int> order;
  std::vector<char> seen(g.num_atoms(), 0);
  for (int a : emb) {
    if (a < 0 || a >= g.num_atoms() || seen[a]) throw GraphError("decode order: invalid embedding");
    seen[a] = 1;
    order.push_back(a);
  }
  std::deque<int> queue;
  for (int p : s.peripheral) queue.push_back(emb[p]);
  while (!queue.empty()) {
    const int v = queue.front();
    queue.pop_front();
    std::vector<int> fresh;
    for (const auto &nb : g.neighbors(v))
      if (!seen[nb.atom]) fresh.push_back(nb.atom);
    std::sort(fresh.begin(), fresh.end(), [&](int a, int b) { return rank[a] < rank[b]; });
    for (int a : fresh) {
      seen[a] = 1;
      order.push_back(a);
      queue.push_back(a);
    }
  }
  if (static_cast<int>(order.size()) != g.num_atoms())
    throw GraphError("decode order: atoms unreachable from the peripheral queue");
  return make_trace(g.permuted(order), s);
}

}  // namespace

DecodeTrace canonical_trace(const MolGraph &g, const Rationale &s, std::span<const int> embedding) {
  const std::vector<int> rank = canonical_ranks(g);
  if (!embedding.empty() || s.graph.empty()) return bfs_trace(g, s, embedding, rank);
  // Embeddings ordered by the canonical ranks of their images; the first
  // decodable one is used, which makes the order independent of atom
  // numbering.
  std::vector<std::vector<int>> candidates;
  for (auto &e : all_embeddings(g, s.graph)) {
    for (int &a : e) a = rank[a];
    candidates.push_back(std::move(e));
  }
  if (candidates.empty()) throw GraphError("decode order: rationale is not contained in the molecule");
  std::sort(candidates.begin(), candidates.end());
  std::vector<int> atom_of_rank(g.num_atoms());
  for (int a = 0; a < g.num_atoms(); ++a) atom_of_rank[rank[a]] = a;
  std::string last_error;
  for (auto &c : candidates) {
    for (int &a : c) a = atom_of_rank[a];
    try {
      return bfs_trace(g, s, c, rank);
    } catch (const GraphError &e) {
      last_error = e.what();
    }
  }
  throw GraphError(last_error);
}

Tensor trace_nll(const GenModel &model, std::span<const DecodeTrace> traces, const Tensor &z) {
  if (z.rows() != static_cast<int>(traces.size()) || z.cols() != model.config().latent)
    throw NumericError("trace_nll: latent rows " + z.shape_string() + " for " + std::to_string(traces.size()) +
                       " traces");
  const AtomVocab &vocab = model.atoms();
  GraphBatch batch;
  std::vector<std::vector<int>> offset(traces.size()), graph_id(traces.size());
  std::vector<Replay> replays;
  for (std::size_t t = 0; t < traces.size(); ++t) {
    replays.push_back(replay(traces[t], &vocab));
    for (int p = 0; p < replays[t].num_prefixes; ++p) {
      graph_id[t].push_back(batch.num_graphs);
      offset[t].push_back(batch.append(traces[t].graph, vocab, traces[t].rationale_atoms + p));
    }
  }
  const Tensor h = mpn(model, "dec", batch);
  const Tensor pooled = group_sum_rows(h, batch.graph_of_atom, batch.num_graphs);
  auto head_input = [&](const std::vector<int> &rows, const std::vector<int> &graphs, const std::vector<int> &zs) {
    const Tensor parts[] = {gather_rows(h, rows), gather_rows(pooled, graphs), gather_rows(z, zs)};
    return concat_cols(parts);
  };

  std::vector<Tensor> terms;
  {
    std::vector<int> rows, graphs, zs;
    std::vector<double> target;
    for (std::size_t t = 0; t < traces.size(); ++t)
      for (const auto &e : replays[t].expands) {
        rows.push_back(offset[t][e.prefix] + e.front);
        graphs.push_back(graph_id[t][e.prefix]);
        zs.push_back(static_cast<int>(t));
        target.push_back(e.grows);
      }
    if (!rows.empty()) terms.push_back(bce_with_logits(mlp(model, "expand", head_input(rows, graphs, zs)), target));
  }
  {
    std::vector<int> rows, graphs, zs, target;
    std::vector<char> mask;
    for (std::size_t t = 0; t < traces.size(); ++t)
      for (const auto &a : replays[t].atoms) {
        rows.push_back(offset[t][a.prefix] + a.front);
        graphs.push_back(graph_id[t][a.prefix]);
        zs.push_back(static_cast<int>(t));
        target.push_back(a.type);
        mask.insert(mask.end(), a.mask.begin(), a.mask.end());
      }
    if (!rows.empty()) terms.push_back(cross_entropy(mlp(model, "atom", head_input(rows, graphs, zs)), target, mask));
  }
  {
    // Messages of every bond decision, forced or not, feed later states.
    std::vector<int> partner_rows, cls;
    std::vector<int> pair_src, pair_group;
    std::vector<int> rows, graphs, zs, types, target;
    std::vector<char> mask;
    int decisions = 0;
    for (std::size_t t = 0; t < traces.size(); ++t) {
      const auto &bonds = replays[t].bonds;
      std::size_t start = 0;
      for (std::size_t i = 0; i < bonds.size(); ++i) {
        const auto &b = bonds[i];
        if (b.k == 0) start = i;
        const int row = static_cast<int>(partner_rows.size());
        partner_rows.push_back(offset[t][b.prefix] + b.partner);
        cls.push_back(b.cls);
        if (b.forced) continue;
        for (std::size_t j = start; j < i; ++j) {
          pair_src.push_back(row - static_cast<int>(i - j));
          pair_group.push_back(decisions);
        }
        rows.push_back(offset[t][b.prefix] + b.partner);
        graphs.push_back(graph_id[t][b.prefix]);
        zs.push_back(static_cast<int>(t));
        types.push_back(replays[t].creation_type[b.creation]);
        target.push_back(b.cls);
        mask.insert(mask.end(), b.mask.begin(), b.mask.end());
        ++decisions;
      }
    }
    if (decisions > 0) {
      const Tensor messages = bond_messages(model, gather_rows(h, partner_rows), cls);
      const Tensor sums = group_sum_rows(gather_rows(messages, pair_src), pair_group, decisions);
      const Tensor parts[] = {new_atom_state(model, types, sums), gather_rows(h, rows), gather_rows(pooled, graphs),
                              gather_rows(z, zs)};
      terms.push_back(cross_entropy(mlp(model, "bond", concat_cols(parts)), target, mask));
    }
  }
  if (terms.empty()) return Tensor::scalar(0.0);
  Tensor total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return total;
}

double log_likelihood(const GenModel &model, const MolGraph &g, const Rationale &s, std::span<const double> z,
                      DecodeOrder order) {
  const DecodeTrace trace = order == DecodeOrder::AsGiven ? make_trace(g, s) : canonical_trace(g, s);
  nn::NoGradGuard guard;
  const Tensor zt(1, model.config().latent, {z.begin(), z.end()});
  return -trace_nll(model, std::span(&trace, 1), zt).item();
}

}  // namespace molrat
