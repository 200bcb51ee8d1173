//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include "molrat/smiles.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <optional>

#include "molrat/canonical.hpp"
#include "molrat/rng.hpp"

namespace molrat {

namespace {

struct RingOpen {
  int atom;
  std::optional<BondOrder> order;
  std::size_t pos;
};

class Parser {
public:
  explicit Parser(std::string_view s) : s_(s) {}

  MolGraph run() {
    if (s_.empty()) throw ParseError(0, "empty SMILES");
    int prev = -1;
    std::optional<BondOrder> pending;
    std::size_t pending_pos = 0;
    std::vector<int> branch_stack;
    std::vector<std::size_t> branch_pos;
    bool expect_atom_after_dot = false;

    while (i_ < s_.size()) {
      const char c = s_[i_];
      const std::size_t here = i_;
      if (c == '(') {
        if (prev < 0) throw ParseError(here, "branch opened before any atom");
        branch_stack.push_back(prev);
        branch_pos.push_back(here);
        ++i_;
      } else if (c == ')') {
        if (branch_stack.empty()) throw ParseError(here, "unbalanced parenthesis ')'");
        if (pending) throw ParseError(here, "bond symbol without a following atom");
        prev = branch_stack.back();
        branch_stack.pop_back();
        branch_pos.pop_back();
        ++i_;
      } else if (c == '-' || c == '=' || c == '#' || c == ':') {
        if (prev < 0) throw ParseError(here, "bond symbol before any atom");
        if (pending) throw ParseError(here, "two consecutive bond symbols");
        pending = c == '-' ? BondOrder::Single
                  : c == '=' ? BondOrder::Double
                  : c == '#' ? BondOrder::Triple
                             : BondOrder::Aromatic;
        pending_pos = here;
        ++i_;
      } else if (c == '/' || c == '\\') {
        throw ParseError(here, "stereo bond markers are not supported");
      } else if (c == '.') {
        if (prev < 0 || pending) throw ParseError(here, "misplaced '.'");
        if (!branch_stack.empty()) throw ParseError(here, "'.' inside a branch");
        prev = -1;
        expect_atom_after_dot = true;
        ++i_;
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '%') {
        if (prev < 0) throw ParseError(here, "ring closure before any atom");
        int digit = 0;
        if (c == '%') {
          if (i_ + 2 >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[i_ + 1])) ||
              !std::isdigit(static_cast<unsigned char>(s_[i_ + 2])))
            throw ParseError(here, "'%' must be followed by two digits");
          digit = (s_[i_ + 1] - '0') * 10 + (s_[i_ + 2] - '0');
          i_ += 3;
        } else {
          digit = c - '0';
          ++i_;
        }
        ring_closure(prev, digit, pending, here);
        pending.reset();
      } else {
        const int atom = parse_atom();
        expect_atom_after_dot = false;
        if (prev >= 0) {
          add_bond(prev, atom, pending, pending ? pending_pos : here);
        } else if (pending) {
          throw ParseError(pending_pos, "bond symbol without a preceding atom");
        }
        pending.reset();
        prev = atom;
      }
    }
    if (pending) throw ParseError(pending_pos, "dangling bond symbol at end of input");
    if (!branch_stack.empty()) throw ParseError(branch_pos.back(), "unbalanced parenthesis '('");
    if (expect_atom_after_dot) throw ParseError(s_.size(), "'.' not followed by an atom");
    if (!rings_.empty()) {
      const auto &[digit, open] = *rings_.begin();
      throw ParseError(open.pos, "unclosed ring closure " + std::to_string(digit));
    }
    for (int a = 0; a < builder_.num_atoms(); ++a) {
      const MolGraph &g = builder_.peek();
      if (g.valence_sum(a) + hcount_[a] > max_valence(g.atom(a)))
        throw ParseError(atom_pos_[a], "valence violation on atom " + std::to_string(a) + " (" +
                                           std::string(element_symbol(g.atom(a).element)) + ")");
    }
    return std::move(builder_).build(false);
  }

private:
  void add_bond(int a, int b, std::optional<BondOrder> order, std::size_t pos) {
    const MolGraph &g = builder_.peek();
    BondOrder o = order.value_or(g.atom(a).aromatic && g.atom(b).aromatic ? BondOrder::Aromatic
                                                                           : BondOrder::Single);
    if (a == b) throw ParseError(pos, "ring closure bonds an atom to itself");
    if (g.bond_between(a, b) >= 0) throw ParseError(pos, "duplicate bond");
    builder_.add_bond(a, b, o);
  }

  void ring_closure(int atom, int digit, std::optional<BondOrder> order, std::size_t pos) {
    auto it = rings_.find(digit);
    if (it == rings_.end()) {
      rings_.emplace(digit, RingOpen{atom, order, pos});
      return;
    }
    RingOpen open = it->second;
    rings_.erase(it);
    if (open.order && order && *open.order != *order)
      throw ParseError(pos, "conflicting bond symbols on ring closure " + std::to_string(digit));
    add_bond(open.atom, atom, order ? order : open.order, pos);
  }

  int parse_atom() {
    const std::size_t start = i_;
    const char c = s_[i_];
    Atom atom;
    int hcount = 0;
    if (c == '[') {
      ++i_;
      if (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_])))
        throw ParseError(i_, "isotopes are not supported");
      if (i_ >= s_.size()) throw ParseError(start, "unterminated bracket atom");
      std::string sym;
      if (std::islower(static_cast<unsigned char>(s_[i_]))) {
        sym = std::string(1, static_cast<char>(std::toupper(s_[i_])));
        atom.aromatic = true;
        ++i_;
      } else if (std::isupper(static_cast<unsigned char>(s_[i_]))) {
        sym = std::string(1, s_[i_]);
        ++i_;
        if (i_ < s_.size() && std::islower(static_cast<unsigned char>(s_[i_]))) {
          Element probe;
          if (element_from_symbol(sym + s_[i_], probe)) {
            sym += s_[i_];
            ++i_;
          }
        }
      } else {
        throw ParseError(i_, "expected element symbol in bracket atom");
      }
      if (!element_from_symbol(sym, atom.element) ||
          (atom.aromatic && !aromatic_capable(atom.element)))
        throw ParseError(start + 1, "unknown element '" + sym + "'");
      while (i_ < s_.size() && s_[i_] != ']') {
        const char d = s_[i_];
        if (d == '@') throw ParseError(i_, "chirality markers are not supported");
        if (d == 'H') {
          ++i_;
          hcount = 1;
          if (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) {
            hcount = s_[i_] - '0';
            ++i_;
          }
        } else if (d == '+' || d == '-') {
          const int sign = d == '+' ? 1 : -1;
          ++i_;
          int mag = 1;
          if (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) {
            mag = s_[i_] - '0';
            ++i_;
          } else {
            while (i_ < s_.size() && s_[i_] == d) {
              ++mag;
              ++i_;
            }
          }
          atom.charge = sign * mag;
        } else if (d == ':') {
          throw ParseError(i_, "atom classes are not supported");
        } else {
          throw ParseError(i_, std::string("unexpected character '") + d + "' in bracket atom");
        }
      }
      if (i_ >= s_.size()) throw ParseError(start, "unterminated bracket atom");
      ++i_;  // ']'
    } else if (c == 'C' && i_ + 1 < s_.size() && s_[i_ + 1] == 'l') {
      atom.element = Element::Cl;
      i_ += 2;
    } else if (c == 'B' && i_ + 1 < s_.size() && s_[i_ + 1] == 'r') {
      atom.element = Element::Br;
      i_ += 2;
    } else if (c == 'C' || c == 'N' || c == 'O' || c == 'S' || c == 'P' || c == 'F' || c == 'I') {
      element_from_symbol(std::string_view(&s_[i_], 1), atom.element);
      ++i_;
    } else if (c == 'c' || c == 'n' || c == 'o' || c == 's' || c == 'p') {
      const char up = static_cast<char>(std::toupper(c));
      element_from_symbol(std::string_view(&up, 1), atom.element);
      atom.aromatic = true;
      ++i_;
    } else if (c == '@') {
      throw ParseError(i_, "chirality markers are not supported");
    } else if (std::isalpha(static_cast<unsigned char>(c))) {
      throw ParseError(i_, std::string("unknown element '") + c + "'");
    } else {
      throw ParseError(i_, std::string("unexpected character '") + c + "'");
    }
    atom_pos_.push_back(start);
    hcount_.push_back(hcount);
    return builder_.add_atom(atom);
  }

  static bool aromatic_capable(Element e) {
    return e == Element::C || e == Element::N || e == Element::O || e == Element::S ||
           e == Element::P;
  }

  std::string_view s_;
  std::size_t i_ = 0;
  MolGraphBuilder builder_;
  std::map<int, RingOpen> rings_;
  std::vector<std::size_t> atom_pos_;
  std::vector<int> hcount_;
};

std::string atom_text(const Atom &a) {
  std::string sym(element_symbol(a.element));
  if (a.aromatic) sym[0] = static_cast<char>(std::tolower(sym[0]));
  if (a.charge == 0) return sym;
  std::string out = "[" + sym;
  out += a.charge > 0 ? '+' : '-';
  if (std::abs(a.charge) > 1) out += std::to_string(std::abs(a.charge));
  out += ']';
  return out;
}

std::string bond_text(const MolGraph &g, const Bond &b) {
  const bool both_aromatic = g.atom(b.begin).aromatic && g.atom(b.end).aromatic;
  switch (b.order) {
  case BondOrder::Single: return both_aromatic ? "-" : "";
  case BondOrder::Aromatic: return both_aromatic ? "" : ":";
  case BondOrder::Double: return "=";
  case BondOrder::Triple: return "#";
  }
  return "";
}

std::string ring_digit(int d) { return d < 10 ? std::string(1, char('0' + d)) : "%" + std::to_string(d); }

class Writer {
public:
  Writer(const MolGraph &g, std::span<const int> prio)
      : g_(g), prio_(prio), visited_(g.num_atoms(), 0), bond_used_(g.num_bonds(), 0),
        children_(g.num_atoms()), opens_(g.num_atoms()), closes_(g.num_atoms()),
        digit_of_(g.num_bonds(), -1) {}

  std::string run(std::vector<int> *emit) {
    std::vector<int> starts(g_.num_atoms());
    std::iota(starts.begin(), starts.end(), 0);
    std::sort(starts.begin(), starts.end(), [&](int a, int b) { return prio_[a] < prio_[b]; });
    std::string out;
    for (int s : starts) {
      if (visited_[s]) continue;
      build(s, -1);
      if (!out.empty()) out += '.';
      write(s, out, emit);
    }
    return out;
  }

private:
  void build(int u, int parent_bond) {
    visited_[u] = 1;
    std::vector<MolGraph::Neighbor> nbs(g_.neighbors(u).begin(), g_.neighbors(u).end());
    std::sort(nbs.begin(), nbs.end(),
              [&](const auto &a, const auto &b) { return prio_[a.atom] < prio_[b.atom]; });
    for (const auto &nb : nbs) {
      if (nb.bond == parent_bond || bond_used_[nb.bond]) continue;
      bond_used_[nb.bond] = 1;
      if (visited_[nb.atom]) {
        opens_[nb.atom].push_back(nb.bond);
        closes_[u].push_back(nb.bond);
      } else {
        children_[u].push_back(nb);
        build(nb.atom, nb.bond);
      }
    }
  }

  void write(int u, std::string &out, std::vector<int> *emit) {
    if (emit != nullptr) emit->push_back(u);
    out += atom_text(g_.atom(u));
    for (int b : closes_[u]) {
      out += ring_digit(digit_of_[b]);
      free_digits_.push_back(digit_of_[b]);
      std::sort(free_digits_.begin(), free_digits_.end());
    }
    for (int b : opens_[u]) {
      int d;
      if (!free_digits_.empty()) {
        d = free_digits_.front();
        free_digits_.erase(free_digits_.begin());
      } else {
        d = next_digit_++;
      }
      digit_of_[b] = d;
      out += bond_text(g_, g_.bond(b)) + ring_digit(d);
    }
    const auto &kids = children_[u];
    for (std::size_t i = 0; i < kids.size(); ++i) {
      const bool last = i + 1 == kids.size();
      if (!last) out += '(';
      out += bond_text(g_, g_.bond(kids[i].bond));
      write(kids[i].atom, out, emit);
      if (!last) out += ')';
    }
  }

  const MolGraph &g_;
  std::span<const int> prio_;
  std::vector<char> visited_;
  std::vector<char> bond_used_;
  std::vector<std::vector<MolGraph::Neighbor>> children_;
  std::vector<std::vector<int>> opens_;
  std::vector<std::vector<int>> closes_;
  std::vector<int> digit_of_;
  std::vector<int> free_digits_;
  int next_digit_ = 1;
};

}  // namespace

MolGraph parse_smiles(std::string_view text) { return Parser(text).run(); }

std::string write_smiles_prioritized(const MolGraph &g, std::span<const int> priority,
                                     std::vector<int> *emit_order) {
  if (static_cast<int>(priority.size()) != g.num_atoms())
    throw GraphError("write_smiles: priority length mismatch");
  return Writer(g, priority).run(emit_order);
}

std::string write_smiles(const MolGraph &g) { return canonical_key(g); }

std::string write_smiles_random(const MolGraph &g, std::uint64_t seed) {
  std::vector<int> prio(g.num_atoms());
  std::iota(prio.begin(), prio.end(), 0);
  Rng rng(seed);
  rng.shuffle(prio.begin(), prio.end());
  return write_smiles_prioritized(g, prio);
}

nlohmann::json graph_to_json(const MolGraph &g) {
  nlohmann::json atoms = nlohmann::json::array();
  for (int i = 0; i < g.num_atoms(); ++i) {
    const Atom &a = g.atom(i);
    atoms.push_back({{"index", i},
                     {"element", std::string(element_symbol(a.element))},
                     {"charge", a.charge},
                     {"aromatic", a.aromatic}});
  }
  nlohmann::json bonds = nlohmann::json::array();
  for (int i = 0; i < g.num_bonds(); ++i) {
    const Bond &b = g.bond(i);
    bonds.push_back({{"index", i}, {"begin", b.begin}, {"end", b.end}, {"order", static_cast<int>(b.order)}});
  }
  return {{"atoms", atoms}, {"bonds", bonds}};
}

}  // namespace molrat
