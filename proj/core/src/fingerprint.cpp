//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#include "molrat/fingerprint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <string>

#include "molrat/rng.hpp"

namespace molrat {

BitFingerprint::BitFingerprint(int width, int radius) : width_(width), radius_(radius) {
  if (width < 64 || !std::has_single_bit(static_cast<unsigned>(width)))
    throw Error("fingerprint width must be a power of two >= 64, got " + std::to_string(width));
  if (radius < 0 || radius > kMaxFingerprintRadius)
    throw Error("fingerprint radius must be in [0, 4], got " + std::to_string(radius));
  words_.assign(width / 64, 0);
}

int BitFingerprint::popcount() const {
  int c = 0;
  for (auto w : words_) c += std::popcount(w);
  return c;
}

std::vector<int> BitFingerprint::on_bits() const {
  std::vector<int> out;
  for (int i = 0; i < width_; ++i)
    if (test(i)) out.push_back(i);
  return out;
}

std::string BitFingerprint::to_hex() const {
  std::string out = "w" + std::to_string(width_) + "r" + std::to_string(radius_) + ":";
  char buf[17];
  for (auto it = words_.rbegin(); it != words_.rend(); ++it) {
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(*it));
    out += buf;
  }
  return out;
}

BitFingerprint BitFingerprint::from_hex(const std::string &text) {
  int width = 0, radius = 0, consumed = 0;
  if (std::sscanf(text.c_str(), "w%dr%d:%n", &width, &radius, &consumed) != 2 || consumed == 0)
    throw ArtifactError("fingerprint hex header missing");
  BitFingerprint fp(width, radius);
  const std::string body = text.substr(consumed);
  if (body.size() != fp.words_.size() * 16)
    throw ArtifactError("fingerprint hex body has wrong length");
  for (std::size_t i = 0; i < fp.words_.size(); ++i) {
    const std::string chunk = body.substr(i * 16, 16);
    if (chunk.find_first_not_of("0123456789abcdef") != std::string::npos)
      throw ArtifactError("fingerprint hex body has a non-hex digit");
    fp.words_[fp.words_.size() - 1 - i] = std::stoull(chunk, nullptr, 16);
  }
  return fp;
}

std::uint64_t stable_hash(std::span<const std::uint64_t> words) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto w : words) h = Rng::mix(h ^ w);
  return h;
}

BitFingerprint morgan_fingerprint(const MolGraph &g, int radius, int width) {
  BitFingerprint fp(width, radius);
  const int n = g.num_atoms();
  const auto mask = static_cast<std::uint64_t>(width - 1);
  std::vector<std::uint64_t> ids(n), next(n);
  for (int a = 0; a < n; ++a) {
    const Atom &atom = g.atom(a);
    const std::uint64_t inv[] = {static_cast<std::uint64_t>(atomic_number(atom.element)),
                                 static_cast<std::uint64_t>(g.degree(a)),
                                 static_cast<std::uint64_t>(atom.charge + 8),
                                 atom.aromatic ? 1ULL : 0ULL};
    ids[a] = stable_hash(inv);
    fp.set(static_cast<int>(ids[a] & mask));
  }
  std::vector<std::pair<std::uint64_t, std::uint64_t>> env;
  std::vector<std::uint64_t> words;
  for (int r = 1; r <= radius; ++r) {
    for (int a = 0; a < n; ++a) {
      env.clear();
      for (const auto &nb : g.neighbors(a))
        env.emplace_back(static_cast<std::uint64_t>(g.bond(nb.bond).order), ids[nb.atom]);
      std::sort(env.begin(), env.end());
      words.assign({static_cast<std::uint64_t>(r), ids[a]});
      for (const auto &[code, id] : env) {
        words.push_back(code);
        words.push_back(id);
      }
      next[a] = stable_hash(words);
      fp.set(static_cast<int>(next[a] & mask));
    }
    ids.swap(next);
  }
  return fp;
}

double tanimoto(const BitFingerprint &a, const BitFingerprint &b) {
  if (a.width() != b.width())
    throw Error("tanimoto: width mismatch (" + std::to_string(a.width()) + " vs " +
                     std::to_string(b.width()) + ")");
  int both = 0, any = 0;
  const auto wa = a.words(), wb = b.words();
  for (std::size_t i = 0; i < wa.size(); ++i) {
    both += std::popcount(wa[i] & wb[i]);
    any += std::popcount(wa[i] | wb[i]);
  }
  return any == 0 ? 1.0 : static_cast<double>(both) / any;
}

}  // namespace molrat
