//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "molrat/mol_graph.hpp"

namespace molrat {

inline constexpr int kDefaultFingerprintRadius = 2;
inline constexpr int kDefaultFingerprintWidth = 2048;
inline constexpr int kMaxFingerprintRadius = 4;

/// Fixed-width bit vector. Width is a power of two (at least 64).
class BitFingerprint {
public:
  BitFingerprint() = default;
  BitFingerprint(int width, int radius);

  int width() const { return width_; }
  int radius() const { return radius_; }

  bool test(int bit) const { return (words_[bit >> 6] >> (bit & 63)) & 1U; }
  void set(int bit) { words_[bit >> 6] |= std::uint64_t{1} << (bit & 63); }
  int popcount() const;
  std::vector<int> on_bits() const;
  std::span<const std::uint64_t> words() const { return words_; }

  /// Lowercase hex, most significant word first, prefixed by "w<width>r<radius>:".
  std::string to_hex() const;
  static BitFingerprint from_hex(const std::string &text);

  friend bool operator==(const BitFingerprint &, const BitFingerprint &) = default;

private:
  int width_ = 0;
  int radius_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Order-sensitive 64-bit fold of a word sequence; every step goes through
/// the splitmix64 finalizer, so the result is the same on every platform.
std::uint64_t stable_hash(std::span<const std::uint64_t> words);

/// Circular fingerprint. Round 0 hashes (atomic number, degree, charge + 8,
/// aromatic) per atom; round r hashes (r, own id, sorted (bond code,
/// neighbour id) pairs) where bond code is 1, 2, 3 or 4 (aromatic). Every
/// id of every round sets bit id mod width.
BitFingerprint morgan_fingerprint(const MolGraph &g, int radius = kDefaultFingerprintRadius,
                                  int width = kDefaultFingerprintWidth);

/// |a & b| / |a | b|, and 1.0 when both are empty.
double tanimoto(const BitFingerprint &a, const BitFingerprint &b);

}  // namespace molrat
