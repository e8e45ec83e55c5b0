// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace vtalign {

/// splitmix64 finalizer; the building block for all derived seeds.
std::uint64_t mix64(std::uint64_t x);

/// Combines a base seed with further keys. Order matters.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key1, std::uint64_t key2);

/// 64-bit FNV-1a of a string, for keying seeds by identifiers.
std::uint64_t hash_string(std::string_view s);

/// Seeded generator whose output is identical on every platform.
///
/// The engine is std::mt19937_64, whose sequence the standard fixes. The
/// standard distributions are implementation-defined, so bounded integers,
/// uniform reals and normals are derived here from raw engine words:
///   - uniform_index: rejection sampling on the top bits (no modulo bias);
///   - uniform01: 53 high bits scaled by 2^-53;
///   - normal: Box-Muller, no cached second value.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Uniform real in [0, 1).
  double uniform01();

  /// Uniform real in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal(double mean = 0.0, double stddev = 1.0);

 private:
  std::mt19937_64 engine_;
};

/// Partial Fisher-Yates: the first `k` entries of a seeded shuffle of
/// `items`. When k >= items.size() the whole (shuffled) list is returned.
template <class T>
std::vector<T> sample_without_replacement(std::vector<T> items, std::size_t k, Rng& rng) {
  const std::size_t n = items.size();
  const std::size_t take = k < n ? k : n;
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
    std::swap(items[i], items[j]);
  }
  items.resize(take);
  return items;
}

/// Full seeded Fisher-Yates shuffle in place.
template <class T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace vtalign
