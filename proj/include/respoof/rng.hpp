#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace respoof {

/// Seeded random stream with bitwise-reproducible output on every platform.
///
/// The standard library distributions are implementation-defined, which breaks
/// byte-identical reruns across toolchains, so the generator (xoshiro256**)
/// and all draw routines are spelled out here.
///
/// Stream splitting: a child stream is derived as
///   child_seed = splitmix64(parent_seed ^ fnv1a64(label))
/// where `label` is either a string tag ("corpus", "attack/set1/...") or a
/// decimal index. Substreams derived under distinct labels never share draws,
/// which keeps attack-time and evaluation-time randomness disjoint.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  Rng substream(std::string_view label) const;
  Rng substream(std::uint64_t index) const;

  std::uint64_t next_u64();

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi]; returns lo when the range is collapsed.
  double uniform(double lo, double hi);
  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi);
  /// Standard normal via the polar method.
  double normal();
  double normal(double mean, double stddev);

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(0, i);
      std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
    }
  }

  /// Uniformly random permutation of {0, ..., n-1}.
  std::vector<int> permutation(int n);

 private:
  std::uint64_t seed_ = 0;
  std::array<std::uint64_t, 4> state_{};
  bool have_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

}  // namespace respoof
