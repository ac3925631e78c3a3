#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace lapp::num {

// Deterministic RNG wrapper. All draws go through hand-specified conversions
// (never std::*_distribution, whose algorithms are implementation-defined and
// carry hidden cache state that would break exact crash-resume).
class RandomStream {
 public:
  RandomStream() : RandomStream(0) {}
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // Unbiased integer in [0, n) via rejection sampling.
  std::uint64_t below(std::uint64_t n);

  // Box-Muller without the cached second value, so the stream state is the
  // engine state alone.
  double gaussian();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n);

  // Engine state as text; round-trips exactly.
  std::string save_state() const;
  void load_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

// Stable stream-seed derivation: fixed mixing of a root seed with a stream
// name, so independent subsystems never share an RNG sequence.
std::uint64_t derive_seed(std::uint64_t root, const std::string& stream_name);
std::uint64_t derive_seed(std::uint64_t root, const std::string& stream_name,
                          std::uint64_t index);

// FNV-1a 64-bit over raw bytes; used for stream derivation and stable
// content hashes in interchange files.
std::uint64_t fnv1a64(const void* bytes, std::size_t len);
std::uint64_t fnv1a64(const std::string& s);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace lapp::num
