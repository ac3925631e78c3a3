#include "lapp/numerics/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace lapp::num {

std::uint64_t RandomStream::below(std::uint64_t n) {
  if (n == 0) return 0;
  // Reject into the largest multiple of n to avoid modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double RandomStream::gaussian() {
  // unit() can return exactly 0; log needs (0, 1].
  double u1 = 1.0 - unit();
  double u2 = unit();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::size_t> RandomStream::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  shuffle(p);
  return p;
}

std::string RandomStream::save_state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void RandomStream::load_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  if (is.fail()) throw std::invalid_argument("RandomStream: bad serialized state");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(const void* bytes, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::uint64_t derive_seed(std::uint64_t root, const std::string& stream_name) {
  return splitmix64(root ^ fnv1a64(stream_name));
}

std::uint64_t derive_seed(std::uint64_t root, const std::string& stream_name,
                          std::uint64_t index) {
  return splitmix64(derive_seed(root, stream_name) + splitmix64(index));
}

}  // namespace lapp::num
