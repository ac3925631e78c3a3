#include "lapp/annotation/labels.hpp"

#include <array>
#include <cctype>

namespace lapp::annot {

namespace {

// Parses "[int, int, ...]" starting at reply[open] == '['. Returns the
// values, or nothing if the bracketed text is not a plain integer list.
std::optional<std::vector<long>> try_integer_list(const std::string& s,
                                                  std::size_t open) {
  std::vector<long> vals;
  std::size_t i = open + 1;
  const auto skip_ws = [&] {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  };
  while (true) {
    skip_ws();
    if (i >= s.size()) return std::nullopt;
    if (s[i] == ']') {
      if (vals.empty()) return vals;  // "[]" is a list of zero labels
      return std::nullopt;            // trailing comma
    }
    bool neg = false;
    if (s[i] == '-') {
      neg = true;
      ++i;
    }
    if (i >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i])))
      return std::nullopt;
    long v = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
      v = v * 10 + (s[i] - '0');
      if (v > 1000000) return std::nullopt;
      ++i;
    }
    vals.push_back(neg ? -v : v);
    skip_ws();
    if (i >= s.size()) return std::nullopt;
    if (s[i] == ']') return vals;
    if (s[i] != ',') return std::nullopt;  // decimals, words, nesting
    ++i;
  }
}

}  // namespace

std::vector<RawLabel> parse_label_list(const std::string& reply,
                                       std::size_t expected_count) {
  for (std::size_t i = 0; i < reply.size(); ++i) {
    if (reply[i] != '[') continue;
    auto vals = try_integer_list(reply, i);
    if (!vals) continue;
    if (vals->size() != expected_count)
      throw parse_error("label list has " + std::to_string(vals->size()) +
                        " entries, expected " + std::to_string(expected_count));
    std::vector<RawLabel> out;
    out.reserve(vals->size());
    for (long v : *vals) {
      if (v < 0 || v > 3)
        throw parse_error("label " + std::to_string(v) + " outside 0..3");
      out.push_back(static_cast<RawLabel>(v));
    }
    return out;
  }
  throw parse_error("no bracketed integer list in reply");
}

RawLabel aggregate_mode(std::span<const RawLabel> samples) {
  if (samples.empty())
    throw std::invalid_argument("aggregate_mode: no samples");
  std::array<std::size_t, 4> counts{};
  for (RawLabel v : samples) {
    if (v < 0 || v > 3)
      throw std::invalid_argument("aggregate_mode: label outside 0..3");
    ++counts[static_cast<std::size_t>(v)];
  }
  std::size_t best = 0;
  for (std::size_t v = 1; v < 4; ++v)
    if (counts[v] > counts[best]) best = v;
  for (std::size_t v = 0; v < 4; ++v)
    if (v != best && counts[v] == counts[best]) return 2;
  return static_cast<RawLabel>(best);
}

std::optional<double> map_label(RawLabel raw) {
  switch (raw) {
    case 0:
      return 0.0;
    case 1:
      return 1.0;
    case 2:
      return 0.5;
    case 3:
      return std::nullopt;
    default:
      throw std::invalid_argument("map_label: label outside 0..3");
  }
}

}  // namespace lapp::annot
