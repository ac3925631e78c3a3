#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lapp::annot {

// Raw annotator verdict on an ordered pair: 0 = first preferred, 1 = second
// preferred, 2 = equally preferable, 3 = incomparable.
using RawLabel = int;

// A reply that cannot be turned into labels; callers retry and eventually
// degrade the sample.
class parse_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Extracts the first bracketed integer list from free-form reply text and
// validates length and 0..3 range. Bracketed non-integer content (nested
// lists, decimals) is skipped while scanning.
std::vector<RawLabel> parse_label_list(const std::string& reply,
                                       std::size_t expected_count);

// Most frequent label; a tie between distinct labels collapses to 2 rather
// than inventing a confident answer. Order-invariant.
RawLabel aggregate_mode(std::span<const RawLabel> samples);

// 0 -> 0.0, 1 -> 1.0, 2 -> 0.5, 3 -> nullopt (pair discarded).
std::optional<double> map_label(RawLabel raw);

}  // namespace lapp::annot
