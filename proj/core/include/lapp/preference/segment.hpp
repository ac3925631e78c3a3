#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lapp/numerics/dense_array.hpp"

namespace lapp::pref {

// Fixed-length slice of a trajectory: the unit shown to annotators and
// scored by reward predictors. Channels are (H, dim) matrices keyed by name;
// the map keeps names sorted, which fixes the feature layout and the
// serialized form.
struct TrajectorySegment {
  std::map<std::string, num::DenseArray> channels;
  num::DenseArray actions;  // (H, A); empty when actions are not recorded
  std::int64_t episode = 0;
  std::int64_t start = 0;

  std::size_t length() const;
  std::size_t action_dim() const { return actions.empty() ? 0 : actions.cols(); }
  std::size_t feature_dim(bool include_actions) const;

  // Concatenated channel values (name order), then actions, at step t.
  void write_features(std::size_t t, bool include_actions, double* out) const;

  // Throws std::invalid_argument naming the offending channel: ragged
  // lengths, non-finite values, or non-binary contact channels.
  void validate() const;
};

// One labeled comparison. y: 0 = a preferred, 1 = b preferred, 0.5 = equal.
struct PreferenceTriple {
  TrajectorySegment a, b;
  double y = 0.5;

  void validate() const;  // segment checks plus y in {0, 0.5, 1}
};

// Canonical compact JSON, keys sorted; round-trips bit-exactly.
std::string segment_to_json(const TrajectorySegment& s);
TrajectorySegment segment_from_json(const std::string& text);

std::string triple_to_json(const PreferenceTriple& t);
PreferenceTriple triple_from_json(const std::string& text);

// Stable hash of the pair (a then b) over their canonical JSON bytes.
// Identifies a pair in label files independently of labeling order.
std::uint64_t pair_hash(const TrajectorySegment& a, const TrajectorySegment& b);

}  // namespace lapp::pref
