#pragma once

#include <cstdint>
#include <map>

#include "lapp/annotation/annotator.hpp"

namespace lapp::annot {

// Looks labels up by pair content hash; the file-backed path replays a
// previous annotation run bit-for-bit. Unknown pairs are an error, since a
// partial replay would silently change the experiment.
class ReplayAnnotator : public Annotator {
 public:
  explicit ReplayAnnotator(std::map<std::uint64_t, RawLabel> table);
  static ReplayAnnotator from_file(const std::string& path);

  std::vector<RawLabel> annotate(std::span<const SegmentPair> batch) override;

  const std::map<std::uint64_t, RawLabel>& table() const { return table_; }

 private:
  std::map<std::uint64_t, RawLabel> table_;
};

// JSONL records {"pair_hash": "16 hex digits", "label": 0..3}.
std::map<std::uint64_t, RawLabel> read_replay_file(const std::string& path);
void write_replay_file(const std::string& path,
                       const std::map<std::uint64_t, RawLabel>& table);
std::string pair_hash_hex(std::uint64_t h);

}  // namespace lapp::annot
