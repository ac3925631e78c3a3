#pragma once

#include <span>
#include <string>
#include <vector>

#include "lapp/annotation/labels.hpp"
#include "lapp/preference/segment.hpp"

namespace lapp::annot {

struct SegmentPair {
  pref::TrajectorySegment a, b;
};

enum class AnnotatorBackend { oracle, replay, llm };

struct LlmSettings {
  std::string base_url = "http://127.0.0.1:8080/annotate";
  std::string model;  // optional; sent on the wire only when non-empty
  double temperature = 1.0;
  std::size_t max_retries = 2;  // extra attempts after the first
  double timeout_s = 30.0;

  bool operator==(const LlmSettings&) const = default;
};

// One scored feature of a segment; the oracle sums weight * feature(s).
struct OracleCriterion {
  std::string feature;
  double weight = 1.0;

  bool operator==(const OracleCriterion&) const = default;
};

// Criteria active from a given epoch onward, until the next stage starts.
struct OracleStage {
  std::size_t from_epoch = 0;
  std::vector<OracleCriterion> criteria;

  bool operator==(const OracleStage&) const = default;
};

struct AnnotatorConfig {
  AnnotatorBackend backend = AnnotatorBackend::oracle;
  std::size_t samples_per_pair = 15;  // per-batch samples aggregated by mode
  std::size_t batch_size = 5;         // pairs per prompt
  std::vector<OracleStage> schedule;  // oracle backend criteria
  double tie_tolerance = 1e-9;        // |score gap| below this labels 2
  double dt = 0.05;                   // time base for rate features (cadence)
  LlmSettings llm;

  void validate() const;
  bool operator==(const AnnotatorConfig&) const = default;
};

class Annotator {
 public:
  virtual ~Annotator() = default;

  // One raw label per pair, in order. Batches can be any non-zero size;
  // chunking to the prompt size is the caller's concern.
  virtual std::vector<RawLabel> annotate(std::span<const SegmentPair> batch) = 0;

  // Oracles may switch criteria over training stages; other backends ignore
  // the stage.
  virtual void set_stage(std::size_t /*epoch*/) {}
};

struct AnnotationOutcome {
  std::vector<pref::PreferenceTriple> triples;  // labeled pairs, input order
  std::vector<std::size_t> discarded;  // input indices of incomparable pairs
  std::vector<RawLabel> raw;           // one per input pair
};

// Labels all pairs in batch_size chunks, maps raw labels to y, and drops
// incomparables: triples.size() + discarded.size() == pairs.size() always.
AnnotationOutcome annotate_pairs(Annotator& backend,
                                 std::span<const SegmentPair> pairs,
                                 std::size_t batch_size);

}  // namespace lapp::annot
