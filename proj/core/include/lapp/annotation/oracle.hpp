#pragma once

#include "lapp/annotation/annotator.hpp"

namespace lapp::annot {

// Deterministic scripted labeler standing in for the LLM: scores each
// segment as the weighted sum of named features and prefers the higher
// score; gaps within tie_tolerance label 2. Never emits 3. Criteria can
// switch over training stages via set_stage(epoch).
class OracleAnnotator : public Annotator {
 public:
  OracleAnnotator(std::vector<OracleStage> schedule, double dt,
                  double tie_tolerance);

  std::vector<RawLabel> annotate(std::span<const SegmentPair> batch) override;
  void set_stage(std::size_t epoch) override;

  double score(const pref::TrajectorySegment& s) const;
  const std::vector<OracleCriterion>& active_criteria() const;

  // Known feature names: tracking_error, sync_error, cadence, mean_velocity,
  // action_cost. Unknown names are rejected at construction.
  static const std::vector<std::string>& feature_names();
  static double feature(const std::string& name,
                        const pref::TrajectorySegment& s, double dt);

 private:
  std::vector<OracleStage> schedule_;
  double dt_;
  double tie_tolerance_;
  std::size_t stage_ = 0;
};

}  // namespace lapp::annot
