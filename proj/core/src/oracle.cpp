#include "lapp/annotation/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lapp/envs/metrics.hpp"

namespace lapp::annot {

const std::vector<std::string>& OracleAnnotator::feature_names() {
  static const std::vector<std::string> names{
      "tracking_error", "sync_error", "cadence", "mean_velocity",
      "action_cost"};
  return names;
}

double OracleAnnotator::feature(const std::string& name,
                                const pref::TrajectorySegment& s, double dt) {
  if (name == "tracking_error") return envs::tracking_error(s);
  if (name == "sync_error") return envs::sync_error(s);
  if (name == "cadence") return envs::cadence(s, dt);
  if (name == "mean_velocity") return envs::mean_velocity(s);
  if (name == "action_cost") return envs::action_cost(s);
  throw std::invalid_argument("unknown oracle feature '" + name + "'");
}

OracleAnnotator::OracleAnnotator(std::vector<OracleStage> schedule, double dt,
                                 double tie_tolerance)
    : schedule_(std::move(schedule)), dt_(dt), tie_tolerance_(tie_tolerance) {
  if (schedule_.empty())
    throw std::invalid_argument("OracleAnnotator: empty criteria schedule");
  if (schedule_.front().from_epoch != 0)
    throw std::invalid_argument(
        "OracleAnnotator: first stage must start at epoch 0");
  for (std::size_t i = 1; i < schedule_.size(); ++i)
    if (schedule_[i].from_epoch <= schedule_[i - 1].from_epoch)
      throw std::invalid_argument(
          "OracleAnnotator: stage epochs must be strictly increasing");
  const auto& known = feature_names();
  for (const auto& stage : schedule_) {
    if (stage.criteria.empty())
      throw std::invalid_argument("OracleAnnotator: stage with no criteria");
    for (const auto& c : stage.criteria)
      if (std::find(known.begin(), known.end(), c.feature) == known.end())
        throw std::invalid_argument("unknown oracle feature '" + c.feature +
                                    "'");
  }
  if (!(dt_ > 0.0)) throw std::invalid_argument("OracleAnnotator: dt must be > 0");
  if (tie_tolerance_ < 0.0)
    throw std::invalid_argument("OracleAnnotator: negative tie tolerance");
}

void OracleAnnotator::set_stage(std::size_t epoch) {
  stage_ = 0;
  for (std::size_t i = 0; i < schedule_.size(); ++i)
    if (schedule_[i].from_epoch <= epoch) stage_ = i;
}

const std::vector<OracleCriterion>& OracleAnnotator::active_criteria() const {
  return schedule_[stage_].criteria;
}

double OracleAnnotator::score(const pref::TrajectorySegment& s) const {
  double total = 0.0;
  for (const auto& c : active_criteria()) {
    const double v = feature(c.feature, s, dt_);
    if (std::isnan(v))
      throw std::runtime_error("oracle feature '" + c.feature + "' is NaN");
    total += c.weight * v;
  }
  return total;
}

std::vector<RawLabel> OracleAnnotator::annotate(
    std::span<const SegmentPair> batch) {
  std::vector<RawLabel> out;
  out.reserve(batch.size());
  for (const auto& p : batch) {
    const double gap = score(p.a) - score(p.b);
    if (std::abs(gap) <= tie_tolerance_)
      out.push_back(2);
    else
      out.push_back(gap > 0.0 ? 0 : 1);
  }
  return out;
}

}  // namespace lapp::annot
