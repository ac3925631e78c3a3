#include "lapp/envs/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace lapp::envs {

using num::DenseArray;
using pref::TrajectorySegment;

namespace {

const DenseArray& channel(const TrajectorySegment& s, const std::string& name) {
  auto it = s.channels.find(name);
  if (it == s.channels.end())
    throw std::invalid_argument("segment missing channel '" + name + "'");
  return it->second;
}

// Forward velocity column: "base_lin_vel"[:,0] or the 1-D "velocity".
const DenseArray& velocity_channel(const TrajectorySegment& s) {
  auto it = s.channels.find("base_lin_vel");
  if (it != s.channels.end()) return it->second;
  it = s.channels.find("velocity");
  if (it != s.channels.end()) return it->second;
  throw std::invalid_argument(
      "segment has neither 'base_lin_vel' nor 'velocity' channel");
}

}  // namespace

double sync_error(const TrajectorySegment& s) {
  const DenseArray& c = channel(s, "feet_contacts");
  if (c.cols() != 4)
    throw std::invalid_argument("feet_contacts must have 4 columns");
  const std::size_t n = c.rows();
  if (n == 0) throw std::invalid_argument("sync_error: empty segment");
  double total = 0.0;
  for (std::size_t t = 0; t < n; ++t)
    total += std::abs(c.at(t, 0) - c.at(t, 1)) + std::abs(c.at(t, 2) - c.at(t, 3));
  return total / static_cast<double>(n);
}

double cadence(const TrajectorySegment& s, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("cadence: dt must be > 0");
  const DenseArray& c = channel(s, "feet_contacts");
  const std::size_t n = c.rows();
  if (n < 2) throw std::invalid_argument("cadence: need at least 2 steps");
  std::size_t onsets = 0;
  for (std::size_t f = 0; f < c.cols(); ++f)
    for (std::size_t t = 0; t + 1 < n; ++t)
      if (c.at(t, f) < 0.5 && c.at(t + 1, f) >= 0.5) ++onsets;
  return static_cast<double>(onsets) /
         (4.0 * static_cast<double>(n) * dt);
}

double tracking_error(const TrajectorySegment& s) {
  const DenseArray& v = velocity_channel(s);
  const DenseArray& cmd = channel(s, "commands");
  const std::size_t n = v.rows();
  if (n == 0 || cmd.rows() != n)
    throw std::invalid_argument("tracking_error: bad channel lengths");
  double total = 0.0;
  for (std::size_t t = 0; t < n; ++t)
    total += std::abs(cmd.at(t, 0) - v.at(t, 0));
  return total / static_cast<double>(n);
}

double mean_velocity(const TrajectorySegment& s) {
  const DenseArray& v = velocity_channel(s);
  const std::size_t n = v.rows();
  if (n == 0) throw std::invalid_argument("mean_velocity: empty segment");
  double total = 0.0;
  for (std::size_t t = 0; t < n; ++t) total += v.at(t, 0);
  return total / static_cast<double>(n);
}

double action_cost(const TrajectorySegment& s) {
  if (s.actions.empty())
    throw std::invalid_argument("action_cost: segment has no actions");
  const std::size_t n = s.actions.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < s.actions.size(); ++i)
    total += s.actions[i] * s.actions[i];
  return total / static_cast<double>(n);
}

}  // namespace lapp::envs
