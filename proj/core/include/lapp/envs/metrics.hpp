#pragma once

#include "lapp/preference/segment.hpp"

namespace lapp::envs {

// Mean over steps of |FL-FR| + |RL-RR| from the "feet_contacts" channel
// (columns FL, FR, RL, RR). 0 = perfectly paired, 2 = fully anti-paired.
double sync_error(const pref::TrajectorySegment& s);

// Contact onsets (0 -> 1 transitions) summed over all four feet, divided by
// 4 * H * dt: steps per second per foot. Needs at least 2 steps.
double cadence(const pref::TrajectorySegment& s, double dt);

// Mean |command - forward velocity|. Velocity comes from "base_lin_vel"
// column 0 when present, else the "velocity" channel.
double tracking_error(const pref::TrajectorySegment& s);

// Mean forward velocity, same channel lookup as tracking_error.
double mean_velocity(const pref::TrajectorySegment& s);

// Mean squared action norm; errors when the segment carries no actions.
double action_cost(const pref::TrajectorySegment& s);

}  // namespace lapp::envs
