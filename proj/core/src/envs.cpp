#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lapp/envs/gait_walker.hpp"
#include "lapp/envs/point_mass.hpp"

namespace lapp::envs {

using num::DenseArray;

void EnvConfig::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("EnvConfig: dt must be > 0");
  if (episode_len == 0)
    throw std::invalid_argument("EnvConfig: episode_len must be >= 1");
  if (drag < 0.0) throw std::invalid_argument("EnvConfig: drag must be >= 0");
  if (!(action_scale > 0.0))
    throw std::invalid_argument("EnvConfig: action_scale must be > 0");
  if (!(command_min <= command_max) || command_min < 0.0)
    throw std::invalid_argument("EnvConfig: bad command range");
}

namespace {

double clamp(double x, double lo, double hi) {
  return std::min(std::max(x, lo), hi);
}

double frac(double x) { return x - std::floor(x); }

void check_action(const DenseArray& a, std::size_t dim, const char* env) {
  if (a.rank() != 1 || a.size() != dim)
    throw std::invalid_argument(std::string(env) + ": action must have shape (" +
                                std::to_string(dim) + ",), got " + a.shape_str());
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a[i]))
      throw std::invalid_argument(std::string(env) + ": non-finite action");
}

}  // namespace

GaitWalkerEnv::GaitWalkerEnv(EnvConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  sample_episode();
}

const std::map<std::string, std::size_t>& GaitWalkerEnv::channel_schema() const {
  static const std::map<std::string, std::size_t> schema{
      {"base_lin_vel", 2}, {"base_pose", 4}, {"commands", 1},
      {"feet_contacts", 4}};
  return schema;
}

void GaitWalkerEnv::sample_episode() {
  command_ = rng_.uniform(cfg_.command_min, cfg_.command_max);
  for (auto& p : phases_) p = rng_.unit();
  velocity_ = 0.0;
  lateral_ = 0.0;
  sim_time_ = 0.0;
  step_count_ = 0;
}

DenseArray GaitWalkerEnv::reset(std::uint64_t seed) {
  rng_ = num::RandomStream(seed);
  sample_episode();
  return observe();
}

DenseArray GaitWalkerEnv::reset_continue() {
  sample_episode();
  return observe();
}

std::array<double, 4> GaitWalkerEnv::contacts() const {
  std::array<double, 4> b;
  for (std::size_t i = 0; i < 4; ++i)
    b[i] = frac(phases_[i]) < kDutyFactor ? 1.0 : 0.0;
  return b;
}

DenseArray GaitWalkerEnv::observe() const {
  DenseArray o({15});
  o[0] = command_;
  o[1] = velocity_;
  o[2] = lateral_;
  o[3] = height_;
  o[4] = roll_;
  o[5] = pitch_;
  o[6] = yaw_;
  for (std::size_t i = 0; i < 4; ++i) o[7 + i] = frac(phases_[i]);
  const auto b = contacts();
  for (std::size_t i = 0; i < 4; ++i) o[11 + i] = b[i];
  return o;
}

StepResult GaitWalkerEnv::step(const DenseArray& action) {
  check_action(action, 5, "GaitWalkerEnv");
  const double accel = cfg_.action_scale * action[0];
  velocity_ = clamp(velocity_ + accel * cfg_.dt - cfg_.drag * velocity_ * cfg_.dt,
                    0.0, kMaxSpeed);
  for (std::size_t i = 0; i < 4; ++i)
    phases_[i] += clamp(action[1 + i], kRateMin, kRateMax) * cfg_.dt;
  sim_time_ += cfg_.dt;
  ++step_count_;

  double action_sq = 0.0;
  for (std::size_t i = 0; i < action.size(); ++i) action_sq += action[i] * action[i];
  const double err = command_ - velocity_;
  StepResult r;
  r.reward = std::exp(-err * err / 0.25) - 0.01 * action_sq;
  r.done = step_count_ >= cfg_.episode_len;
  r.observation = observe();

  const auto b = contacts();
  r.channels["base_lin_vel"] = DenseArray({2}, {velocity_, lateral_});
  r.channels["base_pose"] = DenseArray({4}, {height_, roll_, pitch_, yaw_});
  r.channels["commands"] = DenseArray({1}, {command_});
  r.channels["feet_contacts"] = DenseArray({4}, {b[0], b[1], b[2], b[3]});
  return r;
}

PointMassEnv::PointMassEnv(EnvConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  sample_episode();
}

const std::map<std::string, std::size_t>& PointMassEnv::channel_schema() const {
  static const std::map<std::string, std::size_t> schema{{"commands", 1},
                                                         {"velocity", 1}};
  return schema;
}

void PointMassEnv::sample_episode() {
  command_ = rng_.uniform(cfg_.command_min, cfg_.command_max);
  velocity_ = rng_.uniform(0.0, 1.0);
  step_count_ = 0;
}

DenseArray PointMassEnv::reset(std::uint64_t seed) {
  rng_ = num::RandomStream(seed);
  sample_episode();
  return observe();
}

DenseArray PointMassEnv::reset_continue() {
  sample_episode();
  return observe();
}

DenseArray PointMassEnv::observe() const {
  return DenseArray({2}, {command_, velocity_});
}

StepResult PointMassEnv::step(const DenseArray& action) {
  check_action(action, 1, "PointMassEnv");
  const double accel = cfg_.action_scale * action[0];
  velocity_ = clamp(velocity_ + accel * cfg_.dt - cfg_.drag * velocity_ * cfg_.dt,
                    0.0, kMaxSpeed);
  ++step_count_;

  const double err = command_ - velocity_;
  StepResult r;
  r.reward = std::exp(-err * err / 0.25);
  r.done = step_count_ >= cfg_.episode_len;
  r.observation = observe();
  r.channels["commands"] = DenseArray({1}, {command_});
  r.channels["velocity"] = DenseArray({1}, {velocity_});
  return r;
}

std::vector<double> GaitWalkerEnv::sim_state() const {
  std::vector<double> s = {command_, velocity_, lateral_, height_,
                           roll_,    pitch_,    yaw_};
  s.insert(s.end(), phases_.begin(), phases_.end());
  s.push_back(sim_time_);
  s.push_back(static_cast<double>(step_count_));
  return s;
}

void GaitWalkerEnv::set_sim_state(std::span<const double> state) {
  if (state.size() != 13)
    throw std::invalid_argument("GaitWalkerEnv: sim state needs 13 values, got " +
                                std::to_string(state.size()));
  command_ = state[0];
  velocity_ = state[1];
  lateral_ = state[2];
  height_ = state[3];
  roll_ = state[4];
  pitch_ = state[5];
  yaw_ = state[6];
  for (std::size_t i = 0; i < 4; ++i) phases_[i] = state[7 + i];
  sim_time_ = state[11];
  step_count_ = static_cast<std::size_t>(state[12]);
}

std::vector<double> PointMassEnv::sim_state() const {
  return {command_, velocity_, static_cast<double>(step_count_)};
}

void PointMassEnv::set_sim_state(std::span<const double> state) {
  if (state.size() != 3)
    throw std::invalid_argument("PointMassEnv: sim state needs 3 values, got " +
                                std::to_string(state.size()));
  command_ = state[0];
  velocity_ = state[1];
  step_count_ = static_cast<std::size_t>(state[2]);
}

}  // namespace lapp::envs
