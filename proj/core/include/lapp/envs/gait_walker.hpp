#pragma once

#include <array>

#include "lapp/envs/env.hpp"

namespace lapp::envs {

// Four-legged velocity tracker with phase-oscillator feet instead of
// physics. Action: [forward acceleration, 4 phase rates]; rates are clamped
// to [0.5, 5] Hz, acceleration is scaled by action_scale. A foot is in
// contact while its phase fraction sits below the duty factor.
//
// Reward: exp(-(c - v)^2 / 0.25) - 0.01 * |action|^2 on the raw action.
class GaitWalkerEnv : public Env {
 public:
  static constexpr double kDutyFactor = 0.6;
  static constexpr double kRateMin = 0.5;   // Hz
  static constexpr double kRateMax = 5.0;   // Hz
  static constexpr double kMaxSpeed = 3.0;  // m/s

  explicit GaitWalkerEnv(EnvConfig cfg);

  std::size_t obs_dim() const override { return 15; }
  std::size_t action_dim() const override { return 5; }
  const std::map<std::string, std::size_t>& channel_schema() const override;

  num::DenseArray reset(std::uint64_t seed) override;
  num::DenseArray reset_continue() override;
  StepResult step(const num::DenseArray& action) override;

  const EnvConfig& config() const { return cfg_; }
  double command() const { return command_; }
  double velocity() const { return velocity_; }
  std::array<double, 4> phases() const { return phases_; }
  std::array<double, 4> contacts() const;

  std::vector<double> sim_state() const override;
  void set_sim_state(std::span<const double> state) override;
  std::string rng_state() const override { return rng_.save_state(); }
  void set_rng_state(const std::string& state) override {
    rng_.load_state(state);
  }

 private:
  num::DenseArray observe() const;
  void sample_episode();

  EnvConfig cfg_;
  num::RandomStream rng_;
  double command_ = 0.0;
  double velocity_ = 0.0;
  double lateral_ = 0.0;
  double height_ = 0.3;
  double roll_ = 0.0, pitch_ = 0.0, yaw_ = 0.0;
  std::array<double, 4> phases_{};  // FL, FR, RL, RR in cycles
  double sim_time_ = 0.0;
  std::size_t step_count_ = 0;
};

}  // namespace lapp::envs
