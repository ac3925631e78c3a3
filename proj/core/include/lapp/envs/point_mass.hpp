#pragma once

#include "lapp/envs/env.hpp"

namespace lapp::envs {

// 1-D velocity tracking: action = acceleration, reward = exp(-(c-v)^2/0.25).
// The PPO sanity environment; initial velocity is sampled so drag decay is
// observable from the first step.
class PointMassEnv : public Env {
 public:
  static constexpr double kMaxSpeed = 3.0;

  explicit PointMassEnv(EnvConfig cfg);

  std::size_t obs_dim() const override { return 2; }
  std::size_t action_dim() const override { return 1; }
  const std::map<std::string, std::size_t>& channel_schema() const override;

  num::DenseArray reset(std::uint64_t seed) override;
  num::DenseArray reset_continue() override;
  StepResult step(const num::DenseArray& action) override;

  const EnvConfig& config() const { return cfg_; }
  double command() const { return command_; }
  double velocity() const { return velocity_; }

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
  std::size_t step_count_ = 0;
};

}  // namespace lapp::envs
