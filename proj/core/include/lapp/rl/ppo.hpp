#pragma once

#include <cstddef>

#include "lapp/numerics/rng.hpp"
#include "lapp/rl/policy.hpp"
#include "lapp/rl/rollout.hpp"

namespace lapp::rl {

struct PPOConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_ratio = 0.2;
  std::size_t update_epochs = 4;
  std::size_t minibatches = 4;
  double value_coef = 0.5;
  double entropy_coef = 0.005;

  void validate() const;  // throws std::invalid_argument
  bool operator==(const PPOConfig&) const = default;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;     // mean(old_logp - new_logp)
  double clip_fraction = 0.0; // fraction of |ratio - 1| > clip_ratio
};

// Clipped-surrogate PPO: for each update epoch, one permutation of the S*T
// rows split into `minibatches` near-equal slices, each driving one Adam
// step on loss = policy + value_coef * value - entropy_coef * entropy.
// Returns the mean statistics over all minibatch steps. Throws
// std::runtime_error with the offending values if a loss goes non-finite.
UpdateStats ppo_update(PolicyBundle& policy, const RolloutBuffer& buf,
                       const PPOConfig& cfg, num::RandomStream& rng);

}  // namespace lapp::rl
