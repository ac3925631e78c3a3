#pragma once

#include <cstdint>
#include <vector>

#include "lapp/numerics/adam.hpp"
#include "lapp/numerics/parameter.hpp"
#include "lapp/numerics/rng.hpp"
#include "lapp/numerics/tape.hpp"
#include "lapp/rl/normalizer.hpp"

namespace lapp::rl {

struct PolicyConfig {
  // Desk-scale default; {512, 256, 128} is the full-scale shape.
  std::vector<std::size_t> hidden = {64, 64};
  double init_logstd = 0.0;
  double logstd_min = -5.0;
  double logstd_max = 2.0;
  double lr = 3e-4;

  void validate() const;  // throws std::invalid_argument
  bool operator==(const PolicyConfig&) const = default;
};

// Handles into one forward pass: action mean (B,A), state value (B,), and
// the clamped log-std (A,). Valid only for the tape that built them.
struct PolicyGraph {
  num::Var mean;
  num::Var value;
  num::Var logstd;
  std::size_t batch = 0;
};

// Gaussian-policy actor plus value critic over ELU MLP trunks, with a
// state-independent learnable log-std (clamped to [logstd_min, logstd_max]
// wherever it is used) and a shared observation normalizer. The bundle is
// the checkpointable agent: parameters, optimizer moments, normalizer.
class PolicyBundle {
 public:
  PolicyBundle() = default;
  PolicyBundle(std::size_t obs_dim, std::size_t action_dim, PolicyConfig cfg,
               std::uint64_t seed);

  std::size_t obs_dim() const { return obs_dim_; }
  std::size_t action_dim() const { return action_dim_; }
  const PolicyConfig& config() const { return cfg_; }

  RunningNormalizer& normalizer() { return norm_; }
  const RunningNormalizer& normalizer() const { return norm_; }
  num::AdamState& optimizer() { return opt_; }
  const num::AdamState& optimizer() const { return opt_; }

  std::vector<num::Parameter*> params();
  std::vector<const num::Parameter*> params() const;
  void zero_grad();

  // Differentiable pieces; obs must already be normalized.
  PolicyGraph forward(num::Tape& t, const num::DenseArray& obs,
                      bool with_grad = true);
  // log pi(a|s) per row -> (B,). Mirrors the arithmetic of act() exactly, so
  // re-evaluating the sampled actions under unchanged parameters reproduces
  // the stored log-probs bit for bit (PPO ratio == 1).
  num::Var log_prob(num::Tape& t, const PolicyGraph& g,
                    const num::DenseArray& actions);
  // Differential entropy of the diagonal Gaussian; state-independent scalar.
  num::Var entropy(num::Tape& t, const PolicyGraph& g);

  struct Sample {
    num::DenseArray actions;    // (B, A)
    num::DenseArray log_probs;  // (B,)
    num::DenseArray values;     // (B,)
  };
  // Draws a = mean + sigma * xi row-major from rng; no gradients recorded.
  Sample act(const num::DenseArray& obs, num::RandomStream& rng);
  num::DenseArray act_mean(const num::DenseArray& obs);  // (B, A)
  num::DenseArray values(const num::DenseArray& obs);    // (B,)

 private:
  num::Var param_or_leaf(num::Tape& t, num::Parameter& p, bool with_grad);
  num::Var trunk(num::Tape& t, num::Var x, std::size_t first_param,
                 std::size_t out_dim, bool with_grad);

  std::size_t obs_dim_ = 0;
  std::size_t action_dim_ = 0;
  PolicyConfig cfg_;
  std::vector<num::Parameter> params_;
  std::size_t value_offset_ = 0;  // params_ index of the value trunk
  RunningNormalizer norm_;
  num::AdamState opt_;
};

}  // namespace lapp::rl
