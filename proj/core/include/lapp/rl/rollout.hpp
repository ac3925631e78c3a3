#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lapp/envs/env.hpp"
#include "lapp/numerics/dense_array.hpp"
#include "lapp/numerics/rng.hpp"
#include "lapp/rl/policy.hpp"
#include "lapp/trainer/trainer.hpp"

namespace lapp::rl {

// r = beta * r_p + r_E. beta = 0 reproduces r_E bit for bit.
inline double mix_rewards(double r_p, double r_e, double beta) {
  return beta * r_p + r_e;
}

// One epoch of experience: S parallel envs by T steps, flattened row-major
// so row s*steps + t is env s at step t. Observations are stored normalized
// (exactly what the policy consumed); channels and actions stay raw.
struct RolloutBuffer {
  std::size_t n_envs = 0;
  std::size_t steps = 0;

  num::DenseArray obs;            // (S*T, obs_dim)
  num::DenseArray actions;        // (S*T, action_dim)
  num::DenseArray log_probs;      // (S*T,)
  num::DenseArray values;         // (S*T,)
  num::DenseArray rewards_env;    // (S*T,)
  num::DenseArray rewards_pref;   // (S*T,)
  num::DenseArray rewards_mixed;  // (S*T,)
  num::DenseArray dones;          // (S*T,) 0/1
  num::DenseArray advantages;     // (S*T,) after compute_gae
  num::DenseArray returns;        // (S*T,) after compute_gae
  bool gae_done = false;

  // Raw env channels, (S*T, dim) each; the source for trajectory segments.
  std::map<std::string, num::DenseArray> channels;
  std::vector<std::int64_t> episode_uid;   // (S*T,)
  std::vector<std::int64_t> episode_step;  // (S*T,) step index within episode

  std::size_t index(std::size_t s, std::size_t t) const { return s * steps + t; }
};

// Owns S single-owner envs plus the between-step state (pending
// observations, episode ids). Steps envs in index order; a finished episode
// rolls straight into reset_continue so envs persist across epochs.
class VecEnv {
 public:
  // Resets env i with derive_seed(root_seed, "env", i).
  VecEnv(std::vector<std::unique_ptr<envs::Env>> envs, std::uint64_t root_seed);

  std::size_t size() const { return envs_.size(); }
  std::size_t obs_dim() const;
  std::size_t action_dim() const;
  const std::map<std::string, std::size_t>& channel_schema() const;

  const num::DenseArray& pending_obs() const { return obs_; }
  const std::vector<std::int64_t>& episode_uids() const { return uid_; }
  const std::vector<std::int64_t>& episode_steps() const { return step_in_ep_; }
  std::int64_t next_uid() const { return next_uid_; }

  envs::Env& env(std::size_t i) { return *envs_[i]; }
  const envs::Env& env(std::size_t i) const { return *envs_[i]; }

  struct StepRecord {
    std::vector<envs::StepResult> results;   // per env
    std::vector<std::int64_t> uid;           // episode the step belonged to
    std::vector<std::int64_t> step_in_episode;
  };
  StepRecord step(const num::DenseArray& actions);  // (S, action_dim)

  // Checkpoint plumbing for the pending state (env internals are saved via
  // the envs themselves).
  void restore(num::DenseArray obs, std::vector<std::int64_t> uid,
               std::vector<std::int64_t> step_in_ep, std::int64_t next_uid);

 private:
  std::vector<std::unique_ptr<envs::Env>> envs_;
  num::DenseArray obs_;  // (S, obs_dim)
  std::vector<std::int64_t> uid_;
  std::vector<std::int64_t> step_in_ep_;
  std::int64_t next_uid_ = 0;
};

// Trailing per-env feature windows feeding the predictor during rollouts:
// the last up-to-`context` feature rows of the live episode, cleared at
// episode boundaries. Rows use the trajectory-segment feature layout
// (channels in name order, then actions when included).
class WindowHistory {
 public:
  WindowHistory() = default;
  WindowHistory(std::size_t n_envs, std::size_t context,
                std::size_t feature_dim, bool include_actions);

  std::size_t n_envs() const { return hist_.size(); }
  std::size_t context() const { return context_; }
  std::size_t feature_dim() const { return feature_dim_; }
  bool include_actions() const { return include_actions_; }
  std::size_t length(std::size_t i) const;

  void push(std::size_t i, const std::map<std::string, num::DenseArray>& channels,
            const num::DenseArray& action_row);
  void clear(std::size_t i);

  // Concatenated rows for all envs in index order, plus per-env lengths;
  // the shape window_rewards expects.
  std::pair<num::DenseArray, std::vector<std::size_t>> batch() const;

  const std::vector<double>& raw(std::size_t i) const { return hist_[i]; }
  void restore(std::size_t i, std::vector<double> rows);

 private:
  std::size_t context_ = 0;
  std::size_t feature_dim_ = 0;
  bool include_actions_ = false;
  std::vector<std::vector<double>> hist_;  // flat (len * feature_dim) each
};

// Rolls the policy for `steps` steps across all envs. The normalizer is
// updated with each batch of raw observations before they are normalized for
// the policy. With a predictor, r_p per step is the ensemble score of the
// trailing window (windows must be non-null and match the predictor's
// feature layout); without one r_p = 0 and windows may be null.
//
// rp_norm (optional, width 1): running standardization of r_p before mixing.
// Per step the S raw scores update the stats in env order, then the
// standardized scores feed the mix; rewards_pref always records raw scores.
RolloutBuffer collect_rollout(PolicyBundle& policy, VecEnv& venv,
                              trainer::EnsemblePredictor* predictor,
                              WindowHistory* windows, std::size_t steps,
                              double beta, num::RandomStream& action_rng,
                              RunningNormalizer* rp_norm = nullptr);

// GAE over the buffer: adv_t = delta_t + gamma*lambda*(1-done_t)*adv_{t+1},
// delta_t = r_t + gamma*(1-done_t)*V_{t+1} - V_t, bootstrapped per env from
// bootstrap_values (S,) past the last step. returns = advantages + values
// (computed before any normalization); normalize then centers/scales the
// advantages over the whole buffer.
void compute_gae(RolloutBuffer& buf, double gamma, double lambda,
                 const num::DenseArray& bootstrap_values, bool normalize = true);

// (a - mean) / max(std, 1e-8) over all S*T advantages.
void normalize_advantages(RolloutBuffer& buf);

}  // namespace lapp::rl
