#include "lapp/rl/ppo.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace lapp::rl {

using num::DenseArray;
using num::Tape;
using num::Var;

void PPOConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("PPOConfig: gamma must be in [0,1]");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("PPOConfig: lambda must be in [0,1]");
  if (!(clip_ratio > 0.0))
    throw std::invalid_argument("PPOConfig: clip_ratio must be positive");
  if (update_epochs == 0)
    throw std::invalid_argument("PPOConfig: update_epochs must be positive");
  if (minibatches == 0)
    throw std::invalid_argument("PPOConfig: minibatches must be positive");
  if (!(value_coef >= 0.0) || !(entropy_coef >= 0.0))
    throw std::invalid_argument("PPOConfig: negative loss coefficient");
}

UpdateStats ppo_update(PolicyBundle& policy, const RolloutBuffer& buf,
                       const PPOConfig& cfg, num::RandomStream& rng) {
  cfg.validate();
  if (!buf.gae_done)
    throw std::logic_error("ppo_update: advantages not computed");
  const std::size_t n = buf.n_envs * buf.steps;
  if (n < cfg.minibatches)
    throw std::invalid_argument("ppo_update: " + std::to_string(n) +
                                " samples cannot fill " +
                                std::to_string(cfg.minibatches) +
                                " minibatches");
  const std::size_t d = policy.obs_dim();
  const std::size_t a = policy.action_dim();
  if (buf.obs.cols() != d || buf.actions.cols() != a)
    throw std::invalid_argument("ppo_update: buffer does not match policy");

  std::vector<num::Parameter*> params = policy.params();
  UpdateStats acc;
  std::size_t updates = 0;

  for (std::size_t epoch = 0; epoch < cfg.update_epochs; ++epoch) {
    std::vector<std::size_t> perm = rng.permutation(n);
    std::size_t start = 0;
    for (std::size_t mb = 0; mb < cfg.minibatches; ++mb) {
      const std::size_t len = n / cfg.minibatches + (mb < n % cfg.minibatches);
      DenseArray mobs({len, d});
      DenseArray mact({len, a});
      DenseArray mold({len});
      DenseArray madv({len});
      DenseArray mret({len});
      for (std::size_t r = 0; r < len; ++r) {
        const std::size_t src = perm[start + r];
        std::memcpy(mobs.data() + r * d, buf.obs.data() + src * d,
                    d * sizeof(double));
        std::memcpy(mact.data() + r * a, buf.actions.data() + src * a,
                    a * sizeof(double));
        mold[r] = buf.log_probs[src];
        madv[r] = buf.advantages[src];
        mret[r] = buf.returns[src];
      }
      start += len;

      Tape t;
      PolicyGraph g = policy.forward(t, mobs);
      Var new_lp = policy.log_prob(t, g, mact);
      Var ratio = t.exp(t.sub(new_lp, t.leaf(mold)));
      Var adv = t.leaf(madv);
      Var surr1 = t.mul(ratio, adv);
      Var surr2 = t.mul(
          t.clamp(ratio, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio), adv);
      Var policy_loss = t.neg(t.mean(t.minimum(surr1, surr2)));
      Var value_loss = t.mean(t.square(t.sub(g.value, t.leaf(mret))));
      Var ent = policy.entropy(t, g);
      Var total = t.add(t.add(policy_loss, t.scale(value_loss, cfg.value_coef)),
                        t.scale(ent, -cfg.entropy_coef));

      const double pl = t.value(policy_loss)[0];
      const double vl = t.value(value_loss)[0];
      const double en = t.value(ent)[0];
      if (!std::isfinite(t.value(total)[0]))
        throw std::runtime_error(
            "ppo_update: non-finite loss at update epoch " +
            std::to_string(epoch) + " minibatch " + std::to_string(mb) +
            " (policy " + std::to_string(pl) + ", value " +
            std::to_string(vl) + ", entropy " + std::to_string(en) + ")");

      policy.zero_grad();
      t.backward(total);
      policy.optimizer().step(params);

      double kl = 0.0;
      double clipped = 0.0;
      const DenseArray& rv = t.value(ratio);
      const DenseArray& nv = t.value(new_lp);
      for (std::size_t r = 0; r < len; ++r) {
        kl += mold[r] - nv[r];
        if (std::fabs(rv[r] - 1.0) > cfg.clip_ratio) clipped += 1.0;
      }
      acc.policy_loss += pl;
      acc.value_loss += vl;
      acc.entropy += en;
      acc.approx_kl += kl / static_cast<double>(len);
      acc.clip_fraction += clipped / static_cast<double>(len);
      ++updates;
    }
  }

  const double k = static_cast<double>(updates);
  acc.policy_loss /= k;
  acc.value_loss /= k;
  acc.entropy /= k;
  acc.approx_kl /= k;
  acc.clip_fraction /= k;
  return acc;
}

}  // namespace lapp::rl
