#include "lapp/rl/rollout.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <utility>

namespace lapp::rl {

using num::DenseArray;

VecEnv::VecEnv(std::vector<std::unique_ptr<envs::Env>> envs,
               std::uint64_t root_seed)
    : envs_(std::move(envs)) {
  if (envs_.empty()) throw std::invalid_argument("VecEnv: no envs");
  for (const auto& e : envs_) {
    if (!e) throw std::invalid_argument("VecEnv: null env");
    if (e->obs_dim() != envs_[0]->obs_dim() ||
        e->action_dim() != envs_[0]->action_dim() ||
        e->channel_schema() != envs_[0]->channel_schema())
      throw std::invalid_argument("VecEnv: envs disagree on dimensions");
  }
  const std::size_t s = envs_.size();
  obs_ = DenseArray({s, envs_[0]->obs_dim()});
  uid_.resize(s);
  step_in_ep_.assign(s, 0);
  for (std::size_t i = 0; i < s; ++i) {
    DenseArray o = envs_[i]->reset(num::derive_seed(root_seed, "env", i));
    std::memcpy(obs_.data() + i * obs_dim(), o.data(),
                obs_dim() * sizeof(double));
    uid_[i] = static_cast<std::int64_t>(i);
  }
  next_uid_ = static_cast<std::int64_t>(s);
}

std::size_t VecEnv::obs_dim() const { return envs_[0]->obs_dim(); }
std::size_t VecEnv::action_dim() const { return envs_[0]->action_dim(); }

const std::map<std::string, std::size_t>& VecEnv::channel_schema() const {
  return envs_[0]->channel_schema();
}

VecEnv::StepRecord VecEnv::step(const DenseArray& actions) {
  if (actions.rank() != 2 || actions.rows() != size() ||
      actions.cols() != action_dim())
    throw std::invalid_argument("VecEnv::step: actions shape " +
                                actions.shape_str() + " does not match (" +
                                std::to_string(size()) + "," +
                                std::to_string(action_dim()) + ")");
  StepRecord rec;
  rec.results.reserve(size());
  rec.uid.resize(size());
  rec.step_in_episode.resize(size());
  DenseArray row({action_dim()});
  for (std::size_t s = 0; s < size(); ++s) {
    std::memcpy(row.data(), actions.data() + s * action_dim(),
                action_dim() * sizeof(double));
    envs::StepResult res = envs_[s]->step(row);
    rec.uid[s] = uid_[s];
    rec.step_in_episode[s] = step_in_ep_[s];
    if (res.done) {
      DenseArray o = envs_[s]->reset_continue();
      std::memcpy(obs_.data() + s * obs_dim(), o.data(),
                  obs_dim() * sizeof(double));
      uid_[s] = next_uid_++;
      step_in_ep_[s] = 0;
    } else {
      std::memcpy(obs_.data() + s * obs_dim(), res.observation.data(),
                  obs_dim() * sizeof(double));
      ++step_in_ep_[s];
    }
    rec.results.push_back(std::move(res));
  }
  return rec;
}

void VecEnv::restore(DenseArray obs, std::vector<std::int64_t> uid,
                     std::vector<std::int64_t> step_in_ep,
                     std::int64_t next_uid) {
  if (obs.rank() != 2 || obs.rows() != size() || obs.cols() != obs_dim() ||
      uid.size() != size() || step_in_ep.size() != size())
    throw std::invalid_argument("VecEnv::restore: state shape mismatch");
  obs_ = std::move(obs);
  uid_ = std::move(uid);
  step_in_ep_ = std::move(step_in_ep);
  next_uid_ = next_uid;
}

WindowHistory::WindowHistory(std::size_t n_envs, std::size_t context,
                             std::size_t feature_dim, bool include_actions)
    : context_(context),
      feature_dim_(feature_dim),
      include_actions_(include_actions),
      hist_(n_envs) {
  if (n_envs == 0 || context == 0 || feature_dim == 0)
    throw std::invalid_argument("WindowHistory: zero extent");
}

std::size_t WindowHistory::length(std::size_t i) const {
  return hist_.at(i).size() / feature_dim_;
}

void WindowHistory::push(std::size_t i,
                         const std::map<std::string, DenseArray>& channels,
                         const DenseArray& action_row) {
  std::vector<double>& h = hist_.at(i);
  const std::size_t old = h.size();
  for (const auto& [name, row] : channels)
    h.insert(h.end(), row.data(), row.data() + row.size());
  if (include_actions_)
    h.insert(h.end(), action_row.data(), action_row.data() + action_row.size());
  if (h.size() - old != feature_dim_)
    throw std::invalid_argument(
        "WindowHistory::push: step features have width " +
        std::to_string(h.size() - old) + ", expected " +
        std::to_string(feature_dim_));
  if (h.size() > context_ * feature_dim_)
    h.erase(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(
                                       h.size() - context_ * feature_dim_));
}

void WindowHistory::clear(std::size_t i) { hist_.at(i).clear(); }

std::pair<DenseArray, std::vector<std::size_t>> WindowHistory::batch() const {
  std::size_t total = 0;
  std::vector<std::size_t> lengths(hist_.size());
  for (std::size_t i = 0; i < hist_.size(); ++i) {
    lengths[i] = length(i);
    total += lengths[i];
  }
  DenseArray rows({total, feature_dim_});
  double* out = rows.data();
  for (const auto& h : hist_) {
    std::memcpy(out, h.data(), h.size() * sizeof(double));
    out += h.size();
  }
  return {std::move(rows), std::move(lengths)};
}

void WindowHistory::restore(std::size_t i, std::vector<double> rows) {
  if (rows.size() % feature_dim_ != 0 ||
      rows.size() > context_ * feature_dim_)
    throw std::invalid_argument("WindowHistory::restore: bad row data");
  hist_.at(i) = std::move(rows);
}

RolloutBuffer collect_rollout(PolicyBundle& policy, VecEnv& venv,
                              trainer::EnsemblePredictor* predictor,
                              WindowHistory* windows, std::size_t steps,
                              double beta, num::RandomStream& action_rng,
                              RunningNormalizer* rp_norm) {
  if (steps == 0) throw std::invalid_argument("collect_rollout: zero steps");
  if (rp_norm && !predictor)
    throw std::invalid_argument(
        "collect_rollout: r_p standardization without a predictor");
  if (rp_norm && rp_norm->dim() != 1)
    throw std::invalid_argument(
        "collect_rollout: r_p standardization stats must have width 1");
  if (policy.obs_dim() != venv.obs_dim() ||
      policy.action_dim() != venv.action_dim())
    throw std::invalid_argument(
        "collect_rollout: policy dimensions (" +
        std::to_string(policy.obs_dim()) + "," +
        std::to_string(policy.action_dim()) + ") do not match envs (" +
        std::to_string(venv.obs_dim()) + "," +
        std::to_string(venv.action_dim()) + ")");
  if (predictor) {
    if (!windows)
      throw std::invalid_argument(
          "collect_rollout: predictor supplied without window history");
    const auto& pcfg = predictor->config();
    if (windows->n_envs() != venv.size() ||
        windows->context() != pcfg.context_length ||
        windows->feature_dim() != pcfg.feature_dim ||
        windows->include_actions() != pcfg.include_actions)
      throw std::invalid_argument(
          "collect_rollout: window history does not match the predictor");
  }

  const std::size_t s_envs = venv.size();
  const std::size_t d = venv.obs_dim();
  const std::size_t a = venv.action_dim();
  RolloutBuffer buf;
  buf.n_envs = s_envs;
  buf.steps = steps;
  const std::size_t n = s_envs * steps;
  buf.obs = DenseArray({n, d});
  buf.actions = DenseArray({n, a});
  buf.log_probs = DenseArray({n});
  buf.values = DenseArray({n});
  buf.rewards_env = DenseArray({n});
  buf.rewards_pref = DenseArray({n});
  buf.rewards_mixed = DenseArray({n});
  buf.dones = DenseArray({n});
  buf.episode_uid.resize(n);
  buf.episode_step.resize(n);
  for (const auto& [name, dim] : venv.channel_schema())
    buf.channels.emplace(name, DenseArray({n, dim}));

  DenseArray action_row({a});
  for (std::size_t t = 0; t < steps; ++t) {
    policy.normalizer().update(venv.pending_obs());
    DenseArray obs_n = policy.normalizer().normalize(venv.pending_obs());
    PolicyBundle::Sample sample = policy.act(obs_n, action_rng);
    VecEnv::StepRecord rec = venv.step(sample.actions);

    for (std::size_t s = 0; s < s_envs; ++s) {
      const std::size_t i = buf.index(s, t);
      std::memcpy(buf.obs.data() + i * d, obs_n.data() + s * d,
                  d * sizeof(double));
      std::memcpy(buf.actions.data() + i * a, sample.actions.data() + s * a,
                  a * sizeof(double));
      buf.log_probs[i] = sample.log_probs[s];
      buf.values[i] = sample.values[s];
      buf.rewards_env[i] = rec.results[s].reward;
      buf.dones[i] = rec.results[s].done ? 1.0 : 0.0;
      buf.episode_uid[i] = rec.uid[s];
      buf.episode_step[i] = rec.step_in_episode[s];
      for (const auto& [name, row] : rec.results[s].channels) {
        DenseArray& dst = buf.channels.at(name);
        std::memcpy(dst.data() + i * dst.cols(), row.data(),
                    dst.cols() * sizeof(double));
      }
    }

    if (predictor) {
      for (std::size_t s = 0; s < s_envs; ++s) {
        std::memcpy(action_row.data(), sample.actions.data() + s * a,
                    a * sizeof(double));
        windows->push(s, rec.results[s].channels, action_row);
      }
      auto [rows, lengths] = windows->batch();
      std::vector<double> rp = predictor->window_rewards(rows, lengths);
      DenseArray mixed_rp({s_envs, 1},
                          std::vector<double>(rp.begin(), rp.end()));
      if (rp_norm) {
        rp_norm->update(mixed_rp);
        mixed_rp = rp_norm->normalize(mixed_rp);
      }
      for (std::size_t s = 0; s < s_envs; ++s) {
        const std::size_t i = buf.index(s, t);
        buf.rewards_pref[i] = rp[s];
        buf.rewards_mixed[i] =
            mix_rewards(mixed_rp[s], buf.rewards_env[i], beta);
        if (rec.results[s].done) windows->clear(s);
      }
    } else {
      for (std::size_t s = 0; s < s_envs; ++s) {
        const std::size_t i = buf.index(s, t);
        buf.rewards_pref[i] = 0.0;
        buf.rewards_mixed[i] = mix_rewards(0.0, buf.rewards_env[i], beta);
      }
    }
  }
  return buf;
}

void compute_gae(RolloutBuffer& buf, double gamma, double lambda,
                 const DenseArray& bootstrap_values, bool normalize) {
  if (buf.n_envs == 0 || buf.steps == 0)
    throw std::invalid_argument("compute_gae: empty buffer");
  if (bootstrap_values.size() != buf.n_envs)
    throw std::invalid_argument("compute_gae: bootstrap values size " +
                                std::to_string(bootstrap_values.size()) +
                                ", expected " + std::to_string(buf.n_envs));
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("compute_gae: gamma and lambda must be in [0,1]");

  const std::size_t n = buf.n_envs * buf.steps;
  buf.advantages = DenseArray({n});
  buf.returns = DenseArray({n});
  for (std::size_t s = 0; s < buf.n_envs; ++s) {
    double adv_next = 0.0;
    for (std::size_t t = buf.steps; t-- > 0;) {
      const std::size_t i = buf.index(s, t);
      const double nonterm = 1.0 - buf.dones[i];
      const double v_next =
          t + 1 == buf.steps ? bootstrap_values[s] : buf.values[i + 1];
      const double delta = buf.rewards_mixed[i] + gamma * nonterm * v_next -
                           buf.values[i];
      adv_next = delta + gamma * lambda * nonterm * adv_next;
      buf.advantages[i] = adv_next;
      buf.returns[i] = adv_next + buf.values[i];
    }
  }
  buf.gae_done = true;
  if (normalize) normalize_advantages(buf);
}

void normalize_advantages(RolloutBuffer& buf) {
  if (!buf.gae_done)
    throw std::logic_error("normalize_advantages: advantages not computed");
  const std::size_t n = buf.advantages.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += buf.advantages[i];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = buf.advantages[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double sd = std::sqrt(var);
  const double denom = sd < 1e-8 ? 1e-8 : sd;
  for (std::size_t i = 0; i < n; ++i)
    buf.advantages[i] = (buf.advantages[i] - mean) / denom;
}

}  // namespace lapp::rl
