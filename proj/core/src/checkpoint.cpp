#include "lapp/io/checkpoint.hpp"

#include <stdexcept>

#include "lapp/io/run.hpp"

namespace lapp::io {

namespace {

[[noreturn]] void mismatch(const std::string& what) {
  throw std::runtime_error("checkpoint: " + what +
                           " does not match the configured run");
}

std::string idx(const std::string& prefix, std::size_t i) {
  return prefix + std::to_string(i);
}

// --- policy block (shared by the full loop restore and the policy-only
// path). Staged as plain vectors first; installed only after every size
// checks out.

struct StagedPolicy {
  std::vector<std::vector<double>> params;
  std::vector<std::vector<double>> m, v;
  std::uint64_t step = 0;
  std::vector<double> adam;  // lr, beta1, beta2, eps
  std::vector<double> norm_mean, norm_m2;
  double norm_count = 0.0;
};

void save_policy(Archive& a, const rl::PolicyBundle& policy) {
  const auto params = policy.params();
  a.add_u64("policy/param_count", params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    a.add(idx("policy/param/", i), params[i]->value.values());

  const num::AdamState& opt = policy.optimizer();
  a.add_u64("policy/opt/moment_count", opt.first_moments().size());
  for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
    a.add(idx("policy/opt/m/", i), opt.first_moments()[i].values());
    a.add(idx("policy/opt/v/", i), opt.second_moments()[i].values());
  }
  a.add_u64("policy/opt/step", opt.step_count());
  const num::AdamConfig& ac = opt.config();
  a.add("policy/opt/adam", {ac.lr, ac.beta1, ac.beta2, ac.eps});

  const rl::RunningNormalizer& norm = policy.normalizer();
  a.add("policy/norm/mean", norm.mean().values());
  a.add("policy/norm/m2", norm.m2().values());
  a.add_scalar("policy/norm/count", norm.count());
}

StagedPolicy stage_policy(const Archive& a, const rl::PolicyBundle& policy) {
  StagedPolicy s;
  const auto params = policy.params();
  if (a.u64("policy/param_count") != params.size())
    mismatch("policy parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.params.push_back(a.values(idx("policy/param/", i)));
    if (s.params.back().size() != params[i]->value.size())
      mismatch("policy parameter " + std::to_string(i) + " size");
  }

  const std::uint64_t moments = a.u64("policy/opt/moment_count");
  if (moments != 0 && moments != params.size())
    mismatch("optimizer moment count");
  for (std::size_t i = 0; i < moments; ++i) {
    s.m.push_back(a.values(idx("policy/opt/m/", i)));
    s.v.push_back(a.values(idx("policy/opt/v/", i)));
    if (s.m.back().size() != params[i]->value.size() ||
        s.v.back().size() != params[i]->value.size())
      mismatch("optimizer moment " + std::to_string(i) + " size");
  }
  s.step = a.u64("policy/opt/step");
  s.adam = a.values("policy/opt/adam");
  if (s.adam.size() != 4) mismatch("optimizer settings size");

  const std::size_t dim = policy.normalizer().dim();
  s.norm_mean = a.values("policy/norm/mean");
  s.norm_m2 = a.values("policy/norm/m2");
  s.norm_count = a.scalar("policy/norm/count");
  if (s.norm_mean.size() != dim || s.norm_m2.size() != dim)
    mismatch("observation normalizer width");
  return s;
}

void install_policy(const StagedPolicy& s, rl::PolicyBundle& policy) {
  const auto params = policy.params();
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i]->value.values() = s.params[i];

  num::AdamState& opt = policy.optimizer();
  opt.first_moments().clear();
  opt.second_moments().clear();
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    opt.first_moments().emplace_back(params[i]->value.shape(), s.m[i]);
    opt.second_moments().emplace_back(params[i]->value.shape(), s.v[i]);
  }
  opt.set_step_count(s.step);
  opt.config_mut() = {s.adam[0], s.adam[1], s.adam[2], s.adam[3]};

  const std::size_t dim = policy.normalizer().dim();
  policy.normalizer().restore(num::DenseArray({dim}, s.norm_mean),
                              num::DenseArray({dim}, s.norm_m2), s.norm_count);
}

}  // namespace

Archive checkpoint_archive(const RunConfig& cfg, const loop::LappLoop& lp) {
  if (!(cfg.loop == lp.config()))
    throw std::invalid_argument(
        "checkpoint: config does not belong to this loop");
  if (!lp.initialized())
    throw std::logic_error("checkpoint: loop is not initialized");

  Archive a;
  a.add_string("meta/config", serialize_config(cfg));
  a.add_u64("meta/epoch", lp.epoch());
  a.add_u64("meta/cycles", lp.cycles());

  save_policy(a, lp.policy());

  const trainer::EnsemblePredictor& ens = lp.ensemble();
  a.add_u64("ensemble/count", ens.members.size());
  for (std::size_t i = 0; i < ens.members.size(); ++i) {
    const std::string p = idx("ensemble/", i) + "/";
    const auto params = ens.members[i].params();
    a.add_u64(p + "param_count", params.size());
    for (std::size_t j = 0; j < params.size(); ++j)
      a.add(idx(p + "param/", j), params[j]->value.values());
    a.add(p + "norm/mean", ens.members[i].norm().mean.values());
    a.add(p + "norm/std", ens.members[i].norm().std.values());
    a.add_scalar(p + "val_loss", ens.val_losses.at(i));
  }

  const rl::VecEnv& venv = lp.venv();
  a.add("venv/obs", venv.pending_obs().values());
  a.add_i64s("venv/uid", venv.episode_uids());
  a.add_i64s("venv/step_in_ep", venv.episode_steps());
  a.add_i64s("venv/next_uid", {venv.next_uid()});
  for (std::size_t i = 0; i < venv.size(); ++i) {
    a.add(idx("venv/env/", i) + "/sim", venv.env(i).sim_state());
    a.add_string(idx("venv/env/", i) + "/rng", venv.env(i).rng_state());
  }

  const rl::WindowHistory& windows = lp.windows();
  a.add_u64("windows/count", windows.n_envs());
  for (std::size_t i = 0; i < windows.n_envs(); ++i)
    a.add(idx("windows/", i), windows.raw(i));

  const auto pairs = lp.buffer().contents();
  a.add_u64("buffer/count", pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    a.add_string(idx("buffer/", i) + "/a", pref::segment_to_json(pairs[i].a));
    a.add_string(idx("buffer/", i) + "/b", pref::segment_to_json(pairs[i].b));
  }

  const auto& items = lp.dataset().items();
  a.add_u64("dataset/count", items.size());
  for (std::size_t i = 0; i < items.size(); ++i)
    a.add_string(idx("dataset/", i), pref::triple_to_json(items[i]));

  a.add("rp_norm/mean", lp.rp_norm().mean().values());
  a.add("rp_norm/m2", lp.rp_norm().m2().values());
  a.add_scalar("rp_norm/count", lp.rp_norm().count());

  a.add_string("rng/action", lp.action_rng().save_state());
  a.add_string("rng/ppo", lp.ppo_rng().save_state());
  a.add_string("rng/pair", lp.pair_rng().save_state());
  a.add_string("rng/resample", lp.resample_rng().save_state());
  return a;
}

void save_checkpoint(const std::string& path, const RunConfig& cfg,
                     const loop::LappLoop& lp) {
  write_archive(path, checkpoint_archive(cfg, lp));
}

RunConfig checkpoint_config(const Archive& a) {
  return parse_config(a.string("meta/config"), "<checkpoint config>");
}

rl::PolicyBundle checkpoint_policy(const Archive& a, const RunConfig& cfg) {
  const auto probe = build_env_factory(cfg)();
  rl::PolicyBundle policy(probe->obs_dim(), probe->action_dim(), cfg.policy, 0);
  install_policy(stage_policy(a, policy), policy);
  return policy;
}

void restore_loop(const Archive& a, loop::LappLoop& lp) {
  // Stage and size-check every block against the freshly built loop; only
  // then install, so a bad archive cannot leave the loop half-written.
  const std::uint64_t epoch = a.u64("meta/epoch");
  const std::uint64_t cycles = a.u64("meta/cycles");
  if (epoch > lp.config().total_epochs) mismatch("epoch counter");

  const StagedPolicy pol = stage_policy(a, lp.policy());

  std::vector<pref::RewardPredictor> members;
  std::vector<double> val_losses;
  const std::uint64_t n_members = a.u64("ensemble/count");
  for (std::size_t i = 0; i < n_members; ++i) {
    const std::string p = idx("ensemble/", i) + "/";
    pref::RewardPredictor member(lp.predictor_config(), 0);
    const auto params = member.params();
    if (a.u64(p + "param_count") != params.size())
      mismatch("ensemble member parameter count");
    for (std::size_t j = 0; j < params.size(); ++j) {
      const auto& vals = a.values(idx(p + "param/", j));
      if (vals.size() != params[j]->value.size())
        mismatch("ensemble member parameter size");
      params[j]->value.values() = vals;
    }
    const auto& nm = a.values(p + "norm/mean");
    const auto& ns = a.values(p + "norm/std");
    if (nm.size() != ns.size()) mismatch("ensemble member norm stats");
    if (!nm.empty()) {
      member.norm().mean = num::DenseArray({nm.size()}, nm);
      member.norm().std = num::DenseArray({ns.size()}, ns);
    }
    members.push_back(std::move(member));
    val_losses.push_back(a.scalar(p + "val_loss"));
  }

  const rl::VecEnv& venv = lp.venv();
  const std::size_t n_envs = venv.size();
  const auto& obs = a.values("venv/obs");
  if (obs.size() != n_envs * venv.obs_dim()) mismatch("pending observations");
  const auto uid = a.i64s("venv/uid");
  const auto step_in_ep = a.i64s("venv/step_in_ep");
  const auto next_uid = a.i64s("venv/next_uid");
  if (uid.size() != n_envs || step_in_ep.size() != n_envs ||
      next_uid.size() != 1)
    mismatch("vec-env bookkeeping");
  std::vector<std::vector<double>> sims;
  std::vector<std::string> env_rngs;
  for (std::size_t i = 0; i < n_envs; ++i) {
    sims.push_back(a.values(idx("venv/env/", i) + "/sim"));
    if (sims.back().size() != venv.env(i).sim_state().size())
      mismatch("simulator state size");
    env_rngs.push_back(a.string(idx("venv/env/", i) + "/rng"));
    num::RandomStream probe;
    probe.load_state(env_rngs.back());  // throws on garbage before install
  }

  const rl::WindowHistory& windows = lp.windows();
  const std::uint64_t n_windows = a.u64("windows/count");
  if (n_windows != windows.n_envs()) mismatch("window history extent");
  std::vector<std::vector<double>> window_rows;
  for (std::size_t i = 0; i < n_windows; ++i) {
    window_rows.push_back(a.values(idx("windows/", i)));
    const std::size_t fd = windows.feature_dim();
    if (window_rows.back().size() % fd != 0 ||
        window_rows.back().size() > windows.context() * fd)
      mismatch("window history rows");
  }

  const std::uint64_t n_pairs = a.u64("buffer/count");
  if (n_pairs > lp.buffer().capacity()) mismatch("buffer occupancy");
  std::vector<annot::SegmentPair> pairs;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    annot::SegmentPair p;
    p.a = pref::segment_from_json(a.string(idx("buffer/", i) + "/a"));
    p.b = pref::segment_from_json(a.string(idx("buffer/", i) + "/b"));
    pairs.push_back(std::move(p));
  }

  const std::uint64_t n_items = a.u64("dataset/count");
  if (lp.dataset().window() == loop::DatasetWindow::latest &&
      n_items > lp.dataset().max_size())
    mismatch("dataset occupancy");
  std::vector<pref::PreferenceTriple> items;
  for (std::size_t i = 0; i < n_items; ++i)
    items.push_back(pref::triple_from_json(a.string(idx("dataset/", i))));

  const auto& rp_mean = a.values("rp_norm/mean");
  const auto& rp_m2 = a.values("rp_norm/m2");
  const double rp_count = a.scalar("rp_norm/count");
  if (rp_mean.size() != lp.rp_norm().dim() ||
      rp_m2.size() != lp.rp_norm().dim())
    mismatch("preference reward normalizer width");

  const std::array<std::string, 4> rngs = {
      a.string("rng/action"), a.string("rng/ppo"), a.string("rng/pair"),
      a.string("rng/resample")};
  for (const std::string& s : rngs) {
    num::RandomStream probe;
    probe.load_state(s);
  }

  // Everything decoded and checked; install.
  install_policy(pol, lp.policy());
  lp.ensemble().members = std::move(members);
  lp.ensemble().val_losses = std::move(val_losses);

  for (std::size_t i = 0; i < n_envs; ++i) {
    lp.venv().env(i).set_sim_state(sims[i]);
    lp.venv().env(i).set_rng_state(env_rngs[i]);
  }
  lp.venv().restore(
      num::DenseArray({n_envs, lp.venv().obs_dim()}, obs), uid, step_in_ep,
      next_uid[0]);

  for (std::size_t i = 0; i < n_windows; ++i)
    lp.windows().restore(i, std::move(window_rows[i]));

  lp.buffer().restore(std::move(pairs));
  lp.dataset().restore(std::move(items));
  lp.rp_norm().restore(num::DenseArray({lp.rp_norm().dim()}, rp_mean),
                       num::DenseArray({lp.rp_norm().dim()}, rp_m2), rp_count);

  lp.action_rng().load_state(rngs[0]);
  lp.ppo_rng().load_state(rngs[1]);
  lp.pair_rng().load_state(rngs[2]);
  lp.resample_rng().load_state(rngs[3]);

  lp.set_epoch(epoch);
  lp.set_cycles(cycles);
  lp.set_initialized(true);
}

}  // namespace lapp::io
