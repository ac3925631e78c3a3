#include "lapp/loop/loop.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <utility>

#include "lapp/envs/metrics.hpp"

namespace lapp::loop {

using num::DenseArray;
using num::RandomStream;
using num::derive_seed;

void LoopConfig::validate() const {
  if (update_interval == 0)
    throw std::invalid_argument("LoopConfig: update_interval must be positive");
  if (rollouts == 0 || steps == 0)
    throw std::invalid_argument("LoopConfig: rollouts and steps must be positive");
  if (segment_len < 2)
    throw std::invalid_argument("LoopConfig: segment_len must be at least 2");
  if (steps < segment_len)
    throw std::invalid_argument("LoopConfig: steps must cover segment_len");
  if (annotation_batch == 0)
    throw std::invalid_argument("LoopConfig: annotation_batch must be positive");
  if (pairs_per_epoch > 0 && rollouts < 2)
    throw std::invalid_argument(
        "LoopConfig: pair sampling needs at least two rollouts");
  const std::size_t per_cycle = update_interval * pairs_per_epoch;
  if (dataset_size > 0 && dataset_size < per_cycle)
    throw std::invalid_argument(
        "LoopConfig: dataset_size must hold one full buffer "
        "(update_interval * pairs_per_epoch)");
  if (dataset_size == 0 && pairs_per_epoch > 0)
    throw std::invalid_argument(
        "LoopConfig: pairs_per_epoch needs a nonzero dataset_size");
  if (!std::isfinite(beta))
    throw std::invalid_argument("LoopConfig: beta must be finite");
  if (!(dt > 0.0))
    throw std::invalid_argument("LoopConfig: dt must be positive");
}

void PreferenceBuffer::push(annot::SegmentPair pair) {
  if (capacity_ == 0) return;
  if (ring_.size() == capacity_) ring_.pop_front();
  ring_.push_back(std::move(pair));
}

std::vector<annot::SegmentPair> PreferenceBuffer::contents() const {
  return {ring_.begin(), ring_.end()};
}

std::vector<annot::SegmentPair> PreferenceBuffer::drain() {
  std::vector<annot::SegmentPair> out{std::make_move_iterator(ring_.begin()),
                                      std::make_move_iterator(ring_.end())};
  ring_.clear();
  return out;
}

void PreferenceBuffer::restore(std::vector<annot::SegmentPair> pairs) {
  if (pairs.size() > capacity_)
    throw std::invalid_argument("PreferenceBuffer: restore beyond capacity");
  ring_.assign(std::make_move_iterator(pairs.begin()),
               std::make_move_iterator(pairs.end()));
}

void SlidingDataset::push(std::vector<pref::PreferenceTriple> triples) {
  items_.insert(items_.end(), std::make_move_iterator(triples.begin()),
                std::make_move_iterator(triples.end()));
  if (window_ == DatasetWindow::latest && items_.size() > max_size_)
    items_.erase(items_.begin(),
                 items_.begin() + static_cast<std::ptrdiff_t>(items_.size() - max_size_));
}

std::vector<pref::PreferenceTriple> SlidingDataset::training_view(
    RandomStream& rng) const {
  if (window_ == DatasetWindow::latest || items_.size() <= max_size_)
    return items_;
  // Uniform without replacement: the first max_size steps of a Fisher-Yates
  // shuffle, then arrival order restored.
  std::vector<std::size_t> idx(items_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < max_size_; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(max_size_);
  std::sort(idx.begin(), idx.end());
  std::vector<pref::PreferenceTriple> out;
  out.reserve(max_size_);
  for (std::size_t i : idx) out.push_back(items_[i]);
  return out;
}

void SlidingDataset::restore(std::vector<pref::PreferenceTriple> items) {
  if (window_ == DatasetWindow::latest && items.size() > max_size_)
    throw std::invalid_argument("SlidingDataset: restore beyond window size");
  items_ = std::move(items);
}

pref::TrajectorySegment extract_segment(const rl::RolloutBuffer& buf,
                                        std::size_t env, std::size_t start_t,
                                        std::size_t len) {
  if (env >= buf.n_envs)
    throw std::invalid_argument("extract_segment: env index out of range");
  if (len == 0 || start_t + len > buf.steps)
    throw std::invalid_argument("extract_segment: step range out of range");
  const std::size_t first = buf.index(env, start_t);

  pref::TrajectorySegment seg;
  for (const auto& [name, data] : buf.channels) {
    const std::size_t dim = data.cols();
    DenseArray rows({len, dim});
    std::memcpy(rows.data(), data.data() + first * dim,
                len * dim * sizeof(double));
    seg.channels[name] = std::move(rows);
  }
  const std::size_t a = buf.actions.cols();
  DenseArray acts({len, a});
  std::memcpy(acts.data(), buf.actions.data() + first * a,
              len * a * sizeof(double));
  seg.actions = std::move(acts);
  seg.episode = buf.episode_uid[first];
  seg.start = buf.episode_step[first];
  return seg;
}

namespace {

struct EpisodeRun {
  std::size_t env = 0;
  std::size_t t0 = 0;
  std::size_t len = 0;
};

// Maximal same-episode spans of each env's row range, kept when they can
// hold a length-h segment.
std::vector<EpisodeRun> episode_runs(const rl::RolloutBuffer& buf,
                                     std::size_t h) {
  std::vector<EpisodeRun> runs;
  for (std::size_t s = 0; s < buf.n_envs; ++s) {
    std::size_t t0 = 0;
    for (std::size_t t = 1; t <= buf.steps; ++t) {
      const bool cut = t == buf.steps || buf.episode_uid[buf.index(s, t)] !=
                                             buf.episode_uid[buf.index(s, t0)];
      if (!cut) continue;
      if (t - t0 >= h) runs.push_back({s, t0, t - t0});
      t0 = t;
    }
  }
  return runs;
}

}  // namespace

std::vector<annot::SegmentPair> sample_pairs(const rl::RolloutBuffer& buf,
                                             std::size_t k, std::size_t h,
                                             RandomStream& rng) {
  if (h == 0) throw std::invalid_argument("sample_pairs: segment length 0");
  const std::vector<EpisodeRun> runs = episode_runs(buf, h);
  if (runs.size() < 2)
    throw std::runtime_error(
        "sample_pairs: need two episodes long enough for a segment");
  std::vector<annot::SegmentPair> pairs;
  pairs.reserve(k);
  for (std::size_t n = 0; n < k; ++n) {
    // Two distinct runs, hence two distinct episodes.
    const std::size_t i = static_cast<std::size_t>(rng.below(runs.size()));
    std::size_t j = static_cast<std::size_t>(rng.below(runs.size() - 1));
    if (j >= i) ++j;
    const auto& ra = runs[i];
    const auto& rb = runs[j];
    const std::size_t oa = static_cast<std::size_t>(rng.below(ra.len - h + 1));
    const std::size_t ob = static_cast<std::size_t>(rng.below(rb.len - h + 1));
    pairs.push_back({extract_segment(buf, ra.env, ra.t0 + oa, h),
                     extract_segment(buf, rb.env, rb.t0 + ob, h)});
  }
  return pairs;
}

BootstrapOutcome bootstrap_dataset(rl::PolicyBundle policy, rl::VecEnv& venv,
                                   annot::Annotator& annotator,
                                   std::size_t want, std::size_t segment_len,
                                   std::size_t steps,
                                   std::size_t annotation_batch,
                                   RandomStream& action_rng,
                                   RandomStream& pair_rng) {
  if (want == 0) return {};
  const rl::RolloutBuffer buf = rl::collect_rollout(
      policy, venv, nullptr, nullptr, steps, 0.0, action_rng);

  BootstrapOutcome out;
  const std::size_t attempt_cap = 10 * want;
  while (out.triples.size() < want) {
    if (out.annotated >= attempt_cap)
      throw BootstrapAborted(
          "bootstrap_dataset: annotation attempt cap reached with " +
              std::to_string(out.triples.size()) + " of " +
              std::to_string(want) + " pairs labeled",
          std::move(out.triples));
    const std::size_t need =
        std::min(want - out.triples.size(), attempt_cap - out.annotated);
    std::vector<annot::SegmentPair> pairs =
        sample_pairs(buf, need, segment_len, pair_rng);
    annot::AnnotationOutcome got;
    try {
      got = annot::annotate_pairs(annotator, pairs, annotation_batch);
    } catch (const std::runtime_error& e) {
      throw BootstrapAborted(std::string("bootstrap_dataset: ") + e.what(),
                             std::move(out.triples));
    }
    out.annotated += pairs.size();
    out.discarded += got.discarded.size();
    for (annot::RawLabel r : got.raw)
      if (r >= 0 && r < 4) ++out.raw_counts[static_cast<std::size_t>(r)];
    out.triples.insert(out.triples.end(),
                       std::make_move_iterator(got.triples.begin()),
                       std::make_move_iterator(got.triples.end()));
  }
  return out;
}

namespace {

LoopConfig checked(LoopConfig cfg) {
  cfg.validate();
  return cfg;
}

std::vector<std::unique_ptr<envs::Env>> build_envs(const EnvFactory& factory,
                                                   std::size_t n) {
  if (!factory) throw std::invalid_argument("loop: empty env factory");
  std::vector<std::unique_ptr<envs::Env>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(factory());
    if (!out.back())
      throw std::invalid_argument("loop: env factory returned null");
  }
  return out;
}

std::size_t schema_width(const std::map<std::string, std::size_t>& schema) {
  std::size_t w = 0;
  for (const auto& [name, dim] : schema) w += dim;
  return w;
}

double mean_of(const DenseArray& v) {
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) acc += v[i];
  return v.size() ? acc / static_cast<double>(v.size()) : 0.0;
}

}  // namespace

LappLoop::LappLoop(LoopConfig cfg, pref::PredictorConfig pcfg,
                   trainer::TrainerConfig tcfg, rl::PolicyConfig polcfg,
                   rl::PPOConfig ppocfg, const EnvFactory& factory,
                   annot::Annotator* annotator, LogFn log)
    : cfg_(checked(std::move(cfg))),
      pcfg_(std::move(pcfg)),
      tcfg_(tcfg),
      ppocfg_(ppocfg),
      annotator_(annotator),
      log_(std::move(log)),
      venv_(build_envs(factory, cfg_.rollouts), cfg_.seed),
      policy_(venv_.obs_dim(), venv_.action_dim(), std::move(polcfg),
              derive_seed(cfg_.seed, "policy")),
      buffer_(cfg_.update_interval * cfg_.pairs_per_epoch),
      dataset_(cfg_.dataset_size, cfg_.window),
      rp_norm_(1),
      action_rng_(derive_seed(cfg_.seed, "actions")),
      ppo_rng_(derive_seed(cfg_.seed, "ppo")),
      pair_rng_(derive_seed(cfg_.seed, "pairs")),
      resample_rng_(derive_seed(cfg_.seed, "resample")),
      factory_(factory) {
  tcfg_.validate();
  ppocfg_.validate();
  if (!preference_enabled()) return;

  const std::size_t env_features =
      schema_width(venv_.channel_schema()) +
      (pcfg_.include_actions ? venv_.action_dim() : 0);
  if (pcfg_.feature_dim == 0) pcfg_.feature_dim = env_features;
  if (pcfg_.feature_dim != env_features)
    throw std::invalid_argument(
        "loop: predictor feature_dim " + std::to_string(pcfg_.feature_dim) +
        " does not match the env feature layout (" +
        std::to_string(env_features) + ")");
  pcfg_.validate();
  windows_ = rl::WindowHistory(cfg_.rollouts, pcfg_.context_length,
                               pcfg_.feature_dim, pcfg_.include_actions);
}

LappLoop::LappLoop(LoopConfig cfg, pref::PredictorConfig pcfg,
                   trainer::TrainerConfig tcfg, rl::PPOConfig ppocfg,
                   const EnvFactory& factory, annot::Annotator* annotator,
                   rl::PolicyBundle policy, LogFn log)
    : LappLoop(std::move(cfg), std::move(pcfg), tcfg, policy.config(), ppocfg,
               factory, annotator, std::move(log)) {
  if (policy.obs_dim() != venv_.obs_dim() ||
      policy.action_dim() != venv_.action_dim())
    throw std::invalid_argument(
        "loop: adopted policy dims (" + std::to_string(policy.obs_dim()) +
        ", " + std::to_string(policy.action_dim()) +
        ") do not match the target envs (" + std::to_string(venv_.obs_dim()) +
        ", " + std::to_string(venv_.action_dim()) + ")");
  policy_ = std::move(policy);
}

void LappLoop::initialize() {
  if (initialized_) return;
  if (preference_enabled()) {
    if (cfg_.dataset_size > 0) {
      if (!annotator_)
        throw std::invalid_argument("loop: bootstrap needs an annotator");
      annotator_->set_stage(0);
      rl::VecEnv boot_envs(build_envs(factory_, cfg_.rollouts),
                           derive_seed(cfg_.seed, "bootstrap_envs"));
      RandomStream boot_actions(derive_seed(cfg_.seed, "bootstrap_actions"));
      RandomStream boot_pairs(derive_seed(cfg_.seed, "bootstrap_pairs"));
      // The policy goes in by value: bootstrapping must leave the live
      // bundle (normalizer included) untouched.
      BootstrapOutcome got = bootstrap_dataset(
          policy_, boot_envs, *annotator_, cfg_.dataset_size, cfg_.segment_len,
          cfg_.steps, cfg_.annotation_batch, boot_actions, boot_pairs);
      if (log_)
        log_("bootstrap: labeled " + std::to_string(got.triples.size()) +
             " pairs (" + std::to_string(got.discarded) + " discarded of " +
             std::to_string(got.annotated) + " annotated)");
      dataset_.push(std::move(got.triples));
      const auto view = dataset_.training_view(resample_rng_);
      auto trained = trainer::train_ensemble(pcfg_, tcfg_, view,
                                             derive_seed(cfg_.seed, "trainer", 0));
      ensemble_ = std::move(trained.ensemble);
    } else {
      // No bootstrap data: a fresh ensemble whose zero-initialized decoders
      // score every window 0, so mixing adds nothing until a real update.
      ensemble_ = {};
      for (std::size_t i = 0; i < tcfg_.ensemble_size; ++i)
        ensemble_.members.emplace_back(pcfg_,
                                       derive_seed(cfg_.seed, "member", i));
      ensemble_.val_losses.assign(tcfg_.ensemble_size, 0.0);
    }
  }
  initialized_ = true;
}

MetricsRow LappLoop::run_epoch() {
  if (!initialized_)
    throw std::logic_error("loop: initialize() before run_epoch()");
  if (epoch_ >= cfg_.total_epochs)
    throw std::logic_error("loop: all epochs already run");

  const bool pref_on = preference_enabled();
  if (pref_on && annotator_) annotator_->set_stage(epoch_);

  rl::RolloutBuffer buf = rl::collect_rollout(
      policy_, venv_, pref_on ? &ensemble_ : nullptr,
      pref_on ? &windows_ : nullptr, cfg_.steps, cfg_.beta, action_rng_,
      pref_on && cfg_.standardize_rp ? &rp_norm_ : nullptr);
  const DenseArray boot =
      policy_.values(policy_.normalizer().normalize(venv_.pending_obs()));
  rl::compute_gae(buf, ppocfg_.gamma, ppocfg_.lambda, boot, true);

  MetricsRow row;
  row.epoch = epoch_;
  row.ppo = rl::ppo_update(policy_, buf, ppocfg_, ppo_rng_);
  row.mean_reward_env = mean_of(buf.rewards_env);
  row.mean_reward_pref = mean_of(buf.rewards_pref);
  fill_env_metrics(row, buf);

  if (pref_on && cfg_.pairs_per_epoch > 0) {
    std::vector<annot::SegmentPair> pairs =
        sample_pairs(buf, cfg_.pairs_per_epoch, cfg_.segment_len, pair_rng_);
    for (annot::SegmentPair& p : pairs) buffer_.push(std::move(p));
    if (buffer_.capacity() > 0 && (epoch_ + 1) % cfg_.update_interval == 0)
      run_update_cycle(row);
  }
  row.dataset_size = dataset_.size();
  row.buffer_size = buffer_.size();
  ++epoch_;
  return row;
}

void LappLoop::run_update_cycle(MetricsRow& row) {
  if (!annotator_)
    throw std::invalid_argument("loop: predictor updates need an annotator");
  const std::vector<annot::SegmentPair> pairs = buffer_.contents();
  annot::AnnotationOutcome got;
  try {
    got = annot::annotate_pairs(*annotator_, pairs, cfg_.annotation_batch);
  } catch (const std::runtime_error& e) {
    // Keep the current predictor and the buffered pairs; the ring holds the
    // freshest capacity-many pairs for the retry at the next interval.
    row.annotation_failed = true;
    if (log_)
      log_("epoch " + std::to_string(epoch_) +
           ": predictor update skipped (annotation failed: " + e.what() + ")");
    return;
  }
  row.labeled = got.triples.size();
  row.discarded = got.discarded.size();
  for (annot::RawLabel r : got.raw)
    if (r >= 0 && r < 4) ++row.labels[static_cast<std::size_t>(r)];

  dataset_.push(std::move(got.triples));
  const auto view = dataset_.training_view(resample_rng_);
  ++cycles_;
  auto trained = trainer::train_ensemble(
      pcfg_, tcfg_, view, derive_seed(cfg_.seed, "trainer", cycles_));
  ensemble_ = std::move(trained.ensemble);
  buffer_.drain();

  row.predictor_updated = true;
  double loss_acc = 0.0;
  for (double v : ensemble_.val_losses) loss_acc += v;
  row.predictor_val_loss =
      ensemble_.val_losses.empty()
          ? 0.0
          : loss_acc / static_cast<double>(ensemble_.val_losses.size());
  if (log_)
    log_("epoch " + std::to_string(epoch_) + ": predictor update " +
         std::to_string(cycles_) + " on " + std::to_string(view.size()) +
         " triples, mean val loss " + std::to_string(row.predictor_val_loss));
}

void LappLoop::fill_env_metrics(MetricsRow& row,
                                const rl::RolloutBuffer& buf) const {
  // Whole-epoch per-env segments; episode boundaries are included, which the
  // ratio comparisons these metrics feed are insensitive to.
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const bool has_contacts = buf.channels.contains("feet_contacts");
  double track = 0.0, vel = 0.0, sync = 0.0, cad = 0.0;
  for (std::size_t s = 0; s < buf.n_envs; ++s) {
    const pref::TrajectorySegment seg = extract_segment(buf, s, 0, buf.steps);
    track += envs::tracking_error(seg);
    vel += envs::mean_velocity(seg);
    if (has_contacts) {
      sync += envs::sync_error(seg);
      cad += envs::cadence(seg, cfg_.dt);
    }
  }
  const double n = static_cast<double>(buf.n_envs);
  row.tracking_error = track / n;
  row.mean_velocity = vel / n;
  row.sync_error = has_contacts ? sync / n : nan;
  row.cadence = has_contacts ? cad / n : nan;
}

std::vector<MetricsRow> LappLoop::run() {
  initialize();
  std::vector<MetricsRow> rows;
  rows.reserve(cfg_.total_epochs - epoch_);
  while (epoch_ < cfg_.total_epochs) rows.push_back(run_epoch());
  return rows;
}

LappLoop transfer_finetune(rl::PolicyBundle policy, const EnvFactory& target,
                           LoopConfig cfg, pref::PredictorConfig pcfg,
                           trainer::TrainerConfig tcfg, rl::PPOConfig ppocfg,
                           annot::Annotator* annotator, LogFn log) {
  return LappLoop(std::move(cfg), std::move(pcfg), tcfg, ppocfg, target,
                  annotator, std::move(policy), std::move(log));
}

}  // namespace lapp::loop
