#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "lapp/annotation/annotator.hpp"
#include "lapp/envs/env.hpp"
#include "lapp/numerics/rng.hpp"
#include "lapp/preference/predictor.hpp"
#include "lapp/rl/policy.hpp"
#include "lapp/rl/ppo.hpp"
#include "lapp/rl/rollout.hpp"
#include "lapp/trainer/trainer.hpp"

namespace lapp::loop {

// Retraining data window: `latest` keeps the |D_p| most recent triples
// (oldest-first eviction); `full_process` pools every triple ever labeled
// and resamples |D_p| of them per update.
enum class DatasetWindow { latest, full_process };

struct LoopConfig {
  std::size_t total_epochs = 500;
  std::size_t update_interval = 50;  // epochs between predictor updates
  std::size_t pairs_per_epoch = 10;  // pairs pushed into the buffer per epoch
  std::size_t rollouts = 16;         // parallel envs S
  std::size_t steps = 96;            // steps per epoch T
  std::size_t dataset_size = 500;    // |D_p|; 0 skips bootstrap (zero-head)
  DatasetWindow window = DatasetWindow::latest;
  // beta == 0 short-circuits the whole preference pipeline (no bootstrap,
  // no annotation, no predictor): exactly the plain-PPO baseline.
  double beta = 1.0;
  std::size_t segment_len = 24;      // H
  std::size_t annotation_batch = 5;  // pairs per annotator prompt
  bool standardize_rp = false;       // running standardization of r_p
  double dt = 0.05;                  // time base for the cadence metric
  std::uint64_t seed = 0;

  // Buffer capacity is update_interval * pairs_per_epoch by construction;
  // dataset_size (when nonzero) must cover it, steps must fit segment_len,
  // and pair sampling needs at least two rollouts.
  void validate() const;  // throws std::invalid_argument
  bool operator==(const LoopConfig&) const = default;
};

// Ring of unlabeled segment pairs awaiting the next predictor update. When
// full, pushing evicts the oldest pair, so after a skipped update the buffer
// always holds the freshest capacity-many pairs.
class PreferenceBuffer {
 public:
  explicit PreferenceBuffer(std::size_t capacity) : capacity_(capacity) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return ring_.size(); }
  bool full() const { return ring_.size() == capacity_; }

  void push(annot::SegmentPair pair);
  std::vector<annot::SegmentPair> contents() const;  // arrival order
  std::vector<annot::SegmentPair> drain();
  void restore(std::vector<annot::SegmentPair> pairs);

 private:
  std::size_t capacity_ = 0;
  std::deque<annot::SegmentPair> ring_;
};

// Labeled triples feeding Algorithm-1 retraining; behavior set by
// DatasetWindow (bounded window vs unbounded pool).
class SlidingDataset {
 public:
  SlidingDataset(std::size_t max_size, DatasetWindow window)
      : max_size_(max_size), window_(window) {}

  std::size_t max_size() const { return max_size_; }
  DatasetWindow window() const { return window_; }
  std::size_t size() const { return items_.size(); }
  const std::vector<pref::PreferenceTriple>& items() const { return items_; }

  void push(std::vector<pref::PreferenceTriple> triples);

  // What the next retraining sees: the window itself (latest) or max_size
  // triples drawn uniformly without replacement from the pool, in arrival
  // order (full_process; rng untouched in latest mode).
  std::vector<pref::PreferenceTriple> training_view(
      num::RandomStream& rng) const;

  void restore(std::vector<pref::PreferenceTriple> items);

 private:
  std::size_t max_size_ = 0;
  DatasetWindow window_ = DatasetWindow::latest;
  std::vector<pref::PreferenceTriple> items_;
};

// One epoch's observable state. Annotation fields are zero except on epochs
// that ran a predictor update; env metrics are NaN when the env lacks the
// needed channels (e.g. contacts on the point mass).
struct MetricsRow {
  std::size_t epoch = 0;
  double mean_reward_env = 0.0;
  double mean_reward_pref = 0.0;
  double tracking_error = 0.0;
  double sync_error = 0.0;
  double cadence = 0.0;
  double mean_velocity = 0.0;
  rl::UpdateStats ppo;
  bool predictor_updated = false;
  bool annotation_failed = false;
  double predictor_val_loss = 0.0;        // mean over kept members
  std::array<std::size_t, 4> labels{};    // counts by raw value this cycle
  std::size_t labeled = 0;
  std::size_t discarded = 0;
  std::size_t dataset_size = 0;
  std::size_t buffer_size = 0;
};

// Copies steps [start_t, start_t + len) of one env's rows out of the buffer
// as a trajectory segment (raw channels and actions; episode/start taken
// from the first step).
pref::TrajectorySegment extract_segment(const rl::RolloutBuffer& buf,
                                        std::size_t env, std::size_t start_t,
                                        std::size_t len);

// K pairs of len-H segments from the buffer's episode runs: each pair draws
// two distinct episodes, then uniform start offsets within each run. Throws
// std::runtime_error when fewer than two runs have H steps.
std::vector<annot::SegmentPair> sample_pairs(const rl::RolloutBuffer& buf,
                                             std::size_t k, std::size_t h,
                                             num::RandomStream& rng);

// Bootstrap annotation abort: carries whatever was labeled before the
// annotator failed so the caller can checkpoint the partial dataset.
struct BootstrapAborted : std::runtime_error {
  BootstrapAborted(const std::string& msg,
                   std::vector<pref::PreferenceTriple> got)
      : std::runtime_error(msg), partial(std::move(got)) {}
  std::vector<pref::PreferenceTriple> partial;
};

struct BootstrapOutcome {
  std::vector<pref::PreferenceTriple> triples;  // exactly `want`
  std::array<std::size_t, 4> raw_counts{};
  std::size_t discarded = 0;
  std::size_t annotated = 0;  // pairs sent to the annotator in total
};

// Labels `want` comparable pairs from rollouts of the given policy (taken by
// value: the caller's bundle, normalizer included, stays untouched).
// Incomparable (label 3) pairs are resampled until the dataset fills or the
// attempt cap of 10 * want annotations trips (std::runtime_error).
BootstrapOutcome bootstrap_dataset(rl::PolicyBundle policy, rl::VecEnv& venv,
                                   annot::Annotator& annotator,
                                   std::size_t want, std::size_t segment_len,
                                   std::size_t steps,
                                   std::size_t annotation_batch,
                                   num::RandomStream& action_rng,
                                   num::RandomStream& pair_rng);

using EnvFactory = std::function<std::unique_ptr<envs::Env>()>;
using LogFn = std::function<void(const std::string&)>;

// The full online pipeline: bootstrap labeling and initial ensemble, then
// per-epoch rollout -> PPO update -> pair collection, with the predictor
// retrained every update_interval epochs on the sliding dataset. All
// randomness flows from named streams derived from config.seed, so a
// (config, seed, annotator) triple fixes the metrics stream bit for bit.
class LappLoop {
 public:
  LappLoop(LoopConfig cfg, pref::PredictorConfig pcfg,
           trainer::TrainerConfig tcfg, rl::PolicyConfig polcfg,
           rl::PPOConfig ppocfg, const EnvFactory& factory,
           annot::Annotator* annotator, LogFn log = {});

  // Transfer construction: adopt an already-trained bundle (parameters,
  // optimizer moments, normalizer) and run this loop's envs against it;
  // initialize() then bootstraps a fresh dataset from the new envs.
  LappLoop(LoopConfig cfg, pref::PredictorConfig pcfg,
           trainer::TrainerConfig tcfg, rl::PPOConfig ppocfg,
           const EnvFactory& factory, annot::Annotator* annotator,
           rl::PolicyBundle policy, LogFn log = {});

  // beta != 0: the preference pipeline participates in this run.
  bool preference_enabled() const { return cfg_.beta != 0.0; }
  bool initialized() const { return initialized_; }

  // Bootstrap (or, with dataset_size == 0, a fresh zero-output ensemble).
  // No-op when already initialized.
  void initialize();
  MetricsRow run_epoch();
  std::vector<MetricsRow> run();  // initialize + epochs until total_epochs

  const LoopConfig& config() const { return cfg_; }
  const pref::PredictorConfig& predictor_config() const { return pcfg_; }
  std::size_t epoch() const { return epoch_; }
  std::size_t cycles() const { return cycles_; }

  rl::PolicyBundle& policy() { return policy_; }
  const rl::PolicyBundle& policy() const { return policy_; }
  trainer::EnsemblePredictor& ensemble() { return ensemble_; }
  const trainer::EnsemblePredictor& ensemble() const { return ensemble_; }
  rl::VecEnv& venv() { return venv_; }
  const rl::VecEnv& venv() const { return venv_; }
  rl::WindowHistory& windows() { return windows_; }
  const rl::WindowHistory& windows() const { return windows_; }
  PreferenceBuffer& buffer() { return buffer_; }
  const PreferenceBuffer& buffer() const { return buffer_; }
  SlidingDataset& dataset() { return dataset_; }
  const SlidingDataset& dataset() const { return dataset_; }
  rl::RunningNormalizer& rp_norm() { return rp_norm_; }
  const rl::RunningNormalizer& rp_norm() const { return rp_norm_; }
  num::RandomStream& action_rng() { return action_rng_; }
  const num::RandomStream& action_rng() const { return action_rng_; }
  num::RandomStream& ppo_rng() { return ppo_rng_; }
  const num::RandomStream& ppo_rng() const { return ppo_rng_; }
  num::RandomStream& pair_rng() { return pair_rng_; }
  const num::RandomStream& pair_rng() const { return pair_rng_; }
  num::RandomStream& resample_rng() { return resample_rng_; }
  const num::RandomStream& resample_rng() const { return resample_rng_; }

  // Crash-resume hooks; the caller restores the component states it saved.
  void set_epoch(std::size_t e) { epoch_ = e; }
  void set_cycles(std::size_t c) { cycles_ = c; }
  void set_initialized(bool b) { initialized_ = b; }

 private:
  void run_update_cycle(MetricsRow& row);
  void fill_env_metrics(MetricsRow& row, const rl::RolloutBuffer& buf) const;

  LoopConfig cfg_;
  pref::PredictorConfig pcfg_;
  trainer::TrainerConfig tcfg_;
  rl::PPOConfig ppocfg_;
  annot::Annotator* annotator_ = nullptr;
  LogFn log_;

  rl::VecEnv venv_;
  rl::PolicyBundle policy_;
  trainer::EnsemblePredictor ensemble_;
  rl::WindowHistory windows_;
  PreferenceBuffer buffer_;
  SlidingDataset dataset_;
  rl::RunningNormalizer rp_norm_;
  num::RandomStream action_rng_, ppo_rng_, pair_rng_, resample_rng_;

  EnvFactory factory_;
  std::size_t epoch_ = 0;
  std::size_t cycles_ = 0;
  bool initialized_ = false;
};

// The fine-tune entry point: dimension-checks the bundle against the target
// envs and builds a loop that will bootstrap afresh there.
LappLoop transfer_finetune(rl::PolicyBundle policy, const EnvFactory& target,
                           LoopConfig cfg, pref::PredictorConfig pcfg,
                           trainer::TrainerConfig tcfg, rl::PPOConfig ppocfg,
                           annot::Annotator* annotator, LogFn log = {});

}  // namespace lapp::loop
