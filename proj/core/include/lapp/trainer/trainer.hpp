#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lapp/numerics/rng.hpp"
#include "lapp/preference/bradley_terry.hpp"
#include "lapp/preference/predictor.hpp"

namespace lapp::trainer {

struct TrainerConfig {
  std::size_t pool_size = 9;      // members trained
  std::size_t ensemble_size = 3;  // members kept, by validation loss
  std::size_t min_epochs = 30;    // early stop armed after this many epochs
  std::size_t max_epochs = 90;
  double overfit_alpha = 1.3;  // stop when val > alpha * train
  std::size_t train_parts = 9;
  std::size_t val_parts = 1;
  std::size_t batch_size = 32;
  double lr = 1e-4;

  void validate() const;
  bool operator==(const TrainerConfig&) const = default;
};

struct SplitIndices {
  std::vector<std::size_t> train, val;
};

// Shuffles 0..n-1 and carves off round(n * val/(train+val)) validation
// entries, clamped so both parts stay non-empty.
SplitIndices split_dataset(std::size_t n, const TrainerConfig& cfg,
                           num::RandomStream& rng);

// The early-stop rule on its own: stop after epoch `epoch` (1-based) iff
// val > alpha * train AND epoch > min_epochs.
bool should_stop(double train_loss, double val_loss, std::size_t epoch,
                 const TrainerConfig& cfg);

struct MemberCurve {
  std::vector<double> train_loss;  // epoch-mean, per completed epoch
  std::vector<double> val_loss;
  std::size_t epochs_run = 0;
  double final_val_loss = 0.0;
};

struct MemberResult {
  pref::RewardPredictor predictor;
  MemberCurve curve;
};

// Trains one pool member to the early-stop rule. norm comes precomputed from
// the training split and is stored on the predictor.
MemberResult train_member(const pref::PredictorConfig& pcfg,
                          const TrainerConfig& cfg,
                          std::span<const pref::PreferenceTriple> train,
                          std::span<const pref::PreferenceTriple> val,
                          const pref::NormStats& norm, std::uint64_t seed);

// Mean of member predictions; members are stored ascending by validation
// loss (ties broken by pool index).
class EnsemblePredictor {
 public:
  std::vector<pref::RewardPredictor> members;
  std::vector<double> val_losses;

  const pref::PredictorConfig& config() const;
  std::vector<double> predict_step_rewards(const pref::TrajectorySegment& s);
  std::vector<double> window_rewards(const num::DenseArray& rows,
                                     std::span<const std::size_t> lengths);
};

struct EnsembleTrainOutcome {
  EnsemblePredictor ensemble;
  std::vector<MemberCurve> curves;        // pool order
  std::vector<double> pool_val_losses;    // pool order
  std::vector<std::size_t> selected;      // pool indices kept, loss order
};

// Indices of the k smallest losses, ascending; ties keep the lower index.
std::vector<std::size_t> select_members(std::span<const double> val_losses,
                                        std::size_t k);

// Full pool train / select / ensemble pass over a labeled dataset.
EnsembleTrainOutcome train_ensemble(const pref::PredictorConfig& pcfg,
                                    const TrainerConfig& cfg,
                                    std::span<const pref::PreferenceTriple> data,
                                    std::uint64_t seed);

// Per-feature mean/std over every step of both segments of the given
// triples; std floored at 1e-8.
pref::NormStats compute_norm_stats(std::span<const pref::PreferenceTriple> data,
                                   const pref::PredictorConfig& pcfg);

}  // namespace lapp::trainer
