#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lapp/numerics/adam.hpp"
#include "lapp/numerics/parameter.hpp"
#include "lapp/numerics/rng.hpp"
#include "lapp/numerics/tape.hpp"
#include "lapp/preference/segment.hpp"

namespace lapp::pref {

enum class PredictorMode { markovian, non_markovian };

struct PredictorConfig {
  PredictorMode mode = PredictorMode::non_markovian;
  std::size_t context_length = 8;  // forced to 1 in markovian mode
  std::size_t width = 128;
  std::size_t heads = 8;
  std::size_t blocks = 6;
  bool mlp_variant = false;  // per-step MLP instead of the transformer
  std::vector<std::size_t> mlp_hidden = {256, 256};
  std::size_t feature_dim = 0;  // inferred from data when 0
  bool include_actions = true;
  double label_noise_eps = 0.15;

  void validate() const;  // throws std::invalid_argument
  bool operator==(const PredictorConfig&) const = default;
};

// Per-feature standardization, frozen at training time.
struct NormStats {
  num::DenseArray mean;  // (F,)
  num::DenseArray std;   // (F,), floored at 1e-8

  bool empty() const { return mean.size() == 0; }
};

// Scores trajectory windows. Per step t the reward is the decoder output at
// the last position of the window covering the up to `context_length` steps
// ending at t; shorter prefixes use the available steps. The decoder output
// layer starts at zero, so an untrained predictor scores everything 0.
class RewardPredictor {
 public:
  RewardPredictor() = default;
  RewardPredictor(PredictorConfig cfg, std::uint64_t seed);

  const PredictorConfig& config() const { return cfg_; }
  NormStats& norm() { return norm_; }
  const NormStats& norm() const { return norm_; }

  std::vector<num::Parameter*> params();
  std::vector<const num::Parameter*> params() const;
  void zero_grad();

  // rows: (sum(lengths), F) of raw window rows, windows concatenated in
  // order. Returns (n_windows,): the reward at each window's last position.
  // with_grad=false skips gradient bookkeeping for inference.
  num::Var window_rewards(num::Tape& t, const num::DenseArray& rows,
                          std::span<const std::size_t> lengths,
                          bool with_grad = true);

  // Convenience: one reward per step of the segment.
  std::vector<double> predict_step_rewards(const TrajectorySegment& s);

 private:
  num::Var forward_group(num::Tape& t, const num::DenseArray& rows,
                         std::size_t n_seq, std::size_t w, bool with_grad);
  num::Var param_or_leaf(num::Tape& t, num::Parameter& p, bool with_grad);

  PredictorConfig cfg_;
  NormStats norm_;
  std::vector<num::Parameter> params_;
  num::DenseArray pos_enc_;  // (context_length, width)
};

// Builds the window-row matrix for a batch of segments: for each segment,
// one window per step. Returns the rows, per-window lengths, and the owning
// segment index of each window (in step order within each segment).
struct WindowBatch {
  num::DenseArray rows;                // (total, F)
  std::vector<std::size_t> lengths;    // per window
  std::vector<std::size_t> owner;      // per window: segment index
};
WindowBatch build_window_batch(std::span<const TrajectorySegment* const> segs,
                               const PredictorConfig& cfg);

}  // namespace lapp::pref
