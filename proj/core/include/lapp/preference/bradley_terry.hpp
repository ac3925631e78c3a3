#pragma once

#include <span>

#include "lapp/preference/predictor.hpp"
#include "lapp/preference/segment.hpp"

namespace lapp::pref {

// P[a preferred over b] from segment returns, computed as the logistic of
// the return difference so large returns cannot overflow.
double bt_probability(double return_a, double return_b);

// Mixes p toward indifference: p + eps*(0.5 - p). This form lands exactly on
// 0.075 / 0.5 / 0.925 for p in {0, 0.5, 1} at eps = 0.15.
double adjust_probability(double p, double eps);

// Mean over the batch of the noise-adjusted cross-entropy:
//   -[(1-y) log P'[a>b] + y log P'[b>a]],  P'[b>a] = 1 - P'[a>b].
// Returns are sums of per-step predicted rewards over each segment.
num::Var preference_loss(num::Tape& t, RewardPredictor& predictor,
                         std::span<const PreferenceTriple> batch, double eps,
                         bool with_grad = true);

double preference_loss_value(RewardPredictor& predictor,
                             std::span<const PreferenceTriple> batch,
                             double eps);

}  // namespace lapp::pref
