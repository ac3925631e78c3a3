#include "lapp/preference/bradley_terry.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace lapp::pref {

using num::DenseArray;
using num::Tape;
using num::Var;

double bt_probability(double return_a, double return_b) {
  const double d = return_a - return_b;
  if (d >= 0.0) {
    return 1.0 / (1.0 + std::exp(-d));
  }
  const double e = std::exp(d);
  return e / (1.0 + e);
}

double adjust_probability(double p, double eps) {
  if (p < 0.0 || p > 1.0)
    throw std::invalid_argument("adjust_probability: p outside [0, 1]");
  if (eps < 0.0 || eps >= 0.5)
    throw std::invalid_argument("adjust_probability: eps outside [0, 0.5)");
  return p + eps * (0.5 - p);
}

Var preference_loss(Tape& t, RewardPredictor& predictor,
                    std::span<const PreferenceTriple> batch, double eps,
                    bool with_grad) {
  if (batch.empty())
    throw std::invalid_argument("preference_loss: empty batch");
  if (eps < 0.0 || eps >= 0.5)
    throw std::invalid_argument("preference_loss: eps outside [0, 0.5)");

  const std::size_t n = batch.size();
  std::vector<const TrajectorySegment*> segs;
  segs.reserve(2 * n);
  for (const auto& tr : batch) {
    if (tr.y != 0.0 && tr.y != 0.5 && tr.y != 1.0)
      throw std::invalid_argument("preference_loss: label must be 0, 0.5 or 1");
    segs.push_back(&tr.a);
    segs.push_back(&tr.b);
  }

  WindowBatch wb = build_window_batch(segs, predictor.config());
  Var step_rewards = predictor.window_rewards(t, wb.rows, wb.lengths, with_grad);

  // Window owner is the segment index; segments alternate a0,b0,a1,b1,...
  Var returns = t.segment_sum(step_rewards, wb.owner, 2 * n);
  Var diff = t.even_minus_odd(returns);  // R_a - R_b per pair
  Var p = t.sigmoid(diff);
  // p + eps*(0.5 - p), same form as the scalar op.
  Var p_adj = t.add(p, t.scale(t.add_scalar(t.neg(p), 0.5), eps));

  DenseArray w_a({n}), w_b({n});
  for (std::size_t i = 0; i < n; ++i) {
    w_a[i] = 1.0 - batch[i].y;
    w_b[i] = batch[i].y;
  }
  Var ones = t.leaf(DenseArray::full({n}, 1.0));
  Var ll = t.add(t.mul(t.leaf(std::move(w_a)), t.log(p_adj)),
                 t.mul(t.leaf(std::move(w_b)), t.log(t.sub(ones, p_adj))));
  return t.scale(t.mean(ll), -1.0);
}

double preference_loss_value(RewardPredictor& predictor,
                             std::span<const PreferenceTriple> batch,
                             double eps) {
  Tape t;
  Var loss = preference_loss(t, predictor, batch, eps, false);
  return t.value(loss)[0];
}

}  // namespace lapp::pref
