#include "lapp/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lapp/numerics/adam.hpp"

namespace lapp::trainer {

using num::RandomStream;
using pref::PreferenceTriple;
using pref::RewardPredictor;

void TrainerConfig::validate() const {
  if (pool_size == 0 || ensemble_size == 0 || ensemble_size > pool_size)
    throw std::invalid_argument(
        "TrainerConfig: need 1 <= ensemble_size <= pool_size");
  if (max_epochs == 0 || min_epochs > max_epochs)
    throw std::invalid_argument(
        "TrainerConfig: need min_epochs <= max_epochs, max_epochs >= 1");
  if (overfit_alpha <= 0.0)
    throw std::invalid_argument("TrainerConfig: overfit_alpha must be positive");
  if (train_parts == 0 || val_parts == 0)
    throw std::invalid_argument("TrainerConfig: split parts must be positive");
  if (batch_size == 0)
    throw std::invalid_argument("TrainerConfig: batch_size must be positive");
  if (lr <= 0.0) throw std::invalid_argument("TrainerConfig: lr must be positive");
}

SplitIndices split_dataset(std::size_t n, const TrainerConfig& cfg,
                           RandomStream& rng) {
  if (n < 2)
    throw std::invalid_argument("split_dataset: need at least 2 triples");
  const double frac = static_cast<double>(cfg.val_parts) /
                      static_cast<double>(cfg.train_parts + cfg.val_parts);
  std::size_t n_val = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * frac));
  n_val = std::max<std::size_t>(1, std::min(n_val, n - 1));
  std::vector<std::size_t> idx = rng.permutation(n);
  SplitIndices out;
  out.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  out.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  return out;
}

bool should_stop(double train_loss, double val_loss, std::size_t epoch,
                 const TrainerConfig& cfg) {
  return val_loss > cfg.overfit_alpha * train_loss && epoch > cfg.min_epochs;
}

namespace {

double batched_loss_value(RewardPredictor& pred,
                          std::span<const PreferenceTriple> data, double eps,
                          std::size_t chunk) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t off = 0; off < data.size(); off += chunk) {
    const std::size_t n = std::min(chunk, data.size() - off);
    total += pref::preference_loss_value(pred, data.subspan(off, n), eps) *
             static_cast<double>(n);
    count += n;
  }
  return total / static_cast<double>(count);
}

}  // namespace

MemberResult train_member(const pref::PredictorConfig& pcfg,
                          const TrainerConfig& cfg,
                          std::span<const PreferenceTriple> train,
                          std::span<const PreferenceTriple> val,
                          const pref::NormStats& norm, std::uint64_t seed) {
  cfg.validate();
  if (train.empty() || val.empty())
    throw std::invalid_argument("train_member: empty split");

  MemberResult res{RewardPredictor(pcfg, num::derive_seed(seed, "init")),
                   MemberCurve{}};
  RewardPredictor& pred = res.predictor;
  pred.norm() = norm;

  RandomStream shuffle_rng(num::derive_seed(seed, "shuffle"));
  num::AdamState opt(num::AdamConfig{.lr = cfg.lr});
  std::vector<num::Parameter*> params = pred.params();
  const double eps = pcfg.label_noise_eps;

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<PreferenceTriple> batch;
  batch.reserve(cfg.batch_size);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t off = 0; off < order.size(); off += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - off);
      batch.clear();
      for (std::size_t i = 0; i < n; ++i) batch.push_back(train[order[off + i]]);
      pred.zero_grad();
      num::Tape t;
      num::Var loss = pref::preference_loss(t, pred, batch, eps, true);
      t.backward(loss);
      opt.step(params);
      loss_sum += t.value(loss)[0] * static_cast<double>(n);
    }
    const double train_mean = loss_sum / static_cast<double>(train.size());
    const double val_mean = batched_loss_value(pred, val, eps, 256);
    res.curve.train_loss.push_back(train_mean);
    res.curve.val_loss.push_back(val_mean);
    res.curve.epochs_run = epoch;
    if (should_stop(train_mean, val_mean, epoch, cfg)) break;
  }
  res.curve.final_val_loss = res.curve.val_loss.back();
  return res;
}

const pref::PredictorConfig& EnsemblePredictor::config() const {
  if (members.empty())
    throw std::logic_error("EnsemblePredictor: no members");
  return members.front().config();
}

std::vector<double> EnsemblePredictor::predict_step_rewards(
    const pref::TrajectorySegment& s) {
  if (members.empty())
    throw std::logic_error("EnsemblePredictor: no members");
  std::vector<double> acc = members[0].predict_step_rewards(s);
  for (std::size_t m = 1; m < members.size(); ++m) {
    std::vector<double> r = members[m].predict_step_rewards(s);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += r[i];
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (double& v : acc) v *= inv;
  return acc;
}

std::vector<double> EnsemblePredictor::window_rewards(
    const num::DenseArray& rows, std::span<const std::size_t> lengths) {
  if (members.empty())
    throw std::logic_error("EnsemblePredictor: no members");
  std::vector<double> acc(lengths.size(), 0.0);
  for (auto& m : members) {
    num::Tape t;
    num::Var r = m.window_rewards(t, rows, lengths, false);
    const num::DenseArray& v = t.value(r);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (double& v : acc) v *= inv;
  return acc;
}

pref::NormStats compute_norm_stats(std::span<const PreferenceTriple> data,
                                   const pref::PredictorConfig& pcfg) {
  const std::size_t f = pcfg.feature_dim;
  pref::NormStats st;
  st.mean = num::DenseArray({f});
  st.std = num::DenseArray({f});
  std::size_t count = 0;
  std::vector<double> row(f);
  // Two-pass: exact mean, then centered second moment, in dataset order.
  for (const auto& tr : data) {
    for (const pref::TrajectorySegment* s : {&tr.a, &tr.b}) {
      for (std::size_t t = 0; t < s->length(); ++t) {
        s->write_features(t, pcfg.include_actions, row.data());
        for (std::size_t j = 0; j < f; ++j) st.mean[j] += row[j];
        ++count;
      }
    }
  }
  if (count == 0)
    throw std::invalid_argument("compute_norm_stats: empty dataset");
  for (std::size_t j = 0; j < f; ++j) st.mean[j] /= static_cast<double>(count);
  for (const auto& tr : data) {
    for (const pref::TrajectorySegment* s : {&tr.a, &tr.b}) {
      for (std::size_t t = 0; t < s->length(); ++t) {
        s->write_features(t, pcfg.include_actions, row.data());
        for (std::size_t j = 0; j < f; ++j) {
          const double d = row[j] - st.mean[j];
          st.std[j] += d * d;
        }
      }
    }
  }
  for (std::size_t j = 0; j < f; ++j)
    st.std[j] = std::max(std::sqrt(st.std[j] / static_cast<double>(count)), 1e-8);
  return st;
}

EnsembleTrainOutcome train_ensemble(const pref::PredictorConfig& pcfg,
                                    const TrainerConfig& cfg,
                                    std::span<const PreferenceTriple> data,
                                    std::uint64_t seed) {
  cfg.validate();
  pref::PredictorConfig pc = pcfg;
  if (pc.feature_dim == 0 && !data.empty())
    pc.feature_dim = data[0].a.feature_dim(pc.include_actions);
  pc.validate();
  if (data.size() < 2)
    throw std::invalid_argument("train_ensemble: need at least 2 triples");
  for (const auto& tr : data) {
    tr.validate();
    if (tr.a.feature_dim(pc.include_actions) != pc.feature_dim ||
        tr.b.feature_dim(pc.include_actions) != pc.feature_dim)
      throw std::invalid_argument("train_ensemble: feature dim mismatch");
  }

  RandomStream split_rng(num::derive_seed(seed, "split"));
  SplitIndices split = split_dataset(data.size(), cfg, split_rng);

  std::vector<PreferenceTriple> train_set, val_set;
  train_set.reserve(split.train.size());
  val_set.reserve(split.val.size());
  for (auto i : split.train) train_set.push_back(data[i]);
  for (auto i : split.val) val_set.push_back(data[i]);

  const pref::NormStats norm = compute_norm_stats(train_set, pc);

  EnsembleTrainOutcome out;
  std::vector<RewardPredictor> pool;
  pool.reserve(cfg.pool_size);
  for (std::size_t m = 0; m < cfg.pool_size; ++m) {
    MemberResult r = train_member(pc, cfg, train_set, val_set, norm,
                                  num::derive_seed(seed, "member", m));
    out.pool_val_losses.push_back(r.curve.final_val_loss);
    out.curves.push_back(std::move(r.curve));
    pool.push_back(std::move(r.predictor));
  }

  out.selected = select_members(out.pool_val_losses, cfg.ensemble_size);
  for (std::size_t idx : out.selected) {
    out.ensemble.members.push_back(std::move(pool[idx]));
    out.ensemble.val_losses.push_back(out.pool_val_losses[idx]);
  }
  return out;
}

std::vector<std::size_t> select_members(std::span<const double> val_losses,
                                        std::size_t k) {
  if (k > val_losses.size())
    throw std::invalid_argument("select_members: k exceeds pool size");
  std::vector<std::size_t> rank(val_losses.size());
  for (std::size_t i = 0; i < rank.size(); ++i) rank[i] = i;
  std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
    if (val_losses[a] != val_losses[b]) return val_losses[a] < val_losses[b];
    return a < b;
  });
  rank.resize(k);
  return rank;
}

}  // namespace lapp::trainer
