#include "lapp/preference/predictor.hpp"

#include <algorithm>
#include <stdexcept>

namespace lapp::pref {

using num::DenseArray;
using num::Parameter;
using num::RandomStream;
using num::Tape;
using num::Var;

void PredictorConfig::validate() const {
  if (mode == PredictorMode::markovian) {
    if (context_length != 1)
      throw std::invalid_argument(
          "PredictorConfig: markovian mode requires context_length == 1");
  } else {
    if (context_length < 1)
      throw std::invalid_argument("PredictorConfig: context_length must be >= 1");
    if (mlp_variant)
      throw std::invalid_argument(
          "PredictorConfig: mlp_variant scores steps independently and "
          "requires markovian mode");
  }
  if (!mlp_variant) {
    if (width == 0 || heads == 0 || width % heads != 0)
      throw std::invalid_argument(
          "PredictorConfig: width must be a positive multiple of heads");
    if (blocks == 0)
      throw std::invalid_argument("PredictorConfig: blocks must be >= 1");
  }
  if (label_noise_eps < 0.0 || label_noise_eps >= 0.5)
    throw std::invalid_argument(
        "PredictorConfig: label_noise_eps must lie in [0, 0.5)");
  if (feature_dim == 0)
    throw std::invalid_argument("PredictorConfig: feature_dim not set");
}

namespace {

DenseArray gaussian_init(RandomStream& rng, std::vector<std::size_t> shape,
                         double std_dev) {
  DenseArray a(std::move(shape));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std_dev * rng.gaussian();
  return a;
}

constexpr double kInitStd = 0.02;

}  // namespace

RewardPredictor::RewardPredictor(PredictorConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  RandomStream rng(seed);
  const std::size_t f = cfg_.feature_dim;

  auto add = [&](const std::string& name, DenseArray v) {
    params_.emplace_back(name, std::move(v));
  };

  if (cfg_.mlp_variant) {
    std::size_t in = f;
    for (std::size_t li = 0; li < cfg_.mlp_hidden.size(); ++li) {
      const std::size_t out = cfg_.mlp_hidden[li];
      const double sd = 1.0 / std::sqrt(static_cast<double>(in));
      add("mlp" + std::to_string(li) + ".w", gaussian_init(rng, {in, out}, sd));
      add("mlp" + std::to_string(li) + ".b", DenseArray({out}));
      in = out;
    }
    add("dec.w", DenseArray({in, 1}));  // zero: untrained reward is 0
    add("dec.b", DenseArray({std::size_t{1}}));
    return;
  }

  const std::size_t d = cfg_.width;
  add("embed.w", gaussian_init(rng, {f, d}, kInitStd));
  add("embed.b", DenseArray({d}));
  for (std::size_t bi = 0; bi < cfg_.blocks; ++bi) {
    const std::string p = "block" + std::to_string(bi) + ".";
    add(p + "ln1.g", DenseArray::full({d}, 1.0));
    add(p + "ln1.b", DenseArray({d}));
    add(p + "attn.wq", gaussian_init(rng, {d, d}, kInitStd));
    add(p + "attn.bq", DenseArray({d}));
    add(p + "attn.wk", gaussian_init(rng, {d, d}, kInitStd));
    add(p + "attn.bk", DenseArray({d}));
    add(p + "attn.wv", gaussian_init(rng, {d, d}, kInitStd));
    add(p + "attn.bv", DenseArray({d}));
    add(p + "attn.wo", gaussian_init(rng, {d, d}, kInitStd));
    add(p + "attn.bo", DenseArray({d}));
    add(p + "ln2.g", DenseArray::full({d}, 1.0));
    add(p + "ln2.b", DenseArray({d}));
    add(p + "mlp.w1", gaussian_init(rng, {d, 4 * d}, kInitStd));
    add(p + "mlp.b1", DenseArray({4 * d}));
    add(p + "mlp.w2", gaussian_init(rng, {4 * d, d}, kInitStd));
    add(p + "mlp.b2", DenseArray({d}));
  }
  add("lnf.g", DenseArray::full({d}, 1.0));
  add("lnf.b", DenseArray({d}));
  add("dec.w", DenseArray({d, 1}));  // zero: untrained reward is 0
  add("dec.b", DenseArray({std::size_t{1}}));

  pos_enc_ = num::sinusoidal_position_encoding(cfg_.context_length, d);
}

std::vector<Parameter*> RewardPredictor::params() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> RewardPredictor::params() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

void RewardPredictor::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Var RewardPredictor::param_or_leaf(Tape& t, Parameter& p, bool with_grad) {
  return with_grad ? t.param(p) : t.leaf(p.value);
}

// One transformer (or MLP) pass over n_seq windows of equal length w packed
// into rows (n_seq*w, F). Returns flattened (n_seq*w, 1) step scores.
Var RewardPredictor::forward_group(Tape& t, const DenseArray& rows,
                                   std::size_t n_seq, std::size_t w,
                                   bool with_grad) {
  std::size_t pi = 0;
  auto next = [&](const char* tag) -> Parameter& {
    (void)tag;
    return params_[pi++];
  };

  Var x = t.leaf(rows);

  if (cfg_.mlp_variant) {
    Var h = x;
    for (std::size_t li = 0; li < cfg_.mlp_hidden.size(); ++li) {
      Parameter& wgt = next("w");
      Parameter& b = next("b");
      h = t.gelu(t.add_rowvec(t.matmul(h, param_or_leaf(t, wgt, with_grad)),
                              param_or_leaf(t, b, with_grad)));
    }
    Parameter& dw = next("dec.w");
    Parameter& db = next("dec.b");
    return t.add_rowvec(t.matmul(h, param_or_leaf(t, dw, with_grad)),
                        param_or_leaf(t, db, with_grad));
  }

  Parameter& ew = next("embed.w");
  Parameter& eb = next("embed.b");
  Var h = t.add_rowvec(t.matmul(x, param_or_leaf(t, ew, with_grad)),
                       param_or_leaf(t, eb, with_grad));

  // Window-relative sinusoidal positions, tiled across the group.
  const std::size_t d = cfg_.width;
  DenseArray pe({n_seq * w, d});
  for (std::size_t s = 0; s < n_seq; ++s)
    for (std::size_t i = 0; i < w; ++i)
      for (std::size_t j = 0; j < d; ++j)
        pe[(s * w + i) * d + j] = pos_enc_.at(i, j);
  h = t.add(h, t.leaf(std::move(pe)));

  const bool causal = cfg_.mode == PredictorMode::non_markovian;
  for (std::size_t bi = 0; bi < cfg_.blocks; ++bi) {
    Parameter& ln1g = next("ln1.g");
    Parameter& ln1b = next("ln1.b");
    Var a = t.layer_norm(h, param_or_leaf(t, ln1g, with_grad),
                         param_or_leaf(t, ln1b, with_grad));
    Parameter& wq = next("wq");
    Parameter& bq = next("bq");
    Parameter& wk = next("wk");
    Parameter& bk = next("bk");
    Parameter& wv = next("wv");
    Parameter& bv = next("bv");
    Var q = t.add_rowvec(t.matmul(a, param_or_leaf(t, wq, with_grad)),
                         param_or_leaf(t, bq, with_grad));
    Var k = t.add_rowvec(t.matmul(a, param_or_leaf(t, wk, with_grad)),
                         param_or_leaf(t, bk, with_grad));
    Var v = t.add_rowvec(t.matmul(a, param_or_leaf(t, wv, with_grad)),
                         param_or_leaf(t, bv, with_grad));
    Var att = t.attention(q, k, v, n_seq, w, cfg_.heads, causal);
    Parameter& wo = next("wo");
    Parameter& bo = next("bo");
    h = t.add(h, t.add_rowvec(t.matmul(att, param_or_leaf(t, wo, with_grad)),
                              param_or_leaf(t, bo, with_grad)));

    Parameter& ln2g = next("ln2.g");
    Parameter& ln2b = next("ln2.b");
    Var m = t.layer_norm(h, param_or_leaf(t, ln2g, with_grad),
                         param_or_leaf(t, ln2b, with_grad));
    Parameter& w1 = next("w1");
    Parameter& b1 = next("b1");
    Parameter& w2 = next("w2");
    Parameter& b2 = next("b2");
    m = t.gelu(t.add_rowvec(t.matmul(m, param_or_leaf(t, w1, with_grad)),
                            param_or_leaf(t, b1, with_grad)));
    m = t.add_rowvec(t.matmul(m, param_or_leaf(t, w2, with_grad)),
                     param_or_leaf(t, b2, with_grad));
    h = t.add(h, m);
  }

  Parameter& lnfg = next("lnf.g");
  Parameter& lnfb = next("lnf.b");
  h = t.layer_norm(h, param_or_leaf(t, lnfg, with_grad),
                   param_or_leaf(t, lnfb, with_grad));
  Parameter& dw = next("dec.w");
  Parameter& db = next("dec.b");
  return t.add_rowvec(t.matmul(h, param_or_leaf(t, dw, with_grad)),
                      param_or_leaf(t, db, with_grad));
}

Var RewardPredictor::window_rewards(Tape& t, const DenseArray& rows,
                                    std::span<const std::size_t> lengths,
                                    bool with_grad) {
  if (cfg_.feature_dim == 0 || rows.cols() != cfg_.feature_dim)
    throw std::invalid_argument("RewardPredictor: feature dimension mismatch: got " +
                                std::to_string(rows.cols()) + ", expected " +
                                std::to_string(cfg_.feature_dim));
  std::size_t total = 0;
  for (std::size_t w : lengths) {
    if (w == 0 || w > cfg_.context_length)
      throw std::invalid_argument("RewardPredictor: bad window length");
    total += w;
  }
  if (total != rows.rows())
    throw std::invalid_argument("RewardPredictor: rows do not match lengths");

  // Standardize outside the tape; inputs are constants.
  DenseArray std_rows = rows;
  if (!norm_.empty()) {
    if (norm_.mean.size() != cfg_.feature_dim)
      throw std::invalid_argument("RewardPredictor: norm stats dim mismatch");
    const std::size_t f = cfg_.feature_dim;
    for (std::size_t i = 0; i < std_rows.rows(); ++i)
      for (std::size_t j = 0; j < f; ++j)
        std_rows[i * f + j] = (std_rows[i * f + j] - norm_.mean[j]) / norm_.std[j];
  }

  const std::size_t n_windows = lengths.size();
  // Group windows by length; each group runs as one batched pass.
  std::vector<std::size_t> row_start(n_windows);
  {
    std::size_t o = 0;
    for (std::size_t i = 0; i < n_windows; ++i) {
      row_start[i] = o;
      o += lengths[i];
    }
  }

  Var out;  // (n_windows,), assembled by scatter-adds over disjoint groups
  bool first = true;
  for (std::size_t w = 1; w <= cfg_.context_length; ++w) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n_windows; ++i)
      if (lengths[i] == w) members.push_back(i);
    if (members.empty()) continue;

    const std::size_t f = cfg_.feature_dim;
    DenseArray grp({members.size() * w, f});
    for (std::size_t gi = 0; gi < members.size(); ++gi) {
      const double* src = std_rows.data() + row_start[members[gi]] * f;
      std::copy(src, src + w * f, grp.data() + gi * w * f);
    }

    Var scores = forward_group(t, grp, members.size(), w, with_grad);
    // Last position of each window carries the step reward.
    std::vector<std::size_t> last(members.size());
    for (std::size_t gi = 0; gi < members.size(); ++gi) last[gi] = gi * w + w - 1;
    Var rw = t.reshape(t.gather_rows(scores, last), {members.size()});
    Var scattered = t.scatter_to(rw, members, n_windows);
    out = first ? scattered : t.add(out, scattered);
    first = false;
  }
  return out;
}

std::vector<double> RewardPredictor::predict_step_rewards(
    const TrajectorySegment& s) {
  const TrajectorySegment* one[] = {&s};
  WindowBatch wb = build_window_batch(one, cfg_);
  Tape t;
  Var r = window_rewards(t, wb.rows, wb.lengths, false);
  const DenseArray& v = t.value(r);
  return std::vector<double>(v.data(), v.data() + v.size());
}

WindowBatch build_window_batch(std::span<const TrajectorySegment* const> segs,
                               const PredictorConfig& cfg) {
  const std::size_t f = cfg.feature_dim;
  std::size_t total_rows = 0, total_windows = 0;
  for (const auto* s : segs) {
    const std::size_t h = s->length();
    total_windows += h;
    for (std::size_t t = 0; t < h; ++t)
      total_rows += std::min(cfg.context_length, t + 1);
  }

  WindowBatch wb;
  wb.rows = DenseArray({total_rows, f});
  wb.lengths.reserve(total_windows);
  wb.owner.reserve(total_windows);

  std::size_t ro = 0;
  for (std::size_t si = 0; si < segs.size(); ++si) {
    const TrajectorySegment& s = *segs[si];
    if (s.feature_dim(cfg.include_actions) != f)
      throw std::invalid_argument(
          "build_window_batch: segment feature dim mismatch");
    const std::size_t h = s.length();
    // Per-step features once, then windows copy slices.
    DenseArray feats({h, f});
    for (std::size_t t = 0; t < h; ++t)
      s.write_features(t, cfg.include_actions, feats.data() + t * f);
    for (std::size_t t = 0; t < h; ++t) {
      const std::size_t w = std::min(cfg.context_length, t + 1);
      const std::size_t begin = t + 1 - w;
      std::copy(feats.data() + begin * f, feats.data() + (t + 1) * f,
                wb.rows.data() + ro * f);
      ro += w;
      wb.lengths.push_back(w);
      wb.owner.push_back(si);
    }
  }
  return wb;
}

}  // namespace lapp::pref
