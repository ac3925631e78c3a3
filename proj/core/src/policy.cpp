#include "lapp/rl/policy.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace lapp::rl {

using num::DenseArray;
using num::Parameter;
using num::RandomStream;
using num::Tape;
using num::Var;

void PolicyConfig::validate() const {
  for (std::size_t h : hidden)
    if (h == 0) throw std::invalid_argument("PolicyConfig: zero-width hidden layer");
  if (!(lr > 0.0)) throw std::invalid_argument("PolicyConfig: lr must be positive");
  if (!(logstd_min <= logstd_max))
    throw std::invalid_argument("PolicyConfig: logstd_min must not exceed logstd_max");
  if (!std::isfinite(init_logstd))
    throw std::invalid_argument("PolicyConfig: init_logstd must be finite");
}

namespace {

DenseArray gaussian_init(RandomStream& rng, std::vector<std::size_t> shape,
                         double sd) {
  DenseArray a(std::move(shape));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.gaussian() * sd;
  return a;
}

double neg_half_log_2pi(std::size_t action_dim) {
  return -0.5 * static_cast<double>(action_dim) *
         std::log(2.0 * std::numbers::pi);
}

void check_obs(const DenseArray& obs, std::size_t obs_dim, const char* who) {
  if (obs.rank() != 2 || obs.cols() != obs_dim)
    throw std::invalid_argument(std::string(who) +
                                ": expected observations (batch, " +
                                std::to_string(obs_dim) + "), got " +
                                obs.shape_str());
}

}  // namespace

PolicyBundle::PolicyBundle(std::size_t obs_dim, std::size_t action_dim,
                           PolicyConfig cfg, std::uint64_t seed)
    : obs_dim_(obs_dim),
      action_dim_(action_dim),
      cfg_(std::move(cfg)),
      norm_(obs_dim),
      opt_(num::AdamConfig{.lr = cfg_.lr}) {
  if (obs_dim == 0 || action_dim == 0)
    throw std::invalid_argument("PolicyBundle: zero obs or action dimension");
  cfg_.validate();

  RandomStream rng(seed);
  auto add = [&](std::string name, DenseArray v) {
    params_.emplace_back(std::move(name), std::move(v));
  };
  // Output heads start near zero (tiny for the action mean) so the initial
  // policy is close to a centered unit Gaussian whatever the trunk does.
  auto add_trunk = [&](const std::string& prefix, std::size_t out_dim,
                       double out_sd) {
    std::size_t in = obs_dim_;
    for (std::size_t li = 0; li < cfg_.hidden.size(); ++li) {
      const std::size_t out = cfg_.hidden[li];
      add(prefix + ".w" + std::to_string(li),
          gaussian_init(rng, {in, out}, 1.0 / std::sqrt(static_cast<double>(in))));
      add(prefix + ".b" + std::to_string(li), DenseArray({out}));
      in = out;
    }
    add(prefix + ".out.w", gaussian_init(rng, {in, out_dim}, out_sd));
    add(prefix + ".out.b", DenseArray({out_dim}));
  };

  add_trunk("pi", action_dim_, 0.01);
  value_offset_ = params_.size();
  add_trunk("vf", 1, 1.0 / std::sqrt(static_cast<double>(
                       cfg_.hidden.empty() ? obs_dim_ : cfg_.hidden.back())));
  add("logstd", DenseArray::full({action_dim_}, cfg_.init_logstd));
}

std::vector<Parameter*> PolicyBundle::params() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> PolicyBundle::params() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

void PolicyBundle::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Var PolicyBundle::param_or_leaf(Tape& t, Parameter& p, bool with_grad) {
  return with_grad ? t.param(p) : t.leaf(p.value);
}

Var PolicyBundle::trunk(Tape& t, Var x, std::size_t first_param,
                        std::size_t out_dim, bool with_grad) {
  (void)out_dim;
  std::size_t pi = first_param;
  Var h = x;
  for (std::size_t li = 0; li < cfg_.hidden.size(); ++li) {
    Parameter& w = params_[pi++];
    Parameter& b = params_[pi++];
    h = t.elu(t.add_rowvec(t.matmul(h, param_or_leaf(t, w, with_grad)),
                           param_or_leaf(t, b, with_grad)));
  }
  Parameter& w = params_[pi++];
  Parameter& b = params_[pi++];
  return t.add_rowvec(t.matmul(h, param_or_leaf(t, w, with_grad)),
                      param_or_leaf(t, b, with_grad));
}

PolicyGraph PolicyBundle::forward(Tape& t, const DenseArray& obs,
                                  bool with_grad) {
  check_obs(obs, obs_dim_, "PolicyBundle::forward");
  PolicyGraph g;
  g.batch = obs.rows();
  Var x = t.leaf(obs);
  g.mean = trunk(t, x, 0, action_dim_, with_grad);
  Var v = trunk(t, x, value_offset_, 1, with_grad);
  g.value = t.reshape(v, {g.batch});
  g.logstd = t.clamp(param_or_leaf(t, params_.back(), with_grad),
                     cfg_.logstd_min, cfg_.logstd_max);
  return g;
}

Var PolicyBundle::log_prob(Tape& t, const PolicyGraph& g,
                           const DenseArray& actions) {
  if (actions.rank() != 2 || actions.rows() != g.batch ||
      actions.cols() != action_dim_)
    throw std::invalid_argument("PolicyBundle::log_prob: actions shape " +
                                actions.shape_str() + " does not match batch");
  Var inv_sigma = t.exp(t.neg(g.logstd));                 // (A,)
  Var z = t.mul_rowvec(t.sub(t.leaf(actions), g.mean), inv_sigma);
  Var q = t.matmul(t.square(z), t.leaf(DenseArray::full({action_dim_, 1}, 1.0)));
  Var half = t.scale(q, -0.5);                            // (B,1)
  Var shifted = t.add_rowvec(half, t.neg(t.sum(g.logstd)));
  return t.reshape(t.add_scalar(shifted, neg_half_log_2pi(action_dim_)),
                   {g.batch});
}

Var PolicyBundle::entropy(Tape& t, const PolicyGraph& g) {
  const double c = 0.5 * static_cast<double>(action_dim_) *
                   (1.0 + std::log(2.0 * std::numbers::pi));
  return t.add_scalar(t.sum(g.logstd), c);
}

PolicyBundle::Sample PolicyBundle::act(const DenseArray& obs,
                                       RandomStream& rng) {
  check_obs(obs, obs_dim_, "PolicyBundle::act");
  Tape t;
  PolicyGraph g = forward(t, obs, /*with_grad=*/false);
  const DenseArray& mean = t.value(g.mean);
  const DenseArray& ls = t.value(g.logstd);

  const std::size_t b = obs.rows();
  const std::size_t a = action_dim_;
  Sample out;
  out.actions = DenseArray({b, a});
  out.log_probs = DenseArray({b});
  out.values = t.value(g.value);

  // The log-prob arithmetic below replays the log_prob() tape ops term for
  // term (same operands, same order), so ratios start at exactly 1.
  std::vector<double> inv_sigma(a);
  double sum_ls = 0.0;
  for (std::size_t j = 0; j < a; ++j) {
    inv_sigma[j] = std::exp(-ls[j]);
    sum_ls += ls[j];
  }
  const double shift = neg_half_log_2pi(a);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t j = 0; j < a; ++j) {
      const double sigma = std::exp(ls[j]);
      out.actions.at(r, j) = mean.at(r, j) + sigma * rng.gaussian();
    }
    double q = 0.0;
    for (std::size_t j = 0; j < a; ++j) {
      const double z = (out.actions.at(r, j) - mean.at(r, j)) * inv_sigma[j];
      q += (z * z) * 1.0;
    }
    out.log_probs[r] = (q * -0.5 + -sum_ls) + shift;
  }
  return out;
}

DenseArray PolicyBundle::act_mean(const DenseArray& obs) {
  check_obs(obs, obs_dim_, "PolicyBundle::act_mean");
  Tape t;
  PolicyGraph g = forward(t, obs, /*with_grad=*/false);
  return t.value(g.mean);
}

DenseArray PolicyBundle::values(const DenseArray& obs) {
  check_obs(obs, obs_dim_, "PolicyBundle::values");
  Tape t;
  PolicyGraph g = forward(t, obs, /*with_grad=*/false);
  return t.value(g.value);
}

}  // namespace lapp::rl
