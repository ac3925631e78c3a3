#include "lapp/numerics/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lapp::num {

void AdamState::step(std::span<Parameter* const> params) {
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Parameter* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != params.size())
    throw std::runtime_error("AdamState: parameter list size changed");

  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    if (!p.value.same_shape(m_[pi]))
      throw std::runtime_error("AdamState: shape changed for " + p.name);
    double* w = p.value.data();
    const double* g = p.grad.data();
    double* m = m_[pi].data();
    double* v = v_[pi].data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw std::runtime_error("AdamState: non-finite gradient in " + p.name);
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace lapp::num
