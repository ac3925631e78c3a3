#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lapp/numerics/parameter.hpp"

namespace lapp::num {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moment slots align with the parameter list passed to
// step(); the list must keep the same order and shapes across calls.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::size_t step_count() const { return step_; }

  // Applies one update from p->grad; gradients are left untouched.
  // Throws std::runtime_error naming the parameter on non-finite gradients.
  void step(std::span<Parameter* const> params);

  // Serialization hooks for checkpoints.
  std::vector<DenseArray>& first_moments() { return m_; }
  std::vector<DenseArray>& second_moments() { return v_; }
  const std::vector<DenseArray>& first_moments() const { return m_; }
  const std::vector<DenseArray>& second_moments() const { return v_; }
  void set_step_count(std::size_t s) { step_ = s; }
  AdamConfig& config_mut() { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<DenseArray> m_, v_;
  std::size_t step_ = 0;
};

}  // namespace lapp::num
