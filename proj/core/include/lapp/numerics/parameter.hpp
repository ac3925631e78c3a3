#pragma once

#include <string>

#include "lapp/numerics/dense_array.hpp"

namespace lapp::num {

// Trainable tensor. Gradients accumulate across tape backward passes until
// zero_grad(); the optimizer never mutates grad.
struct Parameter {
  std::string name;
  DenseArray value;
  DenseArray grad;

  Parameter() = default;
  Parameter(std::string n, DenseArray v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
};

}  // namespace lapp::num
