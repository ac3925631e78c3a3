#pragma once

// Central finite-difference gradient oracle. Deliberately knows nothing about
// how the tape computes gradients: it re-evaluates the scalar forward with
// perturbed parameter entries and compares slopes.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lapp/numerics/parameter.hpp"
#include "lapp/numerics/tape.hpp"

namespace fd {

struct Mismatch {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel = 0.0;
};

inline double rel_err(double a, double b) {
  const double denom = std::max(std::fabs(a), std::fabs(b));
  if (denom == 0.0) return 0.0;
  return std::fabs(a - b) / denom;
}

// Mixed comparison: relative tolerance for meaningful gradients, absolute
// floor where the gradient is so small that central differences only see
// their own cancellation noise.
inline bool grads_match(double analytic, double numeric, double rel_tol,
                        double abs_tol) {
  const double diff = std::fabs(analytic - numeric);
  return diff <= std::max(rel_tol * std::max(std::fabs(analytic),
                                             std::fabs(numeric)),
                          abs_tol);
}

// build must construct a fresh forward pass over the given tape, reading the
// current parameter values, and return a scalar Var.
inline std::vector<Mismatch> check_gradients(
    std::vector<lapp::num::Parameter*> params,
    const std::function<lapp::num::Var(lapp::num::Tape&)>& build,
    double tol = 1e-4, double h = 1e-5, double abs_tol = 1e-8) {
  using lapp::num::Tape;
  using lapp::num::Var;

  for (auto* p : params) p->zero_grad();
  {
    Tape t;
    Var r = build(t);
    t.backward(r);
  }

  auto eval = [&]() {
    Tape t;
    Var r = build(t);
    return t.value(r)[0];
  };

  std::vector<Mismatch> bad;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double fp = eval();
      p->value[i] = saved - h;
      const double fm = eval();
      p->value[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = p->grad[i];
      if (!grads_match(analytic, numeric, tol, abs_tol))
        bad.push_back({p->name, i, analytic, numeric, rel_err(analytic, numeric)});
    }
  }
  return bad;
}

}  // namespace fd
