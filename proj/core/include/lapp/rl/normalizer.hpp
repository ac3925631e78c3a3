#pragma once

#include <cstddef>

#include "lapp/numerics/dense_array.hpp"

namespace lapp::rl {

// Running per-feature mean/variance over observation rows (Welford, row by
// row in presentation order, so the statistics are reproduction-exact).
// Count is kept as float64 so checkpoints stay pure float arrays; exact for
// any realistic step count.
class RunningNormalizer {
 public:
  RunningNormalizer() = default;
  explicit RunningNormalizer(std::size_t dim);

  std::size_t dim() const { return dim_; }
  double count() const { return count_; }

  // rows: (n, dim) batch or a single (dim,) observation.
  void update(const num::DenseArray& rows);

  // (x - mean) / max(sqrt(var), 1e-8); identity until two rows are seen.
  num::DenseArray normalize(const num::DenseArray& rows) const;

  const num::DenseArray& mean() const { return mean_; }
  const num::DenseArray& m2() const { return m2_; }
  void restore(num::DenseArray mean, num::DenseArray m2, double count);

 private:
  std::size_t dim_ = 0;
  double count_ = 0.0;
  num::DenseArray mean_;  // (dim,)
  num::DenseArray m2_;    // (dim,) sum of squared deviations
};

}  // namespace lapp::rl
