#include "lapp/rl/normalizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lapp::rl {

using num::DenseArray;

namespace {

void check_row_shape(const DenseArray& rows, std::size_t dim, const char* who) {
  if (rows.rank() > 2 || rows.cols() != dim)
    throw std::invalid_argument(std::string(who) + ": expected rows of width " +
                                std::to_string(dim) + ", got shape " +
                                rows.shape_str());
}

}  // namespace

RunningNormalizer::RunningNormalizer(std::size_t dim)
    : dim_(dim), mean_({dim}), m2_({dim}) {
  if (dim == 0)
    throw std::invalid_argument("RunningNormalizer: dim must be positive");
}

void RunningNormalizer::update(const DenseArray& rows) {
  check_row_shape(rows, dim_, "RunningNormalizer::update");
  const double* p = rows.data();
  for (std::size_t r = 0; r < rows.rows(); ++r) {
    count_ += 1.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const double x = p[r * dim_ + j];
      const double d = x - mean_[j];
      mean_[j] += d / count_;
      m2_[j] += d * (x - mean_[j]);
    }
  }
}

DenseArray RunningNormalizer::normalize(const DenseArray& rows) const {
  check_row_shape(rows, dim_, "RunningNormalizer::normalize");
  DenseArray out = rows;
  if (count_ < 2.0) return out;
  double* p = out.data();
  for (std::size_t j = 0; j < dim_; ++j) {
    const double sd = std::sqrt(m2_[j] / count_);
    const double denom = sd < 1e-8 ? 1e-8 : sd;
    for (std::size_t r = 0; r < out.rows(); ++r)
      p[r * dim_ + j] = (p[r * dim_ + j] - mean_[j]) / denom;
  }
  return out;
}

void RunningNormalizer::restore(DenseArray mean, DenseArray m2, double count) {
  if (mean.size() != dim_ || m2.size() != dim_)
    throw std::invalid_argument("RunningNormalizer::restore: dim mismatch");
  if (!(count >= 0.0))
    throw std::invalid_argument("RunningNormalizer::restore: bad count");
  mean_ = std::move(mean);
  m2_ = std::move(m2);
  count_ = count;
}

}  // namespace lapp::rl
