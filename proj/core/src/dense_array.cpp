#include "lapp/numerics/dense_array.hpp"

#include <cmath>

namespace lapp::num {

DenseArray sinusoidal_position_encoding(std::size_t max_len, std::size_t dim) {
  DenseArray pe({max_len, dim});
  for (std::size_t t = 0; t < max_len; ++t) {
    for (std::size_t i = 0; 2 * i < dim; ++i) {
      const double rate =
          std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
      const double arg = static_cast<double>(t) * rate;
      pe.at(t, 2 * i) = std::sin(arg);
      if (2 * i + 1 < dim) pe.at(t, 2 * i + 1) = std::cos(arg);
    }
  }
  return pe;
}

}  // namespace lapp::num
