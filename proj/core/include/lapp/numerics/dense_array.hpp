#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lapp::num {

// Row-major dense array of float64. Rank 1 or 2 covers everything in this
// codebase; higher-rank data is kept flattened with explicit extents passed
// alongside.
class DenseArray {
 public:
  DenseArray() = default;

  explicit DenseArray(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    data_.assign(count(shape_), 0.0);
  }

  DenseArray(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_))
      throw std::invalid_argument("DenseArray: data size does not match shape");
  }

  static DenseArray zeros(std::size_t rows, std::size_t cols) {
    return DenseArray({rows, cols});
  }
  static DenseArray zeros(std::size_t n) { return DenseArray({n}); }

  static DenseArray full(std::vector<std::size_t> shape, double v) {
    DenseArray a(std::move(shape));
    a.fill(v);
    return a;
  }

  static DenseArray scalar(double v) {
    DenseArray a({std::size_t{1}});
    a.data_[0] = v;
    return a;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-2 accessors; rank-1 arrays behave as a single row.
  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const {
    if (rank() == 2) return shape_[1];
    if (rank() == 1) return shape_[0];
    return 0;
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(double v) {
    for (auto& x : data_) x = v;
  }

  bool same_shape(const DenseArray& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + ")";
  }

 private:
  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Sinusoidal table: row t, column 2i = sin(t / 10000^(2i/dim)), column
// 2i+1 = cos of the same argument. Odd dims get a trailing sin column.
DenseArray sinusoidal_position_encoding(std::size_t max_len, std::size_t dim);

}  // namespace lapp::num
