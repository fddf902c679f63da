#pragma once

#include <cassert>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace treebp {

// Thrown when tensor extents do not match an operation's contract.
// The message names the offending dimension.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or truncated external data (dataset files, checkpoints).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid model/plan configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense N-dimensional array, row-major with the last index fastest.
// All extents are >= 1 and product(shape) == data size by construction.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    std::size_t n = 1;
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (shape_[i] == 0) {
        throw ShapeError("tensor extent " + std::to_string(i) + " must be >= 1");
      }
      n *= shape_[i];
    }
    data_.assign(n, T(0));
  }

  static Tensor full(std::vector<std::size_t> shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t dim) const { return shape_.at(dim); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t flat) {
    assert(flat < data_.size());
    return data_[flat];
  }
  const T& operator[](std::size_t flat) const {
    assert(flat < data_.size());
    return data_[flat];
  }

  template <typename... Ix>
  T& operator()(Ix... ix) {
    return data_[flat_index(ix...)];
  }
  template <typename... Ix>
  const T& operator()(Ix... ix) const {
    return data_[flat_index(ix...)];
  }

  template <typename... Ix>
  std::size_t flat_index(Ix... ix) const {
    assert(sizeof...(Ix) == shape_.size());
    const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
    std::size_t flat = 0;
    for (std::size_t d = 0; d < sizeof...(Ix); ++d) {
      assert(idx[d] < shape_[d]);
      flat = flat * shape_[d] + idx[d];
    }
    return flat;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

}  // namespace treebp
