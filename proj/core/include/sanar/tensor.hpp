#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "sanar/error.hpp"

namespace sanar {

/// Dense row-major tensor.  Rank 1 and 2 are what the model uses; the
/// shape is kept generic so serialization stays uniform.
template <typename S>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), S(0)) {}
  Tensor(std::vector<std::size_t> shape, std::vector<S> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_))
      throw ShapeMismatch("tensor data does not match shape");
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  static Tensor row_vector(std::initializer_list<S> vals) {
    return Tensor({1, vals.size()}, std::vector<S>(vals));
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }

  S& operator[](std::size_t i) { return data_[i]; }
  const S& operator[](std::size_t i) const { return data_[i]; }

  S& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const S& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  S* row(std::size_t r) { return data_.data() + r * cols(); }
  const S* row(std::size_t r) const { return data_.data() + r * cols(); }

  void fill(S v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<T>(data_[i]);
    return out;
  }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<S> data_;
};

template <typename S>
std::string shape_string(const Tensor<S>& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.shape().size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape()[i]);
  }
  return s + "]";
}

}  // namespace sanar
