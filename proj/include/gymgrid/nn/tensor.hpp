#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gymgrid::nn {

/// (batch, channels, height, width).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  /// Elements per batch entry.
  std::size_t sample_size() const noexcept {
    return static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense NCHW array.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{}) : shape_(shape), data_(shape.size(), fill) {
    check_dims(shape);
  }
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    check_dims(shape);
    if (data_.size() != shape_.size())
      throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_.str());
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T>& vec() noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  std::size_t offset(int n, int c, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& operator()(int n, int c, int y, int x) noexcept { return data_[offset(n, c, y, x)]; }
  const T& operator()(int n, int c, int y, int x) const noexcept {
    return data_[offset(n, c, y, x)];
  }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same data, new shape of equal size.
  Tensor reshaped(Shape s) const {
    if (s.size() != size())
      throw std::invalid_argument("cannot reshape " + shape_.str() + " to " + s.str());
    return Tensor(s, data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static void check_dims(const Shape& s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
      throw std::invalid_argument("negative tensor dimension in " + s.str());
  }

  Shape shape_;
  std::vector<T> data_;
};

}  // namespace gymgrid::nn
