#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stconv/errors.hpp"

namespace stconv {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major n-dimensional array with an optional gradient buffer of the
// same extent. Copies are deep; the shape never changes after construction.
template <typename T>
class NdArray {
 public:
  using value_type = T;

  NdArray() = default;

  explicit NdArray(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_size(shape_), fill);
  }

  NdArray(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_size(shape_)) {
      throw DimensionError("NdArray: buffer holds " + std::to_string(data_.size()) +
                           " elements but shape " + shape_str(shape_) + " needs " +
                           std::to_string(shape_size(shape_)));
    }
  }

  static NdArray scalar(T v) { return NdArray(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
      throw DimensionError("NdArray: axis " + std::to_string(axis) + " out of range for shape " +
                           shape_str(shape_));
    }
    return shape_[axis];
  }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
  const T& at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

  bool has_grad() const { return !grad_.empty(); }
  std::span<T> grad() {
    if (grad_.empty()) grad_.assign(data_.size(), T{0});
    return grad_;
  }
  std::span<const T> grad() const { return grad_; }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), T{0}); }
  void clear_grad() { grad_.clear(); grad_.shrink_to_fit(); }

  NdArray reshaped(Shape shape) const& {
    NdArray out(*this);
    out.grad_.clear();
    out.reshape_in_place(std::move(shape));
    return out;
  }
  NdArray reshaped(Shape shape) && {
    grad_.clear();
    reshape_in_place(std::move(shape));
    return std::move(*this);
  }

  template <typename U>
  NdArray<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return NdArray<U>(shape_, std::move(out));
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const NdArray& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  static void check_shape(const Shape& shape) {
    for (auto d : shape) {
      if (d == 0) throw DimensionError("NdArray: zero-length axis in shape " + shape_str(shape));
    }
  }

  void reshape_in_place(Shape shape) {
    check_shape(shape);
    if (shape_size(shape) != data_.size()) {
      throw DimensionError("NdArray: cannot reshape " + shape_str(shape_) + " to " +
                           shape_str(shape));
    }
    shape_ = std::move(shape);
  }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) {
      throw DimensionError("NdArray: index rank " + std::to_string(idx.size()) +
                           " does not match shape " + shape_str(shape_));
    }
    std::size_t off = 0;
    std::size_t axis = 0;
    for (auto i : idx) {
      if (i >= shape_[axis]) {
        throw DimensionError("NdArray: index " + std::to_string(i) + " out of range on axis " +
                             std::to_string(axis));
      }
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  Shape shape_;
  std::vector<T> data_;
  std::vector<T> grad_;
};

}  // namespace stconv
