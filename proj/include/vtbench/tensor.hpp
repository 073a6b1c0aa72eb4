#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace vtb::dc {

// Dense row-major tensor. Data is shared between views (reshape), so copies
// are cheap handles; call clone() for an independent buffer.
template <typename T>
class Tensor {
 public:
  Tensor() : data_(std::make_shared<std::vector<T>>()) {}

  Tensor(std::vector<int> shape, T fill = T(0))
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(count(shape_), fill)) {}

  Tensor(std::vector<int> shape, std::vector<T> values)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(std::move(values))) {
    if (static_cast<int64_t>(data_->size()) != count(shape_))
      throw std::invalid_argument("tensor: data length does not match shape");
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(data_->size()); }
  bool empty() const { return data_->empty(); }

  T* ptr() { return data_->data(); }
  const T* ptr() const { return data_->data(); }
  std::vector<T>& vec() { return *data_; }
  const std::vector<T>& vec() const { return *data_; }

  T& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // Shares data; only the shape changes.
  Tensor reshaped(std::vector<int> shape) const {
    if (count(shape) != size())
      throw std::invalid_argument("tensor: reshape element count mismatch");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    t.requires_grad = requires_grad;
    return t;
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<T>>(*data_);
    t.requires_grad = requires_grad;
    return t;
  }

  void fill(T v) { std::fill(data_->begin(), data_->end(), v); }

  static int64_t count(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      if (d < 0) throw std::invalid_argument("tensor: negative dimension");
      n *= d;
    }
    return shape.empty() ? 0 : n;
  }

  bool requires_grad = false;

 private:
  std::vector<int> shape_;
  std::shared_ptr<std::vector<T>> data_;
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

}  // namespace vtb::dc
