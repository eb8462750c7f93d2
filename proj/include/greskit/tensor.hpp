#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "greskit/errors.hpp"

namespace greskit {

// When on, tensor construction rejects NaN/Inf payloads. Tests flip this on;
// training leaves it off and relies on the explicit loss finiteness check.
inline bool& tensor_check_finite() {
  static bool flag = false;
  return flag;
}

// Dense row-major tensor. Rank is dynamic but almost everything in the
// library is rank 1 or 2; rank-2 helpers (rows/cols/at) throw otherwise.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape)
      : shape_(std::move(shape)), data_(checked_numel(shape_), T(0)) {}

  Tensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_numel(shape_) != data_.size())
      throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
    maybe_check_finite();
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, T v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  // 2-d literal, e.g. Tensor<double>::of({{1,2},{3,4}}).
  static Tensor of(std::initializer_list<std::initializer_list<T>> rows) {
    int m = static_cast<int>(rows.size());
    int n = m ? static_cast<int>(rows.begin()->size()) : 0;
    std::vector<T> data;
    data.reserve(static_cast<std::size_t>(m) * n);
    for (const auto& r : rows) {
      if (static_cast<int>(r.size()) != n) throw ShapeError("ragged tensor literal");
      data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({m, n}, std::move(data));
  }

  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t numel() const { return data_.size(); }

  int rows() const {
    require_rank2();
    return shape_[0];
  }
  int cols() const {
    require_rank2();
    return shape_[1];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(int i, int j) {
    require_rank2();
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
  }
  const T& at(int i, int j) const {
    require_rank2();
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const { return shape_str(shape_); }

  static std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
  }

  void maybe_check_finite() const {
    if (!tensor_check_finite()) return;
    for (const auto& x : data_)
      if (!std::isfinite(static_cast<double>(x)))
        throw NumericError("non-finite value in tensor " + shape_str());
  }

 private:
  void require_rank2() const {
    if (shape_.size() != 2) throw ShapeError("rank-2 tensor required, got " + shape_str());
  }

  static std::size_t checked_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw ShapeError("non-positive dim in shape " + shape_str(shape));
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
}

}  // namespace greskit
