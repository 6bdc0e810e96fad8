#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lrxf/rng.hpp"

namespace lrxf::ad {

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

// Dense row-major tensor. Scalar type is a template parameter: float is the
// production type, double exists for gradient checking.
template <class S>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape, S fill = S(0))
      : shape_(std::move(shape)),
        data_(static_cast<std::size_t>(count(shape_)), fill) {}

  Tensor(std::vector<int> shape, std::vector<S> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::size_t>(count(shape_)) != data_.size())
      throw ShapeError("tensor data length does not match shape " +
                       shape_str(shape_));
  }

  static Tensor scalar(S v) { return Tensor({1}, {v}); }

  static Tensor row(std::initializer_list<S> vals) {
    return Tensor({1, static_cast<int>(vals.size())},
                  std::vector<S>(vals.begin(), vals.end()));
  }

  static Tensor randu(std::vector<int> shape, S lo, S hi, rng::Stream& rs) {
    Tensor t(std::move(shape));
    for (S& v : t.data_) v = static_cast<S>(rs.next_uniform(lo, hi));
    return t;
  }

  static Tensor randn(std::vector<int> shape, S stddev, rng::Stream& rs) {
    Tensor t(std::move(shape));
    for (S& v : t.data_) v = static_cast<S>(stddev * rs.next_normal());
    return t;
  }

  static long long count(const std::vector<int>& shape) {
    long long n = 1;
    for (int e : shape) n *= e;
    return n;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  long long size() const { return static_cast<long long>(data_.size()); }

  // Matrix views: rank-2 tensors. A rank-1 tensor of n entries is treated
  // as 1 x n where a matrix is expected.
  int rows() const {
    if (rank() == 2) return shape_[0];
    if (rank() == 1) return 1;
    throw ShapeError("expected matrix, got " + shape_str(shape_));
  }
  int cols() const {
    if (rank() == 2) return shape_[1];
    if (rank() == 1) return shape_[0];
    throw ShapeError("expected matrix, got " + shape_str(shape_));
  }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::vector<S>& vec() { return data_; }
  const std::vector<S>& vec() const { return data_; }

  S& at(int i) { return data_[static_cast<std::size_t>(i)]; }
  S at(int i) const { return data_[static_cast<std::size_t>(i)]; }
  S& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }
  S at(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * cols() + c];
  }

  S item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor");
    return data_[0];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (S v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out = Tensor<T>(shape_);
    for (long long i = 0; i < size(); ++i)
      out.data()[i] = static_cast<T>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

 private:
  std::vector<int> shape_;
  std::vector<S> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace lrxf::ad
