#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgrec {

using Shape = std::vector<std::size_t>;

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

// Dense row-major array, rank 1 or 2 in practice. Real is float for training
// and double for gradient verification.
template <class Real>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0))
      : shape_(std::move(shape)), data_(count(shape_), fill) {}

  static Tensor scalar(Real v) {
    Tensor t(Shape{1});
    t.data_[0] = v;
    return t;
  }
  static Tensor vec(std::size_t n, Real fill = Real(0)) {
    return Tensor(Shape{n}, fill);
  }
  static Tensor mat(std::size_t r, std::size_t c, Real fill = Real(0)) {
    return Tensor(Shape{r, c}, fill);
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : size(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  Real at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  void add_in_place(const Tensor& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  }

  bool all_finite() const {
    for (Real v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

 private:
  static std::size_t count(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  Shape shape_;
  std::vector<Real> data_;
};

}  // namespace dgrec
