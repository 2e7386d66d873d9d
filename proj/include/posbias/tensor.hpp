#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace posbias::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

/// Dense row-major tensor of doubles. Rank 0 (scalar), 1 and 2 are what the
/// rest of the library uses.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

  static Tensor scalar(double v) {
    Tensor t{std::vector<std::size_t>{1}};
    t.data_[0] = v;
    return t;
  }

  static Tensor from_vector(std::vector<double> v) {
    Tensor t;
    t.shape_ = {v.size()};
    t.data_ = std::move(v);
    return t;
  }

  static Tensor zeros(std::size_t n) { return Tensor{{n}}; }
  static Tensor zeros(std::size_t r, std::size_t c) { return Tensor{{r, c}}; }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1 && shape_.size() <= 1; }

  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::size_t dim(std::size_t i) const {
    return i < shape_.size() ? shape_[i] : 1;
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  double value() const {
    if (!is_scalar()) throw std::invalid_argument("Tensor::value: not a scalar");
    return data_[0];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  MatMap mat() { return {data_.data(), rowsi(), colsi()}; }
  ConstMatMap mat() const { return {data_.data(), rowsi(), colsi()}; }
  VecMap vec() { return {data_.data(), static_cast<Eigen::Index>(size())}; }
  ConstVecMap vec() const { return {data_.data(), static_cast<Eigen::Index>(size())}; }

  std::string shape_str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) os << 'x';
      os << shape_[i];
    }
    os << ')';
    return os.str();
  }

 private:
  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }

  Eigen::Index rowsi() const { return static_cast<Eigen::Index>(rows()); }
  Eigen::Index colsi() const { return static_cast<Eigen::Index>(cols()); }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
  }
}

}  // namespace posbias::nn
