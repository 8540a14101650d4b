// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nid {

/// Error thrown when tensor shapes do not conform for an operation.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Error thrown when a computation produces or receives non-finite values.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

/// Dense row-major tensor of doubles. Rank is dynamic but nearly everything
/// in this codebase is rank 1..3. All math runs in 64-bit; 32-bit appears
/// only at checkpoint boundaries.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<int> shape, std::vector<double> data);

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor scalar(double value);
  static Tensor vec(std::vector<double> values);
  static Tensor matrix(int rows, int cols, std::vector<double> values);

  const std::vector<int>& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }

  // Rank-2 accessors; throw on other ranks.
  int rows() const;
  int cols() const;
  double& at(int r, int c);
  double at(int r, int c) const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const { return nid::shape_str(shape_); }
  bool all_finite() const;
  void fill(double value);

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

/// Throws NumericError naming `what` if any entry of `t` is NaN/Inf.
void require_finite(const Tensor& t, const char* what);

}  // namespace nid
