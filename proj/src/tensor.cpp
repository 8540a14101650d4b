// SPDX-License-Identifier: Apache-2.0
#include "nid/tensor.hpp"

#include <cmath>
#include <sstream>

namespace nid {

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str());
  }
}

Tensor Tensor::zeros(std::vector<int> shape) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vec(std::vector<double> values) {
  int n = static_cast<int>(values.size());
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

int Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on tensor of shape " + shape_str());
  return shape_[0];
}

int Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on tensor of shape " + shape_str());
  return shape_[1];
}

double& Tensor::at(int r, int c) {
  return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) +
               static_cast<std::size_t>(c)];
}

double Tensor::at(int r, int c) const {
  return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) +
               static_cast<std::size_t>(c)];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double value) {
  for (auto& v : data_) v = value;
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) {
    throw NumericError(std::string(what) + " produced non-finite values (shape " +
                       t.shape_str() + ")");
  }
}

}  // namespace nid
