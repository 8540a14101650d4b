// SPDX-License-Identifier: Apache-2.0
#include "nid/tensor_ops.hpp"

#include <Eigen/Dense>

namespace nid {
namespace {

using MatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MatMapMut = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using VecMap = Eigen::Map<const Eigen::VectorXd>;
using VecMapMut = Eigen::Map<Eigen::VectorXd>;

MatMap as_mat(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("expected rank-2 tensor, got shape " + t.shape_str());
  return MatMap(t.data(), t.rows(), t.cols());
}

MatMapMut as_mat_mut(Tensor& t) {
  if (t.rank() != 2) throw ShapeError("expected rank-2 tensor, got shape " + t.shape_str());
  return MatMapMut(t.data(), t.rows(), t.cols());
}

}  // namespace

Tensor gemm_nn(const Tensor& a, const Tensor& b) {
  auto A = as_mat(a);
  auto B = as_mat(b);
  if (A.cols() != B.rows())
    throw ShapeError("gemm_nn: inner dims " + a.shape_str() + " vs " + b.shape_str());
  Tensor out = Tensor::zeros({a.rows(), b.cols()});
  as_mat_mut(out).noalias() = A * B;
  return out;
}

void gemm_nt_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  auto A = as_mat(a);
  auto B = as_mat(b);
  if (A.cols() != B.cols() || out.rows() != a.rows() || out.cols() != b.rows())
    throw ShapeError("gemm_nt_acc: " + a.shape_str() + " * " + b.shape_str() + "^T -> " + out.shape_str());
  as_mat_mut(out).noalias() += A * B.transpose();
}

void gemm_tn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  auto A = as_mat(a);
  auto B = as_mat(b);
  if (A.rows() != B.rows() || out.rows() != a.cols() || out.cols() != b.cols())
    throw ShapeError("gemm_tn_acc: " + a.shape_str() + "^T * " + b.shape_str() + " -> " + out.shape_str());
  as_mat_mut(out).noalias() += A.transpose() * B;
}

Tensor affine_fwd(const Tensor& x, const Tensor& w, const Tensor& b) {
  auto X = as_mat(x);
  auto W = as_mat(w);
  if (b.rank() != 1 || b.size() != w.cols())
    throw ShapeError("affine_fwd: bias shape " + b.shape_str() + " vs weight " + w.shape_str());
  if (X.cols() != W.rows())
    throw ShapeError("affine_fwd: input " + x.shape_str() + " vs weight " + w.shape_str());
  Tensor out = Tensor::zeros({x.rows(), w.cols()});
  auto O = as_mat_mut(out);
  O.noalias() = X * W;
  O.rowwise() += VecMap(b.data(), b.size()).transpose();
  return out;
}

void colsum_acc(const Tensor& a, Tensor& out) {
  auto A = as_mat(a);
  if (out.rank() != 1 || out.size() != a.cols())
    throw ShapeError("colsum_acc: " + a.shape_str() + " -> " + out.shape_str());
  VecMapMut(out.data(), out.size()) += A.colwise().sum().transpose();
}

void axpy(double c, const Tensor& x, Tensor& y) {
  if (x.size() != y.size())
    throw ShapeError("axpy: " + x.shape_str() + " vs " + y.shape_str());
  VecMapMut(y.data(), y.size()) += c * VecMap(x.data(), x.size());
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size())
    throw ShapeError("dot: " + a.shape_str() + " vs " + b.shape_str());
  return VecMap(a.data(), a.size()).dot(VecMap(b.data(), b.size()));
}

double l2_norm(const Tensor& a) {
  return VecMap(a.data(), a.size()).norm();
}

}  // namespace nid
