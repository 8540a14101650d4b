// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "nid/tensor.hpp"

namespace nid {

// Dense kernels shared by the tape ops. All matrices are row-major rank-2
// tensors. Accumulating variants add into the destination, which must
// already have the right shape.

Tensor gemm_nn(const Tensor& a, const Tensor& b);          // a[MxK] b[KxN] -> [MxN]
void gemm_nt_acc(const Tensor& a, const Tensor& b, Tensor& out);  // out += a * b^T
void gemm_tn_acc(const Tensor& a, const Tensor& b, Tensor& out);  // out += a^T * b

Tensor affine_fwd(const Tensor& x, const Tensor& w, const Tensor& b);
void colsum_acc(const Tensor& a, Tensor& out);             // out[j] += sum_i a[i,j]

void axpy(double c, const Tensor& x, Tensor& y);           // y += c*x
double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);

}  // namespace nid
