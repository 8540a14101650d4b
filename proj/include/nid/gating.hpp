// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nid/param_store.hpp"
#include "nid/rng.hpp"
#include "nid/tape.hpp"
#include "nid/tensor.hpp"

namespace nid {

/// k-sparse expert selection for one instance. Entries are (expert index,
/// weight), ascending by index. Codes emitted by sparsify carry unit l2 norm;
/// codes mid-adaptation may not.
struct SparseCode {
  std::vector<std::pair<int, double>> entries;
  int k = 0;

  Tensor dense(int n) const;
  int argmax_abs() const;  // index of the largest-|weight| entry, -1 if empty
};

/// Keeps the k largest-|h| entries (ties to the lower index), drops exact
/// zeros, and scales the kept sub-vector to unit l2 norm.
SparseCode sparsify(const Tensor& h, int k);

/// Indices sparsify would keep, without building the code. Ascending order.
std::vector<int> topk_abs_indices(const Tensor& h, int k);

/// Tape counterpart: selects indices from val(h), then gathers and
/// l2-normalizes on the tape so kept entries get the exact normalization
/// Jacobian and dropped entries get hard-zero gradients. Returns the kept
/// weights [|kept|]; indices reported through `kept`.
Var sparsify_on_tape(Tape& t, Var h, int k, std::vector<int>& kept);

/// Coefficient-of-variation penalty over batch-summed codes:
/// Var(abar) / (mean(abar)^2 + 1e-8), population variance. `use_abs` sums
/// |weights| instead of signed weights.
double cv_penalty(const std::vector<SparseCode>& codes, int n, bool use_abs = false);
/// Tape counterpart over an already-assembled dense abar [n].
Var cv_penalty_on_tape(Tape& t, Var alpha_bar);

/// Sum over instances of the l1 norm of dense (pre-sparsified) gates.
double l1_penalty(const std::vector<Tensor>& gates);
Var l1_penalty_on_tape(Tape& t, Var gates);  // one instance's contribution

enum class GatingMode { DenseL1, HardTopK };
GatingMode gating_mode(int epoch, int warmup_epochs);

// ---- gate parameterizations ----
// Lookup table: one trainable row per training instance, stored as
// "gate/table" [T x n].
void init_gate_table(ParamStore& ps, int T, int n, Rng& rng, double scale);
Tensor gate_row(const ParamStore& ps, int instance, int n);
Var gate_row_on_tape(Tape& t, const ParamStore& ps, int instance, int n);

/// Feed-forward gate: observation summary vector -> raw gates [n], two
/// affine layers with a sine hidden activation ("gate/e0", "gate/e1"). The
/// temporal code network for video is this with in_dim == 1 (normalized t).
struct EncoderGateSpec {
  int in_dim = 16;
  int hidden = 32;
  int n = 64;
  double omega0 = 1.0;  // hidden activation frequency
};

void init_encoder_gate(ParamStore& ps, const EncoderGateSpec& spec, Rng& rng);
Tensor encoder_gates(const ParamStore& ps, const EncoderGateSpec& spec, const Tensor& summary);
Var encoder_gates_on_tape(Tape& t, const ParamStore& ps, const EncoderGateSpec& spec, Var summary);

}  // namespace nid
