// SPDX-License-Identifier: Apache-2.0
#include "nid/gating.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "nid/tensor_ops.hpp"

namespace nid {

Tensor SparseCode::dense(int n) const {
  Tensor out = Tensor::zeros({n});
  for (auto& [idx, w] : entries) out[idx] = w;
  return out;
}

int SparseCode::argmax_abs() const {
  int best = -1;
  double best_abs = -1.0;
  for (auto& [idx, w] : entries) {
    if (std::fabs(w) > best_abs) {
      best_abs = std::fabs(w);
      best = idx;
    }
  }
  return best;
}

std::vector<int> topk_abs_indices(const Tensor& h, int k) {
  int n = static_cast<int>(h.size());
  if (k < 1 || k > n)
    throw std::invalid_argument("topk_abs_indices: k=" + std::to_string(k) + " with n=" +
                                std::to_string(n));
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&h](int a, int b) {
    return std::fabs(h[a]) > std::fabs(h[b]);  // stable: equal |h| keeps lower index first
  });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

SparseCode sparsify(const Tensor& h, int k) {
  std::vector<int> idx = topk_abs_indices(h, k);
  SparseCode code;
  code.k = k;
  double norm2 = 0.0;
  for (int i : idx) {
    if (h[i] == 0.0) continue;  // zero entries carry no expert
    code.entries.emplace_back(i, h[i]);
    norm2 += h[i] * h[i];
  }
  if (code.entries.empty())
    throw NumericError("sparsify: all-zero gates give a degenerate norm");
  double inv = 1.0 / std::sqrt(norm2);
  for (auto& [i, w] : code.entries) w *= inv;
  return code;
}

Var sparsify_on_tape(Tape& t, Var h, int k, std::vector<int>& kept) {
  const Tensor& hv = t.val(h);
  std::vector<int> idx = topk_abs_indices(hv, k);
  kept.clear();
  for (int i : idx) {
    if (hv[i] != 0.0) kept.push_back(i);
  }
  if (kept.empty()) throw NumericError("sparsify: all-zero gates give a degenerate norm");
  return t.l2_normalize(t.gather(h, kept));
}

double cv_penalty(const std::vector<SparseCode>& codes, int n, bool use_abs) {
  if (codes.empty()) throw std::invalid_argument("cv_penalty: empty batch");
  std::vector<double> abar(static_cast<std::size_t>(n), 0.0);
  for (const SparseCode& c : codes) {
    for (auto& [idx, w] : c.entries) abar[static_cast<std::size_t>(idx)] += use_abs ? std::fabs(w) : w;
  }
  double mean = 0.0;
  for (double v : abar) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : abar) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  return var / (mean * mean + 1e-8);
}

Var cv_penalty_on_tape(Tape& t, Var alpha_bar) {
  Var m = t.mean(alpha_bar);
  Var diff = t.sub_scalar(alpha_bar, m);
  Var var = t.mean(t.mul(diff, diff));
  Var denom = t.add_const(t.mul(m, m), 1e-8);
  return t.mul(var, t.pow_const(denom, -1.0));
}

double l1_penalty(const std::vector<Tensor>& gates) {
  double acc = 0.0;
  for (const Tensor& g : gates)
    for (std::int64_t i = 0; i < g.size(); ++i) acc += std::fabs(g[i]);
  return acc;
}

Var l1_penalty_on_tape(Tape& t, Var gates) { return t.sum(t.abs(gates)); }

GatingMode gating_mode(int epoch, int warmup_epochs) {
  if (epoch < 0) throw std::invalid_argument("gating_mode: negative epoch");
  return epoch < warmup_epochs ? GatingMode::DenseL1 : GatingMode::HardTopK;
}

void init_gate_table(ParamStore& ps, int T, int n, Rng& rng, double scale) {
  ps.add("gate/table", uniform_tensor(rng, {T, n}, -scale, scale));
}

Tensor gate_row(const ParamStore& ps, int instance, int n) {
  const Tensor& table = ps.value("gate/table");
  if (instance < 0 || instance >= table.rows())
    throw std::out_of_range("gate_row: instance " + std::to_string(instance) + " of " +
                            std::to_string(table.rows()));
  if (table.cols() != n)
    throw ShapeError("gate_row: table has " + std::to_string(table.cols()) + " experts, want " +
                     std::to_string(n));
  Tensor out = Tensor::zeros({n});
  for (int j = 0; j < n; ++j) out[j] = table.at(instance, j);
  return out;
}

Var gate_row_on_tape(Tape& t, const ParamStore& ps, int instance, int n) {
  const Tensor& table = ps.value("gate/table");
  if (instance < 0 || instance >= table.rows())
    throw std::out_of_range("gate_row: instance " + std::to_string(instance) + " of " +
                            std::to_string(table.rows()));
  Var tab = t.param(table, "gate/table");
  return t.reshape(t.gather_rows(tab, {instance}), {n});
}

void init_encoder_gate(ParamStore& ps, const EncoderGateSpec& spec, Rng& rng) {
  if (spec.hidden == 0) {  // degenerate single-affine gate
    double b0 = std::sqrt(6.0 / static_cast<double>(spec.in_dim));
    ps.add("gate/e0/w", uniform_tensor(rng, {spec.in_dim, spec.n}, -b0, b0));
    ps.add("gate/e0/b", uniform_tensor(rng, {spec.n}, -b0, b0));
    return;
  }
  double b0 = std::sqrt(6.0 / static_cast<double>(spec.in_dim));
  ps.add("gate/e0/w", uniform_tensor(rng, {spec.in_dim, spec.hidden}, -b0, b0));
  ps.add("gate/e0/b", uniform_tensor(rng, {spec.hidden}, -b0, b0));
  double b1 = std::sqrt(6.0 / static_cast<double>(spec.hidden));
  ps.add("gate/e1/w", uniform_tensor(rng, {spec.hidden, spec.n}, -b1, b1));
  ps.add("gate/e1/b", uniform_tensor(rng, {spec.n}, -b1, b1));
}

Tensor encoder_gates(const ParamStore& ps, const EncoderGateSpec& spec, const Tensor& summary) {
  Tensor s = summary.rank() == 1 ? Tensor({1, static_cast<int>(summary.size())}, summary.raw())
                                 : summary;
  if (s.cols() != spec.in_dim)
    throw ShapeError("encoder_gates: summary " + s.shape_str() + " vs in_dim " +
                     std::to_string(spec.in_dim));
  Tensor out;
  if (spec.hidden == 0) {
    out = affine_fwd(s, ps.value("gate/e0/w"), ps.value("gate/e0/b"));
  } else {
    Tensor h = affine_fwd(s, ps.value("gate/e0/w"), ps.value("gate/e0/b"));
    for (std::int64_t i = 0; i < h.size(); ++i) h[i] = std::sin(spec.omega0 * h[i]);
    out = affine_fwd(h, ps.value("gate/e1/w"), ps.value("gate/e1/b"));
  }
  return out.rows() == 1 ? Tensor({static_cast<int>(out.size())}, out.raw()) : out;
}

Var encoder_gates_on_tape(Tape& t, const ParamStore& ps, const EncoderGateSpec& spec, Var summary) {
  Var s = summary;
  if (t.val(summary).rank() == 1)
    s = t.reshape(summary, {1, static_cast<int>(t.val(summary).size())});
  Var w0 = t.param(ps.value("gate/e0/w"), "gate/e0/w");
  Var bb0 = t.param(ps.value("gate/e0/b"), "gate/e0/b");
  Var out;
  if (spec.hidden == 0) {
    out = t.affine(s, w0, bb0);
  } else {
    Var h = t.sine(t.affine(s, w0, bb0), spec.omega0);
    Var w1 = t.param(ps.value("gate/e1/w"), "gate/e1/w");
    Var bb1 = t.param(ps.value("gate/e1/b"), "gate/e1/b");
    out = t.affine(h, w1, bb1);
  }
  if (t.val(out).rows() == 1) return t.reshape(out, {spec.n});
  return out;
}

}  // namespace nid
