// SPDX-License-Identifier: Apache-2.0
#include "nid/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>
#include <utility>

#include "nid/param_store.hpp"
#include "nid/tensor_ops.hpp"

namespace nid {

Var Tape::push(Tensor value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buf(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.grad.same_shape(n.value)) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

void Tape::check(Var a) const {
  if (a.id < 0 || a.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Tape: Var does not belong to this tape");
}

Var Tape::leaf(Tensor value) { return push(std::move(value), false); }

Var Tape::param(Tensor value, std::string name) {
  auto it = param_ids_.find(name);
  if (it != param_ids_.end()) {
    const Tensor& prev = v(it->second);
    if (!prev.same_shape(value))
      throw ShapeError("Tape: param '" + name + "' re-bound with shape " + value.shape_str() +
                       " vs " + prev.shape_str());
    return Var{it->second};
  }
  Var out = push(std::move(value), true);
  nodes_[static_cast<std::size_t>(out.id)].name = name;
  param_ids_.emplace(std::move(name), out.id);
  return out;
}

bool Tape::has_param(const std::string& name) const { return param_ids_.count(name) != 0; }

Var Tape::affine(Var x, Var w, Var b) {
  check(x); check(w); check(b);
  Var out = push(affine_fwd(v(x.id), v(w.id), v(b.id)), wants(x) || wants(w) || wants(b));
  if (!wants(out)) return out;
  int xi = x.id, wi = w.id, bi = b.id, oi = out.id;
  record([xi, wi, bi, oi](Tape& t) {
    const Tensor& dy = t.grad_buf(oi);
    if (t.wants(Var{xi})) gemm_nt_acc(dy, t.v(wi), t.grad_buf(xi));
    if (t.wants(Var{wi})) gemm_tn_acc(t.v(xi), dy, t.grad_buf(wi));
    if (t.wants(Var{bi})) colsum_acc(dy, t.grad_buf(bi));
  });
  return out;
}

Var Tape::sine(Var x, double omega0) {
  check(x);
  const Tensor& xv = v(x.id);
  Tensor y = Tensor::zeros(xv.shape());
  for (int i = 0; i < xv.size(); ++i) y[i] = std::sin(omega0 * xv[i]);
  Var out = push(std::move(y), wants(x));
  if (!wants(out)) return out;
  int xi = x.id, oi = out.id;
  record([xi, oi, omega0](Tape& t) {
    const Tensor& dy = t.grad_buf(oi);
    const Tensor& xv2 = t.v(xi);
    Tensor& dx = t.grad_buf(xi);
    for (int i = 0; i < xv2.size(); ++i) dx[i] += dy[i] * omega0 * std::cos(omega0 * xv2[i]);
  });
  return out;
}

Var Tape::add(Var a, Var b) {
  check(a); check(b);
  const Tensor& av = v(a.id);
  const Tensor& bv = v(b.id);
  if (!av.same_shape(bv)) throw ShapeError("add: " + av.shape_str() + " vs " + bv.shape_str());
  Tensor y = av;
  axpy(1.0, bv, y);
  Var out = push(std::move(y), wants(a) || wants(b));
  if (!wants(out)) return out;
  int ai = a.id, bi = b.id, oi = out.id;
  record([ai, bi, oi](Tape& t) {
    const Tensor& dy = t.grad_buf(oi);
    if (t.wants(Var{ai})) axpy(1.0, dy, t.grad_buf(ai));
    if (t.wants(Var{bi})) axpy(1.0, dy, t.grad_buf(bi));
  });
  return out;
}

Var Tape::sub(Var a, Var b) {
  check(a); check(b);
  const Tensor& av = v(a.id);
  const Tensor& bv = v(b.id);
  if (!av.same_shape(bv)) throw ShapeError("sub: " + av.shape_str() + " vs " + bv.shape_str());
  Tensor y = av;
  axpy(-1.0, bv, y);
  Var out = push(std::move(y), wants(a) || wants(b));
  if (!wants(out)) return out;
  int ai = a.id, bi = b.id, oi = out.id;
  record([ai, bi, oi](Tape& t) {
    const Tensor& dy = t.grad_buf(oi);
    if (t.wants(Var{ai})) axpy(1.0, dy, t.grad_buf(ai));
    if (t.wants(Var{bi})) axpy(-1.0, dy, t.grad_buf(bi));
  });
  return out;
}

Var Tape::mul(Var a, Var b) {
  check(a); check(b);
  const Tensor& av = v(a.id);
  const Tensor& bv = v(b.id);
  if (!av.same_shape(bv)) throw ShapeError("mul: " + av.shape_str() + " vs " + bv.shape_str());
  Tensor y = Tensor::zeros(av.shape());
  for (int i = 0; i < av.size(); ++i) y[i] = av[i] * bv[i];
  Var out = push(std::move(y), wants(a) || wants(b));
  if (!wants(out)) return out;
  int ai = a.id, bi = b.id, oi = out.id;
  record([ai, bi, oi](Tape& t) {
    const Tensor& dy = t.grad_buf(oi);
    const Tensor& av2 = t.v(ai);
    const Tensor& bv2 = t.v(bi);
    if (t.wants(Var{ai})) {
      Tensor& da = t.grad_buf(ai);
      for (int i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv2[i];
    }
    if (t.wants(Var{bi})) {
      Tensor& db = t.grad_buf(bi);
      for (int i = 0; i < dy.size(); ++i) db[i] += dy[i] * av2[i];
    }
  });
  return out;
}

Var Tape::scale(Var a, double c) {
  check(a);
  const Tensor& av = v(a.id);
  Tensor y = Tensor::zeros(av.shape());
  for (int i = 0; i < av.size(); ++i) y[i] = c * av[i];
  Var out = push(std::move(y), wants(a));
  if (!wants(out)) return out;
  int ai = a.id, oi = out.id;
  record([ai, oi, c](Tape& t) { axpy(c, t.grad_buf(oi), t.grad_buf(ai)); });
  return out;
}

Var Tape::add_const(Var a, double c) {
  check(a);
  const Tensor& av = v(a.id);
  Tensor y = av;
  for (int i = 0; i < y.size(); ++i) y[i] += c;
  Var out = push(std::move(y), wants(a));
  if (!wants(out)) return out;
  int ai = a.id, oi = out.id;
  record([ai, oi](Tape& t) { axpy(1.0, t.grad_buf(oi), t.grad_buf(ai)); });
  return out;
}

Var Tape::sub_scalar(Var a, Var s) {
  check(a); check(s);
  const Tensor& av = v(a.id);
  const Tensor& sv = v(s.id);
  if (sv.size() != 1) throw ShapeError("sub_scalar: scalar operand has shape " + sv.shape_str());
  Tensor y = av;
  for (int i = 0; i < y.size(); ++i) y[i] -= sv[0];
  Var out = push(std::move(y), wants(a) || wants(s));
  if (!wants(out)) return out;
  int ai = a.id, si = s.id, oi = out.id;
  record([ai, si, oi](Tape& t) {
    const Tensor& dy = t.grad_buf(oi);
    if (t.wants(Var{ai})) axpy(1.0, dy, t.grad_buf(ai));
    if (t.wants(Var{si})) {
      double g = 0.0;
      for (int i = 0; i < dy.size(); ++i) g += dy[i];
      t.grad_buf(si)[0] -= g;
    }
  });
  return out;
}

Var Tape::mul_scalar(Var a, Var s) {
  check(a); check(s);
  const Tensor& av = v(a.id);
  const Tensor& sv = v(s.id);
  if (sv.size() != 1) throw ShapeError("mul_scalar: scalar operand has shape " + sv.shape_str());
  Tensor y = Tensor::zeros(av.shape());
  for (int i = 0; i < av.size(); ++i) y[i] = sv[0] * av[i];
  Var out = push(std::move(y), wants(a) || wants(s));
  if (!wants(out)) return out;
  int ai = a.id, si = s.id, oi = out.id;
  record([ai, si, oi](Tape& t) {
    const Tensor& dy = t.grad_buf(oi);
    if (t.wants(Var{ai})) axpy(t.v(si)[0], dy, t.grad_buf(ai));
    if (t.wants(Var{si})) t.grad_buf(si)[0] += dot(dy, t.v(ai));
  });
  return out;
}

Var Tape::pow_const(Var a, double p) {
  check(a);
  const Tensor& av = v(a.id);
  Tensor y = Tensor::zeros(av.shape());
  for (int i = 0; i < av.size(); ++i) y[i] = std::pow(av[i], p);
  require_finite(y, ("pow_const(p=" + std::to_string(p) + ")").c_str());
  Var out = push(std::move(y), wants(a));
  if (!wants(out)) return out;
  int ai = a.id, oi = out.id;
  record([ai, oi, p](Tape& t) {
    const Tensor& dy = t.grad_buf(oi);
    const Tensor& av2 = t.v(ai);
    Tensor& da = t.grad_buf(ai);
    for (int i = 0; i < dy.size(); ++i) da[i] += dy[i] * p * std::pow(av2[i], p - 1.0);
  });
  return out;
}

Var Tape::abs(Var a) {
  check(a);
  const Tensor& av = v(a.id);
  Tensor y = Tensor::zeros(av.shape());
  for (int i = 0; i < av.size(); ++i) y[i] = std::fabs(av[i]);
  Var out = push(std::move(y), wants(a));
  if (!wants(out)) return out;
  int ai = a.id, oi = out.id;
  // Subgradient with sign(0) = 0.
  record([ai, oi](Tape& t) {
    const Tensor& dy = t.grad_buf(oi);
    const Tensor& av2 = t.v(ai);
    Tensor& da = t.grad_buf(ai);
    for (int i = 0; i < dy.size(); ++i) {
      if (av2[i] > 0.0) da[i] += dy[i];
      else if (av2[i] < 0.0) da[i] -= dy[i];
    }
  });
  return out;
}

Var Tape::sum(Var a) {
  check(a);
  const Tensor& av = v(a.id);
  double s = 0.0;
  for (int i = 0; i < av.size(); ++i) s += av[i];
  Var out = push(Tensor::scalar(s), wants(a));
  if (!wants(out)) return out;
  int ai = a.id, oi = out.id;
  record([ai, oi](Tape& t) {
    double g = t.grad_buf(oi)[0];
    Tensor& da = t.grad_buf(ai);
    for (int i = 0; i < da.size(); ++i) da[i] += g;
  });
  return out;
}

Var Tape::mean(Var a) {
  check(a);
  const Tensor& av = v(a.id);
  double s = 0.0;
  for (int i = 0; i < av.size(); ++i) s += av[i];
  double inv_n = 1.0 / static_cast<double>(av.size());
  Var out = push(Tensor::scalar(s * inv_n), wants(a));
  if (!wants(out)) return out;
  int ai = a.id, oi = out.id;
  record([ai, oi, inv_n](Tape& t) {
    double g = t.grad_buf(oi)[0] * inv_n;
    Tensor& da = t.grad_buf(ai);
    for (int i = 0; i < da.size(); ++i) da[i] += g;
  });
  return out;
}

Var Tape::reshape(Var a, std::vector<int> shape) {
  check(a);
  const Tensor& av = v(a.id);
  if (shape_numel(shape) != av.size())
    throw ShapeError("reshape: " + av.shape_str() + " to " + shape_str(shape));
  Tensor y(shape, av.raw());
  Var out = push(std::move(y), wants(a));
  if (!wants(out)) return out;
  int ai = a.id, oi = out.id;
  record([ai, oi](Tape& t) { axpy(1.0, t.grad_buf(oi), t.grad_buf(ai)); });
  return out;
}

Var Tape::gather(Var a, std::vector<int> idx) {
  check(a);
  const Tensor& av = v(a.id);
  Tensor y = Tensor::zeros({static_cast<int>(idx.size())});
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || idx[j] >= av.size())
      throw ShapeError("gather: index " + std::to_string(idx[j]) + " out of range for " + av.shape_str());
    y[static_cast<int>(j)] = av[idx[j]];
  }
  Var out = push(std::move(y), wants(a));
  if (!wants(out)) return out;
  int ai = a.id, oi = out.id;
  record([ai, oi, idx = std::move(idx)](Tape& t) {
    const Tensor& dy = t.grad_buf(oi);
    Tensor& da = t.grad_buf(ai);
    for (std::size_t j = 0; j < idx.size(); ++j) da[idx[j]] += dy[static_cast<int>(j)];
  });
  return out;
}

Var Tape::scatter(Var vv, std::vector<int> idx, int n) {
  check(vv);
  const Tensor& sv = v(vv.id);
  if (static_cast<int>(idx.size()) != sv.size())
    throw ShapeError("scatter: " + std::to_string(idx.size()) + " indices vs values " + sv.shape_str());
  std::unordered_set<int> seen;
  Tensor y = Tensor::zeros({n});
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || idx[j] >= n)
      throw ShapeError("scatter: index " + std::to_string(idx[j]) + " out of range [0," + std::to_string(n) + ")");
    if (!seen.insert(idx[j]).second)
      throw ShapeError("scatter: duplicate index " + std::to_string(idx[j]));
    y[idx[j]] = sv[static_cast<int>(j)];
  }
  Var out = push(std::move(y), wants(vv));
  if (!wants(out)) return out;
  int vi = vv.id, oi = out.id;
  record([vi, oi, idx = std::move(idx)](Tape& t) {
    const Tensor& dy = t.grad_buf(oi);
    Tensor& dv = t.grad_buf(vi);
    for (std::size_t j = 0; j < idx.size(); ++j) dv[static_cast<int>(j)] += dy[idx[j]];
  });
  return out;
}

Var Tape::gather_rows(Var a, std::vector<int> rows) {
  check(a);
  const Tensor& av = v(a.id);
  if (av.rank() != 2) throw ShapeError("gather_rows: expected rank-2, got " + av.shape_str());
  int c = av.cols();
  Tensor y = Tensor::zeros({static_cast<int>(rows.size()), c});
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j] < 0 || rows[j] >= av.rows())
      throw ShapeError("gather_rows: row " + std::to_string(rows[j]) + " out of range for " + av.shape_str());
    for (int k = 0; k < c; ++k) y.at(static_cast<int>(j), k) = av.at(rows[j], k);
  }
  Var out = push(std::move(y), wants(a));
  if (!wants(out)) return out;
  int ai = a.id, oi = out.id;
  record([ai, oi, rows = std::move(rows), c](Tape& t) {
    const Tensor& dy = t.grad_buf(oi);
    Tensor& da = t.grad_buf(ai);
    for (std::size_t j = 0; j < rows.size(); ++j)
      for (int k = 0; k < c; ++k) da.at(rows[j], k) += dy.at(static_cast<int>(j), k);
  });
  return out;
}

Var Tape::scatter_rows(Var a, std::vector<int> rows, int total_rows) {
  check(a);
  const Tensor& av = v(a.id);
  if (av.rank() != 2) throw ShapeError("scatter_rows: expected rank-2, got " + av.shape_str());
  if (static_cast<int>(rows.size()) != av.rows())
    throw ShapeError("scatter_rows: " + std::to_string(rows.size()) + " rows vs " + av.shape_str());
  int c = av.cols();
  std::unordered_set<int> seen;
  Tensor y = Tensor::zeros({total_rows, c});
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j] < 0 || rows[j] >= total_rows)
      throw ShapeError("scatter_rows: row " + std::to_string(rows[j]) + " out of range");
    if (!seen.insert(rows[j]).second)
      throw ShapeError("scatter_rows: duplicate row " + std::to_string(rows[j]));
    for (int k = 0; k < c; ++k) y.at(rows[j], k) = av.at(static_cast<int>(j), k);
  }
  Var out = push(std::move(y), wants(a));
  if (!wants(out)) return out;
  int ai = a.id, oi = out.id;
  record([ai, oi, rows = std::move(rows), c](Tape& t) {
    const Tensor& dy = t.grad_buf(oi);
    Tensor& da = t.grad_buf(ai);
    for (std::size_t j = 0; j < rows.size(); ++j)
      for (int k = 0; k < c; ++k) da.at(static_cast<int>(j), k) += dy.at(rows[j], k);
  });
  return out;
}

Var Tape::weighted_sum(const std::vector<Var>& xs, Var w) {
  if (xs.empty()) throw ShapeError("weighted_sum: empty operand list");
  check(w);
  const Tensor& wv = v(w.id);
  if (wv.size() != static_cast<int>(xs.size()))
    throw ShapeError("weighted_sum: " + std::to_string(xs.size()) + " operands vs weights " + wv.shape_str());
  bool ng = wants(w);
  for (Var x : xs) {
    check(x);
    if (!v(x.id).same_shape(v(xs[0].id)))
      throw ShapeError("weighted_sum: operand shape " + v(x.id).shape_str() + " vs " + v(xs[0].id).shape_str());
    ng = ng || wants(x);
  }
  Tensor y = Tensor::zeros(v(xs[0].id).shape());
  for (std::size_t j = 0; j < xs.size(); ++j) axpy(wv[static_cast<int>(j)], v(xs[j].id), y);
  Var out = push(std::move(y), ng);
  if (!wants(out)) return out;
  std::vector<int> xids(xs.size());
  for (std::size_t j = 0; j < xs.size(); ++j) xids[j] = xs[j].id;
  int wi = w.id, oi = out.id;
  record([xids = std::move(xids), wi, oi](Tape& t) {
    const Tensor& dy = t.grad_buf(oi);
    const Tensor& wv2 = t.v(wi);
    for (std::size_t j = 0; j < xids.size(); ++j) {
      if (t.wants(Var{xids[j]})) axpy(wv2[static_cast<int>(j)], dy, t.grad_buf(xids[j]));
      if (t.wants(Var{wi})) t.grad_buf(wi)[static_cast<int>(j)] += dot(dy, t.v(xids[j]));
    }
  });
  return out;
}

Var Tape::l2_normalize(Var a) {
  check(a);
  double nrm = l2_norm(v(a.id));
  if (!(nrm >= 1e-12))
    throw NumericError("l2_normalize: degenerate norm " + std::to_string(nrm));
  Var sq = mul(a, a);
  Var n2 = sum(sq);
  Var nr = pow_const(n2, 0.5);
  Var inv = pow_const(nr, -1.0);
  return mul_scalar(a, inv);
}

Var Tape::mse(Var pred, Var target) {
  Var d = sub(pred, target);
  return mean(mul(d, d));
}

Var Tape::mae(Var pred, Var target) { return mean(abs(sub(pred, target))); }

const Tensor& Tape::val(Var a) const {
  check(a);
  return v(a.id);
}

const Tensor& Tape::grad(Var a) const {
  check(a);
  const Node& n = nodes_[static_cast<std::size_t>(a.id)];
  if (!n.grad.same_shape(n.value))
    const_cast<Tape*>(this)->grad_buf(a.id);
  return nodes_[static_cast<std::size_t>(a.id)].grad;
}

void Tape::backward(Var seed) {
  check(seed);
  if (ran_backward_) throw std::logic_error("Tape: backward() already ran");
  ran_backward_ = true;
  const Tensor& sv = v(seed.id);
  if (sv.size() != 1) throw ShapeError("backward: seed must be a scalar, got " + sv.shape_str());
  if (!wants(seed)) return;  // constant graph, all gradients stay zero
  grad_buf(seed.id)[0] = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)(*this);
}

void Tape::export_grads(ParamStore& store) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.name.empty()) continue;
    if (!n.grad.same_shape(n.value)) continue;  // untouched by backward
    store.accumulate_grad(n.name, n.grad);
  }
}

}  // namespace nid
