// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "nid/tensor.hpp"

namespace nid {

class ParamStore;

/// Handle to a node on a Tape. Only meaningful together with the tape that
/// created it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over a fixed op set. A tape records one forward
/// computation; backward() replays it in exact reverse order, accumulating
/// gradients additively at fan-out nodes. A Tape is confined to a single
/// thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // ---- leaves ----
  Var leaf(Tensor value);                          // constant, no gradient
  Var param(Tensor value, std::string name);       // differentiable leaf; dedup by name
  bool has_param(const std::string& name) const;

  // ---- ops ----
  Var affine(Var x, Var w, Var b);                 // x[BxI] * w[IxO] + b[O]
  Var sine(Var x, double omega0);                  // sin(omega0 * x), elementwise
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);                           // Hadamard
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var sub_scalar(Var a, Var s);                    // a - s, s is a [1] node
  Var mul_scalar(Var a, Var s);                    // s * a, s is a [1] node
  Var pow_const(Var a, double p);
  Var abs(Var a);                                  // subgradient, sign(0) = 0
  Var sum(Var a);                                  // -> [1]
  Var mean(Var a);                                 // -> [1]
  Var reshape(Var a, std::vector<int> shape);
  Var gather(Var a, std::vector<int> idx);         // flat gather -> [|idx|]
  Var scatter(Var v, std::vector<int> idx, int n); // inverse of gather -> [n]
  Var gather_rows(Var a, std::vector<int> rows);   // rank-2 row subset
  Var scatter_rows(Var a, std::vector<int> rows, int total_rows);
  Var weighted_sum(const std::vector<Var>& xs, Var w);  // sum_j w[j]*xs[j]

  // ---- composites ----
  Var l2_normalize(Var v);                         // v / ||v||_2, exact Jacobian
  Var mse(Var pred, Var target);                   // mean squared error -> [1]
  Var mae(Var pred, Var target);                   // mean absolute error -> [1]

  // ---- execution ----
  const Tensor& val(Var v) const;
  const Tensor& grad(Var v) const;                 // zeros if untouched
  /// Runs reverse-mode accumulation from a scalar seed node.
  void backward(Var seed);
  /// Adds every named param gradient on this tape into `store`.
  void export_grads(ParamStore& store) const;

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;      // lazily sized
    bool needs_grad = false;
    std::string name; // set for params only
  };

  Var push(Tensor value, bool needs_grad);
  Tensor& grad_buf(int id);
  void record(std::function<void(Tape&)> fn) { records_.push_back(std::move(fn)); }
  const Tensor& v(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool wants(Var a) const { return nodes_[static_cast<std::size_t>(a.id)].needs_grad; }
  void check(Var a) const;

  std::vector<Node> nodes_;
  std::vector<std::function<void(Tape&)>> records_;
  std::unordered_map<std::string, int> param_ids_;
  bool ran_backward_ = false;
};

}  // namespace nid
