// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nid/param_store.hpp"

namespace nid {

/// Adam with optional per-prefix learning-rate overrides (longest matching
/// prefix wins). step() consumes the accumulated gradients and zeroes them.
class Adam {
 public:
  explicit Adam(ParamStore& store, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  void set_prefix_lr(const std::string& prefix, double lr);
  void step();
  long iterations() const { return t_; }

 private:
  double resolve_lr(const std::string& name) const;

  ParamStore& store_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::pair<std::string, double>> prefix_lr_;
  std::unordered_map<std::string, std::pair<Tensor, Tensor>> state_;  // first/second moments
};

/// Plain gradient descent; same consume-and-zero contract as Adam.
class Sgd {
 public:
  explicit Sgd(ParamStore& store, double lr) : store_(store), lr_(lr) {}
  void set_lr(double lr) { lr_ = lr; }
  void step();

 private:
  ParamStore& store_;
  double lr_;
};

/// Loss evaluator used by the gradient checker. Must compute the loss from
/// the current parameter values; when `grads` is set it must also accumulate
/// dL/dparam into the store.
using LossFn = std::function<double(ParamStore&, bool grads)>;

/// Central-difference check of every parameter scalar against the analytic
/// gradient. Returns the max relative error, |a - n| / max(|a|, |n|, 1e-5).
/// The comparison floor sits above the central-difference roundoff level
/// (eps * |loss| / 2h, about 1e-11 at the default h), so a gradient that is
/// exactly zero compares as equal instead of as a noise ratio.
double finite_diff_max_rel_err(ParamStore& store, const LossFn& f, double h = 1e-5);

}  // namespace nid
