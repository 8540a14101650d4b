// SPDX-License-Identifier: Apache-2.0
#include "nid/optim.hpp"

#include <algorithm>
#include <cmath>

namespace nid {

Adam::Adam(ParamStore& store, double lr, double beta1, double beta2, double eps)
    : store_(store), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::set_prefix_lr(const std::string& prefix, double lr) {
  for (auto& [p, v] : prefix_lr_) {
    if (p == prefix) {
      v = lr;
      return;
    }
  }
  prefix_lr_.emplace_back(prefix, lr);
}

double Adam::resolve_lr(const std::string& name) const {
  double lr = lr_;
  std::size_t best = 0;
  for (auto& [prefix, v] : prefix_lr_) {
    if (prefix.size() >= best && name.rfind(prefix, 0) == 0) {
      best = prefix.size();
      lr = v;
    }
  }
  return lr;
}

void Adam::step() {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const std::string& name : store_.names()) {
    Tensor& p = store_.value(name);
    Tensor& g = store_.grad(name);
    auto it = state_.find(name);
    if (it == state_.end()) {
      it = state_.emplace(name, std::make_pair(Tensor::zeros(p.shape()), Tensor::zeros(p.shape())))
               .first;
    }
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    double lr = resolve_lr(name);
    for (std::int64_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
    g.fill(0.0);
  }
}

void Sgd::step() {
  for (const std::string& name : store_.names()) {
    Tensor& p = store_.value(name);
    Tensor& g = store_.grad(name);
    for (std::int64_t i = 0; i < p.size(); ++i) p[i] -= lr_ * g[i];
    g.fill(0.0);
  }
}

double finite_diff_max_rel_err(ParamStore& store, const LossFn& f, double h) {
  store.zero_grads();
  (void)f(store, true);
  std::vector<Tensor> analytic;
  analytic.reserve(store.size());
  for (const std::string& name : store.names()) analytic.push_back(store.grad(name));

  double worst = 0.0;
  for (std::size_t pi = 0; pi < store.names().size(); ++pi) {
    const std::string& name = store.names()[pi];
    Tensor& p = store.value(name);
    for (std::int64_t i = 0; i < p.size(); ++i) {
      double saved = p[i];
      p[i] = saved + h;
      double lp = f(store, false);
      p[i] = saved - h;
      double lm = f(store, false);
      p[i] = saved;
      double num = (lp - lm) / (2.0 * h);
      double ana = analytic[pi][i];
      double rel = std::fabs(ana - num) / std::max({std::fabs(ana), std::fabs(num), 1e-5});
      worst = std::max(worst, rel);
    }
  }
  store.zero_grads();
  return worst;
}

}  // namespace nid
