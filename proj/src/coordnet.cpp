// SPDX-License-Identifier: Apache-2.0
#include "nid/coordnet.hpp"

#include <cmath>
#include <stdexcept>

#include "nid/tensor_ops.hpp"

namespace nid {

void init_affine(ParamStore& ps, const std::string& prefix, int fan_in, int fan_out, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  ps.add(prefix + "/w", uniform_tensor(rng, {fan_in, fan_out}, -bound, bound));
  ps.add(prefix + "/b", uniform_tensor(rng, {fan_out}, -bound, bound));
}

void init_trunk(ParamStore& ps, const std::string& prefix, const TrunkSpec& spec, Rng& rng) {
  init_affine(ps, prefix + "/embed", spec.in_dim, spec.n_freq, rng);
  int in = spec.n_freq;
  for (int l = 0; l < spec.hidden_layers; ++l) {
    init_affine(ps, prefix + "/h" + std::to_string(l), in, spec.width, rng);
    in = spec.width;
  }
}

void init_head(ParamStore& ps, const std::string& prefix, const HeadSpec& spec, Rng& rng) {
  init_affine(ps, prefix + "/a", spec.in_width, spec.hidden, rng);
  init_affine(ps, prefix + "/out", spec.hidden, spec.out_dim, rng);
}

ParamStore init_network(const NetworkDims& dims, std::uint64_t seed) {
  if (dims.head.in_width != (dims.trunk.hidden_layers > 0 ? dims.trunk.width : dims.trunk.n_freq))
    throw ShapeError("init_network: head in_width " + std::to_string(dims.head.in_width) +
                     " does not match trunk output width");
  Rng rng = make_rng(seed);
  ParamStore ps;
  init_trunk(ps, "trunk", dims.trunk, rng);
  for (int i = 0; i < dims.n_experts; ++i) init_head(ps, head_prefix(i), dims.head, rng);
  return ps;
}

Var trunk_forward(Tape& t, const ParamStore& ps, const std::string& prefix, const TrunkSpec& spec,
                  Var x) {
  Var w = t.param(ps.value(prefix + "/embed/w"), prefix + "/embed/w");
  Var b = t.param(ps.value(prefix + "/embed/b"), prefix + "/embed/b");
  Var y = t.sine(t.affine(x, w, b), spec.omega0);
  for (int l = 0; l < spec.hidden_layers; ++l) {
    std::string lp = prefix + "/h" + std::to_string(l);
    Var lw = t.param(ps.value(lp + "/w"), lp + "/w");
    Var lb = t.param(ps.value(lp + "/b"), lp + "/b");
    y = t.sine(t.affine(y, lw, lb), 1.0);
  }
  return y;
}

Var head_forward(Tape& t, const ParamStore& ps, const std::string& prefix, const HeadSpec&,
                 Var feats) {
  Var aw = t.param(ps.value(prefix + "/a/w"), prefix + "/a/w");
  Var ab = t.param(ps.value(prefix + "/a/b"), prefix + "/a/b");
  Var z = t.sine(t.affine(feats, aw, ab), 1.0);
  Var ow = t.param(ps.value(prefix + "/out/w"), prefix + "/out/w");
  Var ob = t.param(ps.value(prefix + "/out/b"), prefix + "/out/b");
  return t.affine(z, ow, ob);
}

Tensor sine_eval(const Tensor& x, double omega0) {
  Tensor y = Tensor::zeros(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) y[i] = std::sin(omega0 * x[i]);
  return y;
}

Tensor trunk_eval(const ParamStore& ps, const std::string& prefix, const TrunkSpec& spec,
                  const Tensor& x, EvalCounters* counters) {
  if (counters) ++counters->trunk_evals;
  Tensor y = sine_eval(
      affine_fwd(x, ps.value(prefix + "/embed/w"), ps.value(prefix + "/embed/b")), spec.omega0);
  for (int l = 0; l < spec.hidden_layers; ++l) {
    std::string lp = prefix + "/h" + std::to_string(l);
    y = sine_eval(affine_fwd(y, ps.value(lp + "/w"), ps.value(lp + "/b")), 1.0);
  }
  return y;
}

Tensor head_eval(const ParamStore& ps, const std::string& prefix, const HeadSpec&,
                 const Tensor& feats, EvalCounters* counters) {
  if (counters) ++counters->head_evals;
  Tensor z = sine_eval(affine_fwd(feats, ps.value(prefix + "/a/w"), ps.value(prefix + "/a/b")), 1.0);
  return affine_fwd(z, ps.value(prefix + "/out/w"), ps.value(prefix + "/out/b"));
}

Tensor eval_basis(const ParamStore& ps, const TrunkSpec& trunk, const HeadSpec& head,
                  const std::vector<int>& expert_ids, const Tensor& x, EvalCounters* counters) {
  Tensor feats = trunk_eval(ps, "trunk", trunk, x, counters);
  int b = x.rows();
  int e = static_cast<int>(expert_ids.size());
  Tensor out = Tensor::zeros({b, e, head.out_dim});
  for (int j = 0; j < e; ++j) {
    int id = expert_ids[static_cast<std::size_t>(j)];
    if (!ps.has(head_prefix(id) + "/a/w"))
      throw std::out_of_range("eval_basis: no expert " + std::to_string(id));
    Tensor v = head_eval(ps, head_prefix(id), head, feats, counters);  // [B x C]
    for (int r = 0; r < b; ++r)
      for (int c = 0; c < head.out_dim; ++c)
        out[(static_cast<std::int64_t>(r) * e + j) * head.out_dim + c] = v.at(r, c);
  }
  return out;
}

Tensor embed(const Tensor& x, const Tensor& freq, const Tensor& phase, double omega0) {
  if (x.rank() != 2 || freq.rank() != 2 || x.cols() != freq.cols())
    throw ShapeError("embed: coords " + x.shape_str() + " vs frequencies " + freq.shape_str());
  if (phase.size() != freq.rows())
    throw ShapeError("embed: phases " + phase.shape_str() + " vs frequencies " + freq.shape_str());
  Tensor out = Tensor::zeros({x.rows(), freq.rows()});
  gemm_nt_acc(x, freq, out);  // out[r,i] = freq_i . x_r
  for (int r = 0; r < out.rows(); ++r)
    for (int i = 0; i < out.cols(); ++i)
      out.at(r, i) = std::sin(omega0 * (out.at(r, i) + phase[i]));
  return out;
}

Tensor eval_two_layer(const TwoLayerSiren& model, const Tensor& x) {
  Tensor g = embed(x, model.freq, model.phase, model.omega0);
  Tensor out = Tensor::zeros({x.rows()});
  for (int r = 0; r < g.rows(); ++r) {
    double acc = model.offset;
    for (int i = 0; i < g.cols(); ++i) acc += model.alpha[i] * g.at(r, i);
    out[r] = acc;
  }
  return out;
}

TwoLayerSiren random_two_layer(int m, int n_freq, double omega0, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  TwoLayerSiren model;
  model.freq = uniform_tensor(rng, {n_freq, m}, -3.0, 3.0);
  model.phase = uniform_tensor(rng, {n_freq}, -3.14, 3.14);
  model.alpha = uniform_tensor(rng, {n_freq}, -1.0, 1.0);
  model.offset = uniform(rng, -1.0, 1.0);
  model.omega0 = omega0;
  return model;
}

}  // namespace nid
