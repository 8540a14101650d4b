// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "nid/coordnet.hpp"
#include "nid/rng.hpp"
#include "nid/tape.hpp"

using namespace nid;

namespace {

// Independent scalar-loop evaluation of the trunk+head pipeline, reading the
// same named parameters. Deliberately avoids the library's matrix kernels.
std::vector<double> scalar_pipeline(const ParamStore& ps, const TrunkSpec& ts, int expert,
                                    const std::vector<double>& x) {
  auto layer = [&ps](const std::string& p, const std::vector<double>& in, double omega,
                     bool linear) {
    const Tensor& w = ps.value(p + "/w");
    const Tensor& b = ps.value(p + "/b");
    std::vector<double> out(static_cast<std::size_t>(w.cols()));
    for (int o = 0; o < w.cols(); ++o) {
      double acc = b[o];
      for (int i = 0; i < w.rows(); ++i) acc += in[static_cast<std::size_t>(i)] * w.at(i, o);
      out[static_cast<std::size_t>(o)] = linear ? acc : std::sin(omega * acc);
    }
    return out;
  };
  std::vector<double> h = layer("trunk/embed", x, ts.omega0, false);
  for (int l = 0; l < ts.hidden_layers; ++l)
    h = layer("trunk/h" + std::to_string(l), h, 1.0, false);
  h = layer(head_prefix(expert) + "/a", h, 1.0, false);
  return layer(head_prefix(expert) + "/out", h, 1.0, true);
}

}  // namespace

TEST_SUITE("coordnet") {

TEST_CASE("positional embedding closed-form cases") {
  Tensor x0 = Tensor::matrix(2, 3, {0.1, 0.2, 0.3, -0.5, 0.4, 0.0});
  Tensor zf = Tensor::zeros({4, 3});
  Tensor zp = Tensor::zeros({4});
  Tensor g = embed(x0, zf, zp, 30.0);
  for (std::int64_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);

  Tensor x1 = Tensor::matrix(1, 1, {M_PI / 2});
  Tensor f1 = Tensor::matrix(1, 1, {1.0});
  Tensor p1 = Tensor::zeros({1});
  CHECK(embed(x1, f1, p1, 1.0)[0] == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(embed(Tensor::matrix(1, 2, {0, 0}), f1, p1, 1.0), ShapeError);
}

TEST_CASE("positional embedding matches a per-row scalar loop") {
  Rng rng = make_rng(11);
  Tensor x = uniform_tensor(rng, {7, 2}, -1, 1);
  Tensor freq = uniform_tensor(rng, {5, 2}, -3, 3);
  Tensor phase = uniform_tensor(rng, {5}, -3, 3);
  Tensor g = embed(x, freq, phase, 2.0);
  for (int r = 0; r < 7; ++r) {
    for (int i = 0; i < 5; ++i) {
      double dotv = 0.0;
      for (int j = 0; j < 2; ++j) dotv += freq.at(i, j) * x.at(r, j);
      CHECK(g.at(r, i) == doctest::Approx(std::sin(2.0 * (dotv + phase[i]))).epsilon(1e-12));
    }
  }
}

TEST_CASE("two-layer model closed-form cases") {
  TwoLayerSiren m;
  m.freq = Tensor::matrix(2, 1, {1.0, 2.0});
  m.phase = Tensor::vec({0.0, 0.5});
  m.alpha = Tensor::vec({0.0, 0.0});
  m.offset = 3.25;
  m.omega0 = 1.0;
  Tensor x = Tensor::matrix(3, 1, {-1, 0, 1});
  Tensor y = eval_two_layer(m, x);
  for (int i = 0; i < 3; ++i) CHECK(y[i] == 3.25);

  m.freq = Tensor::matrix(1, 1, {1.0});
  m.phase = Tensor::vec({0.0});
  m.alpha = Tensor::vec({1.0});
  m.offset = 0.0;
  CHECK(eval_two_layer(m, Tensor::matrix(1, 1, {M_PI / 2}))[0] ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("two-layer model matches the direct scalar sum") {
  for (std::uint64_t seed : {21ull, 22ull, 23ull}) {
    TwoLayerSiren m = random_two_layer(2, 16, 1.7, seed);
    Rng rng = make_rng(seed + 1000);
    Tensor x = uniform_tensor(rng, {9, 2}, -1, 1);
    Tensor y = eval_two_layer(m, x);
    for (int r = 0; r < 9; ++r) {
      double acc = m.offset;
      for (int i = 0; i < 16; ++i) {
        double dotv = 0.0;
        for (int j = 0; j < 2; ++j) dotv += m.freq.at(i, j) * x.at(r, j);
        acc += m.alpha[i] * std::sin(m.omega0 * (dotv + m.phase[i]));
      }
      CHECK(std::fabs(y[r] - acc) < 1e-9);
    }
  }
}

TEST_CASE("two-layer model is invariant under frequency permutation") {
  TwoLayerSiren m = random_two_layer(2, 8, 2.0, 77);
  Rng rng = make_rng(78);
  Tensor x = uniform_tensor(rng, {5, 2}, -1, 1);
  Tensor y0 = eval_two_layer(m, x);

  std::vector<int> perm = {3, 1, 7, 0, 5, 2, 6, 4};
  TwoLayerSiren p = m;
  for (int i = 0; i < 8; ++i) {
    p.freq.at(i, 0) = m.freq.at(perm[static_cast<std::size_t>(i)], 0);
    p.freq.at(i, 1) = m.freq.at(perm[static_cast<std::size_t>(i)], 1);
    p.phase[i] = m.phase[perm[static_cast<std::size_t>(i)]];
    p.alpha[i] = m.alpha[perm[static_cast<std::size_t>(i)]];
  }
  Tensor y1 = eval_two_layer(p, x);
  for (int r = 0; r < 5; ++r) CHECK(y0[r] == doctest::Approx(y1[r]).epsilon(1e-12));
}

TEST_CASE("initialization is deterministic and respects the fan-in bound") {
  NetworkDims dims;
  dims.trunk = {2, 6, 6, 1, 30.0};
  dims.head = {6, 4, 1};
  dims.n_experts = 3;
  ParamStore a = init_network(dims, 42);
  ParamStore b = init_network(dims, 42);
  CHECK(a.checksum() == b.checksum());
  ParamStore c = init_network(dims, 43);
  CHECK(a.checksum() != c.checksum());

  // fan_in = 6 for trunk/h0: every weight and bias within +-1.
  const Tensor& w = a.value("trunk/h0/w");
  for (std::int64_t i = 0; i < w.size(); ++i) {
    CHECK(w[i] <= 1.0);
    CHECK(w[i] >= -1.0);
  }
}

TEST_CASE("initialization sample mean is near zero") {
  NetworkDims dims;
  dims.trunk = {2, 64, 64, 1, 30.0};
  dims.head = {64, 32, 1};
  dims.n_experts = 1;
  ParamStore ps = init_network(dims, 7);
  const Tensor& w = ps.value("trunk/h0/w");
  double mean = std::accumulate(w.data(), w.data() + w.size(), 0.0) /
                static_cast<double>(w.size());
  double bound = std::sqrt(6.0 / 64.0);
  double three_sigma = 3.0 * bound / std::sqrt(3.0 * static_cast<double>(w.size()));
  CHECK(std::fabs(mean) < three_sigma);
}

TEST_CASE("tape and plain forwards agree, and match the scalar pipeline") {
  NetworkDims dims;
  dims.trunk = {2, 8, 6, 2, 2.5};
  dims.head = {6, 4, 2};
  dims.n_experts = 2;
  ParamStore ps = init_network(dims, 5);
  Rng rng = make_rng(6);
  Tensor x = uniform_tensor(rng, {4, 2}, -1, 1);

  Tensor feats = trunk_eval(ps, "trunk", dims.trunk, x);
  Tensor plain = head_eval(ps, head_prefix(1), dims.head, feats);

  Tape t;
  Var xv = t.leaf(x);
  Var tf = trunk_forward(t, ps, "trunk", dims.trunk, xv);
  Var hv = head_forward(t, ps, head_prefix(1), dims.head, tf);
  const Tensor& taped = t.val(hv);

  for (std::int64_t i = 0; i < plain.size(); ++i)
    CHECK(plain[i] == doctest::Approx(taped[i]).epsilon(1e-12));

  for (int r = 0; r < 4; ++r) {
    auto ref = scalar_pipeline(ps, dims.trunk, 1, {x.at(r, 0), x.at(r, 1)});
    for (int c = 0; c < 2; ++c)
      CHECK(plain.at(r, c) == doctest::Approx(ref[static_cast<std::size_t>(c)]).epsilon(1e-10));
  }
}

TEST_CASE("basis evaluation shares the trunk and runs only requested heads") {
  NetworkDims dims;
  dims.trunk = {2, 8, 8, 1, 3.0};
  dims.head = {8, 4, 1};
  dims.n_experts = 6;
  ParamStore ps = init_network(dims, 9);
  Rng rng = make_rng(10);
  Tensor x = uniform_tensor(rng, {5, 2}, -1, 1);

  EvalCounters counters;
  Tensor basis = eval_basis(ps, dims.trunk, dims.head, {4, 0, 4}, x, &counters);
  CHECK(counters.trunk_evals == 1);
  CHECK(counters.head_evals == 3);
  CHECK(basis.shape() == std::vector<int>{5, 3, 1});

  // Duplicate expert request yields identical slices.
  for (int r = 0; r < 5; ++r) CHECK(basis[r * 3 + 0] == basis[r * 3 + 2]);

  CHECK_THROWS_AS(eval_basis(ps, dims.trunk, dims.head, {6}, x), std::out_of_range);
}

TEST_CASE("zeroed output layer silences an expert regardless of trunk") {
  NetworkDims dims;
  dims.trunk = {2, 8, 8, 1, 3.0};
  dims.head = {8, 4, 1};
  dims.n_experts = 2;
  ParamStore ps = init_network(dims, 12);
  ps.value(head_prefix(0) + "/out/w").fill(0.0);
  ps.value(head_prefix(0) + "/out/b").fill(0.0);
  Rng rng = make_rng(13);
  Tensor x = uniform_tensor(rng, {6, 2}, -1, 1);
  Tensor basis = eval_basis(ps, dims.trunk, dims.head, {0, 1}, x);
  for (int r = 0; r < 6; ++r) {
    CHECK(basis[r * 2 + 0] == 0.0);
    CHECK(basis[r * 2 + 1] != 0.0);
  }
}

TEST_CASE("analytic input gradients match directional finite differences") {
  NetworkDims dims;
  dims.trunk = {2, 10, 8, 1, 2.5};
  dims.head = {8, 4, 1};
  dims.n_experts = 1;
  ParamStore ps = init_network(dims, 31);

  Tensor x0 = Tensor::matrix(1, 2, {0.31, -0.17});
  Tape t;
  Var xv = t.param(x0, "coords");
  Var out = head_forward(t, ps, head_prefix(0), dims.head,
                         trunk_forward(t, ps, "trunk", dims.trunk, xv));
  Var y = t.reshape(out, {1});
  t.backward(y);
  Tensor gx = t.grad(xv);

  double h = 1e-5;
  for (int j = 0; j < 2; ++j) {
    Tensor xp = x0, xm = x0;
    xp[j] += h;
    xm[j] -= h;
    double fp = eval_basis(ps, dims.trunk, dims.head, {0}, xp)[0];
    double fm = eval_basis(ps, dims.trunk, dims.head, {0}, xm)[0];
    double fd = (fp - fm) / (2 * h);
    double rel = std::fabs(fd - gx[j]) / std::max({std::fabs(fd), std::fabs(gx[j]), 1e-8});
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("init_network rejects mismatched head width") {
  NetworkDims dims;
  dims.trunk = {2, 8, 8, 1, 3.0};
  dims.head = {7, 4, 1};
  CHECK_THROWS_AS(init_network(dims, 1), ShapeError);
}

}  // TEST_SUITE
