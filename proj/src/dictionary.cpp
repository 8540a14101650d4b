// SPDX-License-Identifier: Apache-2.0
#include "nid/dictionary.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "nid/tensor_ops.hpp"

namespace nid {

Tensor combine(const ParamStore& ps, const NetworkDims& dims, const SparseCode& code,
               const Tensor& x, EvalCounters* counters, const std::string& base) {
  Tensor out = Tensor::zeros({x.rows(), dims.head.out_dim});
  if (code.entries.empty()) return out;
  Tensor feats = trunk_eval(ps, base + "trunk", dims.trunk, x, counters);
  for (auto& [idx, w] : code.entries) {
    if (idx < 0 || idx >= dims.n_experts)
      throw std::out_of_range("combine: expert " + std::to_string(idx) + " of " +
                              std::to_string(dims.n_experts));
    Tensor v = head_eval(ps, base + head_prefix(idx), dims.head, feats, counters);
    axpy(w, v, out);
  }
  return out;
}

Var combine_on_tape(Tape& t, const ParamStore& ps, const NetworkDims& dims,
                    const std::vector<int>& expert_ids, Var weights, Var x,
                    const std::string& base) {
  if (expert_ids.empty()) throw std::invalid_argument("combine_on_tape: no experts listed");
  if (t.val(weights).size() != static_cast<std::int64_t>(expert_ids.size()))
    throw ShapeError("combine_on_tape: " + std::to_string(expert_ids.size()) + " experts vs weights " +
                     t.val(weights).shape_str());
  Var feats = trunk_forward(t, ps, base + "trunk", dims.trunk, x);
  std::vector<Var> atoms;
  atoms.reserve(expert_ids.size());
  for (int idx : expert_ids) {
    if (idx < 0 || idx >= dims.n_experts)
      throw std::out_of_range("combine_on_tape: expert " + std::to_string(idx) + " of " +
                              std::to_string(dims.n_experts));
    atoms.push_back(head_forward(t, ps, base + head_prefix(idx), dims.head, feats));
  }
  return t.weighted_sum(atoms, weights);
}

Tensor eval_all_atoms(const ParamStore& ps, const NetworkDims& dims, const Tensor& x,
                      EvalCounters* counters, const std::string& base) {
  int b = x.rows();
  int c = dims.head.out_dim;
  Tensor out = Tensor::zeros({b * c, dims.n_experts});
  Tensor feats = trunk_eval(ps, base + "trunk", dims.trunk, x, counters);
  for (int j = 0; j < dims.n_experts; ++j) {
    Tensor v = head_eval(ps, base + head_prefix(j), dims.head, feats, counters);  // [B x C]
    for (std::int64_t i = 0; i < v.size(); ++i) out.at(static_cast<int>(i), j) = v[i];
  }
  return out;
}

void init_network_into(ParamStore& ps, const NetworkDims& dims, const std::string& base, Rng& rng) {
  init_trunk(ps, base + "trunk", dims.trunk, rng);
  for (int i = 0; i < dims.n_experts; ++i) init_head(ps, base + head_prefix(i), dims.head, rng);
}

int PatchGrid::num_patches() const {
  int n = 1;
  for (int c : counts) {
    if (c < 1) throw std::invalid_argument("PatchGrid: non-positive patch count");
    n *= c;
  }
  return n;
}

namespace {

struct AxisCover {
  int cell[2];
  double weight[2];
  int count = 1;
};

// Per-axis coverage: the base cell always covers; inside a crossfade band the
// adjacent cell covers too, with linearly complementary weights.
AxisCover axis_cover(double u, int cells, double overlap) {
  double w = 2.0 / static_cast<double>(cells);
  double d = overlap * w;
  int c = static_cast<int>((u + 1.0) / w);
  if (c >= cells) c = cells - 1;
  if (c < 0) c = 0;
  double lo = -1.0 + c * w;
  double hi = lo + w;
  AxisCover out;
  out.cell[0] = c;
  out.weight[0] = 1.0;
  if (d > 0.0 && c > 0 && u < lo + d) {
    double wn = (lo + d - u) / (2.0 * d);
    out.cell[0] = c - 1;
    out.weight[0] = wn;
    out.cell[1] = c;
    out.weight[1] = 1.0 - wn;
    out.count = 2;
  } else if (d > 0.0 && c + 1 < cells && u > hi - d) {
    double wn = (u - (hi - d)) / (2.0 * d);
    out.cell[1] = c + 1;
    out.weight[1] = wn;
    out.weight[0] = 1.0 - wn;
    out.count = 2;
  }
  return out;
}

}  // namespace

std::vector<PatchWeight> patch_dispatch_point(const PatchGrid& grid, const double* x) {
  int m = grid.axes();
  if (m == 0) throw std::invalid_argument("patch_dispatch: empty grid");
  if (!(grid.overlap >= 0.0 && grid.overlap < 0.5))
    throw std::invalid_argument("patch_dispatch: overlap must lie in [0, 0.5)");
  std::vector<AxisCover> covers(static_cast<std::size_t>(m));
  for (int a = 0; a < m; ++a) {
    double u = x[a];
    if (u < -1.0) u = -1.0;
    if (u > 1.0) u = 1.0;
    covers[static_cast<std::size_t>(a)] = axis_cover(u, grid.counts[static_cast<std::size_t>(a)],
                                                     grid.overlap);
  }
  // Cartesian product of per-axis covers; row-major patch ids.
  std::vector<PatchWeight> out;
  int combos = 1;
  for (auto& cv : covers) combos *= cv.count;
  out.reserve(static_cast<std::size_t>(combos));
  for (int pick = 0; pick < combos; ++pick) {
    int rem = pick;
    int id = 0;
    double weight = 1.0;
    for (int a = 0; a < m; ++a) {
      const AxisCover& cv = covers[static_cast<std::size_t>(a)];
      int sel = rem % cv.count;
      rem /= cv.count;
      id = id * grid.counts[static_cast<std::size_t>(a)] + cv.cell[sel];
      weight *= cv.weight[sel];
    }
    out.push_back({id, weight});
  }
  return out;
}

std::vector<std::vector<PatchWeight>> patch_dispatch(const PatchGrid& grid, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != grid.axes())
    throw ShapeError("patch_dispatch: coords " + x.shape_str() + " vs " +
                     std::to_string(grid.axes()) + "-axis grid");
  bool clamped = false;
  std::vector<std::vector<PatchWeight>> out(static_cast<std::size_t>(x.rows()));
  for (int r = 0; r < x.rows(); ++r) {
    for (int a = 0; a < x.cols(); ++a) {
      double u = x.at(r, a);
      if (u < -1.0 || u > 1.0) clamped = true;
    }
    out[static_cast<std::size_t>(r)] = patch_dispatch_point(grid, x.data() + static_cast<std::ptrdiff_t>(r) * x.cols());
  }
  if (clamped) std::fprintf(stderr, "patch_dispatch: coordinates outside [-1,1] were clamped\n");
  return out;
}

Tensor combine_patched(const ParamStore& ps, const NetworkDims& dims, const PatchGrid& grid,
                       const std::vector<SparseCode>& codes, const Tensor& x,
                       EvalCounters* counters) {
  int np = grid.num_patches();
  if (static_cast<int>(codes.size()) != np)
    throw std::invalid_argument("combine_patched: " + std::to_string(codes.size()) +
                                " codes for " + std::to_string(np) + " patches");
  auto dispatch = patch_dispatch(grid, x);

  // Group rows by patch so each patch dictionary runs one batched pass.
  std::vector<std::vector<int>> rows(static_cast<std::size_t>(np));
  std::vector<std::vector<double>> blend(static_cast<std::size_t>(np));
  for (int r = 0; r < x.rows(); ++r) {
    for (const PatchWeight& pw : dispatch[static_cast<std::size_t>(r)]) {
      if (pw.weight == 0.0) continue;
      rows[static_cast<std::size_t>(pw.patch)].push_back(r);
      blend[static_cast<std::size_t>(pw.patch)].push_back(pw.weight);
    }
  }

  Tensor out = Tensor::zeros({x.rows(), dims.head.out_dim});
  for (int p = 0; p < np; ++p) {
    const auto& rs = rows[static_cast<std::size_t>(p)];
    if (rs.empty()) continue;
    Tensor sub = Tensor::zeros({static_cast<int>(rs.size()), x.cols()});
    for (std::size_t i = 0; i < rs.size(); ++i)
      for (int a = 0; a < x.cols(); ++a) sub.at(static_cast<int>(i), a) = x.at(rs[i], a);
    Tensor vals = combine(ps, dims, codes[static_cast<std::size_t>(p)], sub, counters,
                          patch_base(p));
    for (std::size_t i = 0; i < rs.size(); ++i)
      for (int c = 0; c < dims.head.out_dim; ++c)
        out.at(rs[i], c) += blend[static_cast<std::size_t>(p)][i] * vals.at(static_cast<int>(i), c);
  }
  return out;
}

}  // namespace nid
