// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "nid/coordnet.hpp"
#include "nid/gating.hpp"

namespace nid {

/// Evaluates f(x) = sum over code entries of weight * atom(x). Only listed
/// experts run; the trunk runs once. Empty codes produce the zero field.
/// `base` prefixes all parameter names (used by patch-wise dictionaries).
Tensor combine(const ParamStore& ps, const NetworkDims& dims, const SparseCode& code,
               const Tensor& x, EvalCounters* counters = nullptr, const std::string& base = "");

/// Training-path counterpart: weights is a tape node [|expert_ids|] (e.g. the
/// output of sparsify_on_tape, or a full dense gate row during warm-up).
Var combine_on_tape(Tape& t, const ParamStore& ps, const NetworkDims& dims,
                    const std::vector<int>& expert_ids, Var weights, Var x,
                    const std::string& base = "");

/// Dense atom response matrix [B*C x n]: column j is atom j flattened over
/// (batch, channel). Backbone of code-only adaptation, where the frozen
/// dictionary reduces every step to a matvec.
Tensor eval_all_atoms(const ParamStore& ps, const NetworkDims& dims, const Tensor& x,
                      EvalCounters* counters = nullptr, const std::string& base = "");

/// Adds a full trunk+heads network under `base` ("", "patch3/", ...).
void init_network_into(ParamStore& ps, const NetworkDims& dims, const std::string& base, Rng& rng);

// ---- patch-wise dictionaries ----
/// Regular tiling of [-1,1]^m with linear crossfade bands at interior patch
/// boundaries. overlap is the band half-width as a fraction of cell width.
struct PatchGrid {
  std::vector<int> counts;  // per-axis patch counts
  double overlap = 0.0;     // in [0, 0.5)

  int num_patches() const;
  int axes() const { return static_cast<int>(counts.size()); }
};

struct PatchWeight {
  int patch = 0;
  double weight = 0.0;
};

/// Covering patches and blend weights for one coordinate (clamped to the
/// domain). Weights sum to 1; at most 2^m entries.
std::vector<PatchWeight> patch_dispatch_point(const PatchGrid& grid, const double* x);
/// Batched form; warns on stderr (once per call) if any coordinate needed
/// clamping.
std::vector<std::vector<PatchWeight>> patch_dispatch(const PatchGrid& grid, const Tensor& x);

inline std::string patch_base(int p) { return "patch" + std::to_string(p) + "/"; }

/// Blended evaluation across a patch grid: each patch owns a dictionary under
/// patch_base(p) and its own code. f(x) = sum_p blend_p(x) f_p(x).
Tensor combine_patched(const ParamStore& ps, const NetworkDims& dims, const PatchGrid& grid,
                       const std::vector<SparseCode>& codes, const Tensor& x,
                       EvalCounters* counters = nullptr);

}  // namespace nid
