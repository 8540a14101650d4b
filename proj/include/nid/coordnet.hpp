// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "nid/param_store.hpp"
#include "nid/rng.hpp"
#include "nid/tape.hpp"
#include "nid/tensor.hpp"

namespace nid {

/// Shared network stem: sinusoidal positional embedding followed by
/// `hidden_layers` affine+sine layers. The frequency scale omega0 acts on the
/// embedding layer only; deeper sines run at unit frequency.
struct TrunkSpec {
  int in_dim = 2;
  int n_freq = 64;
  int width = 64;
  int hidden_layers = 2;
  double omega0 = 30.0;
};

/// Per-expert private tail: affine+sine into a small hidden width, then a
/// linear output layer. in_width must match the trunk width.
struct HeadSpec {
  int in_width = 64;
  int hidden = 32;
  int out_dim = 1;
};

struct NetworkDims {
  TrunkSpec trunk;
  HeadSpec head;
  int n_experts = 1;
};

/// Counts forward applications so tests can assert the trunk is shared and
/// only requested heads run.
struct EvalCounters {
  long trunk_evals = 0;
  long head_evals = 0;
};

inline std::string head_prefix(int i) { return "head" + std::to_string(i); }

// ---- initialization ----
// Affine layers draw weights and biases uniform in +-sqrt(6/fan_in),
// deterministic in the rng stream (weights first, then bias).
void init_affine(ParamStore& ps, const std::string& prefix, int fan_in, int fan_out, Rng& rng);
void init_trunk(ParamStore& ps, const std::string& prefix, const TrunkSpec& spec, Rng& rng);
void init_head(ParamStore& ps, const std::string& prefix, const HeadSpec& spec, Rng& rng);
/// Full trunk + n expert heads under the standard naming scheme
/// ("trunk/...", "head<i>/...").
ParamStore init_network(const NetworkDims& dims, std::uint64_t seed);

// ---- tape forward (training path) ----
Var trunk_forward(Tape& t, const ParamStore& ps, const std::string& prefix, const TrunkSpec& spec,
                  Var x);
Var head_forward(Tape& t, const ParamStore& ps, const std::string& prefix, const HeadSpec& spec,
                 Var feats);

// ---- plain forward (inference path, no tape) ----
Tensor sine_eval(const Tensor& x, double omega0);
Tensor trunk_eval(const ParamStore& ps, const std::string& prefix, const TrunkSpec& spec,
                  const Tensor& x, EvalCounters* counters = nullptr);
Tensor head_eval(const ParamStore& ps, const std::string& prefix, const HeadSpec& spec,
                 const Tensor& feats, EvalCounters* counters = nullptr);

/// Basis evaluation: trunk once, then each requested head on the shared
/// features. Returns [B x |ids| x C].
Tensor eval_basis(const ParamStore& ps, const TrunkSpec& trunk, const HeadSpec& head,
                  const std::vector<int>& expert_ids, const Tensor& x,
                  EvalCounters* counters = nullptr);

// ---- closed-form reference model: f(x) = sum_i alpha_i sin(omega0 (w_i.x + b_i)) + c ----
struct TwoLayerSiren {
  Tensor freq;   // [n_freq x m], rows are frequency vectors
  Tensor phase;  // [n_freq]
  Tensor alpha;  // [n_freq]
  double offset = 0.0;
  double omega0 = 1.0;
};

/// Positional embedding gamma(x)[r,i] = sin(omega0 (freq_i . x_r + phase_i)).
Tensor embed(const Tensor& x, const Tensor& freq, const Tensor& phase, double omega0);
Tensor eval_two_layer(const TwoLayerSiren& model, const Tensor& x);  // [B]
TwoLayerSiren random_two_layer(int m, int n_freq, double omega0, std::uint64_t seed);

}  // namespace nid
