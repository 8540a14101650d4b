// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nid/coordnet.hpp"
#include "nid/data.hpp"
#include "nid/dictionary.hpp"
#include "nid/gating.hpp"
#include "nid/measurements.hpp"
#include "nid/param_store.hpp"
#include "nid/tensor.hpp"

namespace nid {

enum class LossKind { L2, L1 };

/// One flat bag of knobs shared by every pipeline. validate() throws
/// std::invalid_argument naming the offending key, which the CLI surfaces as
/// a config error.
struct TaskConfig {
  // dictionary architecture
  int n = 64;
  int k = 8;
  int channels = 1;
  int n_freq = 64;
  int trunk_width = 64;
  int trunk_layers = 2;
  int head_hidden = 32;
  double omega0 = 30.0;

  // training schedule
  int epochs = 100;
  int warmup_epochs = 5;
  int batch = 16;
  double lambda = 0.01;  // penalty weight, warm-up l1 and post-warm-up CV alike
  double beta = 0.5;     // video code-penalty growth exp(beta * expert_index)
  double lr_dict = 3e-4;
  double lr_codes = 1e-2;
  bool cv_abs = false;  // sum |alpha| instead of signed alpha inside the CV penalty
  std::uint64_t seed = 0;

  // gating
  std::string gating = "table";  // "table" | "encoder"
  int encoder_bins = 4;          // observation summary resolution (bins x bins x C)
  int encoder_hidden = 32;

  // measurement geometry
  int quadrature = 128;  // ray quadrature nodes Q

  NetworkDims dims() const;
  void validate() const;
};

/// Dictionary plus gate state after train_dictionary / video_decompose.
/// loss_log holds the full training objective per epoch; data_log the data
/// term alone. utilization is each expert's share of sum|alpha| over the
/// final epoch (sums to 1).
struct TrainedModel {
  ParamStore ps;
  NetworkDims dims;
  TaskConfig cfg;
  GateKind gate = GateKind::Table;
  EncoderGateSpec enc{};
  int instances = 0;
  std::vector<double> loss_log;
  std::vector<double> data_log;
  std::vector<double> utilization;
};

CheckpointMeta model_meta(const TrainedModel& model);

/// Training-time code of one instance: sparsify(raw gate row, k).
SparseCode training_code(const TrainedModel& model, int instance);

/// Field view over a frozen model + code. The returned closure borrows the
/// model; keep the model alive while the field is in use.
FieldFn model_field(const TrainedModel& model, SparseCode code);

/// Joint dictionary + gate training on pointwise measurements. Applies the
/// DenseL1 -> HardTopK schedule, the l1 penalty during warm-up, and the
/// batch CV penalty afterwards. Instances sharing one coordinate grid are
/// evaluated with shared trunk/head passes per batch.
TrainedModel train_dictionary(const std::vector<MeasurementSet>& data, const TaskConfig& cfg,
                              LossKind data_loss = LossKind::L2);

// ---- code-only adaptation ---------------------------------------------------

struct AdaptOptions {
  int k = -1;               // -1: the model's training k
  double lr = -1.0;         // -1: the model's lr_codes
  int steps = 100;
  LossKind loss = LossKind::L2;
  bool use_sgd = false;     // plain gradient descent instead of Adam
  double psnr_target = 0.0; // >0: record steps_to_target against this dB level
  double peak = 1.0;
  bool record_psnr = true;
  double dense_frac = 0.5;  // fraction of steps before the support freezes
  Tensor init;              // optional dense [n] initial code
  std::uint64_t noise_seed = 1;  // zeros + sigma=1e-3 noise fallback init
};

/// Code trajectory against a frozen dictionary. Codes stay unnormalized
/// during adaptation; `code` is the final top-k projection of `alpha`.
/// Histories have one entry per step and always score the top-k projection
/// of the current code, i.e. what would be returned if adaptation stopped
/// there, even while the underlying vector is still dense.
struct AdaptResult {
  SparseCode code;
  Tensor alpha;  // [n], k-sparse on return
  std::vector<double> loss_history;
  std::vector<double> psnr_history;
  int steps_to_target = -1;  // 1-based step index, -1 if never reached
};

/// One linear measurement block: predicted = A * alpha, compared to y under
/// `loss`, scaled by `weight`.
struct AdaptTerm {
  Tensor A;  // [M x n]
  Tensor y;  // [M] or [M x 1]
  LossKind loss = LossKind::L2;
  double weight = 1.0;
};

/// Two-phase sparse descent over a dense code: first `dense_frac` of the
/// steps run unconstrained so atom magnitudes sort themselves out, then the
/// support freezes to the current top-k and the remaining steps debias on it.
/// Hard-truncating every step instead would pin whichever support the first
/// few steps produced: a dropped atom only ever accumulates one optimizer
/// step before being wiped, so it can never overtake an incumbent.
AdaptResult adapt_linear(const std::vector<AdaptTerm>& terms, int n, int k,
                         const AdaptOptions& opt);

/// Pointwise adaptation: atoms evaluated once at obs.omega, then code-only
/// descent. Init priority: opt.init, else encoder gate output, else noise.
AdaptResult adapt_code(const TrainedModel& model, const MeasurementSet& obs,
                       const AdaptOptions& opt);

/// Restoration = adapt_code with l1 loss from a random init; the solver never
/// sees the corruption mask. `restored` is the fitted field on obs.omega.
struct InpaintResult {
  AdaptResult adapt;
  Tensor restored;  // [B x C]
};
InpaintResult inpaint(const TrainedModel& model, const MeasurementSet& corrupted,
                      AdaptOptions opt = {});

/// Sparse-view CT: per-atom sinograms via linearity of the ray transform,
/// then code-only descent on the sinogram residual.
struct CtResult {
  AdaptResult adapt;
  Tensor atom_sinograms;  // [#rays x n]
};
CtResult ct_reconstruct(const TrainedModel& model, const Tensor& sino,
                        const std::vector<double>& angles, const std::vector<double>& offsets,
                        AdaptOptions opt = {});

/// SDF adaptation: |f| on surface samples plus |f - d| on free samples.
AdaptResult sdf_fit(const TrainedModel& model, const std::vector<SdfSample>& on_surface,
                    const std::vector<SdfSample>& free_samples, AdaptOptions opt = {});

// ---- video ------------------------------------------------------------------

/// Exponentially weighted code penalty sum_i |alpha_i| * exp(beta * i), 0-based.
double video_penalty(const Tensor& alpha, double beta);

/// Joint dictionary + temporal code network training under l1 data loss.
/// f_X(t) = sum_i alpha_i(t) b_i(x, y); f_E(t) = frame_t - f_X(t) exactly.
struct VideoResult {
  TrainedModel model;
  std::vector<Tensor> fx;  // per frame [B x C]
  std::vector<Tensor> fe;
};
VideoResult video_decompose(const std::vector<MeasurementSet>& frames, const TaskConfig& cfg);

// ---- per-scene baseline ------------------------------------------------------

/// Single coordinate network (one expert, fixed unit code) trained from
/// scratch; the control arm for every comparative criterion.
struct FitResult {
  ParamStore ps;
  NetworkDims dims;
  std::vector<double> loss_history;
  std::vector<double> psnr_history;
  int steps_to_target = -1;
};

FitResult baseline_fit(const MeasurementSet& obs, const TaskConfig& cfg, int steps,
                       LossKind loss = LossKind::L2, double psnr_target = 0.0);
FitResult baseline_fit_rays(const Tensor& sino, const std::vector<double>& angles,
                            const std::vector<double>& offsets, const TaskConfig& cfg, int steps);
FitResult baseline_fit_sdf(const std::vector<SdfSample>& on_surface,
                           const std::vector<SdfSample>& free_samples, const TaskConfig& cfg,
                           int steps);

/// Field view over a baseline fit; borrows `fit` like model_field.
FieldFn baseline_field(const FitResult& fit);

}  // namespace nid
