// SPDX-License-Identifier: Apache-2.0
#include "nid/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "nid/optim.hpp"
#include "nid/rng.hpp"
#include "nid/tape.hpp"
#include "nid/tensor_ops.hpp"

namespace nid {

NetworkDims TaskConfig::dims() const {
  NetworkDims d;
  d.trunk = TrunkSpec{2, n_freq, trunk_width, trunk_layers, omega0};
  d.head = HeadSpec{trunk_layers > 0 ? trunk_width : n_freq, head_hidden, channels};
  d.n_experts = n;
  return d;
}

void TaskConfig::validate() const {
  auto bad = [](const char* key, const std::string& why) {
    throw std::invalid_argument(std::string("config key '") + key + "': " + why);
  };
  if (n < 1) bad("n", "must be >= 1");
  if (k < 1 || k > n) bad("k", "must satisfy 1 <= k <= n");
  if (channels < 1) bad("channels", "must be >= 1");
  if (n_freq < 1) bad("n_freq", "must be >= 1");
  if (trunk_width < 1) bad("trunk_width", "must be >= 1");
  if (trunk_layers < 0) bad("trunk_layers", "must be >= 0");
  if (head_hidden < 1) bad("head_hidden", "must be >= 1");
  if (!(omega0 > 0.0)) bad("omega0", "must be > 0");
  if (epochs < 0) bad("epochs", "must be >= 0");
  if (warmup_epochs < 0) bad("warmup_epochs", "must be >= 0");
  if (batch < 1) bad("batch", "must be >= 1");
  if (!(lambda >= 0.0)) bad("lambda", "must be >= 0");
  if (!(beta >= 0.0)) bad("beta", "must be >= 0");
  if (!(lr_dict > 0.0)) bad("lr_dict", "must be > 0");
  if (!(lr_codes > 0.0)) bad("lr_codes", "must be > 0");
  if (gating != "table" && gating != "encoder") bad("gating", "must be 'table' or 'encoder'");
  if (encoder_bins < 1) bad("encoder_bins", "must be >= 1");
  if (encoder_hidden < 0) bad("encoder_hidden", "must be >= 0");
  if (quadrature < 2) bad("quadrature", "must be >= 2");
}

namespace {

double mean_sq_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double mean_abs_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double db_from_mse(double mse, double peak) {
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

Tensor as_column(const Tensor& y) {
  Tensor out = Tensor::zeros({static_cast<int>(y.size()), 1});
  out.raw() = y.raw();
  return out;
}

int square_side(int rows, const char* who) {
  int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(rows))));
  if (s < 1 || s * s != rows)
    throw std::invalid_argument(std::string(who) + ": encoder gating needs a square pixel grid, got " +
                                std::to_string(rows) + " rows");
  return s;
}

bool shared_grid(const std::vector<MeasurementSet>& data) {
  for (std::size_t i = 1; i < data.size(); ++i)
    if (!(data[i].omega == data[0].omega)) return false;
  return true;
}

// Zeroes everything outside the k largest-|alpha| entries, in place.
void project_topk(Tensor& alpha, int k) {
  const int n = static_cast<int>(alpha.size());
  if (k >= n) return;
  std::vector<int> keep = topk_abs_indices(alpha, k);
  std::vector<char> mask(static_cast<std::size_t>(n), 0);
  for (int i : keep) mask[static_cast<std::size_t>(i)] = 1;
  for (int i = 0; i < n; ++i)
    if (!mask[static_cast<std::size_t>(i)]) alpha[i] = 0.0;
}

// Top-k support of a dense vector as a code, raw (unnormalized) weights.
// Exact zeros are dropped, so the code of an all-zero vector is empty.
SparseCode topk_code(const Tensor& alpha, int k) {
  SparseCode code;
  code.k = k;
  for (int i : topk_abs_indices(alpha, std::min<int>(k, static_cast<int>(alpha.size()))))
    if (alpha[i] != 0.0) code.entries.emplace_back(i, alpha[i]);
  return code;
}

}  // namespace

CheckpointMeta model_meta(const TrainedModel& model) {
  CheckpointMeta meta;
  meta.dims = model.dims;
  meta.n_experts = static_cast<std::uint32_t>(model.dims.n_experts);
  meta.omega0 = static_cast<float>(model.dims.trunk.omega0);
  meta.gate = model.gate;
  if (model.gate == GateKind::Table) {
    meta.gate_rows = static_cast<std::uint32_t>(model.instances);
  } else if (model.gate == GateKind::Encoder || model.gate == GateKind::Temporal) {
    meta.gate_in = static_cast<std::uint32_t>(model.enc.in_dim);
    meta.gate_hidden = static_cast<std::uint32_t>(model.enc.hidden);
  }
  return meta;
}

SparseCode training_code(const TrainedModel& model, int instance) {
  if (model.gate != GateKind::Table)
    throw std::invalid_argument("training_code: only table-gated models store per-instance codes");
  return sparsify(gate_row(model.ps, instance, model.dims.n_experts), model.cfg.k);
}

FieldFn model_field(const TrainedModel& model, SparseCode code) {
  const ParamStore* ps = &model.ps;
  NetworkDims dims = model.dims;
  return [ps, dims, code = std::move(code)](const Tensor& x) { return combine(*ps, dims, code, x); };
}

TrainedModel train_dictionary(const std::vector<MeasurementSet>& data, const TaskConfig& cfg,
                              LossKind data_loss) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train_dictionary: empty training set");
  for (const MeasurementSet& d : data) {
    validate(d);
    if (d.y.cols() != cfg.channels)
      throw ShapeError("train_dictionary: instance " + std::to_string(d.instance) + " has " +
                       std::to_string(d.y.cols()) + " channels, config says " +
                       std::to_string(cfg.channels));
  }

  TrainedModel model;
  model.cfg = cfg;
  model.dims = cfg.dims();
  model.instances = static_cast<int>(data.size());

  Rng rng = make_rng(cfg.seed);
  init_network_into(model.ps, model.dims, "", rng);

  const bool encoder = cfg.gating == "encoder";
  std::vector<Tensor> summaries;
  if (encoder) {
    model.gate = GateKind::Encoder;
    model.enc = EncoderGateSpec{cfg.encoder_bins * cfg.encoder_bins * cfg.channels,
                                cfg.encoder_hidden, cfg.n, 1.0};
    init_encoder_gate(model.ps, model.enc, rng);
    summaries.reserve(data.size());
    for (const MeasurementSet& d : data)
      summaries.push_back(
          observation_summary(d.y, square_side(d.y.rows(), "train_dictionary"), cfg.encoder_bins));
  } else {
    model.gate = GateKind::Table;
    init_gate_table(model.ps, model.instances, cfg.n, rng, 1.0 / std::sqrt(static_cast<double>(cfg.n)));
  }

  Adam opt(model.ps, cfg.lr_dict);
  opt.set_prefix_lr("gate", cfg.lr_codes);

  const bool shared = shared_grid(data);
  const int T = model.instances;
  std::vector<int> order(static_cast<std::size_t>(T));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> util(static_cast<std::size_t>(cfg.n), 0.0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const GatingMode mode = gating_mode(epoch, cfg.warmup_epochs);
    const bool last_epoch = epoch == cfg.epochs - 1;
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_total = 0.0;
    double epoch_data = 0.0;
    int batches = 0;

    for (int start = 0; start < T; start += cfg.batch) {
      const int stop = std::min(T, start + cfg.batch);
      const int B = stop - start;

      Tape t;
      Var feats;  // shared-grid trunk features, built on demand
      std::vector<Var> head_cache(static_cast<std::size_t>(cfg.n));
      auto head_var = [&](int j) {
        Var& h = head_cache[static_cast<std::size_t>(j)];
        if (!h.valid()) {
          if (!feats.valid())
            feats = trunk_forward(t, model.ps, "trunk", model.dims.trunk, t.leaf(data[0].omega));
          h = head_forward(t, model.ps, head_prefix(j), model.dims.head, feats);
        }
        return h;
      };

      Var data_acc, pen_acc, abar;
      for (int b = start; b < stop; ++b) {
        const int pos = order[static_cast<std::size_t>(b)];  // gate rows follow corpus order
        const MeasurementSet& inst = data[static_cast<std::size_t>(pos)];
        Var gates = encoder
                        ? encoder_gates_on_tape(t, model.ps, model.enc,
                                                t.leaf(summaries[static_cast<std::size_t>(pos)]))
                        : gate_row_on_tape(t, model.ps, pos, cfg.n);

        std::vector<int> ids;
        Var w;
        if (mode == GatingMode::DenseL1) {
          ids.resize(static_cast<std::size_t>(cfg.n));
          std::iota(ids.begin(), ids.end(), 0);
          w = gates;
          Var l1 = l1_penalty_on_tape(t, gates);
          pen_acc = pen_acc.valid() ? t.add(pen_acc, l1) : l1;
        } else {
          w = sparsify_on_tape(t, gates, cfg.k, ids);
          if (cfg.lambda > 0.0) {
            Var contrib = t.scatter(cfg.cv_abs ? t.abs(w) : w, ids, cfg.n);
            abar = abar.valid() ? t.add(abar, contrib) : contrib;
          }
        }

        Var pred;
        if (shared) {
          std::vector<Var> atoms;
          atoms.reserve(ids.size());
          for (int j : ids) atoms.push_back(head_var(j));
          pred = t.weighted_sum(atoms, w);
        } else {
          pred = combine_on_tape(t, model.ps, model.dims, ids, w, t.leaf(inst.omega));
        }
        Var li = data_loss == LossKind::L2 ? t.mse(pred, t.leaf(inst.y)) : t.mae(pred, t.leaf(inst.y));
        data_acc = data_acc.valid() ? t.add(data_acc, li) : li;

        if (last_epoch) {
          const Tensor& wv = t.val(w);
          for (std::size_t j = 0; j < ids.size(); ++j)
            util[static_cast<std::size_t>(ids[j])] += std::fabs(wv[static_cast<std::int64_t>(j)]);
        }
      }

      Var total = t.scale(data_acc, 1.0 / B);
      const double data_val = t.val(total)[0];
      if (cfg.lambda > 0.0) {
        if (mode == GatingMode::DenseL1)
          total = t.add(total, t.scale(pen_acc, cfg.lambda / B));
        else if (abar.valid())
          total = t.add(total, t.scale(cv_penalty_on_tape(t, abar), cfg.lambda));
      }
      const double total_val = t.val(total)[0];
      if (!std::isfinite(total_val)) {
        std::string prev = model.loss_log.empty()
                               ? "no finished epoch"
                               : "previous epoch mean " + std::to_string(model.loss_log.back());
        throw NumericError("train_dictionary: loss diverged at epoch " + std::to_string(epoch) +
                           " (" + prev + ")");
      }

      t.backward(total);
      t.export_grads(model.ps);
      opt.step();

      epoch_total += total_val;
      epoch_data += data_val;
      ++batches;
    }

    model.loss_log.push_back(epoch_total / batches);
    model.data_log.push_back(epoch_data / batches);
  }

  if (cfg.epochs > 0) {
    double mass = std::accumulate(util.begin(), util.end(), 0.0);
    model.utilization.assign(util.begin(), util.end());
    if (mass > 0.0)
      for (double& u : model.utilization) u /= mass;
  }
  return model;
}

// ---- code-only adaptation ---------------------------------------------------

AdaptResult adapt_linear(const std::vector<AdaptTerm>& terms, int n, int k,
                         const AdaptOptions& opt) {
  if (n < 1) throw std::invalid_argument("adapt_linear: n must be >= 1");
  if (k < 1 || k > n)
    throw std::invalid_argument("adapt_linear: k=" + std::to_string(k) + " with n=" +
                                std::to_string(n));
  if (terms.empty()) throw std::invalid_argument("adapt_linear: no measurement terms");
  if (opt.steps < 0) throw std::invalid_argument("adapt_linear: steps must be >= 0");

  struct Block {
    Tensor A;
    Tensor y;  // [M x 1]
    LossKind loss;
    double weight;
  };
  std::vector<Block> blocks;
  blocks.reserve(terms.size());
  for (const AdaptTerm& term : terms) {
    if (term.A.rank() != 2 || term.A.cols() != n)
      throw ShapeError("adapt_linear: A must be [M x " + std::to_string(n) + "], got " +
                       term.A.shape_str());
    Tensor y = as_column(term.y);
    if (y.rows() != term.A.rows())
      throw ShapeError("adapt_linear: y has " + std::to_string(y.rows()) + " values, A has " +
                       std::to_string(term.A.rows()) + " rows");
    blocks.push_back({term.A, std::move(y), term.loss, term.weight});
  }

  Tensor alpha = Tensor::zeros({n});
  if (alpha.size() == static_cast<std::int64_t>(opt.init.size()) && opt.init.size() > 0) {
    alpha.raw() = opt.init.raw();
  } else if (opt.init.size() > 0) {
    throw ShapeError("adapt_linear: init has " + std::to_string(opt.init.size()) +
                     " entries, dictionary has " + std::to_string(n));
  } else {
    Rng rng = make_rng(opt.noise_seed);
    for (int i = 0; i < n; ++i) alpha[i] = normal(rng, 0.0, 1e-3);
  }
  if (opt.steps == 0) project_topk(alpha, k);

  ParamStore store;
  store.add("alpha", alpha);
  const double lr = opt.lr > 0.0 ? opt.lr : 1e-2;
  std::unique_ptr<Adam> adam;
  std::unique_ptr<Sgd> sgd;
  if (opt.use_sgd)
    sgd = std::make_unique<Sgd>(store, lr);
  else
    adam = std::make_unique<Adam>(store, lr);

  // Total objective at a fixed code; also reports block 0's plain MSE so the
  // PSNR trace stays meaningful under l1 adaptation.
  auto evaluate = [&blocks](const Tensor& a, double* mse0) {
    Tensor acol = as_column(a);
    double total = 0.0;
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      const Block& blk = blocks[bi];
      Tensor pred = gemm_nn(blk.A, acol);
      if (bi == 0 && mse0) *mse0 = mean_sq_diff(pred, blk.y);
      total += blk.weight * (blk.loss == LossKind::L2 ? mean_sq_diff(pred, blk.y)
                                                      : mean_abs_diff(pred, blk.y));
    }
    return total;
  };

  const double frac = std::min(1.0, std::max(0.0, opt.dense_frac));
  const int dense_steps = std::min(opt.steps, static_cast<int>(std::llround(frac * opt.steps)));
  std::vector<char> support;  // empty while the dense phase runs

  AdaptResult out;
  out.loss_history.reserve(static_cast<std::size_t>(opt.steps));
  for (int step = 1; step <= opt.steps; ++step) {
    if (step == dense_steps + 1 && support.empty()) {
      project_topk(store.value("alpha"), k);
      support.assign(static_cast<std::size_t>(n), 0);
      for (int i : topk_abs_indices(store.value("alpha"), k))
        support[static_cast<std::size_t>(i)] = 1;
    }

    Tensor acol = as_column(store.value("alpha"));
    Tensor grad_col = Tensor::zeros({n, 1});
    for (const Block& blk : blocks) {
      Tensor r = gemm_nn(blk.A, acol);
      const int M = r.rows();
      for (int i = 0; i < M; ++i) {
        r[i] -= blk.y[i];
        r[i] = blk.loss == LossKind::L2 ? blk.weight * 2.0 * r[i] / M
                                        : blk.weight * (r[i] > 0.0 ? 1.0 : (r[i] < 0.0 ? -1.0 : 0.0)) / M;
      }
      gemm_tn_acc(blk.A, r, grad_col);
    }
    Tensor grad = Tensor::zeros({n});
    grad.raw() = grad_col.raw();
    if (!support.empty())
      for (int i = 0; i < n; ++i)
        if (!support[static_cast<std::size_t>(i)]) grad[i] = 0.0;
    store.accumulate_grad("alpha", grad);
    if (opt.use_sgd)
      sgd->step();
    else
      adam->step();
    if (!support.empty()) {
      // Adam drifts on stale momentum even under a zero gradient, so the
      // off-support entries are pinned rather than trusted to stay put.
      Tensor& a = store.value("alpha");
      for (int i = 0; i < n; ++i)
        if (!support[static_cast<std::size_t>(i)]) a[i] = 0.0;
    }

    Tensor scored = store.value("alpha");
    project_topk(scored, k);
    double mse0 = 0.0;
    const double loss = evaluate(scored, opt.record_psnr ? &mse0 : nullptr);
    if (!std::isfinite(loss))
      throw NumericError("adapt_linear: loss diverged at step " + std::to_string(step));
    out.loss_history.push_back(loss);
    if (opt.record_psnr) {
      const double db = db_from_mse(mse0, opt.peak);
      out.psnr_history.push_back(db);
      if (opt.psnr_target > 0.0 && out.steps_to_target < 0 && db >= opt.psnr_target)
        out.steps_to_target = step;
    }
  }

  out.alpha = store.value("alpha");
  project_topk(out.alpha, k);  // covers dense_frac = 1 runs that never froze
  out.code = topk_code(out.alpha, k);
  return out;
}

AdaptResult adapt_code(const TrainedModel& model, const MeasurementSet& obs,
                       const AdaptOptions& opt) {
  validate(obs);
  if (obs.y.cols() != model.dims.head.out_dim)
    throw ShapeError("adapt_code: observation has " + std::to_string(obs.y.cols()) +
                     " channels, dictionary emits " + std::to_string(model.dims.head.out_dim));

  AdaptOptions o = opt;
  if (o.k <= 0) o.k = model.cfg.k;
  if (o.lr <= 0.0) o.lr = model.cfg.lr_codes;
  if (o.init.size() == 0 && model.gate == GateKind::Encoder)
    o.init = encoder_gates(model.ps, model.enc,
                           observation_summary(obs.y, square_side(obs.y.rows(), "adapt_code"),
                                               model.cfg.encoder_bins));

  Tensor A = eval_all_atoms(model.ps, model.dims, obs.omega);
  return adapt_linear({AdaptTerm{std::move(A), obs.y, o.loss, 1.0}}, model.dims.n_experts, o.k, o);
}

InpaintResult inpaint(const TrainedModel& model, const MeasurementSet& corrupted,
                      AdaptOptions opt) {
  opt.loss = LossKind::L1;
  opt.init = Tensor();  // restoration always starts from the noise init
  AdaptResult adapt = adapt_code(model, corrupted, opt);
  Tensor restored = combine(model.ps, model.dims, adapt.code, corrupted.omega);
  return {std::move(adapt), std::move(restored)};
}

CtResult ct_reconstruct(const TrainedModel& model, const Tensor& sino,
                        const std::vector<double>& angles, const std::vector<double>& offsets,
                        AdaptOptions opt) {
  if (angles.empty() || offsets.empty())
    throw std::invalid_argument("ct_reconstruct: need at least one angle and one offset");
  if (sino.rank() != 2 || sino.rows() != static_cast<int>(angles.size()) ||
      sino.cols() != static_cast<int>(offsets.size()))
    throw ShapeError("ct_reconstruct: sinogram " + sino.shape_str() + " does not match " +
                     std::to_string(angles.size()) + " angles x " +
                     std::to_string(offsets.size()) + " offsets");
  if (model.dims.head.out_dim != 1)
    throw ShapeError("ct_reconstruct: tomography needs a single-channel dictionary");

  const int Q = model.cfg.quadrature;
  const int n = model.dims.n_experts;
  const int R = static_cast<int>(angles.size() * offsets.size());

  // All chord midpoints stacked into one batch: the dictionary runs once, and
  // every ray integral becomes a scaled row sum of atom responses.
  Tensor pts = Tensor::zeros({R * Q, 2});
  std::vector<double> steps(static_cast<std::size_t>(R), 0.0);
  int r = 0;
  for (double phi : angles) {
    for (double off : offsets) {
      RayChord ch = ray_chord(RaySpec{off, phi, Q});
      if (ch.hits) {
        steps[static_cast<std::size_t>(r)] = ch.step;
        std::copy(ch.points.raw().begin(), ch.points.raw().end(),
                  pts.raw().begin() + static_cast<std::size_t>(r) * Q * 2);
      }
      ++r;
    }
  }

  Tensor atoms = eval_all_atoms(model.ps, model.dims, pts);
  Tensor S = Tensor::zeros({R, n});
  for (r = 0; r < R; ++r) {
    for (int q = 0; q < Q; ++q) {
      const double* row = atoms.data() + static_cast<std::size_t>(r * Q + q) * n;
      double* dst = S.data() + static_cast<std::size_t>(r) * n;
      for (int j = 0; j < n; ++j) dst[j] += row[j];
    }
    for (int j = 0; j < n; ++j) S.at(r, j) *= steps[static_cast<std::size_t>(r)];
  }

  AdaptOptions o = opt;
  if (o.k <= 0) o.k = model.cfg.k;
  if (o.lr <= 0.0) o.lr = model.cfg.lr_codes;

  AdaptResult adapt = adapt_linear({AdaptTerm{S, sino, o.loss, 1.0}}, n, o.k, o);
  return {std::move(adapt), std::move(S)};
}

AdaptResult sdf_fit(const TrainedModel& model, const std::vector<SdfSample>& on_surface,
                    const std::vector<SdfSample>& free_samples, AdaptOptions opt) {
  if (on_surface.empty() || free_samples.empty())
    throw std::invalid_argument("sdf_fit: need both surface and free-space samples");
  if (model.dims.head.out_dim != 1)
    throw ShapeError("sdf_fit: distance fields are single-channel");

  AdaptOptions o = opt;
  if (o.k <= 0) o.k = model.cfg.k;
  if (o.lr <= 0.0) o.lr = model.cfg.lr_codes;
  o.record_psnr = false;

  Tensor A_on = eval_all_atoms(model.ps, model.dims, sdf_points(on_surface));
  Tensor A_off = eval_all_atoms(model.ps, model.dims, sdf_points(free_samples));
  Tensor zeros = Tensor::zeros({static_cast<int>(on_surface.size()), 1});
  return adapt_linear({AdaptTerm{std::move(A_on), std::move(zeros), LossKind::L1, 1.0},
                       AdaptTerm{std::move(A_off), sdf_targets(free_samples), LossKind::L1, 1.0}},
                      model.dims.n_experts, o.k, o);
}

// ---- video ------------------------------------------------------------------

double video_penalty(const Tensor& alpha, double beta) {
  double s = 0.0;
  for (std::int64_t i = 0; i < alpha.size(); ++i)
    s += std::fabs(alpha[i]) * std::exp(beta * static_cast<double>(i));
  return s;
}

VideoResult video_decompose(const std::vector<MeasurementSet>& frames, const TaskConfig& cfg) {
  cfg.validate();
  if (frames.size() < 2) throw std::invalid_argument("video_decompose: need at least 2 frames");
  for (const MeasurementSet& f : frames) {
    validate(f);
    if (f.y.cols() != cfg.channels)
      throw ShapeError("video_decompose: frame " + std::to_string(f.instance) + " has " +
                       std::to_string(f.y.cols()) + " channels, config says " +
                       std::to_string(cfg.channels));
  }
  if (!shared_grid(frames))
    throw std::invalid_argument("video_decompose: all frames must share one pixel grid");

  const int T = static_cast<int>(frames.size());
  TrainedModel model;
  model.cfg = cfg;
  model.dims = cfg.dims();
  model.instances = T;
  model.gate = GateKind::Temporal;
  model.enc = EncoderGateSpec{1, cfg.encoder_hidden, cfg.n, 1.0};

  Rng rng = make_rng(cfg.seed);
  init_network_into(model.ps, model.dims, "", rng);
  init_encoder_gate(model.ps, model.enc, rng);

  Adam opt(model.ps, cfg.lr_dict);
  opt.set_prefix_lr("gate", cfg.lr_codes);

  std::vector<Tensor> t_in(static_cast<std::size_t>(T));
  for (int f = 0; f < T; ++f)
    t_in[static_cast<std::size_t>(f)] = Tensor::vec({-1.0 + 2.0 * f / (T - 1)});
  Tensor decay = Tensor::zeros({cfg.n});
  for (int j = 0; j < cfg.n; ++j) decay[j] = std::exp(cfg.beta * j);

  std::vector<int> order(static_cast<std::size_t>(T));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> util(static_cast<std::size_t>(cfg.n), 0.0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const bool last_epoch = epoch == cfg.epochs - 1;
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_total = 0.0;
    double epoch_data = 0.0;
    int batches = 0;

    for (int start = 0; start < T; start += cfg.batch) {
      const int stop = std::min(T, start + cfg.batch);
      const int B = stop - start;

      Tape t;
      Var feats = trunk_forward(t, model.ps, "trunk", model.dims.trunk, t.leaf(frames[0].omega));
      std::vector<Var> atoms(static_cast<std::size_t>(cfg.n));
      for (int j = 0; j < cfg.n; ++j)
        atoms[static_cast<std::size_t>(j)] =
            head_forward(t, model.ps, head_prefix(j), model.dims.head, feats);
      Var decay_leaf = t.leaf(decay);

      Var data_acc, pen_acc;
      for (int b = start; b < stop; ++b) {
        const int f = order[static_cast<std::size_t>(b)];
        Var gates = encoder_gates_on_tape(t, model.ps, model.enc,
                                          t.leaf(t_in[static_cast<std::size_t>(f)]));
        Var pred = t.weighted_sum(atoms, gates);
        Var li = t.mae(pred, t.leaf(frames[static_cast<std::size_t>(f)].y));
        data_acc = data_acc.valid() ? t.add(data_acc, li) : li;
        Var pen = t.sum(t.mul(t.abs(gates), decay_leaf));
        pen_acc = pen_acc.valid() ? t.add(pen_acc, pen) : pen;

        if (last_epoch) {
          const Tensor& gv = t.val(gates);
          for (int j = 0; j < cfg.n; ++j) util[static_cast<std::size_t>(j)] += std::fabs(gv[j]);
        }
      }

      Var total = t.scale(data_acc, 1.0 / B);
      const double data_val = t.val(total)[0];
      if (cfg.lambda > 0.0) total = t.add(total, t.scale(pen_acc, cfg.lambda / B));
      const double total_val = t.val(total)[0];
      if (!std::isfinite(total_val)) {
        std::string prev = model.loss_log.empty()
                               ? "no finished epoch"
                               : "previous epoch mean " + std::to_string(model.loss_log.back());
        throw NumericError("video_decompose: loss diverged at epoch " + std::to_string(epoch) +
                           " (" + prev + ")");
      }

      t.backward(total);
      t.export_grads(model.ps);
      opt.step();

      epoch_total += total_val;
      epoch_data += data_val;
      ++batches;
    }

    model.loss_log.push_back(epoch_total / batches);
    model.data_log.push_back(epoch_data / batches);
  }

  if (cfg.epochs > 0) {
    double mass = std::accumulate(util.begin(), util.end(), 0.0);
    model.utilization.assign(util.begin(), util.end());
    if (mass > 0.0)
      for (double& u : model.utilization) u /= mass;
  }

  // Decomposition: f_X from the code network, f_E as the exact residual.
  Tensor A = eval_all_atoms(model.ps, model.dims, frames[0].omega);
  const int C = cfg.channels;
  const int rows = frames[0].y.rows();
  VideoResult out;
  out.fx.reserve(frames.size());
  out.fe.reserve(frames.size());
  for (int f = 0; f < T; ++f) {
    Tensor alpha = encoder_gates(model.ps, model.enc, t_in[static_cast<std::size_t>(f)]);
    Tensor flat = gemm_nn(A, as_column(alpha));  // [rows*C x 1]
    Tensor fx = Tensor::zeros({rows, C});
    fx.raw() = flat.raw();
    Tensor fe = frames[static_cast<std::size_t>(f)].y;
    for (std::int64_t i = 0; i < fe.size(); ++i) fe[i] -= fx[i];
    out.fx.push_back(std::move(fx));
    out.fe.push_back(std::move(fe));
  }
  out.model = std::move(model);
  return out;
}

// ---- per-scene baseline ------------------------------------------------------

namespace {

void check_finite_step(double loss, const char* who, int step) {
  if (!std::isfinite(loss))
    throw NumericError(std::string(who) + ": loss diverged at step " + std::to_string(step));
}

}  // namespace

FitResult baseline_fit(const MeasurementSet& obs, const TaskConfig& cfg, int steps, LossKind loss,
                       double psnr_target) {
  cfg.validate();
  validate(obs);
  if (steps < 0) throw std::invalid_argument("baseline_fit: steps must be >= 0");
  if (obs.y.cols() != cfg.channels)
    throw ShapeError("baseline_fit: observation has " + std::to_string(obs.y.cols()) +
                     " channels, config says " + std::to_string(cfg.channels));

  FitResult fit;
  fit.dims = cfg.dims();
  fit.dims.n_experts = 1;
  fit.ps = init_network(fit.dims, cfg.seed);
  Adam opt(fit.ps, cfg.lr_dict);
  const std::string head = head_prefix(0);

  for (int step = 1; step <= steps; ++step) {
    Tape t;
    Var pred = head_forward(t, fit.ps, head, fit.dims.head,
                            trunk_forward(t, fit.ps, "trunk", fit.dims.trunk, t.leaf(obs.omega)));
    Var l = loss == LossKind::L2 ? t.mse(pred, t.leaf(obs.y)) : t.mae(pred, t.leaf(obs.y));
    check_finite_step(t.val(l)[0], "baseline_fit", step);
    t.backward(l);
    t.export_grads(fit.ps);
    opt.step();

    // Histories are post-update so they line up with adapt_linear's.
    Tensor p = head_eval(fit.ps, head, fit.dims.head,
                         trunk_eval(fit.ps, "trunk", fit.dims.trunk, obs.omega));
    const double mse = mean_sq_diff(p, obs.y);
    fit.loss_history.push_back(loss == LossKind::L2 ? mse : mean_abs_diff(p, obs.y));
    const double db = db_from_mse(mse, 1.0);
    fit.psnr_history.push_back(db);
    if (psnr_target > 0.0 && fit.steps_to_target < 0 && db >= psnr_target)
      fit.steps_to_target = step;
  }
  return fit;
}

FitResult baseline_fit_rays(const Tensor& sino, const std::vector<double>& angles,
                            const std::vector<double>& offsets, const TaskConfig& cfg, int steps) {
  cfg.validate();
  if (steps < 0) throw std::invalid_argument("baseline_fit_rays: steps must be >= 0");
  if (angles.empty() || offsets.empty())
    throw std::invalid_argument("baseline_fit_rays: need at least one angle and one offset");
  if (sino.rank() != 2 || sino.rows() != static_cast<int>(angles.size()) ||
      sino.cols() != static_cast<int>(offsets.size()))
    throw ShapeError("baseline_fit_rays: sinogram " + sino.shape_str() + " does not match " +
                     std::to_string(angles.size()) + " angles x " +
                     std::to_string(offsets.size()) + " offsets");
  if (cfg.channels != 1)
    throw ShapeError("baseline_fit_rays: tomography needs a single-channel network");

  const int Q = cfg.quadrature;
  const int R = static_cast<int>(angles.size() * offsets.size());
  Tensor pts = Tensor::zeros({R * Q, 2});
  Tensor stepcol = Tensor::zeros({R, 1});
  int r = 0;
  for (double phi : angles) {
    for (double off : offsets) {
      RayChord ch = ray_chord(RaySpec{off, phi, Q});
      if (ch.hits) {
        stepcol[r] = ch.step;
        std::copy(ch.points.raw().begin(), ch.points.raw().end(),
                  pts.raw().begin() + static_cast<std::size_t>(r) * Q * 2);
      }
      ++r;
    }
  }
  Tensor ycol = as_column(sino);
  Tensor ones = Tensor::full({Q, 1}, 1.0);
  Tensor bzero = Tensor::zeros({1});

  FitResult fit;
  fit.dims = cfg.dims();
  fit.dims.n_experts = 1;
  fit.ps = init_network(fit.dims, cfg.seed);
  Adam opt(fit.ps, cfg.lr_dict);
  const std::string head = head_prefix(0);

  auto eval_sino = [&]() {
    Tensor p = head_eval(fit.ps, head, fit.dims.head,
                         trunk_eval(fit.ps, "trunk", fit.dims.trunk, pts));
    Tensor ints = Tensor::zeros({R, 1});
    for (int i = 0; i < R; ++i) {
      double s = 0.0;
      for (int q = 0; q < Q; ++q) s += p[static_cast<std::int64_t>(i) * Q + q];
      ints[i] = s * stepcol[i];
    }
    return ints;
  };

  for (int step = 1; step <= steps; ++step) {
    Tape t;
    Var pred = head_forward(t, fit.ps, head, fit.dims.head,
                            trunk_forward(t, fit.ps, "trunk", fit.dims.trunk, t.leaf(pts)));
    Var sums = t.affine(t.reshape(pred, {R, Q}), t.leaf(ones), t.leaf(bzero));
    Var ints = t.mul(sums, t.leaf(stepcol));
    Var l = t.mse(ints, t.leaf(ycol));
    check_finite_step(t.val(l)[0], "baseline_fit_rays", step);
    t.backward(l);
    t.export_grads(fit.ps);
    opt.step();
    fit.loss_history.push_back(mean_sq_diff(eval_sino(), ycol));
  }
  return fit;
}

FitResult baseline_fit_sdf(const std::vector<SdfSample>& on_surface,
                           const std::vector<SdfSample>& free_samples, const TaskConfig& cfg,
                           int steps) {
  cfg.validate();
  if (steps < 0) throw std::invalid_argument("baseline_fit_sdf: steps must be >= 0");
  if (on_surface.empty() || free_samples.empty())
    throw std::invalid_argument("baseline_fit_sdf: need both surface and free-space samples");
  if (cfg.channels != 1)
    throw ShapeError("baseline_fit_sdf: distance fields are single-channel");

  Tensor x_on = sdf_points(on_surface);
  Tensor x_off = sdf_points(free_samples);
  Tensor zeros = Tensor::zeros({static_cast<int>(on_surface.size()), 1});
  Tensor d_off = sdf_targets(free_samples);

  FitResult fit;
  fit.dims = cfg.dims();
  fit.dims.n_experts = 1;
  fit.ps = init_network(fit.dims, cfg.seed);
  Adam opt(fit.ps, cfg.lr_dict);
  const std::string head = head_prefix(0);

  for (int step = 1; step <= steps; ++step) {
    Tape t;
    Var f_on = head_forward(t, fit.ps, head, fit.dims.head,
                            trunk_forward(t, fit.ps, "trunk", fit.dims.trunk, t.leaf(x_on)));
    Var f_off = head_forward(t, fit.ps, head, fit.dims.head,
                             trunk_forward(t, fit.ps, "trunk", fit.dims.trunk, t.leaf(x_off)));
    Var l = t.add(t.mae(f_on, t.leaf(zeros)), t.mae(f_off, t.leaf(d_off)));
    check_finite_step(t.val(l)[0], "baseline_fit_sdf", step);
    t.backward(l);
    t.export_grads(fit.ps);
    opt.step();

    Tensor p_on = head_eval(fit.ps, head, fit.dims.head,
                            trunk_eval(fit.ps, "trunk", fit.dims.trunk, x_on));
    Tensor p_off = head_eval(fit.ps, head, fit.dims.head,
                             trunk_eval(fit.ps, "trunk", fit.dims.trunk, x_off));
    fit.loss_history.push_back(mean_abs_diff(p_on, zeros) + mean_abs_diff(p_off, d_off));
  }
  return fit;
}

FieldFn baseline_field(const FitResult& fit) {
  const ParamStore* ps = &fit.ps;
  NetworkDims dims = fit.dims;
  SparseCode one;
  one.k = 1;
  one.entries.emplace_back(0, 1.0);
  return [ps, dims, one = std::move(one)](const Tensor& x) { return combine(*ps, dims, one, x); };
}

}  // namespace nid
