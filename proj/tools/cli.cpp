// SPDX-License-Identifier: Apache-2.0
//
// Nine subcommands sharing one config pipeline: JSON file, then --set
// overrides, checked against a typed key whitelist, then dumped as
// resolved_config.json next to the outputs so any run can be replayed from
// what it wrote. Exit codes: 0 success, 2 bad usage or bad config, 3
// runtime failure.

#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nid/data.hpp"
#include "nid/dictionary.hpp"
#include "nid/gating.hpp"
#include "nid/measurements.hpp"
#include "nid/metrics.hpp"
#include "nid/rng.hpp"
#include "nid/tasks.hpp"

namespace nid {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Anything wrong with the configuration, as opposed to the run itself.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- config keys ------------------------------------------------------------

enum class KeyType { Int, Real, Flag, Text };

struct KeySpec {
  const char* name;
  KeyType type;
};

// Model keys mirror TaskConfig; the rest steer individual subcommands.
const KeySpec kKeys[] = {
    {"n", KeyType::Int},            {"k", KeyType::Int},
    {"channels", KeyType::Int},     {"n_freq", KeyType::Int},
    {"trunk_width", KeyType::Int},  {"trunk_layers", KeyType::Int},
    {"head_hidden", KeyType::Int},  {"omega0", KeyType::Real},
    {"epochs", KeyType::Int},       {"warmup_epochs", KeyType::Int},
    {"batch", KeyType::Int},        {"lambda", KeyType::Real},
    {"beta", KeyType::Real},        {"lr_dict", KeyType::Real},
    {"lr_codes", KeyType::Real},    {"cv_abs", KeyType::Flag},
    {"seed", KeyType::Int},         {"gating", KeyType::Text},
    {"encoder_bins", KeyType::Int}, {"encoder_hidden", KeyType::Int},
    {"quadrature", KeyType::Int},   {"dataset", KeyType::Text},
    {"count", KeyType::Int},        {"size", KeyType::Int},
    {"frames", KeyType::Int},       {"steps", KeyType::Int},
    {"loss", KeyType::Text},        {"psnr_target", KeyType::Real},
    {"dense_frac", KeyType::Real},  {"views", KeyType::Int},
    {"offsets", KeyType::Int},      {"patch", KeyType::Int},
    {"samples_on", KeyType::Int},   {"samples_off", KeyType::Int},
    {"grid", KeyType::Int},         {"bench_reps", KeyType::Int},
};

const KeySpec* find_key(const std::string& name) {
  for (const KeySpec& k : kKeys)
    if (name == k.name) return &k;
  return nullptr;
}

json default_config() {
  TaskConfig d;
  json j;
  j["n"] = d.n;
  j["k"] = d.k;
  j["channels"] = d.channels;
  j["n_freq"] = d.n_freq;
  j["trunk_width"] = d.trunk_width;
  j["trunk_layers"] = d.trunk_layers;
  j["head_hidden"] = d.head_hidden;
  j["omega0"] = d.omega0;
  j["epochs"] = d.epochs;
  j["warmup_epochs"] = d.warmup_epochs;
  j["batch"] = d.batch;
  j["lambda"] = d.lambda;
  j["beta"] = d.beta;
  j["lr_dict"] = d.lr_dict;
  j["lr_codes"] = d.lr_codes;
  j["cv_abs"] = d.cv_abs;
  j["seed"] = d.seed;
  j["gating"] = d.gating;
  j["encoder_bins"] = d.encoder_bins;
  j["encoder_hidden"] = d.encoder_hidden;
  j["quadrature"] = d.quadrature;
  j["dataset"] = "blobs";
  j["count"] = 8;
  j["size"] = 32;
  j["frames"] = 16;
  j["steps"] = 200;
  j["loss"] = "l2";
  j["psnr_target"] = 0.0;
  j["dense_frac"] = 0.5;
  j["views"] = 16;
  j["offsets"] = 64;
  j["patch"] = 8;
  j["samples_on"] = 250;
  j["samples_off"] = 250;
  j["grid"] = 64;
  j["bench_reps"] = 5;
  return j;
}

void check_type(const std::string& key, KeyType type, const json& v) {
  auto fail = [&](const char* want) {
    throw ConfigError("config key '" + key + "': expected " + want);
  };
  switch (type) {
    case KeyType::Int:
      if (!v.is_number_integer() && !v.is_number_unsigned()) fail("an integer");
      break;
    case KeyType::Real:
      if (!v.is_number()) fail("a number");
      break;
    case KeyType::Flag:
      if (!v.is_boolean()) fail("true or false");
      break;
    case KeyType::Text:
      if (!v.is_string()) fail("a string");
      break;
  }
}

json parse_set_value(const std::string& key, KeyType type, const std::string& text) {
  try {
    std::size_t used = 0;
    switch (type) {
      case KeyType::Int: {
        long long v = std::stoll(text, &used);
        if (used != text.size()) break;
        return json(v);
      }
      case KeyType::Real: {
        double v = std::stod(text, &used);
        if (used != text.size()) break;
        return json(v);
      }
      case KeyType::Flag:
        if (text == "true" || text == "1") return json(true);
        if (text == "false" || text == "0") return json(false);
        break;
      case KeyType::Text:
        return json(text);
    }
  } catch (const std::logic_error&) {
  }
  throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
}

json resolve_config(const std::string& config_path, const std::vector<std::string>& sets) {
  json cfg = default_config();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config file " + config_path);
    json file;
    try {
      in >> file;
    } catch (const json::exception& e) {
      throw ConfigError("config file " + config_path + ": " + e.what());
    }
    if (!file.is_object())
      throw ConfigError("config file " + config_path + ": expected a JSON object");
    for (auto it = file.begin(); it != file.end(); ++it) {
      const KeySpec* spec = find_key(it.key());
      if (!spec) throw ConfigError("config key '" + it.key() + "': unknown key");
      check_type(it.key(), spec->type, it.value());
      cfg[it.key()] = it.value();
    }
  }
  for (const std::string& kv : sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const KeySpec* spec = find_key(key);
    if (!spec) throw ConfigError("config key '" + key + "': unknown key");
    cfg[key] = parse_set_value(key, spec->type, kv.substr(eq + 1));
  }
  return cfg;
}

TaskConfig task_config(const json& cfg) {
  TaskConfig c;
  c.n = cfg["n"];
  c.k = cfg["k"];
  c.channels = cfg["channels"];
  c.n_freq = cfg["n_freq"];
  c.trunk_width = cfg["trunk_width"];
  c.trunk_layers = cfg["trunk_layers"];
  c.head_hidden = cfg["head_hidden"];
  c.omega0 = cfg["omega0"];
  c.epochs = cfg["epochs"];
  c.warmup_epochs = cfg["warmup_epochs"];
  c.batch = cfg["batch"];
  c.lambda = cfg["lambda"];
  c.beta = cfg["beta"];
  c.lr_dict = cfg["lr_dict"];
  c.lr_codes = cfg["lr_codes"];
  c.cv_abs = cfg["cv_abs"];
  c.seed = cfg["seed"].get<std::uint64_t>();
  c.gating = cfg["gating"];
  c.encoder_bins = cfg["encoder_bins"];
  c.encoder_hidden = cfg["encoder_hidden"];
  c.quadrature = cfg["quadrature"];
  return c;
}

// Sanity for the subcommand-level knobs; the model keys go through
// TaskConfig::validate().
void check_command_values(const json& cfg) {
  auto need = [](const char* key, bool ok, const char* why) {
    if (!ok) throw ConfigError(std::string("config key '") + key + "': " + why);
  };
  const std::string dataset = cfg["dataset"];
  need("dataset",
       dataset == "blobs" || dataset == "phantoms" || dataset == "video" || dataset == "sdf",
       "must be blobs, phantoms, video, or sdf");
  const std::string loss = cfg["loss"];
  need("loss", loss == "l1" || loss == "l2", "must be l1 or l2");
  need("count", cfg["count"].get<int>() >= 1, "must be at least 1");
  need("size", cfg["size"].get<int>() >= 2, "must be at least 2");
  need("frames", cfg["frames"].get<int>() >= 2, "must be at least 2");
  need("steps", cfg["steps"].get<int>() >= 0, "must be non-negative");
  need("psnr_target", cfg["psnr_target"].get<double>() >= 0.0, "must be non-negative");
  const double frac = cfg["dense_frac"];
  need("dense_frac", frac >= 0.0 && frac <= 1.0, "must lie in [0, 1]");
  need("views", cfg["views"].get<int>() >= 1, "must be at least 1");
  need("offsets", cfg["offsets"].get<int>() >= 1, "must be at least 1");
  need("patch", cfg["patch"].get<int>() >= 0, "must be non-negative");
  need("samples_on", cfg["samples_on"].get<int>() >= 1, "must be at least 1");
  need("samples_off", cfg["samples_off"].get<int>() >= 1, "must be at least 1");
  need("grid", cfg["grid"].get<int>() >= 2, "must be at least 2");
  need("bench_reps", cfg["bench_reps"].get<int>() >= 1, "must be at least 1");
}

LossKind loss_kind(const json& cfg) {
  return cfg["loss"] == "l1" ? LossKind::L1 : LossKind::L2;
}

AdaptOptions adapt_options(const json& cfg) {
  AdaptOptions o;
  o.steps = cfg["steps"];
  o.loss = loss_kind(cfg);
  o.psnr_target = cfg["psnr_target"];
  o.dense_frac = cfg["dense_frac"];
  o.noise_seed = cfg["seed"].get<std::uint64_t>();
  return o;
}

// ---- small IO helpers --------------------------------------------------------

std::string idx3(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", i);
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << body;
  if (!out) throw IoError("write failed for " + path);
}

void write_resolved(const json& cfg, const std::string& out_dir) {
  write_text(out_dir + "/resolved_config.json", cfg.dump(2) + "\n");
}

// metric,value rows; non-finite values are capped at 99 like the batch
// reports, so downstream parsers never see "inf".
std::string kv_csv(const std::vector<std::pair<std::string, double>>& rows) {
  std::string body = "metric,value\n";
  for (const auto& [name, value] : rows)
    body += name + "," + fmt(std::isfinite(value) ? value : 99.0) + "\n";
  return body;
}

void write_history_csv(const std::string& path, const std::vector<double>& loss,
                       const std::vector<double>& psnr) {
  std::string body = psnr.empty() ? "step,loss\n" : "step,loss,psnr\n";
  for (std::size_t i = 0; i < loss.size(); ++i) {
    body += std::to_string(i + 1) + "," + fmt(loss[i]);
    if (!psnr.empty()) body += "," + fmt(std::isfinite(psnr[i]) ? psnr[i] : 99.0);
    body += "\n";
  }
  write_text(path, body);
}

std::vector<std::string> list_images(const std::string& dir, const std::string& prefix) {
  std::error_code ec;
  fs::directory_iterator it(dir, ec);
  if (ec) throw IoError("cannot list " + dir + ": " + ec.message());
  std::vector<std::string> out;
  for (const fs::directory_entry& entry : it) {
    if (!entry.is_regular_file()) continue;
    const fs::path& p = entry.path();
    if (p.extension() != ".pgm" && p.extension() != ".ppm") continue;
    if (!prefix.empty() && p.filename().string().rfind(prefix, 0) != 0) continue;
    out.push_back(p.string());
  }
  std::sort(out.begin(), out.end());
  if (out.empty())
    throw IoError("no " + (prefix.empty() ? std::string() : prefix + "*") +
                  " images (.pgm/.ppm) under " + dir);
  return out;
}

const char* image_ext(const Image& img) { return img.channels == 3 ? ".ppm" : ".pgm"; }

// PSNR restricted to masked pixels (all channels). Empty mask reports +inf,
// which the CSV cap turns into 99.
double masked_psnr(const Tensor& pred, const Tensor& ref, const std::vector<std::uint8_t>& mask) {
  double acc = 0.0;
  long cnt = 0;
  for (std::size_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    for (int c = 0; c < pred.cols(); ++c) {
      const double d = pred.at(static_cast<int>(p), c) - ref.at(static_cast<int>(p), c);
      acc += d * d;
      ++cnt;
    }
  }
  if (cnt == 0 || acc == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(cnt) / acc);
}

// Rebuilds a usable TrainedModel around checkpoint weights. Architecture
// always comes from the checkpoint; the config only supplies runtime knobs
// (k, lr_codes, steps and friends).
TrainedModel load_model(const std::string& path, const json& cfg) {
  auto loaded = load_checkpoint(path);
  const CheckpointMeta& meta = loaded.first;
  TrainedModel m;
  m.ps = std::move(loaded.second);
  m.dims = meta.dims;
  m.cfg = task_config(cfg);
  m.cfg.n = m.dims.n_experts;
  m.cfg.channels = m.dims.head.out_dim;
  m.cfg.n_freq = m.dims.trunk.n_freq;
  m.cfg.trunk_width = m.dims.trunk.width;
  m.cfg.trunk_layers = m.dims.trunk.hidden_layers;
  m.cfg.head_hidden = m.dims.head.hidden;
  m.cfg.omega0 = m.dims.trunk.omega0;
  m.gate = meta.gate;
  m.instances = meta.gate == GateKind::Table ? static_cast<int>(meta.gate_rows) : 0;
  if (meta.gate == GateKind::Encoder || meta.gate == GateKind::Temporal) {
    m.enc = EncoderGateSpec{static_cast<int>(meta.gate_in), static_cast<int>(meta.gate_hidden),
                            m.dims.n_experts, 1.0};
    if (meta.gate == GateKind::Encoder && m.cfg.channels > 0) {
      // gate_in = bins^2 * channels, so the stored summary size pins bins.
      const int per_channel = static_cast<int>(meta.gate_in) / m.cfg.channels;
      const int bins = static_cast<int>(std::lround(std::sqrt(static_cast<double>(per_channel))));
      if (bins > 0) m.cfg.encoder_bins = bins;
      m.cfg.gating = "encoder";
    }
  }
  if (m.cfg.k > m.cfg.n)
    throw ConfigError("config key 'k': exceeds the checkpoint's dictionary size (" +
                      std::to_string(m.cfg.n) + ")");
  return m;
}

std::vector<double> view_angles(int views) {
  std::vector<double> out(static_cast<std::size_t>(views));
  for (int i = 0; i < views; ++i) out[static_cast<std::size_t>(i)] = M_PI * i / views;
  return out;
}

// ---- subcommands --------------------------------------------------------------

void cmd_gen_data(const json& cfg, const std::string& out) {
  const std::string dataset = cfg["dataset"];
  const int count = cfg["count"];
  const int size = cfg["size"];
  const std::uint64_t seed = cfg["seed"].get<std::uint64_t>();
  if (dataset == "blobs") {
    std::vector<Image> imgs = gen_blob_images(count, size, seed);
    for (int i = 0; i < count; ++i)
      write_image(imgs[static_cast<std::size_t>(i)],
                  out + "/blob_" + idx3(i) + image_ext(imgs[static_cast<std::size_t>(i)]));
  } else if (dataset == "phantoms") {
    std::vector<EllipsePhantom> phantoms = gen_phantoms(count, size, seed);
    const std::vector<double> angles = view_angles(cfg["views"]);
    const std::vector<double> offsets = uniform_offsets(cfg["offsets"]);
    const int Q = cfg["quadrature"];
    for (int i = 0; i < count; ++i) {
      const EllipsePhantom& ph = phantoms[static_cast<std::size_t>(i)];
      write_image(ph.raster(), out + "/phantom_" + idx3(i) + ".pgm");
      write_sinogram_csv(out + "/sinogram_" + idx3(i) + ".csv", angles, offsets,
                         sinogram(ph.field(), angles, offsets, Q));
    }
  } else if (dataset == "video") {
    SpriteVideo video = gen_sprite_video(cfg["frames"], size, seed);
    for (std::size_t t = 0; t < video.frames.size(); ++t) {
      write_image(video.frames[t], out + "/frame_" + idx3(static_cast<int>(t)) + ".pgm");
      Image mask(size, size, 1);
      for (std::size_t p = 0; p < mask.pix.size(); ++p)
        mask.pix[p] = video.masks[t][p] ? 1.0 : 0.0;
      write_image(mask, out + "/mask_" + idx3(static_cast<int>(t)) + ".pgm");
    }
    write_image(video.background, out + "/background.pgm");
  } else {  // sdf
    std::vector<ConvexPolygon> polys = gen_polygon_sdf(count, seed);
    Rng rng = make_rng(seed ^ 0x9e3779b97f4a7c15ull);  // sampling stream, distinct from shapes
    for (int i = 0; i < count; ++i) {
      const ConvexPolygon& poly = polys[static_cast<std::size_t>(i)];
      std::vector<SdfSample> samples = sample_surface(poly, cfg["samples_on"], rng);
      std::vector<SdfSample> off = sample_free(poly, cfg["samples_off"], rng);
      samples.insert(samples.end(), off.begin(), off.end());
      write_samples_csv(out + "/samples_" + idx3(i) + ".csv", samples);
      write_samples_csv(out + "/ref_surface_" + idx3(i) + ".csv",
                        sample_surface(poly, 1024, rng));
    }
  }
}

void cmd_train(const json& cfg, const std::string& data_dir, const std::string& out) {
  const TaskConfig tc = task_config(cfg);
  const std::vector<std::string> paths = list_images(data_dir, "");
  std::vector<MeasurementSet> data;
  std::vector<Image> images;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    Image img = read_image(paths[i]);
    data.push_back(image_measurements(img, static_cast<int>(i)));
    images.push_back(std::move(img));
  }
  TrainedModel model = train_dictionary(data, tc, loss_kind(cfg));
  save_checkpoint(out + "/model.nid", model_meta(model), model.ps);

  std::string log = "epoch,total_loss,data_loss\n";
  for (std::size_t e = 0; e < model.loss_log.size(); ++e)
    log += std::to_string(e) + "," + fmt(model.loss_log[e]) + "," + fmt(model.data_log[e]) + "\n";
  write_text(out + "/train_log.csv", log);

  std::string util = "expert,share\n";
  for (std::size_t j = 0; j < model.utilization.size(); ++j)
    util += std::to_string(j) + "," + fmt(model.utilization[j]) + "\n";
  write_text(out + "/utilization.csv", util);

  bool with_ssim = true;
  for (const Image& img : images) with_ssim = with_ssim && img.width >= 8 && img.height >= 8;
  MetricReport rep;
  rep.columns = with_ssim ? std::vector<std::string>{"psnr", "ssim"}
                          : std::vector<std::string>{"psnr"};
  for (std::size_t i = 0; i < data.size(); ++i) {
    SparseCode code;
    if (model.gate == GateKind::Table) {
      code = training_code(model, static_cast<int>(i));
    } else {
      const Tensor summary = observation_summary(data[i].y, images[i].width, tc.encoder_bins);
      code = sparsify(encoder_gates(model.ps, model.enc, summary), tc.k);
    }
    const Tensor recon = combine(model.ps, model.dims, code, data[i].omega);
    std::vector<double> row{psnr(recon, data[i].y)};
    if (with_ssim)
      row.push_back(ssim(targets_to_image(recon, images[i].width, images[i].height), images[i]));
    rep.add_row(static_cast<int>(i), std::move(row));
  }
  rep.write_csv(out + "/metrics.csv");
}

void cmd_adapt(const json& cfg, const std::string& model_path, const std::string& target_path,
               const std::string& out) {
  TrainedModel model = load_model(model_path, cfg);
  const Image target = read_image(target_path);
  const MeasurementSet obs = image_measurements(target, 0);
  const AdaptResult res = adapt_code(model, obs, adapt_options(cfg));
  const Tensor recon = combine(model.ps, model.dims, res.code, obs.omega);
  const Image out_img = targets_to_image(recon, target.width, target.height);
  write_image(out_img, out + "/restored" + std::string(image_ext(target)));
  write_history_csv(out + "/history.csv", res.loss_history, res.psnr_history);

  std::vector<std::pair<std::string, double>> rows;
  rows.emplace_back("psnr", psnr(recon, obs.y));
  if (target.width >= 8 && target.height >= 8) rows.emplace_back("ssim", ssim(out_img, target));
  if (!res.loss_history.empty()) rows.emplace_back("final_loss", res.loss_history.back());
  rows.emplace_back("steps_to_target", res.steps_to_target);
  write_text(out + "/metrics.csv", kv_csv(rows));
}

void cmd_inpaint(const json& cfg, const std::string& model_path, const std::string& image_path,
                 const std::string& out) {
  TrainedModel model = load_model(model_path, cfg);
  const Image clean = read_image(image_path);
  const Occlusion occ =
      corrupt_occlusion(clean, cfg["patch"], cfg["seed"].get<std::uint64_t>());
  write_image(occ.image, out + "/corrupted" + std::string(image_ext(clean)));
  const MeasurementSet obs = image_measurements(occ.image, 0);
  const InpaintResult res = inpaint(model, obs, adapt_options(cfg));
  const Image restored = targets_to_image(res.restored, clean.width, clean.height);
  write_image(restored, out + "/restored" + std::string(image_ext(clean)));
  write_history_csv(out + "/history.csv", res.adapt.loss_history, res.adapt.psnr_history);

  const Tensor ref = image_targets(clean);
  std::vector<std::pair<std::string, double>> rows;
  rows.emplace_back("psnr_full", psnr(res.restored, ref));
  rows.emplace_back("psnr_corrupted", masked_psnr(res.restored, ref, occ.mask));
  if (clean.width >= 8 && clean.height >= 8) rows.emplace_back("ssim_full", ssim(restored, clean));
  write_text(out + "/metrics.csv", kv_csv(rows));
}

void cmd_video(const json& cfg, const std::string& data_dir, const std::string& out) {
  const TaskConfig tc = task_config(cfg);
  const std::vector<std::string> paths = list_images(data_dir, "frame_");
  std::vector<MeasurementSet> frames;
  std::vector<Image> imgs;
  for (std::size_t t = 0; t < paths.size(); ++t) {
    Image img = read_image(paths[t]);
    frames.push_back(image_measurements(img, static_cast<int>(t)));
    imgs.push_back(std::move(img));
  }
  const VideoResult res = video_decompose(frames, tc);
  save_checkpoint(out + "/model.nid", model_meta(res.model), res.model.ps);

  MetricReport rep;
  rep.columns = {"mean_abs_fe"};
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const int w = imgs[t].width, h = imgs[t].height;
    write_image(targets_to_image(res.fx[t], w, h), out + "/fx_" + idx3(static_cast<int>(t)) + ".pgm");
    Tensor mag = res.fe[t];
    double acc = 0.0;
    for (std::int64_t p = 0; p < mag.size(); ++p) {
      mag[p] = std::abs(mag[p]);
      acc += mag[p];
    }
    write_image(targets_to_image(mag, w, h), out + "/fe_" + idx3(static_cast<int>(t)) + ".pgm");
    rep.add_row(static_cast<int>(t), {acc / static_cast<double>(mag.size())});
  }
  rep.write_csv(out + "/metrics.csv");

  std::string log = "epoch,total_loss,data_loss\n";
  for (std::size_t e = 0; e < res.model.loss_log.size(); ++e)
    log += std::to_string(e) + "," + fmt(res.model.loss_log[e]) + "," +
           fmt(res.model.data_log[e]) + "\n";
  write_text(out + "/train_log.csv", log);
}

void cmd_ct(const json& cfg, const std::string& model_path, const std::string& sino_path,
            const std::string& ref_path, const std::string& out) {
  TrainedModel model = load_model(model_path, cfg);
  const SinogramData sd = read_sinogram_csv(sino_path);
  AdaptOptions opt = adapt_options(cfg);
  opt.record_psnr = false;  // the loss lives in sinogram space; image PSNR needs --ref
  const CtResult res = ct_reconstruct(model, sd.sino, sd.angles, sd.offsets, opt);

  Image ref;
  const bool have_ref = !ref_path.empty();
  if (have_ref) ref = read_image(ref_path);
  const int w = have_ref ? ref.width : cfg["size"].get<int>();
  const int h = have_ref ? ref.height : cfg["size"].get<int>();
  const Tensor recon = combine(model.ps, model.dims, res.adapt.code, pixel_centers(w, h));
  const Image rimg = targets_to_image(recon, w, h);
  write_image(rimg, out + "/recon.pgm");
  write_history_csv(out + "/history.csv", res.adapt.loss_history, res.adapt.psnr_history);

  std::vector<std::pair<std::string, double>> rows;
  if (!res.adapt.loss_history.empty())
    rows.emplace_back("final_sino_loss", res.adapt.loss_history.back());
  if (have_ref) {
    rows.emplace_back("psnr", psnr(recon, image_targets(ref)));
    if (w >= 8 && h >= 8) rows.emplace_back("ssim", ssim(rimg, ref));
  }
  write_text(out + "/metrics.csv", kv_csv(rows));
}

void cmd_sdf(const json& cfg, const std::string& model_path, const std::string& samples_path,
             const std::string& ref_path, const std::string& out) {
  TrainedModel model = load_model(model_path, cfg);
  std::vector<SdfSample> on, off;
  for (const SdfSample& s : read_samples_csv(samples_path))
    (s.on_surface ? on : off).push_back(s);
  const AdaptResult res = sdf_fit(model, on, off, adapt_options(cfg));
  const FieldFn f = model_field(model, res.code);
  const LevelSet ls = extract_zero_level(f, cfg["grid"]);

  std::string body = "x,y,nx,ny\n";
  for (int r = 0; r < ls.points.rows(); ++r)
    body += fmt(ls.points.at(r, 0)) + "," + fmt(ls.points.at(r, 1)) + "," +
            fmt(ls.normals.at(r, 0)) + "," + fmt(ls.normals.at(r, 1)) + "\n";
  write_text(out + "/level_set.csv", body);
  write_history_csv(out + "/history.csv", res.loss_history, res.psnr_history);

  std::vector<std::pair<std::string, double>> rows;
  if (!res.loss_history.empty()) rows.emplace_back("final_loss", res.loss_history.back());
  rows.emplace_back("surface_points", static_cast<double>(ls.points.rows()));
  // With no zero crossings there is nothing to measure; surface_points = 0
  // already tells the story.
  if (!ref_path.empty() && ls.points.rows() > 0) {
    std::vector<double> pts;
    for (const SdfSample& s : read_samples_csv(ref_path)) {
      if (!s.on_surface) continue;
      pts.push_back(s.x);
      pts.push_back(s.y);
    }
    if (pts.empty()) throw IoError("no surface points in " + ref_path);
    const int n_pts = static_cast<int>(pts.size() / 2);
    const Tensor P({n_pts, 2}, std::move(pts));
    rows.emplace_back("chamfer", chamfer(ls.points, P));
  }
  write_text(out + "/metrics.csv", kv_csv(rows));
}

void cmd_metrics(const std::string& pred_path, const std::string& ref_path,
                 const std::string& out) {
  const Image a = read_image(pred_path);
  const Image b = read_image(ref_path);
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw std::invalid_argument("images differ in shape: " + std::to_string(a.width) + "x" +
                                std::to_string(a.height) + "x" + std::to_string(a.channels) +
                                " vs " + std::to_string(b.width) + "x" + std::to_string(b.height) +
                                "x" + std::to_string(b.channels));
  const std::string body = kv_csv({{"psnr", psnr(image_targets(a), image_targets(b))},
                                   {"ssim", ssim(a, b)}});
  std::fputs(body.c_str(), stdout);
  if (!out.empty()) {
    ensure_dir(out);
    write_text(out + "/metrics.csv", body);
  }
}

void cmd_bench(const json& cfg, const std::string& model_path, const std::string& out) {
  TrainedModel model = load_model(model_path, cfg);
  SparseCode code;
  code.k = model.cfg.k;
  for (int j = 0; j < model.cfg.k; ++j)
    code.entries.emplace_back(j, 1.0 / std::sqrt(static_cast<double>(model.cfg.k)));
  const BenchResult r =
      bench_throughput(model.ps, model.dims, code, cfg["size"], cfg["bench_reps"]);
  write_text(out + "/bench.csv",
             kv_csv({{"images_per_sec", r.images_per_sec},
                     {"param_count", static_cast<double>(r.param_count)},
                     {"head_evals_per_image", static_cast<double>(r.head_evals_per_image)}}));
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv) {
  CLI::App app{"neural implicit dictionary toolkit"};
  app.require_subcommand(1);

  std::string config, out, data, model, target, image, sino, samples, pred, ref;
  std::vector<std::string> sets;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON config file");
    sub->add_option("--set", sets, "override a config key (key=value, repeatable)");
    sub->add_option("--out", out, "output directory")->required();
  };

  CLI::App* gen = app.add_subcommand("gen-data", "write a procedural dataset");
  add_common(gen);

  CLI::App* train = app.add_subcommand("train", "train a dictionary on an image directory");
  add_common(train);
  train->add_option("--data", data, "directory of .pgm/.ppm images")->required();

  CLI::App* adapt = app.add_subcommand("adapt", "fit a sparse code to one image");
  add_common(adapt);
  adapt->add_option("--model", model, "checkpoint file")->required();
  adapt->add_option("--target", target, "target image")->required();

  CLI::App* inp = app.add_subcommand("inpaint", "occlude an image, then restore it");
  add_common(inp);
  inp->add_option("--model", model, "checkpoint file")->required();
  inp->add_option("--image", image, "clean source image")->required();

  CLI::App* vid = app.add_subcommand("video", "decompose frames into dictionary + residual");
  add_common(vid);
  vid->add_option("--data", data, "directory of frame_*.pgm images")->required();

  CLI::App* ct = app.add_subcommand("ct", "reconstruct an image from a sinogram");
  add_common(ct);
  ct->add_option("--model", model, "checkpoint file")->required();
  ct->add_option("--sino", sino, "sinogram CSV")->required();
  ct->add_option("--ref", ref, "ground-truth image for PSNR/SSIM");

  CLI::App* sdf = app.add_subcommand("sdf", "fit a signed distance field to point samples");
  add_common(sdf);
  sdf->add_option("--model", model, "checkpoint file")->required();
  sdf->add_option("--samples", samples, "sample CSV (surface + free-space rows)")->required();
  sdf->add_option("--ref", ref, "reference surface CSV for chamfer distance");

  CLI::App* met = app.add_subcommand("metrics", "compare two images");
  met->add_option("--pred", pred, "predicted image")->required();
  met->add_option("--ref", ref, "reference image")->required();
  met->add_option("--out", out, "also write metrics.csv here");

  CLI::App* bench = app.add_subcommand("bench", "time full-image dictionary evaluation");
  add_common(bench);
  bench->add_option("--model", model, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();

  if (name == "metrics") {
    try {
      cmd_metrics(pred, ref, out);
      return 0;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "nid metrics: %s\n", e.what());
      return 3;
    }
  }

  json cfg;
  try {
    cfg = resolve_config(config, sets);
    task_config(cfg).validate();
    check_command_values(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "nid %s: %s\n", name.c_str(), e.what());
    return 2;
  }

  try {
    ensure_dir(out);
    write_resolved(cfg, out);
    if (name == "gen-data") cmd_gen_data(cfg, out);
    else if (name == "train") cmd_train(cfg, data, out);
    else if (name == "adapt") cmd_adapt(cfg, model, target, out);
    else if (name == "inpaint") cmd_inpaint(cfg, model, image, out);
    else if (name == "video") cmd_video(cfg, data, out);
    else if (name == "ct") cmd_ct(cfg, model, sino, ref, out);
    else if (name == "sdf") cmd_sdf(cfg, model, samples, ref, out);
    else if (name == "bench") cmd_bench(cfg, model, out);
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "nid %s: %s\n", name.c_str(), e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "nid %s: %s\n", name.c_str(), e.what());
    return 3;
  }
}

}  // namespace nid
