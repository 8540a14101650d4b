// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "../tools/cli.hpp"
#include "nid/data.hpp"
#include "nid/tasks.hpp"

using namespace nid;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  std::string path;
  explicit TempDir(const std::string& name) : path("/tmp/nid_cli_" + name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  std::string operator/(const std::string& child) const { return path + "/" + child; }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int line_count(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

// Drives the CLI in-process with stdout/stderr redirected to files, so the
// tests can assert on exit codes and messages without spawning processes.
RunResult run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("nid");
  for (const std::string& a : args) argv.push_back(a.c_str());

  const char* so = "/tmp/nid_cli_stdout.txt";
  const char* se = "/tmp/nid_cli_stderr.txt";
  std::fflush(stdout);
  std::fflush(stderr);
  const int keep_out = dup(1);
  const int keep_err = dup(2);
  const int fo = open(so, O_CREAT | O_TRUNC | O_WRONLY, 0644);
  const int fe = open(se, O_CREAT | O_TRUNC | O_WRONLY, 0644);
  dup2(fo, 1);
  dup2(fe, 2);
  close(fo);
  close(fe);

  RunResult r;
  r.code = cli_dispatch(static_cast<int>(argv.size()), argv.data());

  std::fflush(stdout);
  std::fflush(stderr);
  dup2(keep_out, 1);
  dup2(keep_err, 2);
  close(keep_out);
  close(keep_err);
  r.out = slurp(so);
  r.err = slurp(se);
  return r;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

Image ramp_image(int side, int channels, double tilt) {
  Image img(side, side, channels);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(y, x, c) = std::min(1.0, (x + tilt * y) / (2.0 * side) + 0.1 * c);
  return img;
}

// Untouched random dictionary checkpoint, for subcommands that only need
// weights to exist.
std::string frozen_checkpoint(const TempDir& dir, int n, int channels) {
  TaskConfig cfg;
  cfg.n = n;
  cfg.k = 2;
  cfg.channels = channels;
  cfg.n_freq = 8;
  cfg.trunk_width = 16;
  cfg.trunk_layers = 1;
  cfg.head_hidden = 8;
  cfg.epochs = 0;
  cfg.warmup_epochs = 0;
  cfg.batch = 1;
  cfg.seed = 17;
  MeasurementSet dummy{0, pixel_centers(8, 8), Tensor::zeros({64, channels})};
  TrainedModel m = train_dictionary({dummy}, cfg);
  const std::string path = dir / "frozen.nid";
  save_checkpoint(path, model_meta(m), m.ps);
  return path;
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("usage errors exit 2 and help exits 0") {
  CHECK(run_cli({}).code == 2);

  RunResult unknown = run_cli({"frobnicate"});
  CHECK(unknown.code == 2);
  CHECK(!unknown.err.empty());

  RunResult help = run_cli({"--help"});
  CHECK(help.code == 0);
  CHECK(contains(help.out, "gen-data"));
  CHECK(contains(help.out, "metrics"));

  CHECK(run_cli({"gen-data"}).code == 2);  // --out is required

  TempDir d("usage");
  CHECK(run_cli({"gen-data", "--out", d.path, "--bogus"}).code == 2);
}

TEST_CASE("config errors exit 2 and name the offending key") {
  TempDir d("cfgerr");

  RunResult unknown = run_cli({"gen-data", "--out", d.path, "--set", "bogus=3"});
  CHECK(unknown.code == 2);
  CHECK(contains(unknown.err, "bogus"));

  RunResult zero_k = run_cli({"gen-data", "--out", d.path, "--set", "k=0"});
  CHECK(zero_k.code == 2);
  CHECK(contains(zero_k.err, "'k'"));

  RunResult dataset = run_cli({"gen-data", "--out", d.path, "--set", "dataset=junk"});
  CHECK(dataset.code == 2);
  CHECK(contains(dataset.err, "'dataset'"));

  RunResult unparsable = run_cli({"gen-data", "--out", d.path, "--set", "steps=abc"});
  CHECK(unparsable.code == 2);
  CHECK(contains(unparsable.err, "'steps'"));

  CHECK(run_cli({"gen-data", "--out", d.path, "--set", "dense_frac=1.5"}).code == 2);
  CHECK(run_cli({"gen-data", "--out", d.path, "--set", "novalue"}).code == 2);

  const std::string bad_type = d / "bad_type.json";
  std::ofstream(bad_type) << "{\"n\": \"six\"}";
  RunResult typed = run_cli({"gen-data", "--out", d.path, "--config", bad_type});
  CHECK(typed.code == 2);
  CHECK(contains(typed.err, "'n'"));

  const std::string broken = d / "broken.json";
  std::ofstream(broken) << "{nope";
  CHECK(run_cli({"gen-data", "--out", d.path, "--config", broken}).code == 2);

  CHECK(run_cli({"gen-data", "--out", d.path, "--config", d / "missing.json"}).code == 2);
}

TEST_CASE("gen-data emits blobs plus a resolved config that replays bit-exactly") {
  TempDir d1("gen1");
  RunResult first = run_cli({"gen-data", "--out", d1.path, "--set", "dataset=blobs", "--set",
                             "count=2", "--set", "size=12", "--set", "seed=7"});
  CHECK(first.code == 0);
  CHECK(fs::exists(d1 / "blob_000.ppm"));
  CHECK(fs::exists(d1 / "blob_001.ppm"));

  nlohmann::json resolved = nlohmann::json::parse(slurp(d1 / "resolved_config.json"));
  CHECK(resolved["count"] == 2);
  CHECK(resolved["size"] == 12);
  CHECK(resolved["seed"] == 7);
  CHECK(resolved["n"] == TaskConfig{}.n);  // untouched keys keep their defaults

  TempDir d2("gen2");
  RunResult replay = run_cli({"gen-data", "--config", d1 / "resolved_config.json", "--out", d2.path});
  CHECK(replay.code == 0);
  CHECK(slurp(d2 / "blob_000.ppm") == slurp(d1 / "blob_000.ppm"));
  CHECK(slurp(d2 / "blob_001.ppm") == slurp(d1 / "blob_001.ppm"));
}

TEST_CASE("metrics compares two images and writes psnr and ssim rows") {
  TempDir d("metrics");
  const Image a = ramp_image(16, 1, 0.5);
  Image b = a;
  b.at(3, 4) = 0.9;  // small perturbation keeps PSNR finite
  write_image(a, d / "a.pgm");
  write_image(b, d / "b.pgm");

  RunResult same = run_cli({"metrics", "--pred", d / "a.pgm", "--ref", d / "a.pgm"});
  CHECK(same.code == 0);
  CHECK(contains(same.out, "metric,value"));
  CHECK(contains(same.out, "psnr,99"));  // identical images hit the cap
  CHECK(contains(same.out, "ssim,1"));

  RunResult diff = run_cli({"metrics", "--pred", d / "a.pgm", "--ref", d / "b.pgm", "--out",
                            d / "report"});
  CHECK(diff.code == 0);
  const std::string csv = slurp(d / "report/metrics.csv");
  CHECK(csv == diff.out);
  CHECK(contains(csv, "psnr,"));
  CHECK(contains(csv, "ssim,"));
  CHECK(!contains(csv, "psnr,99"));

  write_image(ramp_image(12, 1, 0.5), d / "small.pgm");
  CHECK(run_cli({"metrics", "--pred", d / "a.pgm", "--ref", d / "small.pgm"}).code == 3);
  CHECK(run_cli({"metrics", "--pred", d / "a.pgm", "--ref", d / "missing.pgm"}).code == 3);
}

TEST_CASE("train, adapt, inpaint and bench chain through one checkpoint") {
  TempDir gen("chain_gen");
  REQUIRE(run_cli({"gen-data", "--out", gen.path, "--set", "dataset=blobs", "--set", "count=3",
                   "--set", "size=16", "--set", "seed=3"})
              .code == 0);

  TempDir tr("chain_train");
  RunResult train = run_cli(
      {"train",        "--data", gen.path,        "--out",  tr.path,
       "--set",        "channels=3",              "--set",  "n=6",
       "--set",        "k=2",                     "--set",  "n_freq=8",
       "--set",        "trunk_width=16",          "--set",  "trunk_layers=1",
       "--set",        "head_hidden=8",           "--set",  "epochs=8",
       "--set",        "warmup_epochs=2",         "--set",  "batch=3",
       "--set",        "seed=1"});
  REQUIRE(train.code == 0);
  CHECK(fs::exists(tr / "model.nid"));
  CHECK(line_count(slurp(tr / "train_log.csv")) == 9);      // header + 8 epochs
  CHECK(line_count(slurp(tr / "utilization.csv")) == 7);    // header + 6 experts
  const std::string train_metrics = slurp(tr / "metrics.csv");
  CHECK(contains(train_metrics, "instance,psnr,ssim"));
  CHECK(contains(train_metrics, "\n0,"));
  CHECK(contains(train_metrics, "mean,"));

  TempDir ad("chain_adapt");
  RunResult adapt = run_cli({"adapt", "--model", tr / "model.nid", "--target", gen / "blob_000.ppm",
                             "--out", ad.path, "--set", "steps=40", "--set", "k=2"});
  REQUIRE(adapt.code == 0);
  CHECK(fs::exists(ad / "restored.ppm"));
  CHECK(line_count(slurp(ad / "history.csv")) == 41);  // header + one row per step
  CHECK(contains(slurp(ad / "metrics.csv"), "psnr,"));

  RunResult too_big = run_cli({"adapt", "--model", tr / "model.nid", "--target",
                               gen / "blob_000.ppm", "--out", ad / "huge_k", "--set", "k=99"});
  CHECK(too_big.code == 2);
  CHECK(contains(too_big.err, "'k'"));

  TempDir inp("chain_inpaint");
  RunResult inpaint = run_cli({"inpaint", "--model", tr / "model.nid", "--image",
                               gen / "blob_001.ppm", "--out", inp.path, "--set", "patch=5",
                               "--set", "steps=30", "--set", "k=2"});
  REQUIRE(inpaint.code == 0);
  CHECK(fs::exists(inp / "corrupted.ppm"));
  CHECK(fs::exists(inp / "restored.ppm"));
  const std::string inp_metrics = slurp(inp / "metrics.csv");
  CHECK(contains(inp_metrics, "psnr_full,"));
  CHECK(contains(inp_metrics, "psnr_corrupted,"));

  TempDir be("chain_bench");
  RunResult bench = run_cli({"bench", "--model", tr / "model.nid", "--out", be.path, "--set",
                             "size=16", "--set", "bench_reps=2", "--set", "k=2"});
  REQUIRE(bench.code == 0);
  const std::string bench_csv = slurp(be / "bench.csv");
  CHECK(contains(bench_csv, "images_per_sec,"));
  CHECK(contains(bench_csv, "param_count,"));
}

TEST_CASE("ct reconstructs from a sinogram CSV") {
  TempDir gen("ct_gen");
  REQUIRE(run_cli({"gen-data", "--out", gen.path, "--set", "dataset=phantoms", "--set", "count=1",
                   "--set", "size=16", "--set", "views=5", "--set", "offsets=9", "--set",
                   "quadrature=48", "--set", "seed=11"})
              .code == 0);
  CHECK(fs::exists(gen / "phantom_000.pgm"));
  CHECK(fs::exists(gen / "sinogram_000.csv"));

  TempDir tr("ct_train");
  REQUIRE(run_cli({"train", "--data", gen.path, "--out", tr.path, "--set", "channels=1", "--set",
                   "n=4", "--set", "k=2", "--set", "n_freq=8", "--set", "trunk_width=16", "--set",
                   "trunk_layers=1", "--set", "head_hidden=8", "--set", "epochs=6", "--set",
                   "warmup_epochs=2", "--set", "batch=1", "--set", "seed=2"})
              .code == 0);

  TempDir ct("ct_run");
  RunResult run = run_cli({"ct", "--model", tr / "model.nid", "--sino", gen / "sinogram_000.csv",
                           "--ref", gen / "phantom_000.pgm", "--out", ct.path, "--set", "steps=25",
                           "--set", "k=2", "--set", "quadrature=48"});
  REQUIRE(run.code == 0);
  CHECK(fs::exists(ct / "recon.pgm"));
  const std::string history = slurp(ct / "history.csv");
  CHECK(contains(history, "step,loss\n"));  // sinogram loss only, no psnr column
  CHECK(line_count(history) == 26);
  const std::string metrics = slurp(ct / "metrics.csv");
  CHECK(contains(metrics, "final_sino_loss,"));
  CHECK(contains(metrics, "psnr,"));
  CHECK(contains(metrics, "ssim,"));
}

TEST_CASE("video decomposes frames into dictionary and residual images") {
  TempDir gen("video_gen");
  REQUIRE(run_cli({"gen-data", "--out", gen.path, "--set", "dataset=video", "--set", "frames=4",
                   "--set", "size=12", "--set", "seed=5"})
              .code == 0);
  CHECK(fs::exists(gen / "frame_003.pgm"));
  CHECK(fs::exists(gen / "background.pgm"));
  CHECK(fs::exists(gen / "mask_000.pgm"));

  TempDir vd("video_run");
  RunResult run = run_cli({"video", "--data", gen.path, "--out", vd.path, "--set", "channels=1",
                           "--set", "n=4", "--set", "k=2", "--set", "n_freq=8", "--set",
                           "trunk_width=16", "--set", "trunk_layers=1", "--set", "head_hidden=8",
                           "--set", "encoder_hidden=8", "--set", "epochs=6", "--set",
                           "warmup_epochs=2", "--set", "batch=4", "--set", "seed=4"});
  REQUIRE(run.code == 0);
  for (int t = 0; t < 4; ++t) {
    CHECK(fs::exists(vd / ("fx_00" + std::to_string(t) + ".pgm")));
    CHECK(fs::exists(vd / ("fe_00" + std::to_string(t) + ".pgm")));
  }
  CHECK(line_count(slurp(vd / "metrics.csv")) == 6);  // header + 4 frames + mean

  auto loaded = load_checkpoint(vd / "model.nid");
  CHECK(loaded.first.gate == GateKind::Temporal);
  CHECK(loaded.first.gate_in == 1);
}

TEST_CASE("sdf fits samples and reports the extracted level set") {
  TempDir gen("sdf_gen");
  REQUIRE(run_cli({"gen-data", "--out", gen.path, "--set", "dataset=sdf", "--set", "count=1",
                   "--set", "samples_on=30", "--set", "samples_off=30", "--set", "seed=9"})
              .code == 0);
  CHECK(fs::exists(gen / "samples_000.csv"));
  CHECK(fs::exists(gen / "ref_surface_000.csv"));

  TempDir md("sdf_model");
  const std::string model = frozen_checkpoint(md, 6, 1);

  TempDir run_dir("sdf_run");
  RunResult run = run_cli({"sdf", "--model", model, "--samples", gen / "samples_000.csv", "--ref",
                           gen / "ref_surface_000.csv", "--out", run_dir.path, "--set", "steps=30",
                           "--set", "grid=24", "--set", "k=2"});
  REQUIRE(run.code == 0);
  const std::string level = slurp(run_dir / "level_set.csv");
  CHECK(contains(level, "x,y,nx,ny\n"));
  const std::string metrics = slurp(run_dir / "metrics.csv");
  CHECK(contains(metrics, "final_loss,"));
  CHECK(contains(metrics, "surface_points,"));
  if (line_count(level) > 1) CHECK(contains(metrics, "chamfer,"));
}

TEST_SUITE_END();
