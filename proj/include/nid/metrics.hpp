// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nid/coordnet.hpp"
#include "nid/data.hpp"
#include "nid/gating.hpp"
#include "nid/tensor.hpp"

namespace nid {

// 10*log10(peak^2 / MSE). Identical inputs return +infinity; the CSV writer
// caps that sentinel at 99 dB.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Mean structural similarity over all 8x8 uniform windows (stride 1) and
// channels. K1=0.01, K2=0.03, dynamic range 1. Throws if either side of the
// image is smaller than the window.
double ssim(const Image& a, const Image& b);

// Symmetric point-set distance:
//   0.5 * (mean_p min_q |p-q| + mean_q min_p |p-q|), plain Euclidean.
double chamfer(const Tensor& P, const Tensor& Q);

// For each row of P, the index of its nearest row in Q.
std::vector<int> nearest_indices(const Tensor& P, const Tensor& Q);

// Mean |cos angle| between matched normals; orientation-blind. Rows are
// normalized first; a near-zero row is an error.
double normal_consistency(const Tensor& n1, const Tensor& n2);

// Zero crossings of a scalar field on a regular lattice over [-1,1]^2, with
// unit normals from central differences at the crossing points. Field calls
// are batched: one lattice pass plus one probe pass.
struct LevelSet {
  Tensor points;   // [K x 2]
  Tensor normals;  // [K x 2]
};
LevelSet extract_zero_level(const FieldFn& f, int grid);

// Per-instance metric rows plus a mean row, serialized as CSV sorted by
// instance id. Non-finite cells are capped at 99 on write, and the mean row
// is computed from the capped values so the file stays self-consistent.
struct MetricReport {
  std::vector<std::string> columns;
  std::vector<std::pair<int, std::vector<double>>> rows;

  void add_row(int instance, std::vector<double> values);
  std::vector<double> aggregate() const;  // column means of raw values
  void write_csv(const std::string& path) const;
};

struct BenchResult {
  double images_per_sec = 0.0;
  std::size_t param_count = 0;
  long head_evals_per_image = 0;
};

// Times full-image dictionary evaluation: 1 warm-up pass, then `reps` timed
// passes; reports 1 / median seconds.
BenchResult bench_throughput(const ParamStore& ps, const NetworkDims& dims,
                             const SparseCode& code, int side, int reps);

}  // namespace nid
