// SPDX-License-Identifier: Apache-2.0
#include "nid/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "nid/dictionary.hpp"

namespace nid {

double psnr(const Tensor& a, const Tensor& b, double peak) {
  if (!a.same_shape(b))
    throw ShapeError("psnr: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  if (a.size() == 0) throw ShapeError("psnr: empty input");
  double mse = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw ShapeError("ssim: image shapes differ");
  const int win = 8;
  if (a.width < win || a.height < win)
    throw ShapeError("ssim: image smaller than the 8x8 window");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const double inv = 1.0 / (win * win);
  double total = 0.0;
  long windows = 0;
  for (int c = 0; c < a.channels; ++c)
    for (int y0 = 0; y0 + win <= a.height; ++y0)
      for (int x0 = 0; x0 + win <= a.width; ++x0) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int y = y0; y < y0 + win; ++y)
          for (int x = x0; x < x0 + win; ++x) {
            double va = a.at(y, x, c), vb = b.at(y, x, c);
            sa += va;
            sb += vb;
            saa += va * va;
            sbb += vb * vb;
            sab += va * vb;
          }
        double ma = sa * inv, mb = sb * inv;
        double va = saa * inv - ma * ma, vb = sbb * inv - mb * mb;
        double cov = sab * inv - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                 ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++windows;
      }
  return total / static_cast<double>(windows);
}

static double min_row_distance(const Tensor& P, int i, const Tensor& Q, int* arg = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < Q.rows(); ++j) {
    double d2 = 0.0;
    for (int c = 0; c < P.cols(); ++c) {
      double d = P.at(i, c) - Q.at(j, c);
      d2 += d * d;
    }
    if (d2 < best) {
      best = d2;
      if (arg) *arg = j;
    }
  }
  return std::sqrt(best);
}

double chamfer(const Tensor& P, const Tensor& Q) {
  if (P.rows() == 0 || Q.rows() == 0) throw std::invalid_argument("chamfer: empty point set");
  if (P.cols() != Q.cols())
    throw ShapeError("chamfer: dimension mismatch " + P.shape_str() + " vs " + Q.shape_str());
  double pq = 0.0, qp = 0.0;
  for (int i = 0; i < P.rows(); ++i) pq += min_row_distance(P, i, Q);
  for (int j = 0; j < Q.rows(); ++j) qp += min_row_distance(Q, j, P);
  return 0.5 * (pq / P.rows() + qp / Q.rows());
}

std::vector<int> nearest_indices(const Tensor& P, const Tensor& Q) {
  if (Q.rows() == 0) throw std::invalid_argument("nearest_indices: empty reference set");
  std::vector<int> out(static_cast<std::size_t>(P.rows()));
  for (int i = 0; i < P.rows(); ++i) {
    int arg = 0;
    min_row_distance(P, i, Q, &arg);
    out[static_cast<std::size_t>(i)] = arg;
  }
  return out;
}

double normal_consistency(const Tensor& n1, const Tensor& n2) {
  if (!n1.same_shape(n2))
    throw ShapeError("normal_consistency: shape mismatch " + n1.shape_str() + " vs " +
                     n2.shape_str());
  if (n1.rows() == 0) throw std::invalid_argument("normal_consistency: empty list");
  double total = 0.0;
  for (int i = 0; i < n1.rows(); ++i) {
    double dot = 0.0, a2 = 0.0, b2 = 0.0;
    for (int c = 0; c < n1.cols(); ++c) {
      dot += n1.at(i, c) * n2.at(i, c);
      a2 += n1.at(i, c) * n1.at(i, c);
      b2 += n2.at(i, c) * n2.at(i, c);
    }
    if (a2 < 1e-24 || b2 < 1e-24)
      throw NumericError("normal_consistency: zero-length normal at row " + std::to_string(i));
    total += std::fabs(dot) / std::sqrt(a2 * b2);
  }
  return total / static_cast<double>(n1.rows());
}

LevelSet extract_zero_level(const FieldFn& f, int grid) {
  if (grid < 2) throw std::invalid_argument("extract_zero_level: grid < 2");
  const int side = grid + 1;
  const double h = 2.0 / grid;
  Tensor lattice = Tensor::zeros({side * side, 2});
  for (int iy = 0; iy < side; ++iy)
    for (int ix = 0; ix < side; ++ix) {
      lattice.at(iy * side + ix, 0) = -1.0 + ix * h;
      lattice.at(iy * side + ix, 1) = -1.0 + iy * h;
    }
  Tensor v = f(lattice);
  if (v.rows() != side * side) throw ShapeError("extract_zero_level: field rows " + v.shape_str());

  // Linear interpolation along sign-changing lattice edges.
  std::vector<double> px, py;
  auto crossing = [&](int i0, int i1, bool horizontal) {
    double a = v.at(i0, 0), b = v.at(i1, 0);
    if (a == 0.0 && b == 0.0) return;
    if ((a < 0.0) == (b < 0.0) && a != 0.0 && b != 0.0) return;
    double t = a / (a - b);
    if (!std::isfinite(t)) return;
    double x = lattice.at(i0, 0) + (horizontal ? t * h : 0.0);
    double y = lattice.at(i0, 1) + (horizontal ? 0.0 : t * h);
    px.push_back(x);
    py.push_back(y);
  };
  for (int iy = 0; iy < side; ++iy)
    for (int ix = 0; ix < side; ++ix) {
      int i = iy * side + ix;
      if (ix + 1 < side) crossing(i, i + 1, true);
      if (iy + 1 < side) crossing(i, i + side, false);
    }

  LevelSet out;
  int k = static_cast<int>(px.size());
  out.points = Tensor::zeros({k, 2});
  out.normals = Tensor::zeros({k, 2});
  if (k == 0) return out;
  for (int i = 0; i < k; ++i) {
    out.points.at(i, 0) = px[static_cast<std::size_t>(i)];
    out.points.at(i, 1) = py[static_cast<std::size_t>(i)];
  }

  // One batched probe pass: 4 central-difference offsets per crossing.
  const double eps = 0.5 * h;
  Tensor probes = Tensor::zeros({4 * k, 2});
  for (int i = 0; i < k; ++i) {
    double x = out.points.at(i, 0), y = out.points.at(i, 1);
    probes.at(4 * i + 0, 0) = x + eps;
    probes.at(4 * i + 0, 1) = y;
    probes.at(4 * i + 1, 0) = x - eps;
    probes.at(4 * i + 1, 1) = y;
    probes.at(4 * i + 2, 0) = x;
    probes.at(4 * i + 2, 1) = y + eps;
    probes.at(4 * i + 3, 0) = x;
    probes.at(4 * i + 3, 1) = y - eps;
  }
  Tensor pv = f(probes);
  for (int i = 0; i < k; ++i) {
    double gx = pv.at(4 * i + 0, 0) - pv.at(4 * i + 1, 0);
    double gy = pv.at(4 * i + 2, 0) - pv.at(4 * i + 3, 0);
    double norm = std::hypot(gx, gy);
    if (norm < 1e-15) {
      out.normals.at(i, 0) = 1.0;  // degenerate gradient; direction is arbitrary
      continue;
    }
    out.normals.at(i, 0) = gx / norm;
    out.normals.at(i, 1) = gy / norm;
  }
  return out;
}

void MetricReport::add_row(int instance, std::vector<double> values) {
  if (values.size() != columns.size())
    throw ShapeError("MetricReport: row width " + std::to_string(values.size()) +
                     " != column count " + std::to_string(columns.size()));
  rows.emplace_back(instance, std::move(values));
}

std::vector<double> MetricReport::aggregate() const {
  if (rows.empty()) throw std::invalid_argument("MetricReport: no rows");
  std::vector<double> mean(columns.size(), 0.0);
  for (const auto& [id, vals] : rows)
    for (std::size_t c = 0; c < vals.size(); ++c) mean[c] += vals[c];
  for (auto& m : mean) m /= static_cast<double>(rows.size());
  return mean;
}

static double cap_cell(double v) { return std::isfinite(v) ? v : 99.0; }

void MetricReport::write_csv(const std::string& path) const {
  if (rows.empty()) throw std::invalid_argument("MetricReport: no rows");
  std::ofstream f(path);
  if (!f) throw IoError("MetricReport: cannot open " + path);
  f << std::setprecision(12);
  f << "instance";
  for (const auto& c : columns) f << "," << c;
  f << "\n";
  auto sorted = rows;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<double> mean(columns.size(), 0.0);
  for (const auto& [id, vals] : sorted) {
    f << id;
    for (std::size_t c = 0; c < vals.size(); ++c) {
      double v = cap_cell(vals[c]);
      mean[c] += v;
      f << "," << v;
    }
    f << "\n";
  }
  f << "mean";
  for (double m : mean) f << "," << m / static_cast<double>(sorted.size());
  f << "\n";
  if (!f) throw IoError("MetricReport: short write to " + path);
}

BenchResult bench_throughput(const ParamStore& ps, const NetworkDims& dims,
                             const SparseCode& code, int side, int reps) {
  if (reps < 1) throw std::invalid_argument("bench_throughput: reps < 1");
  Tensor coords = pixel_centers(side, side);
  BenchResult out;
  out.param_count = ps.num_scalars();

  EvalCounters counters;
  combine(ps, dims, code, coords, &counters);  // warm-up
  out.head_evals_per_image = counters.head_evals;

  std::vector<double> secs(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    combine(ps, dims, code, coords);
    auto t1 = std::chrono::steady_clock::now();
    secs[static_cast<std::size_t>(r)] = std::chrono::duration<double>(t1 - t0).count();
  }
  std::sort(secs.begin(), secs.end());
  double median = reps % 2 == 1 ? secs[static_cast<std::size_t>(reps / 2)]
                                : 0.5 * (secs[static_cast<std::size_t>(reps / 2 - 1)] +
                                         secs[static_cast<std::size_t>(reps / 2)]);
  out.images_per_sec = median > 0.0 ? 1.0 / median : std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace nid
