// SPDX-License-Identifier: Apache-2.0
#include "nid/measurements.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace nid {

void validate(const MeasurementSet& ms) {
  if (ms.omega.rank() != 2 || ms.y.rank() != 2)
    throw ShapeError("MeasurementSet: omega " + ms.omega.shape_str() + ", y " + ms.y.shape_str());
  if (ms.omega.rows() != ms.y.rows())
    throw ShapeError("MeasurementSet: " + std::to_string(ms.omega.rows()) + " parameter rows vs " +
                     std::to_string(ms.y.rows()) + " value rows");
  require_finite(ms.omega, "MeasurementSet omega");
  require_finite(ms.y, "MeasurementSet y");
}

Tensor sample_pixels(const FieldFn& f, const Tensor& coords) { return f(coords); }

RayChord ray_chord(const RaySpec& ray) {
  if (ray.Q < 2) throw std::invalid_argument("ray_chord: Q must be >= 2");
  double c = std::cos(ray.phi);
  double s = std::sin(ray.phi);
  // Points on the line: (r c - t s, r s + t c), t the arclength parameter.
  // Clip t so both coordinates stay inside [-1, 1] (slab method).
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  auto clip_axis = [&lo, &hi](double base, double dir) -> bool {
    if (std::fabs(dir) < 1e-15) return std::fabs(base) <= 1.0;
    double a = (-1.0 - base) / dir;
    double b = (1.0 - base) / dir;
    if (a > b) std::swap(a, b);
    lo = std::max(lo, a);
    hi = std::min(hi, b);
    return true;
  };
  RayChord chord;
  if (!clip_axis(ray.r * c, -s)) return chord;
  if (!clip_axis(ray.r * s, c)) return chord;
  if (!(lo < hi)) return chord;
  chord.hits = true;
  chord.step = (hi - lo) / static_cast<double>(ray.Q);
  chord.points = Tensor::zeros({ray.Q, 2});
  for (int q = 0; q < ray.Q; ++q) {
    double t = lo + (static_cast<double>(q) + 0.5) * chord.step;
    chord.points.at(q, 0) = ray.r * c - t * s;
    chord.points.at(q, 1) = ray.r * s + t * c;
  }
  return chord;
}

double radon_project(const FieldFn& f, const RaySpec& ray) {
  RayChord chord = ray_chord(ray);
  if (!chord.hits) return 0.0;
  Tensor vals = f(chord.points);
  if (vals.size() != ray.Q)
    throw ShapeError("radon_project: field returned " + vals.shape_str() + " for " +
                     std::to_string(ray.Q) + " samples");
  double acc = 0.0;
  for (int q = 0; q < ray.Q; ++q) acc += vals[q];
  return acc * chord.step;
}

Var chord_integral_on_tape(Tape& t, Var midpoint_values, double step) {
  return t.scale(t.sum(midpoint_values), step);
}

Tensor sinogram(const FieldFn& f, const std::vector<double>& angles,
                const std::vector<double>& offsets, int Q) {
  if (angles.empty() || offsets.empty())
    throw std::invalid_argument("sinogram: empty angle or offset list");
  Tensor out = Tensor::zeros({static_cast<int>(angles.size()), static_cast<int>(offsets.size())});
  for (std::size_t a = 0; a < angles.size(); ++a)
    for (std::size_t o = 0; o < offsets.size(); ++o)
      out.at(static_cast<int>(a), static_cast<int>(o)) =
          radon_project(f, RaySpec{offsets[o], angles[a], Q});
  return out;
}

std::vector<double> uniform_offsets(int count) {
  if (count < 1) throw std::invalid_argument("uniform_offsets: count must be >= 1");
  std::vector<double> out(static_cast<std::size_t>(count));
  if (count == 1) {
    out[0] = 0.0;
    return out;
  }
  for (int i = 0; i < count; ++i)
    out[static_cast<std::size_t>(i)] = -1.0 + 2.0 * static_cast<double>(i) /
                                                  static_cast<double>(count - 1);
  return out;
}

Tensor sdf_points(const std::vector<SdfSample>& samples) {
  Tensor out = Tensor::zeros({static_cast<int>(samples.size()), 2});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.at(static_cast<int>(i), 0) = samples[i].x;
    out.at(static_cast<int>(i), 1) = samples[i].y;
  }
  return out;
}

Tensor sdf_targets(const std::vector<SdfSample>& samples) {
  Tensor out = Tensor::zeros({static_cast<int>(samples.size()), 1});
  for (std::size_t i = 0; i < samples.size(); ++i) out.at(static_cast<int>(i), 0) = samples[i].dist;
  return out;
}

std::pair<double, double> sdf_losses(const FieldFn& f, const std::vector<SdfSample>& on_pts,
                                     const std::vector<SdfSample>& off_pts) {
  if (on_pts.empty() || off_pts.empty())
    throw std::invalid_argument("sdf_losses: empty sample set");
  Tensor von = f(sdf_points(on_pts));
  double on_term = 0.0;
  for (std::int64_t i = 0; i < von.size(); ++i) on_term += std::fabs(von[i]);
  on_term /= static_cast<double>(on_pts.size());

  Tensor voff = f(sdf_points(off_pts));
  double off_term = 0.0;
  for (std::size_t i = 0; i < off_pts.size(); ++i)
    off_term += std::fabs(voff[static_cast<std::int64_t>(i)] - off_pts[i].dist);
  off_term /= static_cast<double>(off_pts.size());
  return {on_term, off_term};
}

MeasurementSet video_slice(const std::vector<MeasurementSet>& frames, int t) {
  if (t < 0 || t >= static_cast<int>(frames.size()))
    throw std::out_of_range("video_slice: frame " + std::to_string(t) + " of " +
                            std::to_string(frames.size()));
  const MeasurementSet& frame = frames[static_cast<std::size_t>(t)];
  validate(frame);
  int rows = frame.omega.rows();
  int p = frame.omega.cols();
  double t_norm = frames.size() > 1
                      ? -1.0 + 2.0 * static_cast<double>(t) / static_cast<double>(frames.size() - 1)
                      : 0.0;
  MeasurementSet out;
  out.instance = t;
  out.y = frame.y;
  out.omega = Tensor::zeros({rows, p + 1});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < p; ++c) out.omega.at(r, c) = frame.omega.at(r, c);
    out.omega.at(r, p) = t_norm;
  }
  return out;
}

Tensor observation_summary(const Tensor& y, int side, int bins) {
  if (y.rank() != 2 || y.rows() != side * side)
    throw ShapeError("observation_summary: values " + y.shape_str() + " for side " +
                     std::to_string(side));
  if (bins < 1 || bins > side || side % bins != 0)
    throw std::invalid_argument("observation_summary: side " + std::to_string(side) +
                                " not divisible into " + std::to_string(bins) + " bins");
  int c = y.cols();
  int block = side / bins;
  Tensor out = Tensor::zeros({bins * bins * c});
  for (int by = 0; by < bins; ++by) {
    for (int bx = 0; bx < bins; ++bx) {
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int dy = 0; dy < block; ++dy)
          for (int dx = 0; dx < block; ++dx)
            acc += y.at((by * block + dy) * side + (bx * block + dx), ch);
        out[(by * bins + bx) * c + ch] = acc / static_cast<double>(block * block);
      }
    }
  }
  return out;
}

}  // namespace nid
