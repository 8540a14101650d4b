// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "nid/tape.hpp"
#include "nid/tensor.hpp"

namespace nid {

/// Batched field evaluator: coordinates [B x p] -> values [B x C].
using FieldFn = std::function<Tensor(const Tensor&)>;

/// Observations for one instance: parameter rows omega (pixel coords, ray
/// (r, phi) pairs, or sample points) paired with measured values y.
struct MeasurementSet {
  int instance = 0;
  Tensor omega;
  Tensor y;
};

/// Throws unless omega/y row counts agree and everything is finite.
void validate(const MeasurementSet& ms);

/// Identity functional R(f|x) = f(x).
Tensor sample_pixels(const FieldFn& f, const Tensor& coords);

// ---- Radon ----
struct RaySpec {
  double r = 0.0;    // signed offset of the line from the origin
  double phi = 0.0;  // angle of the line normal, radians
  int Q = 256;       // midpoint-rule sample count
};

/// Midpoint samples of the line r = x cos(phi) + y sin(phi) clipped to
/// [-1,1]^2. hits == false when the chord misses the square.
struct RayChord {
  bool hits = false;
  Tensor points;     // [Q x 2]
  double step = 0.0; // chord length / Q
};
RayChord ray_chord(const RaySpec& ray);

/// Line integral of f along the ray by the midpoint rule; 0 for misses.
double radon_project(const FieldFn& f, const RaySpec& ray);

/// Tape counterpart once the caller has evaluated the field at the chord
/// midpoints: integral = step * sum(values).
Var chord_integral_on_tape(Tape& t, Var midpoint_values, double step);

/// Rows are angles, columns are offsets.
Tensor sinogram(const FieldFn& f, const std::vector<double>& angles,
                const std::vector<double>& offsets, int Q);

/// Uniformly spaced offsets covering [-1, 1].
std::vector<double> uniform_offsets(int count);

// ---- SDF ----
struct SdfSample {
  double x = 0.0, y = 0.0;
  bool on_surface = false;
  double dist = 0.0;  // ground-truth signed distance (0 when on_surface)
};

/// Monte-Carlo estimates of (mean |f| on surface, mean |f - d| off surface).
std::pair<double, double> sdf_losses(const FieldFn& f, const std::vector<SdfSample>& on_pts,
                                     const std::vector<SdfSample>& off_pts);

Tensor sdf_points(const std::vector<SdfSample>& samples);   // [N x 2]
Tensor sdf_targets(const std::vector<SdfSample>& samples);  // [N x 1]

// ---- video ----
/// Frame t as a pixel measurement set with the normalized time coordinate
/// appended to each parameter row: (x, y) -> (x, y, t_norm), t_norm spanning
/// [-1, 1] across the clip (0 for a single-frame clip).
MeasurementSet video_slice(const std::vector<MeasurementSet>& frames, int t);

/// Coarse per-channel block means of a square image, used as the encoder
/// gate's input. y is [side*side x C] in row-major pixel order; the result is
/// [bins*bins*C].
Tensor observation_summary(const Tensor& y, int side, int bins);

}  // namespace nid
