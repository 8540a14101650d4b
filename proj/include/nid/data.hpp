// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nid/coordnet.hpp"
#include "nid/measurements.hpp"
#include "nid/param_store.hpp"
#include "nid/rng.hpp"
#include "nid/tensor.hpp"

namespace nid {

// Thrown on malformed, truncated, or mismatched files.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Row-major, channel-interleaved raster with values in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> pix;

  Image() = default;
  Image(int w, int h, int c);
  double& at(int y, int x, int c = 0);
  double at(int y, int x, int c = 0) const;
  std::int64_t size() const { return static_cast<std::int64_t>(pix.size()); }
};

// Pixel-center coordinates on [-1,1]^2, row-major (y outer, x inner).
Tensor pixel_centers(int width, int height);

// Image <-> measurement glue. Coordinates come from pixel_centers.
Tensor image_targets(const Image& img);
MeasurementSet image_measurements(const Image& img, int instance);
Image targets_to_image(const Tensor& y, int width, int height);
Image render_field(const FieldFn& f, int side, int channels);

// ---- Phantoms -------------------------------------------------------------

struct Ellipse {
  double cx, cy, a, b, theta, intensity;
  bool contains(double x, double y) const;
};

// Additive ellipse stack; evaluations clamp to [0,1].
struct EllipsePhantom {
  std::vector<Ellipse> parts;
  int D = 0;

  double eval(double x, double y) const;
  FieldFn field() const;
  Image raster() const;
};

std::vector<EllipsePhantom> gen_phantoms(int count, int D, std::uint64_t seed);

// ---- Blob images ----------------------------------------------------------

// Sums of 3-6 anisotropic Gaussian bumps with random RGB tints, clamped.
std::vector<Image> gen_blob_images(int count, int D, std::uint64_t seed);

// ---- Convex polygon SDFs --------------------------------------------------

struct ConvexPolygon {
  std::vector<double> vx, vy;  // counter-clockwise

  // Exact signed distance: negative inside, min over edge segments outside.
  double sdf(double x, double y) const;
  FieldFn field() const;
  double edge_length() const;
};

std::vector<ConvexPolygon> gen_polygon_sdf(int count, std::uint64_t seed);

// Uniform along the boundary (dist == 0).
std::vector<SdfSample> sample_surface(const ConvexPolygon& poly, int count, Rng& rng);
// Half uniform over [-1,1]^2, half Gaussian offsets from the boundary; all
// carry exact distances.
std::vector<SdfSample> sample_free(const ConvexPolygon& poly, int count, Rng& rng);

// ---- Sprite video ---------------------------------------------------------

struct SpriteVideo {
  std::vector<Image> frames;              // grayscale, static background + sprite
  Image background;
  std::vector<std::vector<std::uint8_t>> masks;  // 1 where the sprite sits
  int sprite_size = 0;
};

SpriteVideo gen_sprite_video(int T, int D, std::uint64_t seed);
std::vector<MeasurementSet> video_measurements(const SpriteVideo& video);

// ---- Corruption -----------------------------------------------------------

struct Occlusion {
  Image image;
  std::vector<std::uint8_t> mask;  // 1 inside the pasted patch
};

// Pastes one uniform random-color square. patch == 0 is the identity.
// The mask is for evaluation only; solvers never see it.
Occlusion corrupt_occlusion(const Image& img, int patch, std::uint64_t seed);

// ---- Image files (PGM P5 / PPM P6, 8-bit) ----------------------------------

// [0,1] maps to bytes by round-half-up; read-back is lossless on quantized data.
void write_image(const Image& img, const std::string& path);
Image read_image(const std::string& path);

// ---- Checkpoints ----------------------------------------------------------

enum class GateKind : std::uint32_t { None = 0, Table = 1, Encoder = 2, Temporal = 3 };

struct CheckpointMeta {
  NetworkDims dims;
  std::uint32_t n_experts = 0;
  float omega0 = 30.0f;
  GateKind gate = GateKind::None;
  std::uint32_t gate_rows = 0;    // table: number of stored codes
  std::uint32_t gate_in = 0;      // encoder/temporal: input dimension
  std::uint32_t gate_hidden = 0;  // encoder/temporal: 0 selects the affine-only form
};

struct ParamLayout {
  std::string name;
  std::vector<int> shape;
};

// Canonical block order: embedding, trunk layers, heads ascending, gate.
std::vector<ParamLayout> checkpoint_layout(const CheckpointMeta& meta);

// Binary format: "NIDC", u32 version, u32 header fields, then little-endian
// f32 blocks in layout order. Saving quantizes doubles to f32, so
// save -> load -> save is byte-identical.
void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamStore& ps);
std::pair<CheckpointMeta, ParamStore> load_checkpoint(const std::string& path);

// ---- CSV ------------------------------------------------------------------

// Header "angle,offset,value", one row per (angle, offset), angle-major.
void write_sinogram_csv(const std::string& path, const std::vector<double>& angles,
                        const std::vector<double>& offsets, const Tensor& sino);

/// Inverse of write_sinogram_csv. Angles and offsets come back in file
/// order; the grid must be rectangular (every angle lists every offset).
struct SinogramData {
  std::vector<double> angles;
  std::vector<double> offsets;
  Tensor sino;  // [#angles x #offsets]
};
SinogramData read_sinogram_csv(const std::string& path);

// Header "x,y,label,distance"; label 1 marks on-surface points.
void write_samples_csv(const std::string& path, const std::vector<SdfSample>& samples);
std::vector<SdfSample> read_samples_csv(const std::string& path);

}  // namespace nid
