// SPDX-License-Identifier: Apache-2.0
#include "nid/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace nid {

Image::Image(int w, int h, int c)
    : width(w), height(h), channels(c),
      pix(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c),
          0.0) {
  if (w <= 0 || h <= 0 || c <= 0) throw ShapeError("Image: non-positive dimension");
}

double& Image::at(int y, int x, int c) {
  return pix[(static_cast<std::size_t>(y) * width + x) * channels + c];
}

double Image::at(int y, int x, int c) const {
  return pix[(static_cast<std::size_t>(y) * width + x) * channels + c];
}

Tensor pixel_centers(int width, int height) {
  Tensor out = Tensor::zeros({width * height, 2});
  for (int iy = 0; iy < height; ++iy) {
    double y = -1.0 + (iy + 0.5) * 2.0 / height;
    for (int ix = 0; ix < width; ++ix) {
      out.at(iy * width + ix, 0) = -1.0 + (ix + 0.5) * 2.0 / width;
      out.at(iy * width + ix, 1) = y;
    }
  }
  return out;
}

Tensor image_targets(const Image& img) {
  Tensor y({img.width * img.height, img.channels}, img.pix);
  return y;
}

MeasurementSet image_measurements(const Image& img, int instance) {
  MeasurementSet s;
  s.instance = instance;
  s.omega = pixel_centers(img.width, img.height);
  s.y = image_targets(img);
  return s;
}

Image targets_to_image(const Tensor& y, int width, int height) {
  if (y.rows() != width * height) throw ShapeError("targets_to_image: " + y.shape_str());
  Image img(width, height, y.cols());
  img.pix = y.raw();
  return img;
}

Image render_field(const FieldFn& f, int side, int channels) {
  Tensor y = f(pixel_centers(side, side));
  if (y.cols() != channels) throw ShapeError("render_field: field emits " + y.shape_str());
  for (auto& v : y.raw()) v = std::clamp(v, 0.0, 1.0);
  return targets_to_image(y, side, side);
}

// ---- Phantoms -------------------------------------------------------------

bool Ellipse::contains(double x, double y) const {
  double dx = x - cx, dy = y - cy;
  double u = std::cos(theta) * dx + std::sin(theta) * dy;
  double v = -std::sin(theta) * dx + std::cos(theta) * dy;
  return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
}

double EllipsePhantom::eval(double x, double y) const {
  double acc = 0.0;
  for (const auto& e : parts)
    if (e.contains(x, y)) acc += e.intensity;
  return std::clamp(acc, 0.0, 1.0);
}

FieldFn EllipsePhantom::field() const {
  EllipsePhantom copy = *this;
  return [copy](const Tensor& pts) {
    Tensor out = Tensor::zeros({pts.rows(), 1});
    for (int i = 0; i < pts.rows(); ++i) out.at(i, 0) = copy.eval(pts.at(i, 0), pts.at(i, 1));
    return out;
  };
}

Image EllipsePhantom::raster() const {
  Image img(D, D, 1);
  Tensor coords = pixel_centers(D, D);
  for (int i = 0; i < coords.rows(); ++i)
    img.pix[static_cast<std::size_t>(i)] = eval(coords.at(i, 0), coords.at(i, 1));
  return img;
}

std::vector<EllipsePhantom> gen_phantoms(int count, int D, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("gen_phantoms: count < 1");
  Rng rng = make_rng(seed);
  std::vector<EllipsePhantom> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    EllipsePhantom p;
    p.D = D;
    int parts = uniform_int(rng, 4, 8);
    for (int e = 0; e < parts; ++e) {
      Ellipse el;
      el.cx = uniform(rng, -0.45, 0.45);
      el.cy = uniform(rng, -0.45, 0.45);
      el.a = uniform(rng, 0.10, 0.50);
      el.b = uniform(rng, 0.10, 0.50);
      el.theta = uniform(rng, 0.0, M_PI);
      // First shell bright, later parts add or carve structure.
      el.intensity = e == 0 ? uniform(rng, 0.55, 0.95) : uniform(rng, -0.35, 0.55);
      p.parts.push_back(el);
    }
    out.push_back(std::move(p));
  }
  return out;
}

// ---- Blob images ----------------------------------------------------------

std::vector<Image> gen_blob_images(int count, int D, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("gen_blob_images: count < 1");
  Rng rng = make_rng(seed);
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(count));
  Tensor coords = pixel_centers(D, D);
  for (int i = 0; i < count; ++i) {
    Image img(D, D, 3);
    int blobs = uniform_int(rng, 3, 6);
    for (int b = 0; b < blobs; ++b) {
      double cx = uniform(rng, -0.7, 0.7), cy = uniform(rng, -0.7, 0.7);
      double s1 = uniform(rng, 0.15, 0.55), s2 = uniform(rng, 0.15, 0.55);
      double ang = uniform(rng, 0.0, M_PI);
      double tint[3] = {uniform(rng, 0.2, 1.0), uniform(rng, 0.2, 1.0), uniform(rng, 0.2, 1.0)};
      double ca = std::cos(ang), sa = std::sin(ang);
      for (int p = 0; p < coords.rows(); ++p) {
        double dx = coords.at(p, 0) - cx, dy = coords.at(p, 1) - cy;
        double u = (ca * dx + sa * dy) / s1, v = (-sa * dx + ca * dy) / s2;
        double g = std::exp(-0.5 * (u * u + v * v));
        for (int c = 0; c < 3; ++c) img.pix[static_cast<std::size_t>(p) * 3 + c] += tint[c] * g;
      }
    }
    for (auto& v : img.pix) v = std::clamp(v, 0.0, 1.0);
    out.push_back(std::move(img));
  }
  return out;
}

// ---- Convex polygon SDFs --------------------------------------------------

double ConvexPolygon::sdf(double x, double y) const {
  std::size_t nv = vx.size();
  double best = std::numeric_limits<double>::infinity();
  bool inside = true;
  for (std::size_t i = 0; i < nv; ++i) {
    std::size_t j = (i + 1) % nv;
    double ex = vx[j] - vx[i], ey = vy[j] - vy[i];
    double qx = x - vx[i], qy = y - vy[i];
    if (ex * qy - ey * qx < 0.0) inside = false;
    double t = std::clamp((qx * ex + qy * ey) / (ex * ex + ey * ey), 0.0, 1.0);
    best = std::min(best, std::hypot(qx - t * ex, qy - t * ey));
  }
  return inside ? -best : best;
}

FieldFn ConvexPolygon::field() const {
  ConvexPolygon copy = *this;
  return [copy](const Tensor& pts) {
    Tensor out = Tensor::zeros({pts.rows(), 1});
    for (int i = 0; i < pts.rows(); ++i) out.at(i, 0) = copy.sdf(pts.at(i, 0), pts.at(i, 1));
    return out;
  };
}

double ConvexPolygon::edge_length() const {
  double total = 0.0;
  for (std::size_t i = 0; i < vx.size(); ++i) {
    std::size_t j = (i + 1) % vx.size();
    total += std::hypot(vx[j] - vx[i], vy[j] - vy[i]);
  }
  return total;
}

// Valtr's construction: edge vectors built from sorted coordinate deltas,
// then chained in angular order. Convex with exactly n vertices.
static ConvexPolygon random_convex(int n, Rng& rng) {
  auto deltas = [&](std::vector<double> c) {
    std::sort(c.begin(), c.end());
    std::vector<double> d;
    double top = c.front(), bot = c.front();
    for (int i = 1; i + 1 < n; ++i) {
      if (uniform_int(rng, 0, 1) == 1) {
        d.push_back(c[static_cast<std::size_t>(i)] - top);
        top = c[static_cast<std::size_t>(i)];
      } else {
        d.push_back(bot - c[static_cast<std::size_t>(i)]);
        bot = c[static_cast<std::size_t>(i)];
      }
    }
    d.push_back(c.back() - top);
    d.push_back(bot - c.back());
    return d;
  };
  std::vector<double> xs(static_cast<std::size_t>(n)), ys(static_cast<std::size_t>(n));
  for (auto& v : xs) v = uniform(rng, 0.0, 1.0);
  for (auto& v : ys) v = uniform(rng, 0.0, 1.0);
  std::vector<double> dx = deltas(xs), dy = deltas(ys);
  std::shuffle(dy.begin(), dy.end(), rng);
  std::vector<std::pair<double, double>> edges(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    edges[static_cast<std::size_t>(i)] = {dx[static_cast<std::size_t>(i)],
                                          dy[static_cast<std::size_t>(i)]};
  std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
    return std::atan2(a.second, a.first) < std::atan2(b.second, b.first);
  });
  ConvexPolygon poly;
  double px = 0.0, py = 0.0;
  for (const auto& [ex, ey] : edges) {
    px += ex;
    py += ey;
    poly.vx.push_back(px);
    poly.vy.push_back(py);
  }
  // Center the bounding box and scale the max extent into the domain.
  auto [xmin, xmax] = std::minmax_element(poly.vx.begin(), poly.vx.end());
  auto [ymin, ymax] = std::minmax_element(poly.vy.begin(), poly.vy.end());
  double mx = 0.5 * (*xmin + *xmax), my = 0.5 * (*ymin + *ymax);
  double extent = std::max(*xmax - *xmin, *ymax - *ymin);
  double target = uniform(rng, 0.9, 1.4);  // full width, so half-extent <= 0.7
  for (std::size_t i = 0; i < poly.vx.size(); ++i) {
    poly.vx[i] = (poly.vx[i] - mx) * target / extent;
    poly.vy[i] = (poly.vy[i] - my) * target / extent;
  }
  return poly;
}

std::vector<ConvexPolygon> gen_polygon_sdf(int count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("gen_polygon_sdf: count < 1");
  Rng rng = make_rng(seed);
  std::vector<ConvexPolygon> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(random_convex(uniform_int(rng, 5, 9), rng));
  return out;
}

std::vector<SdfSample> sample_surface(const ConvexPolygon& poly, int count, Rng& rng) {
  std::size_t nv = poly.vx.size();
  std::vector<double> cum(nv + 1, 0.0);
  for (std::size_t i = 0; i < nv; ++i) {
    std::size_t j = (i + 1) % nv;
    cum[i + 1] = cum[i] + std::hypot(poly.vx[j] - poly.vx[i], poly.vy[j] - poly.vy[i]);
  }
  std::vector<SdfSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    double u = uniform(rng, 0.0, cum[nv]);
    std::size_t i =
        static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin()) - 1;
    i = std::min(i, nv - 1);
    std::size_t j = (i + 1) % nv;
    double t = (u - cum[i]) / (cum[i + 1] - cum[i]);
    out.push_back({poly.vx[i] + t * (poly.vx[j] - poly.vx[i]),
                   poly.vy[i] + t * (poly.vy[j] - poly.vy[i]), true, 0.0});
  }
  return out;
}

std::vector<SdfSample> sample_free(const ConvexPolygon& poly, int count, Rng& rng) {
  std::vector<SdfSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    double x, y;
    if (s % 2 == 0) {
      x = uniform(rng, -1.0, 1.0);
      y = uniform(rng, -1.0, 1.0);
    } else {
      // Near-surface samples sharpen the zero crossing.
      auto on = sample_surface(poly, 1, rng);
      x = std::clamp(on[0].x + normal(rng, 0.0, 0.1), -1.0, 1.0);
      y = std::clamp(on[0].y + normal(rng, 0.0, 0.1), -1.0, 1.0);
    }
    out.push_back({x, y, false, poly.sdf(x, y)});
  }
  return out;
}

// ---- Sprite video ---------------------------------------------------------

SpriteVideo gen_sprite_video(int T, int D, std::uint64_t seed) {
  if (T < 2) throw std::invalid_argument("gen_sprite_video: T < 2");
  Rng rng = make_rng(seed);
  SpriteVideo v;
  v.sprite_size = std::max(2, D / 4);

  // Smooth low-frequency background kept away from the sprite shade.
  double fa = uniform(rng, 0.6, 1.8), fb = uniform(rng, 0.6, 1.8);
  double fc = uniform(rng, 0.6, 1.8), fd = uniform(rng, 0.6, 1.8);
  double pa = uniform(rng, 0.0, 2.0 * M_PI), pb = uniform(rng, 0.0, 2.0 * M_PI);
  v.background = Image(D, D, 1);
  for (int y = 0; y < D; ++y)
    for (int x = 0; x < D; ++x) {
      double u = (x + 0.5) / D, w = (y + 0.5) / D;
      v.background.at(y, x) = 0.45 + 0.25 * std::sin(2.0 * M_PI * (fa * u + fb * w) + pa) *
                                         std::cos(2.0 * M_PI * (fc * u + fd * w) + pb);
    }

  int lim = D - v.sprite_size;
  int x0 = uniform_int(rng, 0, lim), y0 = uniform_int(rng, 0, lim);
  int x1 = x0, y1 = y0;
  while (std::abs(x1 - x0) + std::abs(y1 - y0) < std::max(2, D / 4)) {
    x1 = uniform_int(rng, 0, lim);
    y1 = uniform_int(rng, 0, lim);
  }
  double shade = 0.95;

  for (int t = 0; t < T; ++t) {
    double a = static_cast<double>(t) / (T - 1);
    int sx = static_cast<int>(std::lround(x0 + a * (x1 - x0)));
    int sy = static_cast<int>(std::lround(y0 + a * (y1 - y0)));
    Image frame = v.background;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(D) * D, 0);
    for (int y = sy; y < sy + v.sprite_size; ++y)
      for (int x = sx; x < sx + v.sprite_size; ++x) {
        frame.at(y, x) = shade;
        mask[static_cast<std::size_t>(y) * D + x] = 1;
      }
    v.frames.push_back(std::move(frame));
    v.masks.push_back(std::move(mask));
  }
  return v;
}

std::vector<MeasurementSet> video_measurements(const SpriteVideo& video) {
  std::vector<MeasurementSet> out;
  out.reserve(video.frames.size());
  for (std::size_t t = 0; t < video.frames.size(); ++t)
    out.push_back(image_measurements(video.frames[t], static_cast<int>(t)));
  return out;
}

// ---- Corruption -----------------------------------------------------------

Occlusion corrupt_occlusion(const Image& img, int patch, std::uint64_t seed) {
  if (patch < 0 || patch > img.width || patch > img.height)
    throw std::invalid_argument("corrupt_occlusion: patch does not fit");
  Occlusion out;
  out.image = img;
  out.mask.assign(static_cast<std::size_t>(img.width) * img.height, 0);
  if (patch == 0) return out;
  Rng rng = make_rng(seed);
  std::vector<double> color(static_cast<std::size_t>(img.channels));
  for (auto& c : color) c = uniform(rng, 0.0, 1.0);
  int x0 = uniform_int(rng, 0, img.width - patch);
  int y0 = uniform_int(rng, 0, img.height - patch);
  for (int y = y0; y < y0 + patch; ++y)
    for (int x = x0; x < x0 + patch; ++x) {
      for (int c = 0; c < img.channels; ++c)
        out.image.at(y, x, c) = color[static_cast<std::size_t>(c)];
      out.mask[static_cast<std::size_t>(y) * img.width + x] = 1;
    }
  return out;
}

// ---- Image files ----------------------------------------------------------

static std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
}

void write_image(const Image& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw ShapeError("write_image: unsupported channel count " + std::to_string(img.channels));
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_image: cannot open " + path);
  f << (img.channels == 1 ? "P5" : "P6") << "\n"
    << img.width << " " << img.height << "\n255\n";
  std::vector<char> bytes(img.pix.size());
  for (std::size_t i = 0; i < img.pix.size(); ++i)
    bytes[i] = static_cast<char>(quantize(img.pix[i]));
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write_image: short write to " + path);
}

// Reads one whitespace-delimited header token, skipping '#' comment lines.
static std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw IoError("read_image: malformed header (unexpected end)");
  return tok;
}

Image read_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_image: cannot open " + path);
  std::string magic = pnm_token(f);
  int channels;
  if (magic == "P5")
    channels = 1;
  else if (magic == "P6")
    channels = 3;
  else
    throw IoError("read_image: bad magic '" + magic + "'");
  int width, height, maxval;
  try {
    width = std::stoi(pnm_token(f));
    height = std::stoi(pnm_token(f));
    maxval = std::stoi(pnm_token(f));
  } catch (const std::logic_error&) {
    throw IoError("read_image: malformed header in " + path);
  }
  if (width <= 0 || height <= 0) throw IoError("read_image: malformed dimensions");
  if (maxval != 255) throw IoError("read_image: unsupported maxval " + std::to_string(maxval));
  // The token reader consumed the single whitespace byte before the payload.
  Image img(width, height, channels);
  std::vector<char> bytes(img.pix.size());
  f.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (f.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw IoError("read_image: truncated payload in " + path);
  for (std::size_t i = 0; i < img.pix.size(); ++i)
    img.pix[i] = static_cast<std::uint8_t>(bytes[i]) / 255.0;
  return img;
}

// ---- Checkpoints ----------------------------------------------------------

static constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<ParamLayout> checkpoint_layout(const CheckpointMeta& meta) {
  const TrunkSpec& tr = meta.dims.trunk;
  const HeadSpec& hd = meta.dims.head;
  std::vector<ParamLayout> out;
  auto affine = [&out](const std::string& prefix, int in, int width) {
    out.push_back({prefix + "/w", {in, width}});
    out.push_back({prefix + "/b", {width}});
  };
  affine("trunk/embed", tr.in_dim, tr.n_freq);
  int in = tr.n_freq;
  for (int l = 0; l < tr.hidden_layers; ++l) {
    affine("trunk/h" + std::to_string(l), in, tr.width);
    in = tr.width;
  }
  for (std::uint32_t i = 0; i < meta.n_experts; ++i) {
    affine(head_prefix(static_cast<int>(i)) + "/a", hd.in_width, hd.hidden);
    affine(head_prefix(static_cast<int>(i)) + "/out", hd.hidden, hd.out_dim);
  }
  int n = static_cast<int>(meta.n_experts);
  switch (meta.gate) {
    case GateKind::None:
      break;
    case GateKind::Table:
      out.push_back({"gate/table", {static_cast<int>(meta.gate_rows), n}});
      break;
    case GateKind::Encoder:
    case GateKind::Temporal:
      if (meta.gate_hidden == 0) {
        affine("gate/e0", static_cast<int>(meta.gate_in), n);
      } else {
        affine("gate/e0", static_cast<int>(meta.gate_in), static_cast<int>(meta.gate_hidden));
        affine("gate/e1", static_cast<int>(meta.gate_hidden), n);
      }
      break;
  }
  return out;
}

static void wr_u32(std::ostream& f, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  f.write(b, 4);
}

static void wr_f32(std::ostream& f, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  wr_u32(f, bits);
}

static std::uint32_t rd_u32(std::istream& f, const char* what) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (f.gcount() != 4) throw IoError(std::string("load_checkpoint: truncated ") + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

static float rd_f32(std::istream& f, const char* what) {
  std::uint32_t bits = rd_u32(f, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void save_checkpoint(const std::string& path, const CheckpointMeta& meta, const ParamStore& ps) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_checkpoint: cannot open " + path);
  f.write("NIDC", 4);
  wr_u32(f, kCheckpointVersion);
  wr_u32(f, static_cast<std::uint32_t>(meta.dims.trunk.in_dim));
  wr_u32(f, static_cast<std::uint32_t>(meta.dims.head.out_dim));
  wr_u32(f, static_cast<std::uint32_t>(meta.dims.trunk.n_freq));
  wr_u32(f, static_cast<std::uint32_t>(meta.dims.trunk.width));
  wr_u32(f, static_cast<std::uint32_t>(meta.dims.trunk.hidden_layers));
  wr_u32(f, static_cast<std::uint32_t>(meta.dims.head.hidden));
  wr_u32(f, meta.n_experts);
  wr_f32(f, meta.omega0);
  wr_u32(f, static_cast<std::uint32_t>(meta.gate));
  wr_u32(f, meta.gate_rows);
  wr_u32(f, meta.gate_in);
  wr_u32(f, meta.gate_hidden);
  for (const auto& block : checkpoint_layout(meta)) {
    const Tensor& t = ps.value(block.name);
    if (t.shape() != block.shape)
      throw IoError("save_checkpoint: " + block.name + " has shape " + t.shape_str() +
                    ", layout expects " + shape_str(block.shape));
    for (std::int64_t i = 0; i < t.size(); ++i) wr_f32(f, static_cast<float>(t[i]));
  }
  if (!f) throw IoError("save_checkpoint: short write to " + path);
}

std::pair<CheckpointMeta, ParamStore> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_checkpoint: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4 || std::string(magic, 4) != "NIDC")
    throw IoError("load_checkpoint: bad magic in " + path);
  std::uint32_t version = rd_u32(f, "version");
  if (version != kCheckpointVersion)
    throw IoError("load_checkpoint: unsupported version " + std::to_string(version));
  CheckpointMeta meta;
  meta.dims.trunk.in_dim = static_cast<int>(rd_u32(f, "header"));
  meta.dims.head.out_dim = static_cast<int>(rd_u32(f, "header"));
  meta.dims.trunk.n_freq = static_cast<int>(rd_u32(f, "header"));
  meta.dims.trunk.width = static_cast<int>(rd_u32(f, "header"));
  meta.dims.trunk.hidden_layers = static_cast<int>(rd_u32(f, "header"));
  meta.dims.head.hidden = static_cast<int>(rd_u32(f, "header"));
  meta.n_experts = rd_u32(f, "header");
  meta.omega0 = rd_f32(f, "header");
  std::uint32_t gate = rd_u32(f, "header");
  if (gate > 3) throw IoError("load_checkpoint: unknown gate kind " + std::to_string(gate));
  meta.gate = static_cast<GateKind>(gate);
  meta.gate_rows = rd_u32(f, "header");
  meta.gate_in = rd_u32(f, "header");
  meta.gate_hidden = rd_u32(f, "header");
  meta.dims.trunk.omega0 = meta.omega0;
  meta.dims.head.in_width =
      meta.dims.trunk.hidden_layers > 0 ? meta.dims.trunk.width : meta.dims.trunk.n_freq;
  meta.dims.n_experts = static_cast<int>(meta.n_experts);

  ParamStore ps;
  for (const auto& block : checkpoint_layout(meta)) {
    Tensor t = Tensor::zeros(block.shape);
    for (std::int64_t i = 0; i < t.size(); ++i)
      t[i] = static_cast<double>(rd_f32(f, block.name.c_str()));
    ps.add(block.name, std::move(t));
  }
  if (f.peek() != EOF) throw IoError("load_checkpoint: trailing bytes in " + path);
  return {meta, std::move(ps)};
}

// ---- CSV ------------------------------------------------------------------

static void csv_number(std::ostream& f, double v) {
  f << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
}

void write_sinogram_csv(const std::string& path, const std::vector<double>& angles,
                        const std::vector<double>& offsets, const Tensor& sino) {
  if (sino.rows() != static_cast<int>(angles.size()) ||
      sino.cols() != static_cast<int>(offsets.size()))
    throw ShapeError("write_sinogram_csv: " + sino.shape_str());
  std::ofstream f(path);
  if (!f) throw IoError("write_sinogram_csv: cannot open " + path);
  f << "angle,offset,value\n";
  for (std::size_t a = 0; a < angles.size(); ++a)
    for (std::size_t o = 0; o < offsets.size(); ++o) {
      csv_number(f, angles[a]);
      f << ",";
      csv_number(f, offsets[o]);
      f << ",";
      csv_number(f, sino.at(static_cast<int>(a), static_cast<int>(o)));
      f << "\n";
    }
  if (!f) throw IoError("write_sinogram_csv: short write to " + path);
}

void write_samples_csv(const std::string& path, const std::vector<SdfSample>& samples) {
  std::ofstream f(path);
  if (!f) throw IoError("write_samples_csv: cannot open " + path);
  f << "x,y,label,distance\n";
  for (const auto& s : samples) {
    csv_number(f, s.x);
    f << ",";
    csv_number(f, s.y);
    f << "," << (s.on_surface ? 1 : 0) << ",";
    csv_number(f, s.dist);
    f << "\n";
  }
  if (!f) throw IoError("write_samples_csv: short write to " + path);
}

std::vector<SdfSample> read_samples_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("read_samples_csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != "x,y,label,distance")
    throw IoError("read_samples_csv: bad header in " + path);
  std::vector<SdfSample> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    double vals[4];
    for (int i = 0; i < 4; ++i) {
      if (!std::getline(ss, field, ',')) throw IoError("read_samples_csv: malformed row");
      try {
        vals[i] = std::stod(field);
      } catch (const std::logic_error&) {
        throw IoError("read_samples_csv: malformed number '" + field + "'");
      }
    }
    out.push_back({vals[0], vals[1], vals[2] != 0.0, vals[3]});
  }
  return out;
}

SinogramData read_sinogram_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("read_sinogram_csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != "angle,offset,value")
    throw IoError("read_sinogram_csv: bad header in " + path);

  std::vector<double> angles, offsets, values;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    double vals[3];
    for (int i = 0; i < 3; ++i) {
      if (!std::getline(ss, field, ',')) throw IoError("read_sinogram_csv: malformed row");
      try {
        vals[i] = std::stod(field);
      } catch (const std::logic_error&) {
        throw IoError("read_sinogram_csv: malformed number '" + field + "'");
      }
    }
    if (angles.empty() || vals[0] != angles.back()) angles.push_back(vals[0]);
    if (angles.size() == 1) offsets.push_back(vals[1]);
    values.push_back(vals[2]);
  }
  if (angles.empty() || offsets.empty()) throw IoError("read_sinogram_csv: no rows in " + path);
  if (values.size() != angles.size() * offsets.size())
    throw IoError("read_sinogram_csv: ragged angle/offset grid in " + path);

  SinogramData out;
  out.angles = std::move(angles);
  out.offsets = std::move(offsets);
  out.sino = Tensor({static_cast<int>(out.angles.size()), static_cast<int>(out.offsets.size())},
                    std::move(values));
  return out;
}

}  // namespace nid
