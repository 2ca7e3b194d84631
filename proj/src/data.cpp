#include "idml/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <stdexcept>

#include "idml/errors.hpp"
#include "idml/rng.hpp"
#include "idml/transforms.hpp"

namespace fs = std::filesystem;

namespace idml {

std::vector<std::int64_t> Dataset::present_classes() const {
  std::set<std::int64_t> seen(labels.begin(), labels.end());
  return {seen.begin(), seen.end()};
}

Tensor Dataset::batch(const std::vector<std::int64_t>& indices) const {
  if (images.empty()) throw std::invalid_argument("batch() on an empty dataset");
  const Shape& img = images.front().shape();
  Shape out_shape{static_cast<std::int64_t>(indices.size())};
  out_shape.insert(out_shape.end(), img.begin(), img.end());
  Tensor out = Tensor::zeros(out_shape);
  auto dst = out.mutable_data();
  const std::int64_t stride = images.front().numel();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto idx = indices[i];
    if (idx < 0 || idx >= size()) {
      throw std::invalid_argument("batch index " + std::to_string(idx) +
                                  " out of range for dataset of " +
                                  std::to_string(size()));
    }
    const auto src = images[static_cast<std::size_t>(idx)].data();
    std::copy(src.begin(), src.end(),
              dst.begin() + static_cast<std::int64_t>(i) * stride);
  }
  return out;
}

void Dataset::validate() const {
  if (images.size() != labels.size()) {
    throw std::invalid_argument("dataset has " + std::to_string(images.size()) +
                                " images but " + std::to_string(labels.size()) +
                                " labels");
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!same_shape(images[i].shape(), images.front().shape())) {
      throw std::invalid_argument("image " + std::to_string(i) + " has shape " +
                                  shape_str(images[i].shape()) + ", expected " +
                                  shape_str(images.front().shape()));
    }
    if (labels[i] < 0 || labels[i] >= num_classes()) {
      throw std::invalid_argument("label " + std::to_string(labels[i]) +
                                  " outside class table of " +
                                  std::to_string(num_classes()));
    }
    for (double v : images[i].data()) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("image " + std::to_string(i) +
                                    " has pixel value outside [0, 1]");
      }
    }
  }
}

void GlyphConfig::validate() const {
  if (num_base_shapes < 1) throw ConfigError("num_base_shapes must be >= 1");
  if (samples_per_class < 1) throw ConfigError("samples_per_class must be >= 1");
  if (image_size < 16) {
    throw ConfigError("image_size " + std::to_string(image_size) +
                      " is too small for a glyph (minimum 16)");
  }
  if (jitter_px < 0 || jitter_px > image_size / 4) {
    throw ConfigError("jitter_px must be in [0, image_size/4]");
  }
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  if (shape_jitter < 0.0 || shape_jitter > 1.0) {
    throw ConfigError("shape_jitter must be in [0, 1]");
  }
  if (upright_bias < 0.0 || upright_bias > 1.0) {
    throw ConfigError("upright_bias must be in [0, 1]");
  }
}

namespace {

using Stroke = std::vector<std::pair<double, double>>;  // unit (x, y) polyline

struct Motif {
  const char* name;
  std::vector<Stroke> strokes;
};

// Hand-drawn asymmetric motifs on the unit canvas; none maps onto itself
// under any 90-degree rotation.
const std::vector<Motif>& motif_library() {
  static const std::vector<Motif> lib{
      {"ell", {{{0.25, 0.2}, {0.25, 0.8}, {0.65, 0.8}}}},
      {"arrow", {{{0.5, 0.8}, {0.5, 0.2}}, {{0.3, 0.4}, {0.5, 0.2}, {0.7, 0.4}}}},
      {"flag", {{{0.3, 0.2}, {0.3, 0.8}}, {{0.3, 0.2}, {0.7, 0.3}, {0.3, 0.45}}}},
      {"hook", {{{0.3, 0.2}, {0.3, 0.7}, {0.6, 0.8}, {0.72, 0.55}}}},
      {"step", {{{0.2, 0.8}, {0.2, 0.5}, {0.5, 0.5}, {0.5, 0.2}, {0.8, 0.2}}}},
      {"tee", {{{0.2, 0.3}, {0.8, 0.3}}, {{0.5, 0.3}, {0.5, 0.8}}}},
      // The bare zigzag is 180-degree symmetric; the detached serif breaks it.
      {"zig",
       {{{0.2, 0.7}, {0.4, 0.3}, {0.6, 0.7}, {0.8, 0.3}}, {{0.72, 0.78}, {0.85, 0.78}}}},
      {"key", {{{0.3, 0.3}, {0.7, 0.3}, {0.7, 0.7}}, {{0.5, 0.3}, {0.5, 0.5}}}},
  };
  return lib;
}

double seg_dist2(double ux, double uy, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = ((ux - ax) * dx + (uy - ay) * dy) / len2;
    t = std::clamp(t, 0.0, 1.0);
  }
  const double px = ax + t * dx, py = ay + t * dy;
  return (ux - px) * (ux - px) + (uy - py) * (uy - py);
}

constexpr double kHalfWidth = 0.055;

// Binary rasterization (no anti-aliasing): a pixel is lit iff its center
// lies within the stroke half-width of some segment. Exactness under
// rotate90 then holds for the index-permuted canonical images.
Tensor rasterize(const std::vector<Stroke>& strokes, std::int64_t size,
                 double half_width = kHalfWidth) {
  Tensor img = Tensor::zeros({1, size, size});
  auto px = img.mutable_data();
  const double inv = 1.0 / static_cast<double>(size);
  for (std::int64_t y = 0; y < size; ++y) {
    for (std::int64_t x = 0; x < size; ++x) {
      const double ux = (static_cast<double>(x) + 0.5) * inv;
      const double uy = (static_cast<double>(y) + 0.5) * inv;
      bool lit = false;
      for (const auto& stroke : strokes) {
        for (std::size_t i = 0; i + 1 < stroke.size() && !lit; ++i) {
          lit = seg_dist2(ux, uy, stroke[i].first, stroke[i].second,
                          stroke[i + 1].first, stroke[i + 1].second) <=
                half_width * half_width;
        }
        if (lit) break;
      }
      if (lit) px[y * size + x] = 1.0;
    }
  }
  return img;
}

// A glyph must differ from all three of its rotations, or orientation
// classes would collide.
bool clearly_asymmetric(const Tensor& img) {
  std::int64_t lit = 0;
  for (double v : img.data())
    if (v != 0.0) ++lit;
  for (int o = 1; o < 4; ++o) {
    const Tensor rot = rotate90(img, o);
    std::int64_t diff = 0;
    for (std::int64_t i = 0; i < img.numel(); ++i)
      if (img.data()[i] != rot.data()[i]) ++diff;
    if (diff < std::max<std::int64_t>(4, lit / 10)) return false;
  }
  return true;
}

// Random lattice polyline for shape indices beyond the library; the salt
// loop rejects accidentally near-symmetric draws. Geometry depends only on
// the shape index, never on the dataset seed.
std::vector<Stroke> procedural_strokes(std::int64_t shape, std::int64_t size) {
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    Rng rng(derive_seed(0xA5A5F00D,
                        static_cast<std::uint64_t>(shape) * 64 + attempt));
    const int points = 4 + static_cast<int>(rng.below(3));
    Stroke stroke;
    int cx = static_cast<int>(rng.below(5)), cy = static_cast<int>(rng.below(5));
    stroke.push_back({0.2 + 0.15 * cx, 0.2 + 0.15 * cy});
    for (int i = 1; i < points; ++i) {
      int nx = cx, ny = cy;
      while (nx == cx && ny == cy) {
        nx = static_cast<int>(rng.below(5));
        ny = static_cast<int>(rng.below(5));
      }
      cx = nx;
      cy = ny;
      stroke.push_back({0.2 + 0.15 * cx, 0.2 + 0.15 * cy});
    }
    std::vector<Stroke> strokes{stroke};
    if (clearly_asymmetric(rasterize(strokes, size))) return strokes;
  }
  throw std::runtime_error("could not draw an asymmetric glyph for shape " +
                           std::to_string(shape));
}

// Per-sample glyph geometry: isotropic scale and a small tilt about the
// canvas center, vertex wobble, and a stroke-width factor. Applied to the
// upright strokes before any orientation is chosen, so it commutes with
// rotate90 exactly.
std::vector<Stroke> perturb_strokes(const std::vector<Stroke>& strokes,
                                    double jitter, Rng& rng, double* half_width) {
  const double scale = 1.0 + 0.35 * jitter * rng.uniform(-1.0, 1.0);
  const double tilt = 0.26 * jitter * rng.uniform(-1.0, 1.0);
  *half_width = kHalfWidth * (1.0 + jitter * rng.uniform(-0.55, 1.2));
  const double c = std::cos(tilt) * scale, s = std::sin(tilt) * scale;
  std::vector<Stroke> out = strokes;
  for (auto& stroke : out) {
    for (auto& p : stroke) {
      const double x = p.first - 0.5, y = p.second - 0.5;
      const double wx = 0.1 * jitter * rng.uniform(-1.0, 1.0);
      const double wy = 0.1 * jitter * rng.uniform(-1.0, 1.0);
      p.first = 0.5 + c * x - s * y + wx;
      p.second = 0.5 + s * x + c * y + wy;
    }
  }
  return out;
}

// Radially symmetric ring: exactly invariant under rotate90 on a square
// canvas because squared pixel distance to the center is preserved by the
// index permutation.
Tensor ring_image(std::int64_t shape, std::int64_t num_shapes, std::int64_t size,
                  double radius_factor = 1.0, double width_factor = 1.0,
                  double shear = 0.0) {
  const double s = static_cast<double>(size);
  const double r = s * (0.10 + 0.30 * static_cast<double>(shape + 1) /
                                   static_cast<double>(num_shapes + 1)) *
                   radius_factor;
  const double half = s * 0.03 * width_factor;
  const double lo2 = (r - half) * (r - half);
  const double hi2 = (r + half) * (r + half);
  const double c = (s - 1.0) / 2.0;
  Tensor img = Tensor::zeros({1, size, size});
  auto px = img.mutable_data();
  for (std::int64_t y = 0; y < size; ++y) {
    for (std::int64_t x = 0; x < size; ++x) {
      const double dy = static_cast<double>(y) - c;
      const double dx = static_cast<double>(x) - c - shear * dy;
      const double d2 = dx * dx + dy * dy;
      if (d2 >= lo2 && d2 <= hi2) px[y * size + x] = 1.0;
    }
  }
  return img;
}

Tensor shifted(const Tensor& img, std::int64_t dy, std::int64_t dx) {
  const std::int64_t c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
  Tensor out = Tensor::zeros(img.shape());
  auto dst = out.mutable_data();
  const auto src = img.data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (std::int64_t y = 0; y < h; ++y) {
      const std::int64_t sy = y - dy;
      if (sy < 0 || sy >= h) continue;
      for (std::int64_t x = 0; x < w; ++x) {
        const std::int64_t sx = x - dx;
        if (sx < 0 || sx >= w) continue;
        dst[(ch * h + y) * w + x] = src[(ch * h + sy) * w + sx];
      }
    }
  }
  return out;
}

}  // namespace

namespace {

// Shared tail of sample synthesis: integer translation then clamped noise.
// Draw order per sample: dy, dx, then noise row-major.
Tensor jitter_and_noise(const Tensor& img, const GlyphConfig& cfg, Rng& rng) {
  Tensor out;
  if (cfg.jitter_px > 0) {
    const std::int64_t span = 2 * cfg.jitter_px + 1;
    const std::int64_t dy =
        static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(span))) -
        cfg.jitter_px;
    const std::int64_t dx =
        static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(span))) -
        cfg.jitter_px;
    out = shifted(img, dy, dx);
  } else {
    out = Tensor::from_data(img.shape(), {img.data().begin(), img.data().end()});
  }
  if (cfg.noise_sigma > 0.0) {
    auto px = out.mutable_data();
    for (auto& v : px) {
      v = std::clamp(v + cfg.noise_sigma * rng.normal(), 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace

Dataset generate_synthetic(const GlyphConfig& cfg) {
  cfg.validate();

  // Canonical upright image per base shape, plus its strokes when the shape
  // is a polyline (per-sample geometry re-rasterizes from them).
  std::vector<Tensor> base;
  std::vector<std::string> base_names;
  std::vector<std::vector<Stroke>> base_strokes(
      static_cast<std::size_t>(cfg.num_base_shapes));
  const auto& lib = motif_library();
  for (std::int64_t s = 0; s < cfg.num_base_shapes; ++s) {
    if (!cfg.orientation_classes) {
      base.push_back(ring_image(s, cfg.num_base_shapes, cfg.image_size));
      base_names.push_back("ring" + std::to_string(s));
    } else if (s < static_cast<std::int64_t>(lib.size())) {
      Tensor img = rasterize(lib[static_cast<std::size_t>(s)].strokes, cfg.image_size);
      if (!clearly_asymmetric(img)) {
        throw std::runtime_error(std::string("library motif '") +
                                 lib[static_cast<std::size_t>(s)].name +
                                 "' rasterized nearly rotation-symmetric");
      }
      base.push_back(std::move(img));
      base_names.push_back(lib[static_cast<std::size_t>(s)].name);
      base_strokes[static_cast<std::size_t>(s)] = lib[static_cast<std::size_t>(s)].strokes;
    } else {
      base_strokes[static_cast<std::size_t>(s)] = procedural_strokes(s, cfg.image_size);
      base.push_back(rasterize(base_strokes[static_cast<std::size_t>(s)], cfg.image_size));
      base_names.push_back("poly" + std::to_string(s));
    }
  }

  Dataset ds;
  const char* rot_names[4] = {"_r000", "_r090", "_r180", "_r270"};
  std::vector<Tensor> canonical;
  if (cfg.orientation_classes) {
    for (std::int64_t s = 0; s < cfg.num_base_shapes; ++s) {
      for (int o = 0; o < 4; ++o) {
        canonical.push_back(rotate90(base[static_cast<std::size_t>(s)], o));
        ds.class_names.push_back(base_names[static_cast<std::size_t>(s)] + rot_names[o]);
      }
    }
  } else {
    canonical = base;
    ds.class_names = base_names;
  }

  Rng rng(cfg.seed);
  const auto num_classes = static_cast<std::int64_t>(canonical.size());
  if (cfg.shape_jitter == 0.0 && cfg.upright_bias == 0.0) {
    for (std::int64_t cls = 0; cls < num_classes; ++cls) {
      for (std::int64_t i = 0; i < cfg.samples_per_class; ++i) {
        ds.images.push_back(
            jitter_and_noise(canonical[static_cast<std::size_t>(cls)], cfg, rng));
        ds.labels.push_back(cls);
      }
    }
    return ds;
  }

  // Per-sample geometry: one perturbed rendering per (shape, sample),
  // rotated into every orientation class, then slanted, translated, and
  // noised independently. The upright-bias slant is a canvas-frame x-shear —
  // canvas-vertical strokes tilt by a per-sample angle whatever the
  // orientation class, as if the glyphs were italicized after the page was
  // rotated. The data therefore has an "up" like photographs, deliberately
  // breaking rotation closure of the sample distribution while the glyph
  // geometry itself stays exactly rotation-closed. Emitted class-major like
  // the canonical path.
  const int orients = cfg.orientation_classes ? 4 : 1;
  std::vector<std::vector<Tensor>> per_class(
      static_cast<std::size_t>(num_classes));
  for (std::int64_t s = 0; s < cfg.num_base_shapes; ++s) {
    for (std::int64_t i = 0; i < cfg.samples_per_class; ++i) {
      // Draw order per sample: geometry, then per-orientation slant,
      // translation, and noise.
      std::vector<Stroke> strokes;
      double half_width = kHalfWidth;
      double rf = 1.0, wf = 1.0;
      if (cfg.orientation_classes) {
        strokes = cfg.shape_jitter > 0.0
                      ? perturb_strokes(base_strokes[static_cast<std::size_t>(s)],
                                        cfg.shape_jitter, rng, &half_width)
                      : base_strokes[static_cast<std::size_t>(s)];
      } else if (cfg.shape_jitter > 0.0) {
        rf = 1.0 + 0.2 * cfg.shape_jitter * rng.uniform(-1.0, 1.0);
        wf = 1.0 + cfg.shape_jitter * rng.uniform(-0.5, 1.2);
      }

      Tensor shared_upright;  // reused when no per-orientation slant applies
      for (int o = 0; o < orients; ++o) {
        const double slant = cfg.upright_bias > 0.0
                                 ? 0.5 * cfg.upright_bias * rng.uniform(-1.0, 1.0)
                                 : 0.0;
        Tensor img;
        if (!cfg.orientation_classes) {
          img = ring_image(s, cfg.num_base_shapes, cfg.image_size, rf, wf, slant);
        } else if (slant == 0.0) {
          if (!shared_upright.defined()) {
            shared_upright = rasterize(strokes, cfg.image_size, half_width);
          }
          img = rotate90(shared_upright, o);
        } else {
          // The raster is rotated by o afterwards, so conjugate the canvas
          // x-shear through that rotation: even orientations shear x by y,
          // odd ones shear y by x.
          std::vector<Stroke> slanted = strokes;
          for (auto& stroke : slanted) {
            for (auto& p : stroke) {
              if (o % 2 == 0) {
                p.first += slant * (p.second - 0.5);
              } else {
                p.second += slant * (p.first - 0.5);
              }
            }
          }
          img = rotate90(rasterize(slanted, cfg.image_size, half_width), o);
        }
        per_class[static_cast<std::size_t>(s * orients + o)].push_back(
            jitter_and_noise(img, cfg, rng));
      }
    }
  }
  for (std::int64_t cls = 0; cls < num_classes; ++cls) {
    for (auto& img : per_class[static_cast<std::size_t>(cls)]) {
      ds.images.push_back(std::move(img));
      ds.labels.push_back(cls);
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// PNM IO
// ---------------------------------------------------------------------------

void write_pnm(const std::string& path, const Tensor& image) {
  if (image.ndim() != 3 || (image.shape()[0] != 1 && image.shape()[0] != 3)) {
    throw std::invalid_argument("write_pnm expects a 1- or 3-channel C x H x W image, got " +
                                shape_str(image.shape()));
  }
  const std::int64_t c = image.shape()[0], h = image.shape()[1], w = image.shape()[2];
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
  const auto px = image.data();
  std::vector<unsigned char> row(static_cast<std::size_t>(w * c));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const double v = std::clamp(px[(ch * h + y) * w + x], 0.0, 1.0);
        row[static_cast<std::size_t>(x * c + ch)] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("short write to '" + path + "'");
}

namespace {

// Next whitespace-delimited token, skipping '#' comments to end of line.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      if (!tok.empty()) {
        in.unget();
        return tok;
      }
    } else {
      tok.push_back(static_cast<char>(ch));
    }
    ch = in.get();
  }
  return tok;
}

}  // namespace

Tensor read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  const std::string magic = pnm_token(in);
  std::int64_t channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw std::runtime_error("'" + path + "' is not a binary PGM/PPM (magic '" + magic + "')");

  const auto read_int = [&](const char* what) {
    const std::string tok = pnm_token(in);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(tok, &used);
      if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
      return static_cast<std::int64_t>(v);
    } catch (const std::exception&) {
      throw std::runtime_error("'" + path + "': bad " + what + " field");
    }
  };
  const std::int64_t w = read_int("width");
  const std::int64_t h = read_int("height");
  const std::int64_t maxval = read_int("maxval");
  if (maxval > 255) {
    throw std::runtime_error("'" + path + "': 16-bit samples are unsupported");
  }
  in.get();  // single whitespace byte before the raster

  std::vector<unsigned char> raw(static_cast<std::size_t>(w * h * channels));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw std::runtime_error("'" + path + "': truncated raster data");
  }

  Tensor img = Tensor::zeros({channels, h, w});
  auto px = img.mutable_data();
  const double inv = 1.0 / static_cast<double>(maxval);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::int64_t ch = 0; ch < channels; ++ch)
        px[(ch * h + y) * w + x] =
            static_cast<double>(raw[static_cast<std::size_t>((y * w + x) * channels + ch)]) * inv;
  return img;
}

// ---------------------------------------------------------------------------
// Folder layout
// ---------------------------------------------------------------------------

namespace {

Tensor crop_or_pad(const Tensor& img, std::int64_t target) {
  const std::int64_t c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
  if (h == target && w == target) return img;
  Tensor out = Tensor::zeros({c, target, target});
  auto dst = out.mutable_data();
  const auto src = img.data();
  // Center alignment in both directions; crop when larger, pad when smaller.
  const std::int64_t oy = (target - h) / 2, ox = (target - w) / 2;
  for (std::int64_t ch = 0; ch < c; ++ch)
    for (std::int64_t y = 0; y < h; ++y) {
      const std::int64_t ty = y + oy;
      if (ty < 0 || ty >= target) continue;
      for (std::int64_t x = 0; x < w; ++x) {
        const std::int64_t tx = x + ox;
        if (tx < 0 || tx >= target) continue;
        dst[(ch * target + ty) * target + tx] = src[(ch * h + y) * w + x];
      }
    }
  return out;
}

}  // namespace

Dataset load_image_folder(const std::string& root, std::int64_t target_size) {
  if (!fs::is_directory(root)) {
    throw ConfigError("dataset root '" + root + "' is not a directory");
  }
  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) {
    throw ConfigError("dataset root '" + root + "' contains no class directories");
  }

  Dataset ds;
  ds.class_names = class_dirs;
  for (std::size_t cls = 0; cls < class_dirs.size(); ++cls) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(fs::path(root) / class_dirs[cls])) {
      if (!entry.is_regular_file()) continue;
      std::string ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      if (ext == ".pgm" || ext == ".ppm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::size_t loaded = 0;
    for (const auto& file : files) {
      Tensor img;
      try {
        img = read_pnm(file.string());
      } catch (const std::exception& e) {
        std::cerr << "warning: skipping unreadable image: " << e.what() << "\n";
        continue;
      }
      if (target_size > 0) img = crop_or_pad(img, target_size);
      if (!ds.images.empty() && !same_shape(img.shape(), ds.images.front().shape())) {
        throw std::runtime_error("'" + file.string() + "' has shape " +
                                 shape_str(img.shape()) + ", expected " +
                                 shape_str(ds.images.front().shape()) +
                                 " (pass a target size to normalize)");
      }
      ds.images.push_back(std::move(img));
      ds.labels.push_back(static_cast<std::int64_t>(cls));
      ++loaded;
    }
    if (loaded == 0) {
      throw std::runtime_error("class directory '" + class_dirs[cls] +
                               "' has no readable images");
    }
  }
  return ds;
}

void save_image_folder(const Dataset& ds, const std::string& root) {
  ds.validate();
  std::vector<std::int64_t> per_class_counter(static_cast<std::size_t>(ds.num_classes()), 0);
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const auto cls = static_cast<std::size_t>(ds.labels[i]);
    const fs::path dir = fs::path(root) / ds.class_names[cls];
    fs::create_directories(dir);
    const std::int64_t c = ds.images[i].shape()[0];
    if (c != 1 && c != 3) {
      throw std::invalid_argument("cannot export " + std::to_string(c) +
                                  "-channel images to PGM/PPM");
    }
    char name[32];
    std::snprintf(name, sizeof name, "%06lld.%s",
                  static_cast<long long>(per_class_counter[cls]++),
                  c == 1 ? "pgm" : "ppm");
    write_pnm((dir / name).string(), ds.images[i]);
  }
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& ds) {
  if (ds.num_classes() < 2) {
    throw std::invalid_argument("need at least 2 classes to split, have " +
                                std::to_string(ds.num_classes()));
  }
  const std::int64_t boundary = (ds.num_classes() + 1) / 2;  // first half rounds up
  Dataset train, test;
  train.split = "train";
  test.split = "test";
  train.class_names = ds.class_names;
  test.class_names = ds.class_names;
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    Dataset& target = ds.labels[i] < boundary ? train : test;
    target.images.push_back(ds.images[i]);
    target.labels.push_back(ds.labels[i]);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace idml
