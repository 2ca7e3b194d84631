#include "idml/transforms.hpp"

#include <string>

#include "idml/errors.hpp"

namespace idml {

void DomainSet::validate() const {
  if (rotations.empty()) throw ConfigError("domains: empty rotation list");
  if (rotations[0] != 0) {
    throw ConfigError("domains: first rotation must be 0 (identity), got " +
                      std::to_string(rotations[0]));
  }
  bool seen[4] = {false, false, false, false};
  for (int r : rotations) {
    if (r < 0 || r > 3) {
      throw ConfigError("domains: rotation index " + std::to_string(r) +
                        " outside 0..3");
    }
    if (seen[r]) {
      throw ConfigError("domains: duplicate rotation index " +
                        std::to_string(r));
    }
    seen[r] = true;
  }
}

namespace {

// One image plane; `in` is H x W, `out` sized for the rotated shape.
void rotate_plane(const double* in, std::int64_t h, std::int64_t w, int i,
                  double* out) {
  switch (i) {
    case 0:
      std::copy(in, in + h * w, out);
      break;
    case 1:  // out is W x H: out[y][x] = in[x][w-1-y]
      for (std::int64_t y = 0; y < w; ++y)
        for (std::int64_t x = 0; x < h; ++x)
          out[y * h + x] = in[x * w + (w - 1 - y)];
      break;
    case 2:  // out is H x W: out[y][x] = in[h-1-y][w-1-x]
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
          out[y * w + x] = in[(h - 1 - y) * w + (w - 1 - x)];
      break;
    case 3:  // out is W x H: out[y][x] = in[h-1-x][y]
      for (std::int64_t y = 0; y < w; ++y)
        for (std::int64_t x = 0; x < h; ++x)
          out[y * h + x] = in[(h - 1 - x) * w + y];
      break;
    default:
      throw std::invalid_argument("rotate90: index " + std::to_string(i) +
                                  " outside 0..3");
  }
}

}  // namespace

Tensor rotate90(const Tensor& image, int i) {
  if (image.ndim() != 3) {
    throw std::invalid_argument("rotate90: expected C x H x W image, got " +
                                shape_str(image.shape()));
  }
  const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const Shape out_shape = (i % 2 == 1) ? Shape{c, w, h} : Shape{c, h, w};
  Tensor out = Tensor::zeros(out_shape);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    rotate_plane(image.data().data() + ch * h * w, h, w, i,
                 out.mutable_data().data() + ch * h * w);
  }
  return out;
}

Tensor transform_batch(const Tensor& batch, int i) {
  if (batch.ndim() != 4) {
    throw std::invalid_argument(
        "transform_batch: expected N x C x H x W batch, got " +
        shape_str(batch.shape()));
  }
  const std::int64_t n = batch.dim(0), c = batch.dim(1), h = batch.dim(2),
                     w = batch.dim(3);
  const Shape out_shape =
      (i % 2 == 1) ? Shape{n, c, w, h} : Shape{n, c, h, w};
  Tensor out = Tensor::zeros(out_shape);
  const std::int64_t plane = h * w;
  for (std::int64_t img = 0; img < n; ++img) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const std::int64_t off = (img * c + ch) * plane;
      rotate_plane(batch.data().data() + off, h, w, i,
                   out.mutable_data().data() + off);
    }
  }
  return out;
}

void DataAugConfig::validate() const {
  if (pad < 0) throw ConfigError("data_aug: pad must be >= 0");
  if (out_size < 0) throw ConfigError("data_aug: out_size must be >= 0");
  if (flip_prob < 0.0 || flip_prob > 1.0) {
    throw ConfigError("data_aug: flip_prob " + std::to_string(flip_prob) +
                      " outside [0, 1]");
  }
}

Tensor apply_data_aug(const Tensor& image, const DataAugConfig& cfg,
                      Rng& rng) {
  if (image.ndim() != 3) {
    throw std::invalid_argument(
        "apply_data_aug: expected C x H x W image, got " +
        shape_str(image.shape()));
  }
  const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::int64_t out = cfg.out_size > 0 ? cfg.out_size : h;
  const std::int64_t ph = h + 2 * cfg.pad, pw = w + 2 * cfg.pad;
  if (out > ph || out > pw) {
    throw ConfigError("data_aug: crop size " + std::to_string(out) +
                      " exceeds padded image " + std::to_string(ph) + "x" +
                      std::to_string(pw));
  }
  const std::int64_t dy =
      static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(ph - out + 1)));
  const std::int64_t dx =
      static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(pw - out + 1)));
  const bool flip = rng.bernoulli(cfg.flip_prob);

  Tensor result = Tensor::zeros({c, out, out});
  auto dst = result.mutable_data();
  auto src = image.data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (std::int64_t y = 0; y < out; ++y) {
      const std::int64_t sy = y + dy - cfg.pad;  // row in the unpadded image
      if (sy < 0 || sy >= h) continue;           // zero padding
      for (std::int64_t x = 0; x < out; ++x) {
        const std::int64_t col = flip ? out - 1 - x : x;
        const std::int64_t sx = col + dx - cfg.pad;
        if (sx < 0 || sx >= w) continue;
        dst[(ch * out + y) * out + x] = src[(ch * h + sy) * w + sx];
      }
    }
  }
  return result;
}

}  // namespace idml
