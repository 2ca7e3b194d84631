#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "idml/tensor.hpp"

namespace idml {

struct Dataset {
  std::vector<Tensor> images;       // each C x H x W, values in [0, 1]
  std::vector<std::int64_t> labels; // class ids into class_names
  std::string split = "full";      // "full" | "train" | "test"
  std::vector<std::string> class_names;

  std::int64_t size() const { return static_cast<std::int64_t>(images.size()); }
  std::int64_t num_classes() const { return static_cast<std::int64_t>(class_names.size()); }
  // Class ids that actually occur in this split, ascending.
  std::vector<std::int64_t> present_classes() const;
  // Stacks the given items into one N x C x H x W batch.
  Tensor batch(const std::vector<std::int64_t>& indices) const;
  // Uniform geometry, labels in range, pixel values in [0, 1].
  void validate() const;
};

struct GlyphConfig {
  std::int64_t num_base_shapes = 3;
  // When set, each of the four orientations of a base shape is its own
  // class (the 6-versus-9 construction); otherwise shapes are radially
  // symmetric rings and rotation carries no label information.
  bool orientation_classes = true;
  std::int64_t samples_per_class = 50;
  std::int64_t image_size = 64;
  std::int64_t jitter_px = 0;    // uniform integer translation in [-j, j]^2
  double noise_sigma = 0.0;      // additive Gaussian, clamped back to [0, 1]
  // Per-sample glyph geometry variation in [0, 1]: scale, tilt, vertex
  // wobble, and stroke thickness. Drawn once per (shape, sample) before
  // orientation is applied, so the four orientation classes stay exact
  // rotations of each other sample for sample.
  double shape_jitter = 0.0;
  // Canvas-frame anisotropy in [0, 1]: a per-sample slant (x-shear of up to
  // bias/2) that always tilts canvas-vertical strokes, whatever the
  // orientation class — the data has an "up" direction, like photographs.
  // Deliberately breaks rotation closure of the sample distribution: a model
  // trained on upright data learns to ignore vertical-stroke slant only, so
  // rotated inputs, whose slant tilts the other axis, are
  // out-of-distribution.
  double upright_bias = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Deterministic synthetic glyphs. With orientation classes, the canonical
// image of class (shape, o) is exactly rotate90(canonical(shape, 0), o), so
// a 90-degree rotation maps class (s, o) onto class (s, (o+1) mod 4).
Dataset generate_synthetic(const GlyphConfig& cfg);

// root/<class_name>/<file>.pgm|.ppm, classes ordered lexicographically.
// Unreadable files are skipped with a warning on stderr; a class directory
// with no readable image is an error. target_size > 0 center-crops larger
// images and zero-pads smaller ones to target_size x target_size.
Dataset load_image_folder(const std::string& root, std::int64_t target_size = 0);
// Writes the same layout (PGM for 1-channel, PPM for 3-channel images).
void save_image_folder(const Dataset& ds, const std::string& root);

// Class-disjoint split: the first ceil(C/2) class ids train, the rest test.
// Both halves keep the original class ids and the full name table.
std::pair<Dataset, Dataset> split_train_test(const Dataset& ds);

// Single-image PGM (1 channel) / PPM (3 channels) round trip, 8-bit depth.
void write_pnm(const std::string& path, const Tensor& image);
Tensor read_pnm(const std::string& path);

}  // namespace idml
