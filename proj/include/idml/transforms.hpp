#pragma once

#include <cstdint>
#include <vector>

#include "idml/rng.hpp"
#include "idml/tensor.hpp"

namespace idml {

// The ordered set of rotation domains; index i means rotation by 90*i
// degrees counter-clockwise. Domain 0 is always the identity.
struct DomainSet {
  std::vector<int> rotations = {0, 1, 2, 3};

  int size() const { return static_cast<int>(rotations.size()); }
  // ConfigError unless rotations is non-empty, starts with 0, and holds
  // distinct values in {0,1,2,3}.
  void validate() const;
};

// Exact index-permutation rotation of a C x H x W image, counter-clockwise
// by 90*i degrees. Odd i swaps the spatial dims to C x W x H.
Tensor rotate90(const Tensor& image, int i);

// rotate90 applied to every image of an N x C x H x W batch.
Tensor transform_batch(const Tensor& batch, int i);

struct DataAugConfig {
  std::int64_t pad = 0;        // zero padding added on every side before crop
  std::int64_t out_size = 0;   // crop output height == width; 0 keeps input size
  double flip_prob = 0.0;      // probability of a horizontal mirror

  void validate() const;
};

// Zero-pad, random-crop to out_size, then mirror horizontally with
// flip_prob. Draw order: crop dy, crop dx, flip coin.
Tensor apply_data_aug(const Tensor& image, const DataAugConfig& cfg, Rng& rng);

}  // namespace idml
