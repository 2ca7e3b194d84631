#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idml/tensor.hpp"

namespace idml {

struct ConvStage {
  std::int64_t out_channels = 0;
  std::int64_t kernel = 3;
  std::int64_t stride = 2;
};

struct ModelConfig {
  std::int64_t in_channels = 1;
  std::int64_t in_h = 64;
  std::int64_t in_w = 64;
  std::vector<ConvStage> conv_stages = {{16, 3, 2}, {32, 3, 2}, {64, 3, 2}};
  std::int64_t embedding_dim = 512;
  std::int64_t num_domains = 4;
  bool split_heads = false;

  // ConfigError on non-positive dims, empty stages, or split_heads with
  // embedding_dim not divisible by num_domains.
  void validate() const;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Shared convolutional backbone plus projection head(s). With split_heads
// the embedding is partitioned into num_domains disjoint affine heads of
// embedding_dim / num_domains outputs each, and embed() routes a batch
// through the head of its domain only; otherwise a single head serves every
// domain. Heads are separate parameter tensors, so a backward pass through
// domain i cannot touch head j != i.
class EmbeddingModel {
 public:
  EmbeddingModel(ModelConfig config, std::uint64_t seed);

  // batch is N x C x H x W (H/W may be swapped by odd rotations); returns
  // N x head_dim() with L2-normalized rows, recorded on tape when given.
  Tensor embed(Tape* tape, const Tensor& batch, int domain_index) const;

  // All parameters, ordered and uniquely named: backbone stages first, then
  // heads by domain.
  const std::vector<NamedParam>& parameters() const { return params_; }
  std::vector<NamedParam> backbone_parameters() const;
  // Parameters of the head serving domain_index (the single shared head
  // when split_heads is off).
  std::vector<NamedParam> head_parameters(int domain_index) const;

  const ModelConfig& config() const { return cfg_; }
  // Output width of embed(): embedding_dim / num_domains when split, else
  // embedding_dim.
  std::int64_t head_dim() const;
  // Channels after the backbone (input width of each head).
  std::int64_t feature_dim() const { return cfg_.conv_stages.back().out_channels; }
  int num_heads() const { return cfg_.split_heads ? static_cast<int>(cfg_.num_domains) : 1; }

 private:
  ModelConfig cfg_;
  std::vector<NamedParam> params_;
  std::size_t head_params_begin_ = 0;  // params_[0..begin) is the backbone
};

}  // namespace idml
