#include "idml/model.hpp"

#include <cmath>
#include <stdexcept>

#include "idml/errors.hpp"
#include "idml/ops.hpp"
#include "idml/rng.hpp"

namespace idml {

void ModelConfig::validate() const {
  if (in_channels < 1 || in_h < 1 || in_w < 1) {
    throw ConfigError("model: input shape must be positive, got " +
                      std::to_string(in_channels) + "x" + std::to_string(in_h) +
                      "x" + std::to_string(in_w));
  }
  if (conv_stages.empty()) throw ConfigError("model: conv_stages is empty");
  for (const ConvStage& s : conv_stages) {
    if (s.out_channels < 1 || s.kernel < 1 || s.stride < 1) {
      throw ConfigError("model: conv stage fields must be positive");
    }
  }
  if (embedding_dim < 1) throw ConfigError("model: embedding_dim must be positive");
  if (num_domains < 1) throw ConfigError("model: num_domains must be positive");
  if (split_heads && embedding_dim % num_domains != 0) {
    throw ConfigError("model: embedding_dim " + std::to_string(embedding_dim) +
                      " is not divisible by num_domains " +
                      std::to_string(num_domains) + " with split_heads");
  }
}

namespace {

// He-uniform: U(-limit, limit) with limit = sqrt(6 / fan_in).
Tensor he_uniform(Rng& rng, Shape shape, std::int64_t fan_in) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  for (double& v : t.mutable_data()) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

EmbeddingModel::EmbeddingModel(ModelConfig config, std::uint64_t seed)
    : cfg_(std::move(config)) {
  cfg_.validate();
  Rng rng(seed);
  std::int64_t channels = cfg_.in_channels;
  for (std::size_t i = 0; i < cfg_.conv_stages.size(); ++i) {
    const ConvStage& s = cfg_.conv_stages[i];
    const std::string base = "backbone.conv" + std::to_string(i);
    params_.push_back(
        {base + ".weight",
         he_uniform(rng, {s.out_channels, channels, s.kernel, s.kernel},
                    channels * s.kernel * s.kernel)});
    params_.push_back(
        {base + ".bias",
         Tensor::zeros({s.out_channels}, /*requires_grad=*/true)});
    channels = s.out_channels;
  }
  head_params_begin_ = params_.size();
  const std::int64_t out_per_head = head_dim();
  for (int h = 0; h < num_heads(); ++h) {
    const std::string base = "head" + std::to_string(h);
    params_.push_back({base + ".weight",
                       he_uniform(rng, {out_per_head, channels}, channels)});
    params_.push_back(
        {base + ".bias", Tensor::zeros({out_per_head}, /*requires_grad=*/true)});
  }
}

std::int64_t EmbeddingModel::head_dim() const {
  return cfg_.split_heads ? cfg_.embedding_dim / cfg_.num_domains
                          : cfg_.embedding_dim;
}

Tensor EmbeddingModel::embed(Tape* tape, const Tensor& batch,
                             int domain_index) const {
  if (domain_index < 0 || domain_index >= cfg_.num_domains) {
    throw std::invalid_argument(
        "embed: domain_index " + std::to_string(domain_index) +
        " outside [0, " + std::to_string(cfg_.num_domains) + ")");
  }
  if (batch.ndim() != 4 || batch.dim(1) != cfg_.in_channels) {
    throw std::invalid_argument("embed: batch shape " +
                                shape_str(batch.shape()) + " does not carry " +
                                std::to_string(cfg_.in_channels) +
                                " channels");
  }
  Tensor x = batch;
  for (std::size_t i = 0; i < cfg_.conv_stages.size(); ++i) {
    const ConvStage& s = cfg_.conv_stages[i];
    const Tensor& w = params_[2 * i].tensor;
    const Tensor& b = params_[2 * i + 1].tensor;
    x = relu(tape, conv2d(tape, x, w, b, s.stride, s.kernel / 2));
  }
  x = global_avg_pool(tape, x);
  const int head = cfg_.split_heads ? domain_index : 0;
  const Tensor& hw = params_[head_params_begin_ + 2 * static_cast<std::size_t>(head)].tensor;
  const Tensor& hb = params_[head_params_begin_ + 2 * static_cast<std::size_t>(head) + 1].tensor;
  return l2_normalize(tape, affine(tape, x, hw, hb));
}

std::vector<NamedParam> EmbeddingModel::backbone_parameters() const {
  return {params_.begin(),
          params_.begin() + static_cast<std::ptrdiff_t>(head_params_begin_)};
}

std::vector<NamedParam> EmbeddingModel::head_parameters(int domain_index) const {
  if (domain_index < 0 || domain_index >= cfg_.num_domains) {
    throw std::invalid_argument(
        "head_parameters: domain_index " + std::to_string(domain_index) +
        " outside [0, " + std::to_string(cfg_.num_domains) + ")");
  }
  const int head = cfg_.split_heads ? domain_index : 0;
  const auto first =
      params_.begin() +
      static_cast<std::ptrdiff_t>(head_params_begin_ + 2 * static_cast<std::size_t>(head));
  return {first, first + 2};
}

}  // namespace idml
