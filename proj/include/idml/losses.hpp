#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idml/model.hpp"
#include "idml/tensor.hpp"
#include "idml/transforms.hpp"

namespace idml {

enum class LossKind { kContrastive, kTriplet, kMultiSimilarity };

std::string loss_kind_name(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

struct LossConfig {
  LossKind kind = LossKind::kTriplet;

  // Triplet: hinge margin on Euclidean distance between unit rows; reduction
  // is the mean over valid triplets unless triplet_sum_reduction.
  double triplet_margin = 0.2;
  bool triplet_sum_reduction = false;

  // Contrastive (cosine similarity, dual margin): positives are pulled until
  // S >= pos_margin, negatives pushed until S <= neg_margin.
  double pos_margin = 1.0;
  double neg_margin = 0.5;

  // Multi-similarity: per-anchor soft weighting with pair mining margin.
  double ms_scale_pos = 2.0;
  double ms_scale_neg = 50.0;
  double ms_threshold = 1.0;
  double ms_margin = 0.1;

  void validate() const;  // ConfigError on negative margins / non-positive scales
};

// How many pair/triplet terms were formed inside one domain vs across two.
// Only populated when domain tags are supplied (debug provenance mode).
struct PairStats {
  std::int64_t same_domain = 0;
  std::int64_t cross_domain = 0;
};

struct LossOutput {
  Tensor value;             // scalar, recorded on the tape when grads flow
  bool degenerate = false;  // batch carried nothing to learn from
  PairStats stats;
};

// Row-major N x N matrix of dot products between embedding rows; symmetric
// with unit diagonal when the rows are unit-norm.
std::vector<double> similarity_matrix(const Tensor& embeddings);

// All losses take embeddings with unit-norm rows (N x d) and per-row integer
// labels. domain_tags, when given, must hold one tag per row; they only feed
// PairStats and never affect the value or gradients.
LossOutput triplet_loss(Tape* tape, const Tensor& embeddings,
                        const std::vector<std::int64_t>& labels,
                        const LossConfig& cfg,
                        const std::vector<int>* domain_tags = nullptr);
LossOutput contrastive_loss(Tape* tape, const Tensor& embeddings,
                            const std::vector<std::int64_t>& labels,
                            const LossConfig& cfg,
                            const std::vector<int>* domain_tags = nullptr);
LossOutput ms_loss(Tape* tape, const Tensor& embeddings,
                   const std::vector<std::int64_t>& labels,
                   const LossConfig& cfg,
                   const std::vector<int>* domain_tags = nullptr);
// Dispatch on cfg.kind.
LossOutput dml_loss(Tape* tape, const Tensor& embeddings,
                    const std::vector<std::int64_t>& labels,
                    const LossConfig& cfg,
                    const std::vector<int>* domain_tags = nullptr);

// Sum over domains of the base loss on (transform_batch(batch, r_i) embedded
// through head i). Every pair/triplet lives inside a single domain; nothing
// is ever compared across domains. Degenerate if any domain term is.
LossOutput ideal_loss(Tape* tape, const EmbeddingModel& model,
                      const Tensor& batch,
                      const std::vector<std::int64_t>& labels,
                      const DomainSet& domains, const LossConfig& cfg);

}  // namespace idml
