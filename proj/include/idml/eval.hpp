#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idml/data.hpp"
#include "idml/model.hpp"
#include "idml/tensor.hpp"
#include "idml/transforms.hpp"

namespace idml {

struct EmbeddingMatrix {
  Tensor rows;                       // N x width
  std::vector<std::int64_t> labels;  // one per row
  std::string provenance;            // "domain<i>" or "ensemble"
  // Width of each unit-norm segment; equals the full width for single-domain
  // matrices and d_eff for ensembles of concatenated per-domain features.
  std::int64_t segment_width = 0;

  std::int64_t size() const { return rows.defined() ? rows.shape()[0] : 0; }
  std::int64_t width() const { return rows.defined() ? rows.shape()[1] : 0; }
  // Every segment of every row unit-norm within 1e-9.
  void validate() const;
};

struct RecallReport {
  std::vector<std::pair<std::int64_t, double>> recalls;  // (K, R@K), K ascending
  std::string protocol = "self-excluded-dot-tie-lowest-index";
  double at(std::int64_t k) const;
};

// Row i = embed(rotate90(x_i, domains.rotations[domain_index]), head). Split
// models route the matching head; shared-head models always use head 0,
// including for rotated inputs (the single head is all there is).
EmbeddingMatrix embed_dataset(const EmbeddingModel& model, const Dataset& ds,
                              const DomainSet& domains, int domain_index,
                              std::int64_t batch_size = 32);

// Concatenated per-domain features of one model: row = concat over i of
// embed(rotate90(x, r_i), head i). With split heads this is the per-domain
// subspace ensemble; with a shared head it is the single model applied to
// every rotated copy.
EmbeddingMatrix ensemble_embed(const EmbeddingModel& model, const Dataset& ds,
                               const DomainSet& domains, std::int64_t batch_size = 32);
// Independent-models version: model i supplies the segment for domain i.
EmbeddingMatrix ensemble_embed(const std::vector<EmbeddingModel>& models,
                               const Dataset& ds, const DomainSet& domains,
                               std::int64_t batch_size = 32);

// Every item queries all others (self excluded), similarity = dot product,
// ties broken toward the lower index. R@K = fraction of queries with a
// same-label item in their top K.
RecallReport recall_at_k(const EmbeddingMatrix& emb, const std::vector<std::int64_t>& ks);

}  // namespace idml
