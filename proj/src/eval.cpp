#include "idml/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "idml/errors.hpp"

namespace idml {

void EmbeddingMatrix::validate() const {
  if (!rows.defined() || rows.ndim() != 2) {
    throw std::invalid_argument("embedding matrix must be rank-2");
  }
  const std::int64_t n = rows.shape()[0], w = rows.shape()[1];
  if (labels.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("embedding matrix has " + std::to_string(n) +
                                " rows but " + std::to_string(labels.size()) +
                                " labels");
  }
  if (segment_width <= 0 || w % segment_width != 0) {
    throw std::invalid_argument("segment width " + std::to_string(segment_width) +
                                " does not tile matrix width " + std::to_string(w));
  }
  const auto data = rows.data();
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t s = 0; s < w; s += segment_width) {
      double acc = 0.0;
      for (std::int64_t k = 0; k < segment_width; ++k) {
        const double v = data[i * w + s + k];
        acc = std::fma(v, v, acc);
      }
      if (std::abs(std::sqrt(acc) - 1.0) > 1e-9) {
        throw std::invalid_argument("row " + std::to_string(i) + " segment at " +
                                    std::to_string(s) + " is not unit-norm");
      }
    }
  }
}

double RecallReport::at(std::int64_t k) const {
  for (const auto& [kk, v] : recalls) {
    if (kk == k) return v;
  }
  throw std::invalid_argument("recall report has no K=" + std::to_string(k));
}

namespace {

// Shared batching loop: fill `out` rows [first, first+n) for one domain
// segment starting at column `col`.
void embed_into(const EmbeddingModel& model, const Dataset& ds, int rotation,
                int head_domain, std::int64_t batch_size, Tensor& out,
                std::int64_t col, std::int64_t seg) {
  const std::int64_t n = ds.size();
  const std::int64_t width = out.shape()[1];
  auto dst = out.mutable_data();
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const std::int64_t take = std::min(batch_size, n - start);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(take));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor batch = transform_batch(ds.batch(idx), rotation);
    const Tensor emb = model.embed(nullptr, batch, head_domain);
    if (emb.shape()[1] != seg) {
      throw std::invalid_argument("embedding width " + std::to_string(emb.shape()[1]) +
                                  " does not match expected segment " +
                                  std::to_string(seg));
    }
    const auto src = emb.data();
    for (std::int64_t r = 0; r < take; ++r) {
      std::copy_n(src.begin() + r * seg, seg,
                  dst.begin() + (start + r) * width + col);
    }
  }
}

int head_for(const EmbeddingModel& model, int domain_index) {
  return model.config().split_heads ? domain_index : 0;
}

}  // namespace

EmbeddingMatrix embed_dataset(const EmbeddingModel& model, const Dataset& ds,
                              const DomainSet& domains, int domain_index,
                              std::int64_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  domains.validate();
  if (domain_index < 0 || domain_index >= domains.size()) {
    throw ConfigError("domain index " + std::to_string(domain_index) +
                      " out of range for a " + std::to_string(domains.size()) +
                      "-domain set");
  }
  const std::int64_t d = model.head_dim();
  EmbeddingMatrix out;
  out.rows = Tensor::zeros({ds.size(), d});
  out.labels = ds.labels;
  out.provenance = "domain" + std::to_string(domain_index);
  out.segment_width = d;
  embed_into(model, ds, domains.rotations[static_cast<std::size_t>(domain_index)],
             head_for(model, domain_index), batch_size, out.rows, 0, d);
  return out;
}

EmbeddingMatrix ensemble_embed(const EmbeddingModel& model, const Dataset& ds,
                               const DomainSet& domains, std::int64_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  domains.validate();
  const std::int64_t k = domains.size();
  const std::int64_t d = model.head_dim();
  EmbeddingMatrix out;
  out.rows = Tensor::zeros({ds.size(), k * d});
  out.labels = ds.labels;
  out.provenance = "ensemble";
  out.segment_width = d;
  for (std::int64_t i = 0; i < k; ++i) {
    embed_into(model, ds, domains.rotations[static_cast<std::size_t>(i)],
               head_for(model, static_cast<int>(i)), batch_size, out.rows, i * d, d);
  }
  return out;
}

EmbeddingMatrix ensemble_embed(const std::vector<EmbeddingModel>& models,
                               const Dataset& ds, const DomainSet& domains,
                               std::int64_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  domains.validate();
  if (models.size() != static_cast<std::size_t>(domains.size())) {
    throw ConfigError("ensemble needs one model per domain: " +
                      std::to_string(models.size()) + " models for " +
                      std::to_string(domains.size()) + " domains");
  }
  const std::int64_t d = models.front().head_dim();
  for (const auto& m : models) {
    if (m.head_dim() != d) {
      throw ConfigError("ensemble models disagree on embedding width");
    }
  }
  const std::int64_t k = domains.size();
  EmbeddingMatrix out;
  out.rows = Tensor::zeros({ds.size(), k * d});
  out.labels = ds.labels;
  out.provenance = "ensemble";
  out.segment_width = d;
  for (std::int64_t i = 0; i < k; ++i) {
    const auto& model = models[static_cast<std::size_t>(i)];
    embed_into(model, ds, domains.rotations[static_cast<std::size_t>(i)],
               head_for(model, static_cast<int>(i)), batch_size, out.rows, i * d, d);
  }
  return out;
}

RecallReport recall_at_k(const EmbeddingMatrix& emb,
                         const std::vector<std::int64_t>& ks) {
  if (!emb.rows.defined() || emb.rows.ndim() != 2) {
    throw std::invalid_argument("recall_at_k needs a rank-2 embedding matrix");
  }
  const std::int64_t n = emb.size();
  const std::int64_t w = emb.width();
  if (emb.labels.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("labels do not match embedding rows");
  }
  if (ks.empty()) throw ConfigError("recall_at_k needs at least one K");
  std::vector<std::int64_t> sorted_ks(ks);
  std::sort(sorted_ks.begin(), sorted_ks.end());
  sorted_ks.erase(std::unique(sorted_ks.begin(), sorted_ks.end()), sorted_ks.end());
  for (auto k : sorted_ks) {
    if (k < 1) throw ConfigError("recall K must be >= 1, got " + std::to_string(k));
    if (k >= n) {
      throw ConfigError("recall K=" + std::to_string(k) +
                        " needs a gallery larger than K (N=" + std::to_string(n) + ")");
    }
  }

  const auto data = emb.rows.data();
  // Rank of the first same-label gallery item for each query; n means the
  // query has no same-label item at all.
  std::vector<std::int64_t> first_hit(static_cast<std::size_t>(n), n);

#pragma omp parallel for schedule(static)
  for (std::int64_t q = 0; q < n; ++q) {
    std::vector<std::pair<double, std::int64_t>> order;
    order.reserve(static_cast<std::size_t>(n - 1));
    for (std::int64_t j = 0; j < n; ++j) {
      if (j == q) continue;
      double acc = 0.0;
      for (std::int64_t k = 0; k < w; ++k) {
        acc = std::fma(data[q * w + k], data[j * w + k], acc);
      }
      order.emplace_back(acc, j);
    }
    // Descending similarity, ties toward the lower index.
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t r = 0; r < order.size(); ++r) {
      if (emb.labels[static_cast<std::size_t>(order[r].second)] ==
          emb.labels[static_cast<std::size_t>(q)]) {
        first_hit[static_cast<std::size_t>(q)] = static_cast<std::int64_t>(r);
        break;
      }
    }
  }

  RecallReport report;
  for (auto k : sorted_ks) {
    std::int64_t hits = 0;
    for (auto rank : first_hit) {
      if (rank < k) ++hits;
    }
    report.recalls.emplace_back(k, static_cast<double>(hits) / static_cast<double>(n));
  }
  return report;
}

}  // namespace idml
