#include "idml/sampling.hpp"

#include <map>
#include <numeric>

#include "idml/errors.hpp"

namespace idml {

void PKConfig::validate() const {
  if (P < 2) throw ConfigError("PK sampler needs P >= 2 classes per batch, got " +
                               std::to_string(P));
  if (K < 2) throw ConfigError("PK sampler needs K >= 2 instances per class, got " +
                               std::to_string(K));
}

PKSampler::PKSampler(const std::vector<std::int64_t>& labels, PKConfig cfg,
                     std::uint64_t seed)
    : cfg_(cfg), num_items_(static_cast<std::int64_t>(labels.size())), rng_(seed) {
  cfg_.validate();
  std::map<std::int64_t, std::vector<std::int64_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    groups[labels[i]].push_back(static_cast<std::int64_t>(i));
  }
  by_class_.reserve(groups.size());
  for (auto& [label, indices] : groups) by_class_.push_back(std::move(indices));
  if (static_cast<std::int64_t>(by_class_.size()) < cfg_.P) {
    throw ConfigError("PK sampler needs at least P=" + std::to_string(cfg_.P) +
                      " classes, dataset has " + std::to_string(by_class_.size()));
  }
}

std::vector<std::int64_t> PKSampler::next_batch() {
  const auto c = static_cast<std::int64_t>(by_class_.size());
  // Partial Fisher-Yates: the first P slots become the chosen classes.
  std::vector<std::int64_t> cls(static_cast<std::size_t>(c));
  std::iota(cls.begin(), cls.end(), 0);
  for (std::int64_t i = 0; i < cfg_.P; ++i) {
    const std::int64_t j = i + static_cast<std::int64_t>(
                                   rng_.below(static_cast<std::uint64_t>(c - i)));
    std::swap(cls[i], cls[j]);
  }

  std::vector<std::int64_t> batch;
  batch.reserve(static_cast<std::size_t>(cfg_.P * cfg_.K));
  for (std::int64_t i = 0; i < cfg_.P; ++i) {
    const auto& pool = by_class_[static_cast<std::size_t>(cls[i])];
    const auto m = static_cast<std::int64_t>(pool.size());
    if (m >= cfg_.K) {
      std::vector<std::int64_t> pick(pool);
      for (std::int64_t k = 0; k < cfg_.K; ++k) {
        const std::int64_t j = k + static_cast<std::int64_t>(
                                       rng_.below(static_cast<std::uint64_t>(m - k)));
        std::swap(pick[k], pick[j]);
        batch.push_back(pick[k]);
      }
    } else {
      for (std::int64_t k = 0; k < cfg_.K; ++k) {
        batch.push_back(pool[rng_.below(static_cast<std::uint64_t>(m))]);
      }
    }
  }
  return batch;
}

std::int64_t PKSampler::epoch_batches() const {
  const std::int64_t per = cfg_.P * cfg_.K;
  return (num_items_ + per - 1) / per;
}

}  // namespace idml
