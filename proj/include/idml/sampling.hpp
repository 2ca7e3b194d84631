#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idml/rng.hpp"

namespace idml {

struct PKConfig {
  std::int64_t P = 8;  // distinct classes per batch
  std::int64_t K = 4;  // instances per class
  void validate() const;  // ConfigError unless P >= 2 and K >= 2
};

// Emits batches of exactly P distinct classes times K instances. Classes are
// drawn uniformly without replacement per batch; within a class, instances
// are drawn without replacement when it has at least K items and with
// replacement otherwise. The sampler owns its rng and is the only mutable
// state of a training run's batch stream.
class PKSampler {
 public:
  PKSampler(const std::vector<std::int64_t>& labels, PKConfig cfg,
            std::uint64_t seed);

  // P*K dataset indices: K consecutive slots per chosen class.
  std::vector<std::int64_t> next_batch();

  // Batches per epoch: ceil(N / (P*K)).
  std::int64_t epoch_batches() const;

  std::int64_t num_items() const { return num_items_; }
  std::int64_t num_classes() const { return static_cast<std::int64_t>(by_class_.size()); }
  const PKConfig& config() const { return cfg_; }

  // The rng is the sampler's only mutable state; round-tripping it resumes
  // the batch stream exactly.
  std::string serialize_rng() const { return rng_.serialize(); }
  void restore_rng(const std::string& text) { rng_ = Rng::deserialize(text); }

 private:
  PKConfig cfg_;
  std::vector<std::vector<std::int64_t>> by_class_;  // ascending class id order
  std::int64_t num_items_ = 0;
  Rng rng_;
};

}  // namespace idml
