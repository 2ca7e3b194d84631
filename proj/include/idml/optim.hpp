#pragma once

#include <cstdint>
#include <vector>

#include "idml/model.hpp"

namespace idml {

struct OptimConfig {
  double learning_rate = 1e-4;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  void validate() const;
};

// First/second moment buffers for one parameter tensor.
struct AdamSlot {
  std::vector<double> m, v;
};

// Adam with decoupled weight decay:
//   theta <- theta - lr * ( mhat / (sqrt(vhat) + eps) + wd * theta )
// so parameters with zero gradient still shrink by exactly lr*wd*theta.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<NamedParam> params, OptimConfig cfg);

  // Applies one update from the gradients currently on the parameters and
  // clears them. A non-finite gradient anywhere aborts before touching any
  // parameter or moment and returns false (divergence).
  bool step();

  void zero_grad() const;

  std::int64_t step_count() const { return t_; }
  const OptimConfig& config() const { return cfg_; }
  const std::vector<NamedParam>& params() const { return params_; }

  // Moment state for checkpointing; restore validates shapes.
  const std::vector<AdamSlot>& slots() const { return slots_; }
  void restore(std::vector<AdamSlot> slots, std::int64_t t);

 private:
  OptimConfig cfg_;
  std::vector<NamedParam> params_;
  std::vector<AdamSlot> slots_;
  std::int64_t t_ = 0;
};

}  // namespace idml
