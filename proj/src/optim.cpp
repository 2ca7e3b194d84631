#include "idml/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "idml/errors.hpp"

namespace idml {

void OptimConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("beta1 must be in [0, 1)");
  if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("beta2 must be in [0, 1)");
  if (epsilon <= 0.0) throw ConfigError("epsilon must be > 0");
}

AdamOptimizer::AdamOptimizer(std::vector<NamedParam> params, OptimConfig cfg)
    : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  slots_.reserve(params_.size());
  for (const auto& p : params_) {
    const auto n = static_cast<std::size_t>(p.tensor.numel());
    slots_.push_back({std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  }
}

bool AdamOptimizer::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) return false;
    }
  }

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor& p = params_[i].tensor;
    auto theta = p.mutable_data();
    auto& slot = slots_[i];
    const bool has_grad = p.has_grad();
    const auto grad = has_grad ? p.grad() : std::span<const double>{};
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double g = has_grad ? grad[k] : 0.0;
      slot.m[k] = cfg_.beta1 * slot.m[k] + (1.0 - cfg_.beta1) * g;
      slot.v[k] = cfg_.beta2 * slot.v[k] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = slot.m[k] / bc1;
      const double vhat = slot.v[k] / bc2;
      theta[k] -= cfg_.learning_rate *
                  (mhat / (std::sqrt(vhat) + cfg_.epsilon) + cfg_.weight_decay * theta[k]);
    }
  }
  zero_grad();
  return true;
}

void AdamOptimizer::zero_grad() const {
  for (const auto& p : params_) p.tensor.zero_grad();
}

void AdamOptimizer::restore(std::vector<AdamSlot> slots, std::int64_t t) {
  if (slots.size() != slots_.size()) {
    throw std::invalid_argument("adam restore: " + std::to_string(slots.size()) +
                                " slots for " + std::to_string(slots_.size()) +
                                " parameters");
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].m.size() != slots_[i].m.size() ||
        slots[i].v.size() != slots_[i].v.size()) {
      throw std::invalid_argument("adam restore: slot " + std::to_string(i) +
                                  " shape mismatch for " + params_[i].name);
    }
  }
  if (t < 0) throw std::invalid_argument("adam restore: negative step count");
  slots_ = std::move(slots);
  t_ = t;
}

}  // namespace idml
