#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "idml/data.hpp"
#include "idml/losses.hpp"
#include "idml/model.hpp"
#include "idml/optim.hpp"
#include "idml/rng.hpp"
#include "idml/sampling.hpp"
#include "idml/tensor.hpp"
#include "idml/transforms.hpp"

namespace idml {

enum class Mechanism { kDataAug, kMultiModel, kIdeal };

const char* mechanism_name(Mechanism m);
Mechanism parse_mechanism(const std::string& name);  // ConfigError on unknown

struct MechanismConfig {
  Mechanism mode = Mechanism::kIdeal;
  DomainSet domains;
  bool split_heads = true;  // meaningful for kIdeal only
  LossConfig loss;
  OptimConfig optimizer;
  std::int64_t epochs = 20;
  std::uint64_t seed = 0;
  PKConfig sampler;
  ModelConfig model;
  std::vector<std::int64_t> eval_ks{1, 2, 4, 8};

  // Cross-field coherence: split_heads only with kIdeal; the model must be
  // single-head for kDataAug/kMultiModel and match |domains| for kIdeal;
  // mixing odd rotations into one batch needs square inputs.
  void validate() const;
};

struct StepResult {
  std::vector<double> losses;  // one entry per model
  double total = 0.0;
  bool ok = true;  // false: divergence, parameters untouched by this step
  bool degenerate = false;
  PairStats stats;
};

// One optimizer step where every image gets an independently drawn random
// domain transform and a single loss covers the mixed batch, so positive
// pairs may straddle domains.
StepResult train_step_dataaug(const EmbeddingModel& model, AdamOptimizer& opt,
                              Rng& rng, const Tensor& batch,
                              const std::vector<std::int64_t>& labels,
                              const DomainSet& domains, const LossConfig& loss);

// Model i sees the whole batch under its own fixed transform and takes its
// own optimizer step; no parameters are shared between models.
StepResult train_step_multimodel(const std::vector<EmbeddingModel>& models,
                                 std::vector<AdamOptimizer>& opts,
                                 const Tensor& batch,
                                 const std::vector<std::int64_t>& labels,
                                 const DomainSet& domains, const LossConfig& loss);

// One optimizer step on the sum of per-domain losses of a single shared
// model (each domain embedded through its own head when split).
StepResult train_step_ideal(const EmbeddingModel& model, AdamOptimizer& opt,
                            const Tensor& batch,
                            const std::vector<std::int64_t>& labels,
                            const DomainSet& domains, const LossConfig& loss);

struct EpochRecord {
  std::int64_t epoch = 0;
  std::string mechanism;
  double loss = 0.0;  // mean step loss over the epoch
  std::vector<double> per_domain_r1;
  std::vector<std::pair<std::int64_t, double>> ensemble_recall;
};

struct TrainRun {
  MechanismConfig config;
  std::vector<EmbeddingModel> models;
  std::vector<AdamOptimizer> optimizers;
  std::vector<EpochRecord> history;   // epochs completed by this call
  std::int64_t completed_epochs = 0;  // includes epochs restored from a checkpoint
  bool diverged = false;
  PairStats pair_totals;  // pair provenance accumulated over every step
  std::string aug_rng_state;
  std::string sampler_rng_state;
};

// Full loop: epochs x epoch_batches optimizer steps with evaluation on
// eval_ds after each epoch. With a non-empty out_dir, maintains a rolling
// checkpoint (<out_dir>/checkpoint.{json,bin}) and appends one JSON line per
// epoch to <out_dir>/history.jsonl. resume_from names a checkpoint stem
// written by a previous run with an identical config; training continues
// after its stored epoch and reproduces the uninterrupted run bit-exactly.
// Divergence stops the run, keeping the records of completed epochs.
TrainRun train(const MechanismConfig& cfg, const Dataset& train_ds,
               const Dataset& eval_ds, const std::string& out_dir = "",
               const std::string& resume_from = "");

}  // namespace idml
