#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "idml/data.hpp"
#include "idml/trainer.hpp"

namespace idml {

// Where the experiment's images come from: generated glyphs or a class-per-
// subdirectory image folder.
struct DatasetSpec {
  std::string kind = "synthetic";  // "synthetic" | "folder"
  GlyphConfig glyphs;
  std::string path;             // folder root when kind == "folder"
  std::int64_t target_size = 0;  // crop/pad folder images; 0 keeps native size

  void validate() const;
};

// One experiment as described by a JSON config file. The mechanism token
// selects training behavior:
//   plain        - single model, no domain transforms
//   data_aug     - single model, per-image random domain transform, one loss
//   multi_model  - one independent model per domain
//   ideal        - shared backbone, split heads, per-domain losses
//   ideal_shared - like ideal but through one shared head
// model.num_domains / model.split_heads are derived from the token, never
// read from the file.
struct ExperimentConfig {
  DatasetSpec dataset;
  std::string mechanism = "ideal";
  DomainSet domains;  // full evaluation domain set
  LossConfig loss;
  OptimConfig optimizer;
  PKConfig sampler;
  ModelConfig model;
  std::int64_t epochs = 20;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> eval_ks{1, 2, 4, 8};
  std::string output_dir;

  // Trainer config for this experiment's token (or any other token, for
  // side-by-side comparison runs).
  MechanismConfig resolve() const { return resolve(mechanism); }
  MechanismConfig resolve(const std::string& token) const;

  void validate() const;

  std::string to_json_text() const;
  static ExperimentConfig from_json_text(const std::string& text);
};

// Reads the file (or built-in defaults when path is empty), applies
// "dotted.key=json-value" overrides in order, validates, and returns the
// config. Every error names the offending key.
ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides);

// The five known mechanism tokens, in canonical order.
const std::vector<std::string>& known_mechanism_tokens();

// Builds the dataset the spec describes (generation or folder load).
Dataset realize_dataset(const DatasetSpec& spec);

}  // namespace idml
