#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "idml/eval.hpp"
#include "idml/model.hpp"
#include "idml/tensor.hpp"

namespace idml {

// On-disk format: <stem>.json holds a manifest (tensor names, shapes, dtype,
// byte offsets, plus free-form string metadata); <stem>.bin holds the tensor
// payloads as little-endian f64, concatenated in manifest order. Round-trips
// are bit-exact, including non-finite values.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::map<std::string, std::string> meta;

  void save(const std::string& stem) const;
  static Checkpoint load(const std::string& stem);

  const Tensor* find(const std::string& name) const;
  // Metadata lookup; ConfigError when the key is absent.
  const std::string& meta_at(const std::string& key) const;
};

// Model config <-> JSON text (stored under the "model_config" meta key).
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

// Appends every parameter of `model` to `ckpt.tensors` under
// "<prefix><param name>" and deep-copies the values.
void add_model_tensors(Checkpoint& ckpt, const EmbeddingModel& model,
                       const std::string& prefix);

// Copies checkpoint tensors "<prefix><param name>" back into `model`.
// ConfigError on a missing tensor or shape mismatch.
void load_model_tensors(const Checkpoint& ckpt, EmbeddingModel& model,
                        const std::string& prefix);

// Rebuilds the models stored by the trainer: reads "model_config" and
// "num_models" from meta and loads tensors "model<i>.*".
std::vector<EmbeddingModel> load_models(const Checkpoint& ckpt);

// Embedding matrices reuse the same manifest + binary layout: one tensor for
// the rows, one for the labels (exactly representable small integers).
void save_embeddings(const std::string& stem, const EmbeddingMatrix& emb);
EmbeddingMatrix load_embeddings(const std::string& stem);

}  // namespace idml
