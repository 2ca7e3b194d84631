#include "idml/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "idml/errors.hpp"

namespace idml {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written as native f64 and declared "
              "little-endian in the manifest");

namespace {

using nlohmann::json;

constexpr const char* kFormat = "idml-tensors-v1";

json load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("checkpoint manifest not readable: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint manifest " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kFormat) {
    throw ConfigError("checkpoint manifest " + path + " has unknown format");
  }
  return j;
}

}  // namespace

void Checkpoint::save(const std::string& stem) const {
  json manifest;
  manifest["format"] = kFormat;
  manifest["dtype"] = "f64le";
  json list = json::array();
  std::int64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    if (!t.defined()) throw std::runtime_error("checkpoint tensor '" + name + "' is undefined");
    list.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.numel() * static_cast<std::int64_t>(sizeof(double));
  }
  manifest["tensors"] = std::move(list);
  manifest["meta"] = meta;

  std::ofstream bin(stem + ".bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot write checkpoint binary: " + stem + ".bin");
  for (const auto& [name, t] : tensors) {
    const auto span = t.data();
    bin.write(reinterpret_cast<const char*>(span.data()),
              static_cast<std::streamsize>(span.size() * sizeof(double)));
  }
  if (!bin) throw std::runtime_error("short write to checkpoint binary: " + stem + ".bin");
  bin.close();

  std::ofstream man(stem + ".json", std::ios::trunc);
  if (!man) throw std::runtime_error("cannot write checkpoint manifest: " + stem + ".json");
  man << manifest.dump(2) << '\n';
  if (!man) throw std::runtime_error("short write to checkpoint manifest: " + stem + ".json");
}

Checkpoint Checkpoint::load(const std::string& stem) {
  const json manifest = load_manifest(stem + ".json");

  Checkpoint out;
  if (manifest.contains("meta")) {
    for (const auto& [k, v] : manifest.at("meta").items()) {
      out.meta[k] = v.get<std::string>();
    }
  }

  std::ifstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw ConfigError("checkpoint binary not readable: " + stem + ".bin");

  std::int64_t expected_offset = 0;
  for (const auto& entry : manifest.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::int64_t>();
    if (offset != expected_offset) {
      throw ConfigError("checkpoint manifest offsets are not contiguous at tensor '" + name + "'");
    }
    std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
    bin.read(reinterpret_cast<char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (bin.gcount() != static_cast<std::streamsize>(values.size() * sizeof(double))) {
      throw ConfigError("checkpoint binary " + stem + ".bin is truncated at tensor '" + name + "'");
    }
    expected_offset = offset + static_cast<std::int64_t>(values.size() * sizeof(double));
    out.tensors.emplace_back(name, Tensor::from_data(shape, std::move(values)));
  }
  bin.peek();
  if (!bin.eof()) {
    throw ConfigError("checkpoint binary " + stem + ".bin has trailing bytes beyond the manifest");
  }
  return out;
}

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

const std::string& Checkpoint::meta_at(const std::string& key) const {
  const auto it = meta.find(key);
  if (it == meta.end()) throw ConfigError("checkpoint metadata is missing key '" + key + "'");
  return it->second;
}

std::string model_config_to_json(const ModelConfig& cfg) {
  json stages = json::array();
  for (const auto& s : cfg.conv_stages) {
    stages.push_back({{"out_channels", s.out_channels}, {"kernel", s.kernel}, {"stride", s.stride}});
  }
  const json j{{"in_channels", cfg.in_channels}, {"in_h", cfg.in_h},
               {"in_w", cfg.in_w},               {"conv_stages", stages},
               {"embedding_dim", cfg.embedding_dim}, {"num_domains", cfg.num_domains},
               {"split_heads", cfg.split_heads}};
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
  }
  ModelConfig cfg;
  try {
    cfg.in_channels = j.at("in_channels").get<std::int64_t>();
    cfg.in_h = j.at("in_h").get<std::int64_t>();
    cfg.in_w = j.at("in_w").get<std::int64_t>();
    cfg.conv_stages.clear();
    for (const auto& s : j.at("conv_stages")) {
      cfg.conv_stages.push_back({s.at("out_channels").get<std::int64_t>(),
                                 s.at("kernel").get<std::int64_t>(),
                                 s.at("stride").get<std::int64_t>()});
    }
    cfg.embedding_dim = j.at("embedding_dim").get<std::int64_t>();
    cfg.num_domains = j.at("num_domains").get<std::int64_t>();
    cfg.split_heads = j.at("split_heads").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config is missing fields: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void add_model_tensors(Checkpoint& ckpt, const EmbeddingModel& model,
                       const std::string& prefix) {
  for (const auto& p : model.parameters()) {
    std::vector<double> copy(p.tensor.data().begin(), p.tensor.data().end());
    ckpt.tensors.emplace_back(prefix + p.name,
                              Tensor::from_data(p.tensor.shape(), std::move(copy)));
  }
}

void load_model_tensors(const Checkpoint& ckpt, EmbeddingModel& model,
                        const std::string& prefix) {
  for (const auto& p : model.parameters()) {
    const Tensor* stored = ckpt.find(prefix + p.name);
    if (stored == nullptr) {
      throw ConfigError("checkpoint has no tensor '" + prefix + p.name + "'");
    }
    if (stored->shape() != p.tensor.shape()) {
      throw ConfigError("checkpoint tensor '" + prefix + p.name + "' shape does not match the model");
    }
    auto dst = p.tensor.mutable_data();
    const auto src = stored->data();
    std::memcpy(dst.data(), src.data(), src.size() * sizeof(double));
  }
}

std::vector<EmbeddingModel> load_models(const Checkpoint& ckpt) {
  const ModelConfig cfg = model_config_from_json(ckpt.meta_at("model_config"));
  std::int64_t count = 0;
  try {
    count = std::stoll(ckpt.meta_at("num_models"));
  } catch (const std::exception&) {
    throw ConfigError("checkpoint metadata 'num_models' is not an integer");
  }
  if (count < 1) throw ConfigError("checkpoint metadata 'num_models' must be positive");
  std::vector<EmbeddingModel> models;
  models.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    models.emplace_back(cfg, 0);  // values are overwritten below
    load_model_tensors(ckpt, models.back(), "model" + std::to_string(i) + ".");
  }
  return models;
}

void save_embeddings(const std::string& stem, const EmbeddingMatrix& emb) {
  emb.validate();
  Checkpoint ckpt;
  ckpt.tensors.emplace_back("rows", emb.rows);
  std::vector<double> labels(emb.labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = static_cast<double>(emb.labels[i]);
  }
  const auto count = static_cast<std::int64_t>(labels.size());
  ckpt.tensors.emplace_back("labels", Tensor::from_data({count}, std::move(labels)));
  ckpt.meta["provenance"] = emb.provenance;
  ckpt.meta["segment_width"] = std::to_string(emb.segment_width);
  ckpt.meta["kind"] = "embeddings";
  ckpt.save(stem);
}

EmbeddingMatrix load_embeddings(const std::string& stem) {
  const Checkpoint ckpt = Checkpoint::load(stem);
  if (ckpt.meta_at("kind") != "embeddings") {
    throw ConfigError("checkpoint at " + stem + " does not hold embeddings");
  }
  const Tensor* rows = ckpt.find("rows");
  const Tensor* labels = ckpt.find("labels");
  if (rows == nullptr || labels == nullptr || rows->shape().size() != 2) {
    throw ConfigError("embedding checkpoint at " + stem + " is malformed");
  }
  EmbeddingMatrix emb;
  emb.rows = *rows;
  emb.labels.reserve(static_cast<std::size_t>(labels->numel()));
  for (const double v : labels->data()) {
    emb.labels.push_back(static_cast<std::int64_t>(std::llround(v)));
  }
  emb.provenance = ckpt.meta_at("provenance");
  try {
    emb.segment_width = std::stoll(ckpt.meta_at("segment_width"));
  } catch (const std::exception&) {
    throw ConfigError("embedding checkpoint metadata 'segment_width' is not an integer");
  }
  if (emb.size() != static_cast<std::int64_t>(emb.labels.size())) {
    throw ConfigError("embedding checkpoint rows and labels disagree in length");
  }
  emb.validate();
  return emb;
}

}  // namespace idml
