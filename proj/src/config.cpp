#include "idml/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <json.hpp>

#include "idml/errors.hpp"
#include "idml/losses.hpp"

namespace idml {

namespace {

using nlohmann::json;

[[noreturn]] void key_error(const std::string& path, const std::string& what) {
  throw ConfigError("config key '" + path + "': " + what);
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) key_error(path, "expected an object");
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (k == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      key_error(path.empty() ? k : path + "." + k, "unrecognized key");
    }
  }
}

template <typename T>
T read_or(const json& obj, const std::string& path, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    key_error(path.empty() ? key : path + "." + std::string(key), e.what());
  }
}

GlyphConfig glyphs_from_json(const json& j, const std::string& path) {
  require_object(j, path);
  check_keys(j, path,
             {"num_base_shapes", "orientation_classes", "samples_per_class",
              "image_size", "jitter_px", "noise_sigma", "shape_jitter",
              "upright_bias", "seed"});
  GlyphConfig g;
  g.num_base_shapes = read_or<std::int64_t>(j, path, "num_base_shapes", g.num_base_shapes);
  g.orientation_classes = read_or<bool>(j, path, "orientation_classes", g.orientation_classes);
  g.samples_per_class = read_or<std::int64_t>(j, path, "samples_per_class", g.samples_per_class);
  g.image_size = read_or<std::int64_t>(j, path, "image_size", g.image_size);
  g.jitter_px = read_or<std::int64_t>(j, path, "jitter_px", g.jitter_px);
  g.noise_sigma = read_or<double>(j, path, "noise_sigma", g.noise_sigma);
  g.shape_jitter = read_or<double>(j, path, "shape_jitter", g.shape_jitter);
  g.upright_bias = read_or<double>(j, path, "upright_bias", g.upright_bias);
  g.seed = read_or<std::uint64_t>(j, path, "seed", g.seed);
  return g;
}

DatasetSpec dataset_from_json(const json& j) {
  require_object(j, "dataset");
  DatasetSpec spec;
  // glyph keys live directly in the dataset object
  check_keys(j, "dataset",
             {"kind", "path", "target_size", "num_base_shapes", "orientation_classes",
              "samples_per_class", "image_size", "jitter_px", "noise_sigma",
              "shape_jitter", "upright_bias", "seed"});
  spec.kind = read_or<std::string>(j, "dataset", "kind", spec.kind);
  spec.path = read_or<std::string>(j, "dataset", "path", spec.path);
  spec.target_size = read_or<std::int64_t>(j, "dataset", "target_size", spec.target_size);
  json glyphs = j;
  glyphs.erase("kind");
  glyphs.erase("path");
  glyphs.erase("target_size");
  spec.glyphs = glyphs_from_json(glyphs, "dataset");
  return spec;
}

LossConfig loss_from_json(const json& j) {
  require_object(j, "loss");
  check_keys(j, "loss",
             {"kind", "triplet_margin", "triplet_sum_reduction", "pos_margin",
              "neg_margin", "ms_scale_pos", "ms_scale_neg", "ms_threshold", "ms_margin"});
  LossConfig lc;
  const std::string kind = read_or<std::string>(j, "loss", "kind", loss_kind_name(lc.kind));
  try {
    lc.kind = parse_loss_kind(kind);
  } catch (const ConfigError& e) {
    key_error("loss.kind", e.what());
  }
  lc.triplet_margin = read_or<double>(j, "loss", "triplet_margin", lc.triplet_margin);
  lc.triplet_sum_reduction =
      read_or<bool>(j, "loss", "triplet_sum_reduction", lc.triplet_sum_reduction);
  lc.pos_margin = read_or<double>(j, "loss", "pos_margin", lc.pos_margin);
  lc.neg_margin = read_or<double>(j, "loss", "neg_margin", lc.neg_margin);
  lc.ms_scale_pos = read_or<double>(j, "loss", "ms_scale_pos", lc.ms_scale_pos);
  lc.ms_scale_neg = read_or<double>(j, "loss", "ms_scale_neg", lc.ms_scale_neg);
  lc.ms_threshold = read_or<double>(j, "loss", "ms_threshold", lc.ms_threshold);
  lc.ms_margin = read_or<double>(j, "loss", "ms_margin", lc.ms_margin);
  return lc;
}

OptimConfig optim_from_json(const json& j) {
  require_object(j, "optimizer");
  check_keys(j, "optimizer",
             {"learning_rate", "weight_decay", "beta1", "beta2", "epsilon"});
  OptimConfig oc;
  oc.learning_rate = read_or<double>(j, "optimizer", "learning_rate", oc.learning_rate);
  oc.weight_decay = read_or<double>(j, "optimizer", "weight_decay", oc.weight_decay);
  oc.beta1 = read_or<double>(j, "optimizer", "beta1", oc.beta1);
  oc.beta2 = read_or<double>(j, "optimizer", "beta2", oc.beta2);
  oc.epsilon = read_or<double>(j, "optimizer", "epsilon", oc.epsilon);
  return oc;
}

PKConfig sampler_from_json(const json& j) {
  require_object(j, "sampler");
  check_keys(j, "sampler", {"P", "K"});
  PKConfig pk;
  pk.P = read_or<std::int64_t>(j, "sampler", "P", pk.P);
  pk.K = read_or<std::int64_t>(j, "sampler", "K", pk.K);
  return pk;
}

ModelConfig model_from_json(const json& j) {
  require_object(j, "model");
  check_keys(j, "model",
             {"in_channels", "in_h", "in_w", "conv_stages", "embedding_dim"});
  ModelConfig mc;
  mc.in_channels = read_or<std::int64_t>(j, "model", "in_channels", mc.in_channels);
  mc.in_h = read_or<std::int64_t>(j, "model", "in_h", mc.in_h);
  mc.in_w = read_or<std::int64_t>(j, "model", "in_w", mc.in_w);
  mc.embedding_dim = read_or<std::int64_t>(j, "model", "embedding_dim", mc.embedding_dim);
  if (j.contains("conv_stages")) {
    if (!j.at("conv_stages").is_array()) {
      key_error("model.conv_stages", "expected an array of stage objects");
    }
    mc.conv_stages.clear();
    std::size_t n = 0;
    for (const auto& s : j.at("conv_stages")) {
      const std::string path = "model.conv_stages[" + std::to_string(n++) + "]";
      require_object(s, path);
      check_keys(s, path, {"out_channels", "kernel", "stride"});
      ConvStage stage;
      stage.out_channels = read_or<std::int64_t>(s, path, "out_channels", 0);
      stage.kernel = read_or<std::int64_t>(s, path, "kernel", stage.kernel);
      stage.stride = read_or<std::int64_t>(s, path, "stride", stage.stride);
      mc.conv_stages.push_back(stage);
    }
  }
  return mc;
}

ExperimentConfig config_from_json(const json& j) {
  require_object(j, "");
  check_keys(j, "",
             {"dataset", "mechanism", "domains", "loss", "optimizer", "sampler",
              "model", "epochs", "seed", "eval_ks", "output_dir"});
  ExperimentConfig cfg;
  if (j.contains("dataset")) cfg.dataset = dataset_from_json(j.at("dataset"));
  cfg.mechanism = read_or<std::string>(j, "", "mechanism", cfg.mechanism);
  if (j.contains("domains")) {
    try {
      cfg.domains.rotations = j.at("domains").get<std::vector<int>>();
    } catch (const json::exception& e) {
      key_error("domains", e.what());
    }
  }
  if (j.contains("loss")) cfg.loss = loss_from_json(j.at("loss"));
  if (j.contains("optimizer")) cfg.optimizer = optim_from_json(j.at("optimizer"));
  if (j.contains("sampler")) cfg.sampler = sampler_from_json(j.at("sampler"));
  if (j.contains("model")) cfg.model = model_from_json(j.at("model"));
  cfg.epochs = read_or<std::int64_t>(j, "", "epochs", cfg.epochs);
  cfg.seed = read_or<std::uint64_t>(j, "", "seed", cfg.seed);
  cfg.eval_ks = read_or<std::vector<std::int64_t>>(j, "", "eval_ks", cfg.eval_ks);
  cfg.output_dir = read_or<std::string>(j, "", "output_dir", cfg.output_dir);
  return cfg;
}

void apply_override(json& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + spec + "' is not of the form key.path=value");
  }
  std::string key = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // bare words are strings
  }
  std::string pointer = "/";
  for (const char c : key) pointer += (c == '.') ? '/' : c;
  try {
    root[json::json_pointer(pointer)] = value;
  } catch (const json::exception& e) {
    throw ConfigError("override '" + spec + "': " + e.what());
  }
}

}  // namespace

void DatasetSpec::validate() const {
  if (kind == "synthetic") {
    glyphs.validate();
  } else if (kind == "folder") {
    if (path.empty()) throw ConfigError("config key 'dataset.path': required for folder datasets");
    if (target_size < 0) throw ConfigError("config key 'dataset.target_size': must be >= 0");
  } else {
    throw ConfigError("config key 'dataset.kind': expected 'synthetic' or 'folder', got '" +
                      kind + "'");
  }
}

const std::vector<std::string>& known_mechanism_tokens() {
  static const std::vector<std::string> tokens{"plain", "data_aug", "multi_model",
                                              "ideal", "ideal_shared"};
  return tokens;
}

MechanismConfig ExperimentConfig::resolve(const std::string& token) const {
  MechanismConfig mc;
  mc.loss = loss;
  mc.optimizer = optimizer;
  mc.sampler = sampler;
  mc.epochs = epochs;
  mc.seed = seed;
  mc.eval_ks = eval_ks;
  mc.model = model;
  mc.domains = domains;
  mc.model.split_heads = false;
  mc.model.num_domains = 1;
  mc.split_heads = false;
  if (token == "plain") {
    mc.mode = Mechanism::kDataAug;
    mc.domains.rotations = {0};
  } else if (token == "data_aug") {
    mc.mode = Mechanism::kDataAug;
  } else if (token == "multi_model") {
    mc.mode = Mechanism::kMultiModel;
  } else if (token == "ideal" || token == "ideal_shared") {
    mc.mode = Mechanism::kIdeal;
    mc.split_heads = token == "ideal";
    mc.model.split_heads = mc.split_heads;
    mc.model.num_domains = domains.size();
  } else {
    throw ConfigError("config key 'mechanism': unknown token '" + token +
                      "' (expected plain, data_aug, multi_model, ideal, or ideal_shared)");
  }
  mc.validate();
  return mc;
}

void ExperimentConfig::validate() const {
  dataset.validate();
  resolve();
  if (dataset.kind == "synthetic") {
    if (model.in_channels != 1) {
      throw ConfigError("config key 'model.in_channels': synthetic glyphs are single-channel");
    }
    if (model.in_h != dataset.glyphs.image_size || model.in_w != dataset.glyphs.image_size) {
      throw ConfigError("config key 'model.in_h/in_w': must equal dataset.image_size (" +
                        std::to_string(dataset.glyphs.image_size) + ")");
    }
  } else if (dataset.target_size > 0 &&
             (model.in_h != dataset.target_size || model.in_w != dataset.target_size)) {
    throw ConfigError("config key 'model.in_h/in_w': must equal dataset.target_size (" +
                      std::to_string(dataset.target_size) + ")");
  }
}

std::string ExperimentConfig::to_json_text() const {
  json stages = json::array();
  for (const auto& s : model.conv_stages) {
    stages.push_back({{"out_channels", s.out_channels},
                      {"kernel", s.kernel},
                      {"stride", s.stride}});
  }
  json j{
      {"dataset",
       {{"kind", dataset.kind},
        {"path", dataset.path},
        {"target_size", dataset.target_size},
        {"num_base_shapes", dataset.glyphs.num_base_shapes},
        {"orientation_classes", dataset.glyphs.orientation_classes},
        {"samples_per_class", dataset.glyphs.samples_per_class},
        {"image_size", dataset.glyphs.image_size},
        {"jitter_px", dataset.glyphs.jitter_px},
        {"noise_sigma", dataset.glyphs.noise_sigma},
        {"shape_jitter", dataset.glyphs.shape_jitter},
        {"upright_bias", dataset.glyphs.upright_bias},
        {"seed", dataset.glyphs.seed}}},
      {"mechanism", mechanism},
      {"domains", domains.rotations},
      {"loss",
       {{"kind", loss_kind_name(loss.kind)},
        {"triplet_margin", loss.triplet_margin},
        {"triplet_sum_reduction", loss.triplet_sum_reduction},
        {"pos_margin", loss.pos_margin},
        {"neg_margin", loss.neg_margin},
        {"ms_scale_pos", loss.ms_scale_pos},
        {"ms_scale_neg", loss.ms_scale_neg},
        {"ms_threshold", loss.ms_threshold},
        {"ms_margin", loss.ms_margin}}},
      {"optimizer",
       {{"learning_rate", optimizer.learning_rate},
        {"weight_decay", optimizer.weight_decay},
        {"beta1", optimizer.beta1},
        {"beta2", optimizer.beta2},
        {"epsilon", optimizer.epsilon}}},
      {"sampler", {{"P", sampler.P}, {"K", sampler.K}}},
      {"model",
       {{"in_channels", model.in_channels},
        {"in_h", model.in_h},
        {"in_w", model.in_w},
        {"conv_stages", stages},
        {"embedding_dim", model.embedding_dim}}},
      {"epochs", epochs},
      {"seed", seed},
      {"eval_ks", eval_ks},
      {"output_dir", output_dir}};
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig load_experiment_config(const std::string& path,
                                        const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config file not readable: " + path);
    try {
      is >> j;
    } catch (const json::exception& e) {
      throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
  }
  for (const auto& spec : overrides) apply_override(j, spec);
  ExperimentConfig cfg = config_from_json(j);
  cfg.validate();
  return cfg;
}

Dataset realize_dataset(const DatasetSpec& spec) {
  spec.validate();
  if (spec.kind == "synthetic") return generate_synthetic(spec.glyphs);
  return load_image_folder(spec.path, spec.target_size);
}

}  // namespace idml
