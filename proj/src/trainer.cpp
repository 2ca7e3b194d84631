#include "idml/trainer.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "idml/checkpoint.hpp"
#include "idml/errors.hpp"
#include "idml/eval.hpp"

namespace idml {

namespace {

using nlohmann::json;

constexpr std::uint64_t kAugStream = 0xD0A11C;
constexpr std::uint64_t kSamplerStream = 0x5A3B17;

void accumulate(PairStats& into, const PairStats& from) {
  into.same_domain += from.same_domain;
  into.cross_domain += from.cross_domain;
}

// Per-image rotations; mixing odd rotations requires square images so the
// batch keeps one shape (enforced by MechanismConfig::validate).
Tensor rotate_each(const Tensor& batch, const std::vector<int>& rots) {
  const auto& s = batch.shape();
  const std::int64_t n = s[0];
  const std::int64_t per = s[1] * s[2] * s[3];
  const auto src = batch.data();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n * per));
  for (std::int64_t i = 0; i < n; ++i) {
    std::vector<double> img(src.begin() + i * per, src.begin() + (i + 1) * per);
    const Tensor rot =
        rotate90(Tensor::from_data({s[1], s[2], s[3]}, std::move(img)), rots[static_cast<std::size_t>(i)]);
    if (rot.shape() != std::vector<std::int64_t>{s[1], s[2], s[3]}) {
      throw ConfigError("mixed-rotation batches require square images");
    }
    out.insert(out.end(), rot.data().begin(), rot.data().end());
  }
  return Tensor::from_data(s, std::move(out));
}

StepResult finish_step(const LossOutput& out, Tape& tape, AdamOptimizer& opt) {
  StepResult res;
  const double v = out.value.data()[0];
  res.losses = {v};
  res.total = v;
  res.degenerate = out.degenerate;
  res.stats = out.stats;
  if (!std::isfinite(v)) {
    res.ok = false;
    return res;
  }
  opt.zero_grad();
  // A fully degenerate loss is a constant off the tape; the step is then
  // pure weight decay.
  if (out.value.requires_grad()) tape.backward(out.value);
  res.ok = opt.step();
  return res;
}

}  // namespace

const char* mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::kDataAug:
      return "data_aug";
    case Mechanism::kMultiModel:
      return "multi_model";
    case Mechanism::kIdeal:
      return "ideal";
  }
  throw std::logic_error("unreachable mechanism");
}

Mechanism parse_mechanism(const std::string& name) {
  if (name == "data_aug") return Mechanism::kDataAug;
  if (name == "multi_model") return Mechanism::kMultiModel;
  if (name == "ideal") return Mechanism::kIdeal;
  throw ConfigError("unknown mechanism '" + name +
                    "' (expected data_aug, multi_model, or ideal)");
}

void MechanismConfig::validate() const {
  domains.validate();
  loss.validate();
  optimizer.validate();
  sampler.validate();
  model.validate();
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (split_heads && mode != Mechanism::kIdeal) {
    throw ConfigError("split_heads requires the ideal mechanism");
  }
  if (mode == Mechanism::kIdeal) {
    if (model.split_heads != split_heads) {
      throw ConfigError("model.split_heads disagrees with mechanism split_heads");
    }
    if (model.num_domains != domains.size()) {
      throw ConfigError("ideal needs model.num_domains == |domains| (" +
                        std::to_string(model.num_domains) + " vs " +
                        std::to_string(domains.size()) + ")");
    }
  } else if (model.split_heads) {
    throw ConfigError(std::string(mechanism_name(mode)) +
                      " trains single-head models");
  }
  if (mode == Mechanism::kDataAug && model.in_h != model.in_w) {
    for (const int r : domains.rotations) {
      if (r % 2 == 1) {
        throw ConfigError("data_aug with odd rotations needs square images");
      }
    }
  }
  if (eval_ks.empty()) throw ConfigError("eval_ks must not be empty");
  for (const auto k : eval_ks) {
    if (k < 1) throw ConfigError("eval_ks entries must be >= 1");
  }
}

StepResult train_step_dataaug(const EmbeddingModel& model, AdamOptimizer& opt,
                              Rng& rng, const Tensor& batch,
                              const std::vector<std::int64_t>& labels,
                              const DomainSet& domains, const LossConfig& loss) {
  if (model.config().split_heads) {
    throw ConfigError("data_aug requires a single-head model");
  }
  const std::int64_t n = batch.shape()[0];
  std::vector<int> rots(static_cast<std::size_t>(n));
  std::vector<int> tags(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(domains.size())));
    tags[static_cast<std::size_t>(i)] = j;
    rots[static_cast<std::size_t>(i)] = domains.rotations[static_cast<std::size_t>(j)];
  }
  Tape tape;
  const Tensor mixed = rotate_each(batch, rots);
  const Tensor emb = model.embed(&tape, mixed, 0);
  const LossOutput out = dml_loss(&tape, emb, labels, loss, &tags);
  return finish_step(out, tape, opt);
}

StepResult train_step_multimodel(const std::vector<EmbeddingModel>& models,
                                 std::vector<AdamOptimizer>& opts,
                                 const Tensor& batch,
                                 const std::vector<std::int64_t>& labels,
                                 const DomainSet& domains, const LossConfig& loss) {
  if (models.size() != static_cast<std::size_t>(domains.size()) ||
      opts.size() != models.size()) {
    throw ConfigError("multi_model needs one model and one optimizer per domain");
  }
  StepResult res;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i].config().split_heads) {
      throw ConfigError("multi_model trains single-head models");
    }
    Tape tape;
    const Tensor view = transform_batch(batch, domains.rotations[i]);
    const Tensor emb = models[i].embed(&tape, view, 0);
    const std::vector<int> tags(labels.size(), static_cast<int>(i));
    const LossOutput out = dml_loss(&tape, emb, labels, loss, &tags);
    const double v = out.value.data()[0];
    res.losses.push_back(v);
    res.total += v;
    res.degenerate = res.degenerate || out.degenerate;
    accumulate(res.stats, out.stats);
    if (!std::isfinite(v)) {
      res.ok = false;
      return res;
    }
    opts[i].zero_grad();
    if (out.value.requires_grad()) tape.backward(out.value);
    if (!opts[i].step()) {
      res.ok = false;
      return res;
    }
  }
  return res;
}

StepResult train_step_ideal(const EmbeddingModel& model, AdamOptimizer& opt,
                            const Tensor& batch,
                            const std::vector<std::int64_t>& labels,
                            const DomainSet& domains, const LossConfig& loss) {
  if (model.config().num_domains != domains.size()) {
    throw ConfigError("ideal needs model.num_domains == |domains|");
  }
  Tape tape;
  const LossOutput out = ideal_loss(&tape, model, batch, labels, domains, loss);
  return finish_step(out, tape, opt);
}

namespace {

struct LoopState {
  std::vector<EmbeddingModel> models;
  std::vector<AdamOptimizer> opts;
  Rng aug_rng;
  PKSampler sampler;
  std::int64_t epoch = 0;

  LoopState(const MechanismConfig& cfg, const Dataset& train_ds)
      : aug_rng(derive_seed(cfg.seed, kAugStream)),
        sampler(train_ds.labels, cfg.sampler, derive_seed(cfg.seed, kSamplerStream)) {
    const std::int64_t count =
        cfg.mode == Mechanism::kMultiModel ? cfg.domains.size() : 1;
    for (std::int64_t i = 0; i < count; ++i) {
      models.emplace_back(cfg.model,
                          cfg.mode == Mechanism::kMultiModel ? cfg.seed + static_cast<std::uint64_t>(i)
                                                             : cfg.seed);
    }
    for (const auto& m : models) opts.emplace_back(m.parameters(), cfg.optimizer);
  }
};

std::string optim_key(std::size_t i, const std::string& suffix) {
  return "optim" + std::to_string(i) + suffix;
}

void write_train_checkpoint(const std::string& stem, const MechanismConfig& cfg,
                            const LoopState& st, bool diverged) {
  Checkpoint ck;
  ck.meta["kind"] = "train";
  ck.meta["mechanism"] = mechanism_name(cfg.mode);
  ck.meta["model_config"] = model_config_to_json(cfg.model);
  ck.meta["num_models"] = std::to_string(st.models.size());
  ck.meta["epoch"] = std::to_string(st.epoch);
  ck.meta["aug_rng"] = st.aug_rng.serialize();
  ck.meta["sampler_rng"] = st.sampler.serialize_rng();
  ck.meta["diverged"] = diverged ? "1" : "0";
  for (std::size_t i = 0; i < st.models.size(); ++i) {
    const std::string prefix = "model" + std::to_string(i) + ".";
    add_model_tensors(ck, st.models[i], prefix);
    ck.meta[optim_key(i, ".t")] = std::to_string(st.opts[i].step_count());
    const auto& params = st.opts[i].params();
    const auto& slots = st.opts[i].slots();
    for (std::size_t p = 0; p < params.size(); ++p) {
      std::vector<double> m(slots[p].m), v(slots[p].v);
      ck.tensors.emplace_back(optim_key(i, "." + params[p].name + ".m"),
                              Tensor::from_data(params[p].tensor.shape(), std::move(m)));
      ck.tensors.emplace_back(optim_key(i, "." + params[p].name + ".v"),
                              Tensor::from_data(params[p].tensor.shape(), std::move(v)));
    }
  }
  ck.save(stem);
}

void restore_train_state(const std::string& stem, const MechanismConfig& cfg,
                         LoopState& st) {
  const Checkpoint ck = Checkpoint::load(stem);
  if (ck.meta_at("kind") != "train") {
    throw ConfigError("checkpoint at " + stem + " is not a training checkpoint");
  }
  if (ck.meta_at("mechanism") != mechanism_name(cfg.mode)) {
    throw ConfigError("checkpoint mechanism '" + ck.meta_at("mechanism") +
                      "' does not match the configured '" + mechanism_name(cfg.mode) + "'");
  }
  if (ck.meta_at("model_config") != model_config_to_json(cfg.model)) {
    throw ConfigError("checkpoint model config does not match the configured model");
  }
  if (ck.meta_at("num_models") != std::to_string(st.models.size())) {
    throw ConfigError("checkpoint holds " + ck.meta_at("num_models") +
                      " models, config builds " + std::to_string(st.models.size()));
  }
  for (std::size_t i = 0; i < st.models.size(); ++i) {
    const std::string prefix = "model" + std::to_string(i) + ".";
    load_model_tensors(ck, st.models[i], prefix);
    std::int64_t t = 0;
    try {
      t = std::stoll(ck.meta_at(optim_key(i, ".t")));
    } catch (const std::exception&) {
      throw ConfigError("checkpoint optimizer step count is not an integer");
    }
    const auto& params = st.opts[i].params();
    std::vector<AdamSlot> slots;
    slots.reserve(params.size());
    for (const auto& p : params) {
      const Tensor* m = ck.find(optim_key(i, "." + p.name + ".m"));
      const Tensor* v = ck.find(optim_key(i, "." + p.name + ".v"));
      if (m == nullptr || v == nullptr || m->shape() != p.tensor.shape() ||
          v->shape() != p.tensor.shape()) {
        throw ConfigError("checkpoint optimizer state for '" + p.name +
                          "' is missing or mismatched");
      }
      slots.push_back({{m->data().begin(), m->data().end()},
                       {v->data().begin(), v->data().end()}});
    }
    st.opts[i].restore(std::move(slots), t);
  }
  st.aug_rng = Rng::deserialize(ck.meta_at("aug_rng"));
  st.sampler.restore_rng(ck.meta_at("sampler_rng"));
  try {
    st.epoch = std::stoll(ck.meta_at("epoch"));
  } catch (const std::exception&) {
    throw ConfigError("checkpoint epoch is not an integer");
  }
  if (st.epoch < 0 || st.epoch > cfg.epochs) {
    throw ConfigError("checkpoint epoch " + std::to_string(st.epoch) +
                      " is outside the configured " + std::to_string(cfg.epochs) +
                      " epochs");
  }
}

EpochRecord evaluate_epoch(const MechanismConfig& cfg, const LoopState& st,
                           const Dataset& eval_ds) {
  EpochRecord rec;
  const std::int64_t k = cfg.domains.size();
  for (std::int64_t i = 0; i < k; ++i) {
    const EmbeddingModel& m =
        cfg.mode == Mechanism::kMultiModel ? st.models[static_cast<std::size_t>(i)] : st.models[0];
    const EmbeddingMatrix emb = embed_dataset(m, eval_ds, cfg.domains, static_cast<int>(i));
    rec.per_domain_r1.push_back(recall_at_k(emb, {1}).at(1));
  }
  const EmbeddingMatrix ens = cfg.mode == Mechanism::kMultiModel
                                  ? ensemble_embed(st.models, eval_ds, cfg.domains)
                                  : ensemble_embed(st.models[0], eval_ds, cfg.domains);
  rec.ensemble_recall = recall_at_k(ens, cfg.eval_ks).recalls;
  return rec;
}

json record_to_json(const EpochRecord& rec) {
  json ens = json::object();
  for (const auto& [k, v] : rec.ensemble_recall) ens["R@" + std::to_string(k)] = v;
  return json{{"epoch", rec.epoch},
              {"mechanism", rec.mechanism},
              {"loss", rec.loss},
              {"per_domain_r1", rec.per_domain_r1},
              {"ensemble_recall", ens}};
}

}  // namespace

TrainRun train(const MechanismConfig& cfg, const Dataset& train_ds,
               const Dataset& eval_ds, const std::string& out_dir,
               const std::string& resume_from) {
  cfg.validate();
  train_ds.validate();
  eval_ds.validate();
  if (train_ds.size() == 0) throw ConfigError("training dataset is empty");
  for (const auto k : cfg.eval_ks) {
    if (k >= eval_ds.size()) {
      throw ConfigError("eval K=" + std::to_string(k) + " needs more than " +
                        std::to_string(eval_ds.size()) + " eval items");
    }
  }

  LoopState st(cfg, train_ds);
  if (!resume_from.empty()) restore_train_state(resume_from, cfg, st);

  TrainRun run;
  run.config = cfg;
  run.completed_epochs = st.epoch;

  std::string ckpt_stem;
  std::ofstream hist;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    ckpt_stem = out_dir + "/checkpoint";
    hist.open(out_dir + "/history.jsonl",
              st.epoch > 0 ? std::ios::app : std::ios::trunc);
    if (!hist) throw std::runtime_error("cannot write " + out_dir + "/history.jsonl");
    write_train_checkpoint(ckpt_stem, cfg, st, false);
  }

  const std::int64_t batches = st.sampler.epoch_batches();
  while (st.epoch < cfg.epochs && !run.diverged) {
    double loss_sum = 0.0;
    std::int64_t steps = 0;
    for (std::int64_t b = 0; b < batches; ++b) {
      const auto idx = st.sampler.next_batch();
      const Tensor batch = train_ds.batch(idx);
      std::vector<std::int64_t> y(idx.size());
      for (std::size_t j = 0; j < idx.size(); ++j) {
        y[j] = train_ds.labels[static_cast<std::size_t>(idx[j])];
      }
      StepResult sr;
      switch (cfg.mode) {
        case Mechanism::kDataAug:
          sr = train_step_dataaug(st.models[0], st.opts[0], st.aug_rng, batch, y,
                                  cfg.domains, cfg.loss);
          break;
        case Mechanism::kMultiModel:
          sr = train_step_multimodel(st.models, st.opts, batch, y, cfg.domains,
                                     cfg.loss);
          break;
        case Mechanism::kIdeal:
          sr = train_step_ideal(st.models[0], st.opts[0], batch, y, cfg.domains,
                                cfg.loss);
          break;
      }
      accumulate(run.pair_totals, sr.stats);
      loss_sum += sr.total;
      ++steps;
      if (!sr.ok) {
        run.diverged = true;
        break;
      }
    }
    if (run.diverged) break;

    ++st.epoch;
    EpochRecord rec = evaluate_epoch(cfg, st, eval_ds);
    rec.epoch = st.epoch;
    rec.mechanism = mechanism_name(cfg.mode);
    rec.loss = loss_sum / static_cast<double>(steps);
    run.history.push_back(rec);
    run.completed_epochs = st.epoch;
    if (hist.is_open()) {
      hist << record_to_json(rec).dump() << '\n';
      hist.flush();
    }
    if (!ckpt_stem.empty()) write_train_checkpoint(ckpt_stem, cfg, st, false);
  }

  if (run.diverged && !ckpt_stem.empty()) {
    write_train_checkpoint(ckpt_stem, cfg, st, true);
  }

  run.aug_rng_state = st.aug_rng.serialize();
  run.sampler_rng_state = st.sampler.serialize_rng();
  run.models = std::move(st.models);
  run.optimizers = std::move(st.opts);
  return run;
}

}  // namespace idml
