#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "idml/checkpoint.hpp"
#include "idml/config.hpp"
#include "idml/data.hpp"
#include "idml/errors.hpp"
#include "idml/eval.hpp"
#include "idml/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace idml;

namespace {

std::string output_root() {
  const char* env = std::getenv("IDML_OUTPUT_ROOT");
  return env && *env ? env : "runs";
}

std::string pick_out(const std::string& cli_out, const ExperimentConfig& cfg,
                     const std::string& leaf) {
  if (!cli_out.empty()) return cli_out;
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  return output_root() + "/" + leaf;
}

bool dir_nonempty(const std::string& p) {
  std::error_code ec;
  return fs::is_directory(p, ec) &&
         fs::directory_iterator(p, ec) != fs::directory_iterator();
}

void claim_dir(const std::string& out, bool force) {
  if (dir_nonempty(out) && !force) {
    throw ConfigError("output directory '" + out +
                      "' is not empty; pass --force to overwrite");
  }
  fs::create_directories(out);
}

Dataset pick_split(const Dataset& full, const std::string& split) {
  if (split == "full") return full;
  auto [train_ds, test_ds] = split_train_test(full);
  if (split == "train") return train_ds;
  if (split == "test") return test_ds;
  throw ConfigError("--split must be full, train, or test, got '" + split + "'");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  os << text << "\n";
  if (!os) throw std::runtime_error("cannot write " + path);
}

json recall_to_json(const RecallReport& rep) {
  json r = json::object();
  for (const auto& [k, v] : rep.recalls) r["R@" + std::to_string(k)] = v;
  return r;
}

void print_recall_row(const std::string& name, const RecallReport& rep) {
  std::cout << "  " << std::left << std::setw(12) << name << std::right;
  for (const auto& [k, v] : rep.recalls) {
    std::cout << "  R@" << k << " " << std::fixed << std::setprecision(4) << v;
  }
  std::cout << "\n";
}

const EmbeddingModel& model_for_domain(const std::vector<EmbeddingModel>& models,
                                       int domain_index) {
  return models.size() > 1 ? models[static_cast<std::size_t>(domain_index)]
                           : models.front();
}

void check_model_count(const std::vector<EmbeddingModel>& models,
                       const DomainSet& domains) {
  if (models.size() > 1 && static_cast<int>(models.size()) != domains.size()) {
    throw ConfigError("checkpoint holds " + std::to_string(models.size()) +
                      " models but the config lists " +
                      std::to_string(domains.size()) + " domains");
  }
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const ExperimentConfig& cfg, const std::string& out, bool force) {
  Dataset ds = realize_dataset(cfg.dataset);
  claim_dir(out, force);
  save_image_folder(ds, out);
  json meta{{"num_items", ds.size()},
            {"num_classes", ds.num_classes()},
            {"class_names", ds.class_names},
            {"image_shape", ds.images.front().shape()},
            {"dataset", json::parse(cfg.to_json_text()).at("dataset")}};
  write_text(out + "/metadata.json", meta.dump(2));
  std::cout << "wrote " << ds.size() << " images across " << ds.num_classes()
            << " classes to " << out << "\n";
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& out, bool force,
              bool resume) {
  MechanismConfig mc = cfg.resolve();
  Dataset full = realize_dataset(cfg.dataset);
  auto [train_ds, test_ds] = split_train_test(full);
  std::string resume_from;
  if (resume) {
    resume_from = out + "/checkpoint";
  } else {
    claim_dir(out, force);
  }
  fs::create_directories(out);
  write_text(out + "/config.json", cfg.to_json_text());

  TrainRun run = train(mc, train_ds, test_ds, out, resume_from);
  for (const auto& rec : run.history) {
    std::cout << "epoch " << rec.epoch << "  loss " << std::fixed
              << std::setprecision(6) << rec.loss << "  ensemble";
    for (const auto& [k, v] : rec.ensemble_recall) {
      std::cout << "  R@" << k << " " << std::setprecision(4) << v;
    }
    std::cout << "\n";
  }
  std::cout << "mechanism " << cfg.mechanism << ", " << run.completed_epochs
            << " epochs; checkpoint at " << out << "/checkpoint.json\n";
  if (run.diverged) {
    std::cerr << "training diverged: loss became non-finite; stopping after "
              << run.completed_epochs << " completed epochs\n";
    return 2;
  }
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& stem,
             const std::string& split, const std::string& out) {
  Checkpoint ck = Checkpoint::load(stem);
  std::vector<EmbeddingModel> models = load_models(ck);
  check_model_count(models, cfg.domains);
  Dataset ds = pick_split(realize_dataset(cfg.dataset), split);

  std::cout << "evaluating " << ds.size() << " items (" << ds.split
            << " split) against " << stem << "\n";
  json per_domain = json::array();
  for (int i = 0; i < cfg.domains.size(); ++i) {
    EmbeddingMatrix emb = embed_dataset(model_for_domain(models, i), ds,
                                        cfg.domains, i);
    RecallReport rep = recall_at_k(emb, cfg.eval_ks);
    per_domain.push_back({{"name", emb.provenance},
                          {"rotation", cfg.domains.rotations[static_cast<std::size_t>(i)]},
                          {"protocol", rep.protocol},
                          {"recall", recall_to_json(rep)}});
    print_recall_row(emb.provenance, rep);
  }
  EmbeddingMatrix ens = models.size() > 1
                            ? ensemble_embed(models, ds, cfg.domains)
                            : ensemble_embed(models.front(), ds, cfg.domains);
  RecallReport ens_rep = recall_at_k(ens, cfg.eval_ks);
  print_recall_row("ensemble", ens_rep);

  json doc{{"checkpoint", stem},
           {"split", ds.split},
           {"num_items", ds.size()},
           {"domains", cfg.domains.rotations},
           {"ks", cfg.eval_ks},
           {"per_domain", per_domain},
           {"ensemble",
            {{"name", "ensemble"},
             {"protocol", ens_rep.protocol},
             {"recall", recall_to_json(ens_rep)}}}};
  std::string path = out;
  if (path.empty()) {
    path = (fs::path(stem).parent_path() / "recall_report.json").string();
  }
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  write_text(path, doc.dump(2));
  std::cout << "report written to " << path << "\n";
  return 0;
}

int cmd_embed(const ExperimentConfig& cfg, const std::string& stem,
              const std::string& split, int domain_index, bool ensemble,
              const std::string& out) {
  Checkpoint ck = Checkpoint::load(stem);
  std::vector<EmbeddingModel> models = load_models(ck);
  check_model_count(models, cfg.domains);
  Dataset ds = pick_split(realize_dataset(cfg.dataset), split);

  EmbeddingMatrix emb;
  if (ensemble) {
    emb = models.size() > 1 ? ensemble_embed(models, ds, cfg.domains)
                            : ensemble_embed(models.front(), ds, cfg.domains);
  } else {
    if (domain_index < 0 || domain_index >= cfg.domains.size()) {
      throw ConfigError("--domain must be in [0, " +
                        std::to_string(cfg.domains.size()) + ")");
    }
    emb = embed_dataset(model_for_domain(models, domain_index), ds,
                        cfg.domains, domain_index);
  }
  std::string path = out;
  if (path.empty()) {
    path = (fs::path(stem).parent_path() / ("embeddings_" + emb.provenance)).string();
  }
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  save_embeddings(path, emb);
  std::cout << emb.size() << " x " << emb.width() << " " << emb.provenance
            << " embeddings (" << ds.split << " split) written to " << path
            << ".{json,bin}\n";
  return 0;
}

struct CompareRow {
  std::string mechanism;
  std::string seed;  // a number, or "mean"/"stddev" for aggregates
  std::vector<double> r1;  // one per domain, then the ensemble
};

std::string fmt_full(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

int cmd_compare(const ExperimentConfig& cfg, std::vector<std::string> mechanisms,
                std::vector<std::uint64_t> seeds, const std::string& out,
                bool force) {
  if (mechanisms.empty()) mechanisms = known_mechanism_tokens();
  if (seeds.empty()) seeds = {cfg.seed};
  for (const auto& tok : mechanisms) cfg.resolve(tok);  // fail fast

  claim_dir(out, force);
  Dataset full = realize_dataset(cfg.dataset);
  auto [train_ds, test_ds] = split_train_test(full);

  std::vector<std::string> columns;
  for (const int r : cfg.domains.rotations) {
    columns.push_back("r1_rot" + std::to_string(r * 90));
  }
  columns.push_back("r1_ensemble");

  std::vector<CompareRow> rows;
  for (const auto& tok : mechanisms) {
    for (const std::uint64_t seed : seeds) {
      ExperimentConfig ec = cfg;
      ec.seed = seed;
      MechanismConfig mc = ec.resolve(tok);
      const std::string cell = out + "/" + tok + "_seed" + std::to_string(seed);
      std::cout << "training cell " << tok << " seed " << seed << " ..."
                << std::flush;
      TrainRun run = train(mc, train_ds, test_ds, cell);
      if (run.diverged) {
        std::cout << "\n";
        std::cerr << "cell " << tok << " seed " << seed
                  << " diverged; aborting comparison\n";
        return 2;
      }
      // Cells are always scored on the full domain set, whatever subset they
      // trained on, so single-domain baselines face every rotation too.
      CompareRow row{tok, std::to_string(seed), {}};
      for (int i = 0; i < cfg.domains.size(); ++i) {
        EmbeddingMatrix emb = embed_dataset(model_for_domain(run.models, i),
                                            test_ds, cfg.domains, i);
        row.r1.push_back(recall_at_k(emb, {1}).at(1));
      }
      EmbeddingMatrix ens = run.models.size() > 1
                                ? ensemble_embed(run.models, test_ds, cfg.domains)
                                : ensemble_embed(run.models.front(), test_ds,
                                                 cfg.domains);
      row.r1.push_back(recall_at_k(ens, {1}).at(1));
      rows.push_back(std::move(row));
      std::cout << " ensemble R@1 " << std::fixed << std::setprecision(4)
                << rows.back().r1.back() << "\n";
    }
  }

  std::vector<CompareRow> aggregates;
  for (const auto& tok : mechanisms) {
    std::vector<const CompareRow*> members;
    for (const auto& row : rows) {
      if (row.mechanism == tok) members.push_back(&row);
    }
    const double n = static_cast<double>(members.size());
    CompareRow mean{tok, "mean", std::vector<double>(columns.size(), 0.0)};
    for (const auto* m : members) {
      for (std::size_t c = 0; c < columns.size(); ++c) mean.r1[c] += m->r1[c];
    }
    for (auto& v : mean.r1) v /= n;
    CompareRow sd{tok, "stddev", std::vector<double>(columns.size(), 0.0)};
    for (const auto* m : members) {
      for (std::size_t c = 0; c < columns.size(); ++c) {
        const double d = m->r1[c] - mean.r1[c];
        sd.r1[c] += d * d;
      }
    }
    for (auto& v : sd.r1) v = std::sqrt(v / n);
    aggregates.push_back(std::move(mean));
    aggregates.push_back(std::move(sd));
  }

  std::ostringstream csv;
  csv << "mechanism,seed";
  for (const auto& c : columns) csv << "," << c;
  csv << "\n";
  const auto emit = [&](const CompareRow& row) {
    csv << row.mechanism << "," << row.seed;
    for (const double v : row.r1) csv << "," << fmt_full(v);
    csv << "\n";
  };
  for (const auto& row : rows) emit(row);
  for (const auto& row : aggregates) emit(row);
  {
    std::ofstream os(out + "/compare.csv", std::ios::trunc);
    os << csv.str();
    if (!os) throw std::runtime_error("cannot write " + out + "/compare.csv");
  }

  const auto row_json = [&](const CompareRow& row) {
    json j{{"mechanism", row.mechanism}, {"seed", row.seed}};
    for (std::size_t c = 0; c < columns.size(); ++c) j[columns[c]] = row.r1[c];
    return j;
  };
  json doc{{"columns", columns},
           {"rows", json::array()},
           {"aggregates", json::array()}};
  for (const auto& row : rows) doc["rows"].push_back(row_json(row));
  for (const auto& row : aggregates) doc["aggregates"].push_back(row_json(row));
  write_text(out + "/compare.json", doc.dump(2));

  std::cout << "\n" << std::left << std::setw(14) << "mechanism" << std::setw(8)
            << "seed";
  for (const auto& c : columns) std::cout << std::setw(14) << c;
  std::cout << "\n";
  for (const auto& row : aggregates) {
    if (row.seed != "mean") continue;
    std::cout << std::setw(14) << row.mechanism << std::setw(8) << row.seed;
    for (const double v : row.r1) {
      std::cout << std::setw(14) << std::fixed << std::setprecision(4) << v;
    }
    std::cout << "\n";
  }
  std::cout << "results in " << out << "/compare.{csv,json}\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep metric learning across rotation domains"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::string out;
  bool force = false;
  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "experiment config (JSON)");
    cmd->add_option("--set", sets,
                    "override a config key, e.g. --set loss.kind=triplet");
    cmd->add_option("-o,--out", out, "output path");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "write a dataset as an image folder");
  add_common(gen);
  gen->add_flag("--force", force, "overwrite a non-empty output directory");

  CLI::App* tr = app.add_subcommand("train", "train one mechanism");
  add_common(tr);
  tr->add_flag("--force", force, "overwrite a non-empty output directory");
  bool resume = false;
  tr->add_flag("--resume", resume, "continue from <out>/checkpoint");

  std::string checkpoint;
  std::string split = "test";
  CLI::App* ev = app.add_subcommand("eval", "recall reports for a checkpoint");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "checkpoint stem (no extension)")
      ->required();
  ev->add_option("--split", split, "full | train | test");

  CLI::App* em = app.add_subcommand("embed", "export an embedding matrix");
  add_common(em);
  em->add_option("--checkpoint", checkpoint, "checkpoint stem (no extension)")
      ->required();
  em->add_option("--split", split, "full | train | test");
  int domain_index = 0;
  bool ensemble = false;
  em->add_option("--domain", domain_index, "domain index to embed");
  em->add_flag("--ensemble", ensemble, "concatenated per-domain features");

  CLI::App* cp = app.add_subcommand("compare", "train and score several mechanisms");
  add_common(cp);
  cp->add_flag("--force", force, "overwrite a non-empty output directory");
  std::vector<std::string> mechanisms;
  std::vector<std::uint64_t> seeds;
  cp->add_option("--mechanisms", mechanisms, "tokens (default: all five)");
  cp->add_option("--seeds", seeds, "seeds, one training cell each");

  try {
    app.parse(argc, argv);
    const ExperimentConfig cfg = load_experiment_config(config_path, sets);
    if (gen->parsed()) return cmd_gen_data(cfg, pick_out(out, cfg, "dataset"), force);
    if (tr->parsed()) return cmd_train(cfg, pick_out(out, cfg, "train"), force, resume);
    if (ev->parsed()) return cmd_eval(cfg, checkpoint, split, out);
    if (em->parsed()) return cmd_embed(cfg, checkpoint, split, domain_index, ensemble, out);
    if (cp->parsed()) return cmd_compare(cfg, mechanisms, seeds, pick_out(out, cfg, "compare"), force);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
