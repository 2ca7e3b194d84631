#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "idml/checkpoint.hpp"
#include "idml/config.hpp"
#include "idml/errors.hpp"

using namespace idml;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch() {
  const fs::path p = fs::temp_directory_path() / "idml_cli_tests";
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

ExperimentConfig tiny_cfg() {
  ExperimentConfig cfg;
  cfg.dataset.glyphs.num_base_shapes = 2;  // 8 classes
  cfg.dataset.glyphs.samples_per_class = 6;
  cfg.dataset.glyphs.image_size = 16;
  cfg.dataset.glyphs.jitter_px = 1;
  cfg.dataset.glyphs.noise_sigma = 0.02;
  cfg.dataset.glyphs.seed = 7;
  cfg.mechanism = "ideal";
  cfg.domains.rotations = {0, 1};
  cfg.sampler.P = 4;
  cfg.sampler.K = 2;
  cfg.model.in_h = 16;
  cfg.model.in_w = 16;
  cfg.model.conv_stages = {{4, 3, 2}, {8, 3, 2}};
  cfg.model.embedding_dim = 8;
  cfg.epochs = 1;
  cfg.seed = 3;
  cfg.eval_ks = {1, 2};
  return cfg;
}

fs::path write_cfg(const fs::path& dir, const ExperimentConfig& cfg,
                   const std::string& name = "cfg.json") {
  const fs::path p = dir / name;
  std::ofstream os(p);
  os << cfg.to_json_text() << "\n";
  REQUIRE(os.good());
  return p;
}

int run_cli(const fs::path& dir, const std::string& args,
            std::string* err_out = nullptr, const std::string& env = "") {
  const fs::path out = dir / "cli_stdout.txt";
  const fs::path err = dir / "cli_stderr.txt";
  std::string cmd = env.empty() ? "" : env + " ";
  cmd += std::string(IDML_CLI_PATH) + " " + args + " >" + out.string() + " 2>" +
         err.string();
  const int raw = std::system(cmd.c_str());
  if (err_out) *err_out = slurp(err);
  REQUIRE(WIFEXITED(raw));
  return WEXITSTATUS(raw);
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      files[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
  }
  return files;
}

std::int64_t count_lines(const std::string& text) {
  std::int64_t n = 0;
  for (const char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("empty config yields the documented defaults") {
  const ExperimentConfig cfg = ExperimentConfig::from_json_text("{}");
  CHECK(cfg.dataset.kind == "synthetic");
  CHECK(cfg.mechanism == "ideal");
  CHECK(cfg.domains.rotations == std::vector<int>{0, 1, 2, 3});
  CHECK(cfg.epochs == 20);
  CHECK(cfg.seed == 0);
  CHECK(cfg.eval_ks == std::vector<std::int64_t>{1, 2, 4, 8});
  CHECK(cfg.model.embedding_dim == 512);
  CHECK(cfg.output_dir.empty());
  cfg.validate();  // defaults are coherent
}

TEST_CASE("config round-trips through JSON text") {
  ExperimentConfig cfg = tiny_cfg();
  cfg.mechanism = "multi_model";
  cfg.loss.kind = LossKind::kTriplet;
  cfg.loss.triplet_margin = 0.31;
  cfg.optimizer.learning_rate = 0.0017;
  cfg.optimizer.weight_decay = 0.01;
  cfg.output_dir = "some/where";
  const std::string text = cfg.to_json_text();
  const ExperimentConfig back = ExperimentConfig::from_json_text(text);
  CHECK(back.to_json_text() == text);
  CHECK(back.mechanism == "multi_model");
  CHECK(back.loss.kind == LossKind::kTriplet);
  CHECK(back.loss.triplet_margin == 0.31);
  CHECK(back.optimizer.learning_rate == 0.0017);
  CHECK(back.domains.rotations == cfg.domains.rotations);
  CHECK(back.model.conv_stages.size() == 2);
  CHECK(back.model.conv_stages[1].out_channels == 8);
  CHECK(back.dataset.glyphs.seed == 7);
}

TEST_CASE("unknown keys are rejected by dotted name") {
  const auto fails_with = [](const std::string& text, const std::string& key) {
    try {
      ExperimentConfig::from_json_text(text);
      FAIL_CHECK("no error for " << key);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  };
  fails_with(R"({"bogus": 1})", "bogus");
  fails_with(R"({"dataset": {"flavour": "x"}})", "dataset.flavour");
  fails_with(R"({"loss": {"margin": 0.2}})", "loss.margin");
  fails_with(R"({"optimizer": {"lr": 0.1}})", "optimizer.lr");
  fails_with(R"({"sampler": {"p": 8}})", "sampler.p");
  fails_with(R"({"model": {"width": 3}})", "model.width");
  fails_with(R"({"model": {"conv_stages": [{"channels": 3}]}})",
             "model.conv_stages[0].channels");
  // num_domains / split_heads are derived from the mechanism token
  fails_with(R"({"model": {"num_domains": 4}})", "model.num_domains");
  fails_with(R"({"model": {"split_heads": true}})", "model.split_heads");
}

TEST_CASE("type errors name the offending key") {
  const auto fails_with = [](const std::string& text, const std::string& key) {
    try {
      ExperimentConfig::from_json_text(text);
      FAIL_CHECK("no error for " << key);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  };
  fails_with(R"({"loss": {"kind": 3}})", "loss.kind");
  fails_with(R"({"loss": {"kind": "hinge"}})", "loss.kind");
  fails_with(R"({"epochs": "many"})", "epochs");
  fails_with(R"({"domains": "all"})", "domains");
  fails_with(R"({"model": {"conv_stages": 7}})", "model.conv_stages");
  CHECK_THROWS_AS(ExperimentConfig::from_json_text("not json"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text("[1,2]"), ConfigError);
}

TEST_CASE("mechanism tokens resolve to trainer configurations") {
  ExperimentConfig cfg = tiny_cfg();
  cfg.domains.rotations = {0, 1, 2, 3};
  cfg.model.embedding_dim = 8;

  const MechanismConfig plain = cfg.resolve("plain");
  CHECK(plain.mode == Mechanism::kDataAug);
  CHECK(plain.domains.rotations == std::vector<int>{0});
  CHECK_FALSE(plain.split_heads);
  CHECK(plain.model.num_domains == 1);
  CHECK_FALSE(plain.model.split_heads);

  const MechanismConfig aug = cfg.resolve("data_aug");
  CHECK(aug.mode == Mechanism::kDataAug);
  CHECK(aug.domains.rotations == cfg.domains.rotations);
  CHECK(aug.model.num_domains == 1);

  const MechanismConfig multi = cfg.resolve("multi_model");
  CHECK(multi.mode == Mechanism::kMultiModel);
  CHECK(multi.domains.rotations == cfg.domains.rotations);
  CHECK(multi.model.num_domains == 1);

  const MechanismConfig ideal = cfg.resolve("ideal");
  CHECK(ideal.mode == Mechanism::kIdeal);
  CHECK(ideal.split_heads);
  CHECK(ideal.model.split_heads);
  CHECK(ideal.model.num_domains == 4);

  const MechanismConfig shared = cfg.resolve("ideal_shared");
  CHECK(shared.mode == Mechanism::kIdeal);
  CHECK_FALSE(shared.split_heads);
  CHECK_FALSE(shared.model.split_heads);
  CHECK(shared.model.num_domains == 4);

  // shared settings flow through untouched
  CHECK(ideal.optimizer.learning_rate == cfg.optimizer.learning_rate);
  CHECK(ideal.model.embedding_dim == 8);
  CHECK(ideal.seed == cfg.seed);
  CHECK(ideal.eval_ks == cfg.eval_ks);

  CHECK_THROWS_AS(cfg.resolve("IDEAL"), ConfigError);
  CHECK_THROWS_AS(cfg.resolve(""), ConfigError);
  CHECK(known_mechanism_tokens().size() == 5);
}

TEST_CASE("validate enforces cross-field coherence") {
  ExperimentConfig cfg = tiny_cfg();
  cfg.validate();

  SUBCASE("model geometry must match the synthetic image size") {
    cfg.model.in_h = 32;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("synthetic glyphs are single-channel") {
    cfg.model.in_channels = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("embedding dim must split across ideal domains") {
    cfg.domains.rotations = {0, 1, 2};
    cfg.model.embedding_dim = 8;  // 8 % 3 != 0
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("folder datasets need a path") {
    cfg.dataset.kind = "folder";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("unknown dataset kind") {
    cfg.dataset.kind = "reticulated";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("folder target size must match model input") {
    cfg.dataset.kind = "folder";
    cfg.dataset.path = "/nonexistent";
    cfg.dataset.target_size = 24;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("unknown mechanism token") {
    cfg.mechanism = "magic";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("load_experiment_config applies overrides in order") {
  const fs::path dir = scratch();
  const fs::path p = write_cfg(dir, tiny_cfg());

  const ExperimentConfig cfg = load_experiment_config(
      p.string(), {"loss.kind=triplet", "optimizer.learning_rate=0.5",
                   "optimizer.learning_rate=0.25", "domains=[0,2]",
                   "dataset.seed=11", "output_dir=over/here"});
  CHECK(cfg.loss.kind == LossKind::kTriplet);
  CHECK(cfg.optimizer.learning_rate == 0.25);  // later override wins
  CHECK(cfg.domains.rotations == std::vector<int>{0, 2});
  CHECK(cfg.dataset.glyphs.seed == 11);
  CHECK(cfg.output_dir == "over/here");  // bare words parse as strings

  CHECK_THROWS_AS(load_experiment_config(p.string(), {"no_equals_sign"}),
                  ConfigError);
  CHECK_THROWS_AS(load_experiment_config(p.string(), {"loss.bogus=1"}),
                  ConfigError);
  CHECK_THROWS_AS(load_experiment_config((dir / "missing.json").string(), {}),
                  ConfigError);
  const fs::path bad = dir / "bad.json";
  std::ofstream(bad) << "{ nope";
  CHECK_THROWS_AS(load_experiment_config(bad.string(), {}), ConfigError);
  // empty path = defaults + overrides
  const ExperimentConfig d =
      load_experiment_config("", {"epochs=3", "model.embedding_dim=16"});
  CHECK(d.epochs == 3);
  CHECK(d.model.embedding_dim == 16);
}

TEST_CASE("cli: gen-data is deterministic and honors --force") {
  const fs::path dir = scratch();
  ExperimentConfig cfg = tiny_cfg();
  cfg.dataset.glyphs.num_base_shapes = 3;  // 12 classes
  cfg.dataset.glyphs.samples_per_class = 2;
  const fs::path p = write_cfg(dir, cfg);

  const std::string a = (dir / "data_a").string();
  const std::string b = (dir / "data_b").string();
  CHECK(run_cli(dir, "gen-data -c " + p.string() + " -o " + a) == 0);
  CHECK(run_cli(dir, "gen-data -c " + p.string() + " -o " + b) == 0);
  const auto ta = tree_bytes(a);
  CHECK(ta == tree_bytes(b));  // same seed, byte-identical files

  std::int64_t subdirs = 0;
  for (const auto& e : fs::directory_iterator(a)) subdirs += e.is_directory();
  CHECK(subdirs == 12);
  const json meta = json::parse(slurp(fs::path(a) / "metadata.json"));
  CHECK(meta.at("num_classes").get<std::int64_t>() == subdirs);
  CHECK(meta.at("num_items").get<std::int64_t>() == 24);
  CHECK(meta.at("class_names").size() == 12);

  std::string err;
  CHECK(run_cli(dir, "gen-data -c " + p.string() + " -o " + a, &err) == 1);
  CHECK(err.find("--force") != std::string::npos);
  CHECK(run_cli(dir, "gen-data -c " + p.string() + " -o " + a + " --force") == 0);
  CHECK(ta == tree_bytes(a));  // idempotent under --force
}

TEST_CASE("cli: train writes history, checkpoint, and config echo") {
  const fs::path dir = scratch();
  ExperimentConfig cfg = tiny_cfg();
  cfg.epochs = 2;
  const fs::path p = write_cfg(dir, cfg);

  const std::string out = (dir / "run").string();
  CHECK(run_cli(dir, "train -c " + p.string() + " -o " + out) == 0);
  CHECK(count_lines(slurp(out + "/history.jsonl")) == 2);
  CHECK(fs::exists(out + "/checkpoint.json"));
  CHECK(fs::exists(out + "/checkpoint.bin"));

  // the echoed config parses back to the exact input
  const ExperimentConfig echo =
      ExperimentConfig::from_json_text(slurp(out + "/config.json"));
  CHECK(echo.to_json_text() == cfg.to_json_text());

  // a second identical run reproduces the history byte for byte
  const std::string out2 = (dir / "run2").string();
  CHECK(run_cli(dir, "train -c " + p.string() + " -o " + out2) == 0);
  CHECK(slurp(out + "/history.jsonl") == slurp(out2 + "/history.jsonl"));

  // epochs=0 still writes the initial checkpoint
  const std::string out0 = (dir / "run0").string();
  CHECK(run_cli(dir, "train -c " + p.string() + " -o " + out0 +
                         " --set epochs=0") == 0);
  CHECK(fs::exists(out0 + "/checkpoint.json"));
  CHECK(count_lines(slurp(out0 + "/history.jsonl")) == 0);

  // refuses to clobber without --force
  std::string err;
  CHECK(run_cli(dir, "train -c " + p.string() + " -o " + out, &err) == 1);
  CHECK(err.find("--force") != std::string::npos);
}

TEST_CASE("cli: eval reports per domain plus ensemble and re-parses") {
  const fs::path dir = scratch();
  const fs::path p = write_cfg(dir, tiny_cfg());
  const std::string out = (dir / "run").string();
  REQUIRE(run_cli(dir, "train -c " + p.string() + " -o " + out) == 0);

  const std::string report = out + "/recall_report.json";
  CHECK(run_cli(dir, "eval -c " + p.string() + " --checkpoint " + out +
                         "/checkpoint") == 0);
  const std::string text = slurp(report);
  const json doc = json::parse(text);
  CHECK(doc.at("per_domain").size() == 2);
  CHECK(doc.at("per_domain")[0].at("name") == "domain0");
  CHECK(doc.at("per_domain")[1].at("rotation") == 1);
  CHECK(doc.at("ensemble").at("recall").contains("R@1"));
  CHECK(doc.at("ensemble").at("recall").contains("R@2"));
  CHECK(doc.at("split") == "test");
  for (const auto& rep : doc.at("per_domain")) {
    const double r1 = rep.at("recall").at("R@1").get<double>();
    CHECK(r1 >= 0.0);
    CHECK(r1 <= 1.0);
  }
  // lossless round trip: dump of the parse equals a re-parse's dump
  CHECK(json::parse(text).dump(2) == doc.dump(2));

  // re-running reproduces the identical report
  CHECK(run_cli(dir, "eval -c " + p.string() + " --checkpoint " + out +
                         "/checkpoint") == 0);
  CHECK(slurp(report) == text);

  // evaluating the train split changes the item universe
  CHECK(run_cli(dir, "eval -c " + p.string() + " --checkpoint " + out +
                         "/checkpoint --split train -o " + out +
                         "/train_report.json") == 0);
  CHECK(json::parse(slurp(out + "/train_report.json")).at("split") == "train");
  CHECK(run_cli(dir, "eval -c " + p.string() + " --checkpoint " + out +
                         "/checkpoint --split nope") == 1);
}

TEST_CASE("cli: embed exports matrices loadable by the library") {
  const fs::path dir = scratch();
  const fs::path p = write_cfg(dir, tiny_cfg());
  const std::string out = (dir / "run").string();
  REQUIRE(run_cli(dir, "train -c " + p.string() + " -o " + out) == 0);

  CHECK(run_cli(dir, "embed -c " + p.string() + " --checkpoint " + out +
                         "/checkpoint --ensemble") == 0);
  const EmbeddingMatrix ens = load_embeddings(out + "/embeddings_ensemble");
  CHECK(ens.provenance == "ensemble");
  CHECK(ens.size() == 24);  // test split: 4 classes x 6
  CHECK(ens.width() == 8);  // d_eff * |domains| = 4 * 2
  CHECK(ens.segment_width == 4);
  ens.validate();

  CHECK(run_cli(dir, "embed -c " + p.string() + " --checkpoint " + out +
                         "/checkpoint --domain 1 --split full -o " + out +
                         "/full_d1") == 0);
  const EmbeddingMatrix d1 = load_embeddings(out + "/full_d1");
  CHECK(d1.provenance == "domain1");
  CHECK(d1.size() == 48);
  CHECK(d1.width() == 4);

  CHECK(run_cli(dir, "embed -c " + p.string() + " --checkpoint " + out +
                         "/checkpoint --domain 7") == 1);
}

TEST_CASE("cli: compare emits per-cell rows plus aggregates") {
  const fs::path dir = scratch();
  const fs::path p = write_cfg(dir, tiny_cfg());
  const std::string out = (dir / "cmp").string();

  CHECK(run_cli(dir, "compare -c " + p.string() + " -o " + out +
                         " --mechanisms plain --mechanisms ideal"
                         " --seeds 1 --seeds 2") == 0);
  const json doc = json::parse(slurp(out + "/compare.json"));
  CHECK(doc.at("rows").size() == 4);        // 2 mechanisms x 2 seeds
  CHECK(doc.at("aggregates").size() == 4);  // mean + stddev per mechanism
  const auto columns = doc.at("columns").get<std::vector<std::string>>();
  CHECK(columns ==
        std::vector<std::string>{"r1_rot0", "r1_rot90", "r1_ensemble"});

  // aggregate mean equals the arithmetic mean of that mechanism's rows
  for (const auto& agg : doc.at("aggregates")) {
    if (agg.at("seed") != "mean") continue;
    for (const auto& col : columns) {
      double sum = 0.0;
      std::int64_t n = 0;
      for (const auto& row : doc.at("rows")) {
        if (row.at("mechanism") != agg.at("mechanism")) continue;
        sum += row.at(col).get<double>();
        ++n;
      }
      CHECK(agg.at(col).get<double>() ==
            sum / static_cast<double>(n));  // same summation order: exact
    }
  }

  // CSV carries the same table: header + rows + aggregates
  const std::string csv = slurp(out + "/compare.csv");
  CHECK(count_lines(csv) == 1 + 4 + 4);
  CHECK(csv.rfind("mechanism,seed,r1_rot0,r1_rot90,r1_ensemble\n", 0) == 0);

  // every cell left a trainable artifact behind
  CHECK(fs::exists(out + "/plain_seed1/checkpoint.json"));
  CHECK(fs::exists(out + "/ideal_seed2/history.jsonl"));

  // single mechanism, single seed: one row, two aggregate rows
  const std::string solo = (dir / "solo").string();
  CHECK(run_cli(dir, "compare -c " + p.string() + " -o " + solo +
                         " --mechanisms ideal --seeds 5") == 0);
  const json sdoc = json::parse(slurp(solo + "/compare.json"));
  CHECK(sdoc.at("rows").size() == 1);
  CHECK(sdoc.at("aggregates").size() == 2);
  CHECK(sdoc.at("aggregates")[0].at("r1_ensemble") ==
        sdoc.at("rows")[0].at("r1_ensemble"));
  CHECK(sdoc.at("aggregates")[1].at("r1_ensemble").get<double>() == 0.0);
}

TEST_CASE("cli: exit codes separate config from runtime failures") {
  const fs::path dir = scratch();
  const fs::path p = write_cfg(dir, tiny_cfg());

  std::string err;
  CHECK(run_cli(dir, "train -c " + p.string() + " -o " + (dir / "x1").string() +
                         " --set loss.bogus=1",
                &err) == 1);
  CHECK(err.find("loss.bogus") != std::string::npos);

  CHECK(run_cli(dir, "train -c " + p.string() + " -o " + (dir / "x2").string() +
                         " --set mechanism=magic",
                &err) == 1);
  CHECK(err.find("mechanism") != std::string::npos);

  CHECK(run_cli(dir, "eval -c " + p.string() + " --checkpoint " +
                         (dir / "nothere").string()) == 1);
  CHECK(run_cli(dir, "") == 1);          // missing subcommand
  CHECK(run_cli(dir, "frobnicate") == 1);  // unknown subcommand
  CHECK(run_cli(dir, "--help") == 0);

  // a non-finite loss is a runtime failure, not a config error
  CHECK(run_cli(dir, "train -c " + p.string() + " -o " + (dir / "dv").string() +
                         " --set loss.kind=multi_similarity"
                         " --set loss.ms_scale_pos=1e300",
                &err) == 2);
  CHECK(err.find("diverged") != std::string::npos);
}

TEST_CASE("cli: IDML_OUTPUT_ROOT supplies the default output root") {
  const fs::path dir = scratch();
  ExperimentConfig cfg = tiny_cfg();
  cfg.dataset.glyphs.samples_per_class = 2;
  const fs::path p = write_cfg(dir, cfg);

  const std::string root = (dir / "envroot").string();
  CHECK(run_cli(dir, "gen-data -c " + p.string(), nullptr,
                "IDML_OUTPUT_ROOT=" + root) == 0);
  CHECK(fs::exists(root + "/dataset/metadata.json"));

  // an explicit output_dir in the config wins over the env root
  ExperimentConfig cfg2 = cfg;
  cfg2.output_dir = (dir / "cfgout").string();
  const fs::path p2 = write_cfg(dir, cfg2, "cfg2.json");
  CHECK(run_cli(dir, "gen-data -c " + p2.string(), nullptr,
                "IDML_OUTPUT_ROOT=" + root) == 0);
  CHECK(fs::exists(cfg2.output_dir + "/metadata.json"));
}
