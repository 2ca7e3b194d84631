// Exact / tight-tolerance property criteria for the toolkit, one pass/fail
// line each. Oracles here are written independently of the library code they
// check: brute-force enumerations, literal formula transcriptions, and
// byte-level comparisons. Exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "idml/data.hpp"
#include "idml/eval.hpp"
#include "idml/losses.hpp"
#include "idml/model.hpp"
#include "idml/ops.hpp"
#include "idml/rng.hpp"
#include "idml/sampling.hpp"
#include "idml/tensor.hpp"
#include "idml/transforms.hpp"
#include "support/op_gradcheck.hpp"

namespace fs = std::filesystem;
using namespace idml;
using idml_test::check_op_kind;
using idml_test::rand_tensor;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

bool same_values(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  const auto ad = a.data();
  const auto bd = b.data();
  return std::equal(ad.begin(), ad.end(), bd.begin());
}

// ---------------------------------------------------------------------------
// 1. Every op kind passes central-finite-difference gradient checking.

void criterion_gradcheck() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(2026);
  for (OpKind kind : kAllOpKinds) {
    const auto summary = check_op_kind(kind, rng, 100, 1e-5, 1e-4);
    require(summary.failures == 0,
            op_kind_name(kind) + ": " + std::to_string(summary.failures) +
                " of " + std::to_string(summary.instances) +
                " instances exceeded rel err 1e-4 (max " +
                fmt(summary.max_rel_err) + ")");
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  require(secs < 60.0, "suite took " + fmt(secs) + " s, budget is 60");
}

// ---------------------------------------------------------------------------
// 2. rotate90 composes exactly like the cyclic group of order four.

void criterion_rotation_group() {
  Rng rng(11);
  for (int img = 0; img < 1000; ++img) {
    const std::int64_t c = 1 + static_cast<std::int64_t>(rng.below(3));
    const std::int64_t h = 2 + static_cast<std::int64_t>(rng.below(9));
    const std::int64_t w = 2 + static_cast<std::int64_t>(rng.below(9));
    const Tensor x = rand_tensor(rng, {c, h, w});
    require(same_values(rotate90(x, 0), x), "rotate90(x, 0) is not the identity");
    for (int a = 0; a < 4; ++a) {
      const Tensor xa = rotate90(x, a);
      for (int b = 0; b < 4; ++b) {
        require(same_values(rotate90(xa, b), rotate90(x, (a + b) % 4)),
                "rotate90 composition broke at a=" + std::to_string(a) +
                    " b=" + std::to_string(b));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// 3. A loss fed by one domain's head moves no other head's parameters.

void criterion_head_isolation() {
  ModelConfig mc;
  mc.in_h = 12;
  mc.in_w = 12;
  mc.conv_stages = {{4, 3, 2}, {8, 3, 2}};
  mc.embedding_dim = 16;
  mc.num_domains = 4;
  mc.split_heads = true;
  const EmbeddingModel model(mc, 21);
  Rng rng(22);
  const Tensor batch = rand_tensor(rng, {8, 1, 12, 12}, 0.0, 1.0);
  const std::vector<std::int64_t> labels = {0, 0, 1, 1, 2, 2, 3, 3};
  const DomainSet domains;
  LossConfig lc;
  lc.kind = LossKind::kMultiSimilarity;

  for (int i = 0; i < 4; ++i) {
    for (const auto& p : model.parameters()) p.tensor.zero_grad();
    Tape tape;
    const Tensor view = transform_batch(batch, domains.rotations[i]);
    const Tensor emb = model.embed(&tape, view, i);
    const LossOutput loss = dml_loss(&tape, emb, labels, lc);
    require(!loss.degenerate, "domain " + std::to_string(i) + " loss degenerate");
    tape.backward(loss.value);

    for (const auto& p : model.backbone_parameters()) {
      require(p.tensor.has_grad(), "backbone " + p.name + " got no gradient");
    }
    bool head_moved = false;
    for (const auto& p : model.head_parameters(i)) {
      if (!p.tensor.has_grad()) continue;
      for (double g : p.tensor.grad()) head_moved = head_moved || g != 0.0;
    }
    require(head_moved, "head " + std::to_string(i) + " got no gradient from its own loss");
    for (int other = 0; other < 4; ++other) {
      if (other == i) continue;
      for (const auto& p : model.head_parameters(other)) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) {
          require(g == 0.0, "domain " + std::to_string(i) + " loss leaked " +
                                fmt(g) + " into " + p.name);
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// 4. Ranking by concatenated dot product == ranking by summed per-domain
//    similarities, tie-breaks included.

// Gallery order for one query: similarity descending, index ascending,
// query excluded. The same rule recall_at_k documents.
std::vector<std::int64_t> ranking(const std::vector<double>& sim,
                                  std::int64_t n, std::int64_t q) {
  std::vector<std::int64_t> order;
  order.reserve(static_cast<std::size_t>(n - 1));
  for (std::int64_t j = 0; j < n; ++j) {
    if (j != q) order.push_back(j);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::int64_t a, std::int64_t b) {
                     const double sa = sim[static_cast<std::size_t>(q * n + a)];
                     const double sb = sim[static_cast<std::size_t>(q * n + b)];
                     if (sa != sb) return sa > sb;
                     return a < b;
                   });
  return order;
}

void criterion_ensemble_identity() {
  // Real model path: concatenated features of a split-head model vs the sum
  // of the per-domain similarity matrices.
  GlyphConfig gc;
  gc.num_base_shapes = 2;
  gc.samples_per_class = 25;
  gc.image_size = 16;
  gc.jitter_px = 1;
  gc.noise_sigma = 0.05;
  gc.seed = 31;
  const Dataset ds = generate_synthetic(gc);
  require(ds.size() == 200, "expected 200 items, got " + std::to_string(ds.size()));

  ModelConfig mc;
  mc.in_h = 16;
  mc.in_w = 16;
  mc.conv_stages = {{4, 3, 2}, {8, 3, 2}};
  mc.embedding_dim = 16;
  mc.num_domains = 4;
  mc.split_heads = true;
  const EmbeddingModel model(mc, 32);
  const DomainSet domains;

  const EmbeddingMatrix ens = ensemble_embed(model, ds, domains);
  const std::vector<double> concat_sim = similarity_matrix(ens.rows);

  std::vector<double> summed(concat_sim.size(), 0.0);
  for (int i = 0; i < domains.size(); ++i) {
    const EmbeddingMatrix per = embed_dataset(model, ds, domains, i);
    const std::vector<double> s = similarity_matrix(per.rows);
    for (std::size_t k = 0; k < s.size(); ++k) summed[k] += s[k];
  }

  const std::int64_t n = ens.size();
  for (std::int64_t q = 0; q < n; ++q) {
    require(ranking(concat_sim, n, q) == ranking(summed, n, q),
            "rankings diverged at query " + std::to_string(q));
  }

  // Tie-exercising path: integer-valued segments make every dot product
  // exactly representable, and duplicated rows force genuine ties.
  Rng rng(33);
  const std::int64_t m = 200;
  const std::int64_t seg = 3;
  std::vector<double> flat(static_cast<std::size_t>(m * 4 * seg));
  for (std::size_t i = 0; i < flat.size(); ++i) {
    flat[i] = static_cast<double>(rng.below(5)) - 2.0;
  }
  for (std::int64_t r = 1; r < m; r += 7) {  // plant duplicates
    for (std::int64_t k = 0; k < 4 * seg; ++k) {
      flat[static_cast<std::size_t>(r * 4 * seg + k)] =
          flat[static_cast<std::size_t>((r - 1) * 4 * seg + k)];
    }
  }
  const Tensor rows = Tensor::from_data({m, 4 * seg}, std::move(flat));
  const std::vector<double> whole = similarity_matrix(rows);
  std::vector<double> parts(whole.size(), 0.0);
  const double* rd = rows.data().data();
  for (std::int64_t q = 0; q < m; ++q) {
    for (std::int64_t j = 0; j < m; ++j) {
      for (int dom = 0; dom < 4; ++dom) {
        double acc = 0.0;
        for (std::int64_t k = 0; k < seg; ++k) {
          acc += rd[q * 4 * seg + dom * seg + k] * rd[j * 4 * seg + dom * seg + k];
        }
        parts[static_cast<std::size_t>(q * m + j)] += acc;
      }
    }
  }
  require(whole == parts, "integer dot products disagreed between paths");
  std::int64_t ties = 0;
  for (std::int64_t q = 0; q < m; ++q) {
    const auto a = ranking(whole, m, q);
    const auto b = ranking(parts, m, q);
    require(a == b, "tie-breaks diverged at query " + std::to_string(q));
    for (std::size_t k = 1; k < a.size(); ++k) {
      ties += whole[static_cast<std::size_t>(q * m + a[k])] ==
              whole[static_cast<std::size_t>(q * m + a[k - 1])];
    }
  }
  require(ties > 0, "tie construction produced no ties");
}

// ---------------------------------------------------------------------------
// 5. recall_at_k == brute-force oracle.

double recall_oracle(const Tensor& rows, const std::vector<std::int64_t>& labels,
                     std::int64_t k) {
  const std::int64_t n = rows.shape()[0];
  const std::int64_t d = rows.shape()[1];
  const double* e = rows.data().data();
  std::int64_t hits = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    std::vector<std::pair<double, std::int64_t>> scored;
    for (std::int64_t j = 0; j < n; ++j) {
      if (j == q) continue;
      double s = 0.0;
      for (std::int64_t t = 0; t < d; ++t) s += e[q * d + t] * e[j * d + t];
      scored.push_back({s, j});
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    const std::int64_t top = std::min<std::int64_t>(k, static_cast<std::int64_t>(scored.size()));
    for (std::int64_t t = 0; t < top; ++t) {
      if (labels[static_cast<std::size_t>(scored[static_cast<std::size_t>(t)].second)] ==
          labels[static_cast<std::size_t>(q)]) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

void criterion_recall_oracle() {
  Rng rng(41);
  for (int inst = 0; inst < 20; ++inst) {
    const std::int64_t n = 20 + static_cast<std::int64_t>(rng.below(181));  // <= 200
    const std::int64_t d = 4 + static_cast<std::int64_t>(rng.below(13));
    Tensor rows = rand_tensor(rng, {n, d});
    {
      auto v = rows.mutable_data();
      for (std::int64_t i = 0; i < n; ++i) {
        double sq = 0.0;
        for (std::int64_t j = 0; j < d; ++j) sq += v[i * d + j] * v[i * d + j];
        const double inv = 1.0 / std::sqrt(sq);
        for (std::int64_t j = 0; j < d; ++j) v[i * d + j] *= inv;
      }
    }
    const std::int64_t num_classes = 2 + static_cast<std::int64_t>(rng.below(7));
    std::vector<std::int64_t> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(num_classes)));

    EmbeddingMatrix emb;
    emb.rows = rows;
    emb.labels = labels;
    emb.provenance = "domain0";
    emb.segment_width = d;
    const std::vector<std::int64_t> ks = {1, 2, 4, 8};
    const RecallReport rep = recall_at_k(emb, ks);
    for (std::int64_t k : ks) {
      const double want = recall_oracle(rows, labels, k);
      require(rep.at(k) == want, "instance " + std::to_string(inst) + " R@" +
                                     std::to_string(k) + ": got " + fmt(rep.at(k)) +
                                     " want " + fmt(want));
    }
  }
}

// ---------------------------------------------------------------------------
// 6. ideal_loss == sum of independently computed per-domain losses.

void criterion_ideal_decomposition() {
  ModelConfig mc;
  mc.in_h = 12;
  mc.in_w = 12;
  mc.conv_stages = {{4, 3, 2}, {8, 3, 2}};
  mc.embedding_dim = 16;
  mc.num_domains = 4;
  mc.split_heads = true;
  const EmbeddingModel model(mc, 51);
  Rng rng(52);
  const Tensor batch = rand_tensor(rng, {12, 1, 12, 12}, 0.0, 1.0);
  const std::vector<std::int64_t> labels = {0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3};
  const DomainSet domains;

  for (LossKind kind :
       {LossKind::kContrastive, LossKind::kTriplet, LossKind::kMultiSimilarity}) {
    LossConfig lc;
    lc.kind = kind;
    const LossOutput whole = ideal_loss(nullptr, model, batch, labels, domains, lc);
    double sum = 0.0;
    for (int i = 0; i < domains.size(); ++i) {
      const Tensor view = transform_batch(batch, domains.rotations[i]);
      const Tensor emb = model.embed(nullptr, view, i);
      sum += dml_loss(nullptr, emb, labels, lc).value.data()[0];
    }
    const double got = whole.value.data()[0];
    require(std::abs(got - sum) <= 1e-9,
            loss_kind_name(kind) + ": ideal " + fmt(got) + " vs summed " + fmt(sum));
    require(!whole.degenerate, loss_kind_name(kind) + ": degenerate");
  }
}

// ---------------------------------------------------------------------------
// 7. Every PK batch holds exactly P classes x K instances.

void criterion_pk_contract() {
  // Uneven class sizes, one class below K to exercise replacement.
  std::vector<std::int64_t> labels;
  Rng rng(61);
  const std::int64_t num_classes = 11;
  for (std::int64_t c = 0; c < num_classes; ++c) {
    const std::int64_t count = c == 4 ? 3 : 5 + static_cast<std::int64_t>(rng.below(20));
    for (std::int64_t i = 0; i < count; ++i) labels.push_back(c);
  }
  PKConfig pk;
  pk.P = 8;
  pk.K = 4;
  PKSampler sampler(labels, pk, 62);

  for (int b = 0; b < 10000; ++b) {
    const std::vector<std::int64_t> batch = sampler.next_batch();
    require(batch.size() == 32, "batch " + std::to_string(b) + " holds " +
                                    std::to_string(batch.size()) + " items");
    std::map<std::int64_t, std::int64_t> per_class;
    for (std::size_t s = 0; s < batch.size(); ++s) {
      const std::int64_t idx = batch[s];
      require(idx >= 0 && idx < static_cast<std::int64_t>(labels.size()),
              "index out of range");
      const std::int64_t cls = labels[static_cast<std::size_t>(idx)];
      ++per_class[cls];
      // K consecutive slots per class
      require(cls == labels[static_cast<std::size_t>(batch[(s / 4) * 4])],
              "slot " + std::to_string(s) + " broke the class-block layout");
    }
    require(per_class.size() == 8, "batch " + std::to_string(b) + " drew " +
                                       std::to_string(per_class.size()) + " classes");
    for (const auto& [cls, count] : per_class) {
      require(count == 4, "class " + std::to_string(cls) + " appeared " +
                              std::to_string(count) + " times in batch " +
                              std::to_string(b));
    }
    // Classes with >= K items never repeat an index within the batch.
    std::set<std::int64_t> seen;
    for (const std::int64_t idx : batch) {
      if (labels[static_cast<std::size_t>(idx)] == 4) continue;
      require(seen.insert(idx).second,
              "index " + std::to_string(idx) + " repeated in batch " + std::to_string(b));
    }
  }
}

// ---------------------------------------------------------------------------
// 8. Two identically configured `train` runs write bit-identical history.

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(in.good(), "cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void criterion_train_determinism() {
  const fs::path dir = fs::temp_directory_path() / "idml_acceptance_c8";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cfg_text = R"({
    "dataset": {"num_base_shapes": 2, "samples_per_class": 6, "image_size": 16,
                "jitter_px": 1, "noise_sigma": 0.05, "shape_jitter": 0.5,
                "upright_bias": 0.5, "seed": 71},
    "mechanism": "ideal",
    "domains": [0, 1, 2, 3],
    "loss": {"kind": "multi_similarity"},
    "sampler": {"P": 4, "K": 2},
    "model": {"in_h": 16, "in_w": 16,
              "conv_stages": [{"out_channels": 4}, {"out_channels": 8}],
              "embedding_dim": 16},
    "epochs": 2,
    "seed": 5,
    "eval_ks": [1]
  })";
  std::ofstream(dir / "config.json") << cfg_text;

  for (const char* run : {"a", "b"}) {
    const std::string cmd = std::string(IDML_CLI_PATH) + " train -c " +
                            (dir / "config.json").string() + " -o " +
                            (dir / run).string() + " > " +
                            (dir / (std::string(run) + ".log")).string() + " 2>&1";
    require(std::system(cmd.c_str()) == 0, std::string("train run ") + run + " failed");
  }
  const std::string a = slurp(dir / "a" / "history.jsonl");
  const std::string b = slurp(dir / "b" / "history.jsonl");
  require(!a.empty(), "history is empty");
  require(a == b, "history files differ between identical runs");
  fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// 9. Loss values match independent brute-force enumerations.

double triplet_oracle(const Tensor& emb, const std::vector<std::int64_t>& labels,
                      const LossConfig& cfg) {
  const std::int64_t n = emb.shape()[0];
  const std::int64_t d = emb.shape()[1];
  const double* e = emb.data().data();
  const auto dist = [&](std::int64_t i, std::int64_t j) {
    double sq = 0.0;
    for (std::int64_t k = 0; k < d; ++k) {
      const double diff = e[i * d + k] - e[j * d + k];
      sq += diff * diff;
    }
    return std::sqrt(sq);
  };
  double total = 0.0;
  std::int64_t valid = 0;
  for (std::int64_t a = 0; a < n; ++a) {
    for (std::int64_t p = 0; p < n; ++p) {
      if (p == a || labels[static_cast<std::size_t>(p)] != labels[static_cast<std::size_t>(a)])
        continue;
      for (std::int64_t neg = 0; neg < n; ++neg) {
        if (labels[static_cast<std::size_t>(neg)] == labels[static_cast<std::size_t>(a)])
          continue;
        ++valid;
        total += std::max(0.0, dist(a, p) - dist(a, neg) + cfg.triplet_margin);
      }
    }
  }
  if (valid == 0) return 0.0;
  return cfg.triplet_sum_reduction ? total : total / static_cast<double>(valid);
}

double contrastive_oracle(const Tensor& emb, const std::vector<std::int64_t>& labels,
                          const LossConfig& cfg) {
  const std::int64_t n = emb.shape()[0];
  const std::int64_t d = emb.shape()[1];
  const double* e = emb.data().data();
  double pos_total = 0.0, neg_total = 0.0;
  std::int64_t pos_count = 0, neg_count = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::int64_t k = 0; k < d; ++k) s += e[i * d + k] * e[j * d + k];
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
        ++pos_count;
        pos_total += std::max(0.0, cfg.pos_margin - s);
      } else {
        ++neg_count;
        neg_total += std::max(0.0, s - cfg.neg_margin);
      }
    }
  }
  const double pos = pos_count > 0 ? pos_total / static_cast<double>(pos_count) : 0.0;
  const double neg = neg_count > 0 ? neg_total / static_cast<double>(neg_count) : 0.0;
  return pos + neg;
}

double ms_oracle(const Tensor& emb, const std::vector<std::int64_t>& labels,
                 const LossConfig& cfg) {
  const std::int64_t n = emb.shape()[0];
  const std::int64_t d = emb.shape()[1];
  const double* e = emb.data().data();
  const auto dot = [&](std::int64_t i, std::int64_t j) {
    double s = 0.0;
    for (std::int64_t k = 0; k < d; ++k) s += e[i * d + k] * e[j * d + k];
    return s;
  };
  double total = 0.0;
  std::int64_t counted = 0;
  for (std::int64_t a = 0; a < n; ++a) {
    const auto la = labels[static_cast<std::size_t>(a)];
    std::vector<double> pos, neg;
    for (std::int64_t j = 0; j < n; ++j) {
      if (j == a) continue;
      (labels[static_cast<std::size_t>(j)] == la ? pos : neg).push_back(dot(a, j));
    }
    if (pos.empty()) continue;
    ++counted;
    const double min_pos = *std::min_element(pos.begin(), pos.end());
    double sum_pos = 0.0, sum_neg = 0.0;
    for (double s : pos) {
      if (neg.empty() || s < *std::max_element(neg.begin(), neg.end()) + cfg.ms_margin) {
        sum_pos += std::exp(-cfg.ms_scale_pos * (s - cfg.ms_threshold));
      }
    }
    for (double s : neg) {
      if (s > min_pos - cfg.ms_margin) {
        sum_neg += std::exp(cfg.ms_scale_neg * (s - cfg.ms_threshold));
      }
    }
    total += std::log(1.0 + sum_pos) / cfg.ms_scale_pos +
             std::log(1.0 + sum_neg) / cfg.ms_scale_neg;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

void criterion_loss_oracles() {
  Rng rng(91);
  const auto random_batch = [&](std::int64_t& n_out, std::vector<std::int64_t>& labels) {
    const std::int64_t n = 6 + static_cast<std::int64_t>(rng.below(15));
    const std::int64_t d = 4 + static_cast<std::int64_t>(rng.below(9));
    Tensor rows = rand_tensor(rng, {n, d});
    auto v = rows.mutable_data();
    for (std::int64_t i = 0; i < n; ++i) {
      double sq = 0.0;
      for (std::int64_t j = 0; j < d; ++j) sq += v[i * d + j] * v[i * d + j];
      const double inv = 1.0 / std::sqrt(sq);
      for (std::int64_t j = 0; j < d; ++j) v[i * d + j] *= inv;
    }
    const std::int64_t num_classes = 2 + static_cast<std::int64_t>(rng.below(4));
    labels.resize(static_cast<std::size_t>(n));
    // Two guaranteed same-class rows keep the batch non-degenerate.
    labels[0] = labels[1] = 0;
    for (std::size_t i = 2; i < labels.size(); ++i) {
      labels[i] = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(num_classes)));
    }
    n_out = n;
    return rows;
  };

  for (LossKind kind :
       {LossKind::kTriplet, LossKind::kContrastive, LossKind::kMultiSimilarity}) {
    for (int inst = 0; inst < 50; ++inst) {
      std::int64_t n = 0;
      std::vector<std::int64_t> labels;
      const Tensor emb = random_batch(n, labels);
      LossConfig lc;
      lc.kind = kind;
      lc.triplet_margin = 0.05 + 0.4 * rng.uniform(0.0, 1.0);
      lc.pos_margin = 0.6 + 0.4 * rng.uniform(0.0, 1.0);
      lc.neg_margin = 0.2 + 0.3 * rng.uniform(0.0, 1.0);
      lc.ms_margin = 0.05 + 0.2 * rng.uniform(0.0, 1.0);
      if (kind == LossKind::kTriplet && inst % 2 == 1) lc.triplet_sum_reduction = true;
      const double got = dml_loss(nullptr, emb, labels, lc).value.data()[0];
      double want = 0.0;
      switch (kind) {
        case LossKind::kTriplet: want = triplet_oracle(emb, labels, lc); break;
        case LossKind::kContrastive: want = contrastive_oracle(emb, labels, lc); break;
        case LossKind::kMultiSimilarity: want = ms_oracle(emb, labels, lc); break;
      }
      require(std::abs(got - want) <= 1e-9,
              loss_kind_name(kind) + " instance " + std::to_string(inst) +
                  ": got " + fmt(got) + " want " + fmt(want));
    }
  }
}

}  // namespace

int main() {
  struct Criterion {
    int number;
    const char* name;
    std::function<void()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient check covers every op kind", criterion_gradcheck},
      {2, "rotate90 composition table is the cyclic group Z4", criterion_rotation_group},
      {3, "per-domain losses touch only their own head", criterion_head_isolation},
      {4, "concatenated-dot ranking equals summed per-domain ranking", criterion_ensemble_identity},
      {5, "recall_at_k matches the brute-force oracle", criterion_recall_oracle},
      {6, "ideal loss decomposes into per-domain terms", criterion_ideal_decomposition},
      {7, "PK batches keep the exact P=8 K=4 contract", criterion_pk_contract},
      {8, "identical train runs write bit-identical history", criterion_train_determinism},
      {9, "loss values match independent enumerations", criterion_loss_oracles},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    try {
      c.run();
      std::cout << "[PASS] criterion " << c.number << ": " << c.name << "\n";
    } catch (const std::exception& e) {
      ++failures;
      std::cout << "[FAIL] criterion " << c.number << ": " << c.name << " — "
                << e.what() << "\n";
    }
  }
  return failures == 0 ? 0 : 1;
}
