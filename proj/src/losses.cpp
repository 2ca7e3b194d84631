#include "idml/losses.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

#include "idml/errors.hpp"
#include "idml/ops.hpp"

namespace idml {
namespace {

void check_batch(const char* who, const Tensor& emb,
                 const std::vector<std::int64_t>& labels,
                 const std::vector<int>* tags) {
  if (emb.shape().size() != 2) {
    throw std::invalid_argument(std::string(who) + ": embeddings must be rank-2, got " +
                                shape_str(emb.shape()));
  }
  const auto n = static_cast<std::size_t>(emb.shape()[0]);
  if (labels.size() != n) {
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " embedding rows");
  }
  if (tags && tags->size() != n) {
    throw std::invalid_argument(std::string(who) + ": " + std::to_string(tags->size()) +
                                " domain tags for " + std::to_string(n) + " embedding rows");
  }
}

double dot_rows(const double* a, const double* b, std::int64_t d) {
  double acc = 0.0;
  for (std::int64_t k = 0; k < d; ++k) acc = std::fma(a[k], b[k], acc);
  return acc;
}

double euclidean_rows(const double* a, const double* b, std::int64_t d) {
  double acc = 0.0;
  for (std::int64_t k = 0; k < d; ++k) {
    const double diff = a[k] - b[k];
    acc = std::fma(diff, diff, acc);
  }
  return std::sqrt(acc);
}

void count_pair(PairStats& stats, const std::vector<int>* tags, std::int64_t i,
                std::int64_t j) {
  if (!tags) return;
  if ((*tags)[static_cast<std::size_t>(i)] == (*tags)[static_cast<std::size_t>(j)]) {
    ++stats.same_domain;
  } else {
    ++stats.cross_domain;
  }
}

bool tracked(const Tape* tape, const Tensor& emb) {
  return tape != nullptr && emb.requires_grad();
}

LossOutput make_constant(double value, bool degenerate, PairStats stats) {
  LossOutput out;
  out.value = Tensor::scalar(value);
  out.degenerate = degenerate;
  out.stats = stats;
  return out;
}

}  // namespace

std::vector<double> similarity_matrix(const Tensor& emb) {
  if (emb.shape().size() != 2) {
    throw std::invalid_argument("similarity_matrix: embeddings must be rank-2, got " +
                                shape_str(emb.shape()));
  }
  const std::int64_t n = emb.shape()[0];
  const std::int64_t d = emb.shape()[1];
  const double* e = emb.data().data();
  std::vector<double> s(static_cast<std::size_t>(n * n));
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      s[static_cast<std::size_t>(i * n + j)] = dot_rows(e + i * d, e + j * d, d);
    }
  }
  return s;
}

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kContrastive: return "contrastive";
    case LossKind::kTriplet: return "triplet";
    case LossKind::kMultiSimilarity: return "multi_similarity";
  }
  throw std::invalid_argument("unknown LossKind");
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "contrastive") return LossKind::kContrastive;
  if (name == "triplet") return LossKind::kTriplet;
  if (name == "multi_similarity") return LossKind::kMultiSimilarity;
  throw ConfigError("unknown loss kind '" + name +
                    "' (expected contrastive | triplet | multi_similarity)");
}

void LossConfig::validate() const {
  if (triplet_margin < 0.0) throw ConfigError("triplet_margin must be >= 0");
  if (pos_margin < 0.0) throw ConfigError("pos_margin must be >= 0");
  if (neg_margin < 0.0) throw ConfigError("neg_margin must be >= 0");
  if (ms_scale_pos <= 0.0) throw ConfigError("ms_scale_pos must be > 0");
  if (ms_scale_neg <= 0.0) throw ConfigError("ms_scale_neg must be > 0");
  if (ms_margin < 0.0) throw ConfigError("ms_margin must be >= 0");
}

LossOutput triplet_loss(Tape* tape, const Tensor& embeddings,
                        const std::vector<std::int64_t>& labels,
                        const LossConfig& cfg,
                        const std::vector<int>* domain_tags) {
  check_batch("triplet_loss", embeddings, labels, domain_tags);
  const std::int64_t n = embeddings.shape()[0];
  const std::int64_t d = embeddings.shape()[1];
  const double* e = embeddings.data().data();
  const double margin = cfg.triplet_margin;

  // One entry per active triplet (hinge strictly positive); valid but
  // inactive triplets only feed the mean's denominator.
  struct ActiveTriplet {
    std::int64_t a, p, neg;
    double d_ap, d_an;
  };
  std::vector<ActiveTriplet> active;
  std::int64_t valid = 0;
  double total = 0.0;
  PairStats stats;

  for (std::int64_t a = 0; a < n; ++a) {
    for (std::int64_t p = 0; p < n; ++p) {
      if (p == a || labels[static_cast<std::size_t>(p)] != labels[static_cast<std::size_t>(a)])
        continue;
      const double d_ap = euclidean_rows(e + a * d, e + p * d, d);
      for (std::int64_t neg = 0; neg < n; ++neg) {
        if (labels[static_cast<std::size_t>(neg)] == labels[static_cast<std::size_t>(a)])
          continue;
        ++valid;
        if (domain_tags) {
          const bool same =
              (*domain_tags)[static_cast<std::size_t>(a)] ==
                  (*domain_tags)[static_cast<std::size_t>(p)] &&
              (*domain_tags)[static_cast<std::size_t>(a)] ==
                  (*domain_tags)[static_cast<std::size_t>(neg)];
          (same ? stats.same_domain : stats.cross_domain) += 1;
        }
        const double d_an = euclidean_rows(e + a * d, e + neg * d, d);
        const double term = d_ap - d_an + margin;
        if (term > 0.0) {
          total += term;
          active.push_back({a, p, neg, d_ap, d_an});
        }
      }
    }
  }

  if (valid == 0) return make_constant(0.0, true, stats);

  const double denom = cfg.triplet_sum_reduction ? 1.0 : static_cast<double>(valid);
  LossOutput out;
  out.value = Tensor::scalar(total / denom);
  out.stats = stats;
  if (!tracked(tape, embeddings)) return out;

  out.value.set_requires_grad(true);
  Tensor emb_copy = embeddings;
  tape->record(
      {embeddings}, out.value,
      [emb_copy, y = out.value, active = std::move(active), denom, d]() {
        const double gy = y.grad()[0] / denom;
        const double* e = emb_copy.data().data();
        double* g = emb_copy.grad_buffer().data();
        for (const auto& t : active) {
          const double* ea = e + t.a * d;
          const double* ep = e + t.p * d;
          const double* en = e + t.neg * d;
          // d/de of ||e_a - e_p||: zero-distance pairs contribute nothing.
          if (t.d_ap > 0.0) {
            const double s = gy / t.d_ap;
            for (std::int64_t k = 0; k < d; ++k) {
              const double diff = s * (ea[k] - ep[k]);
              g[t.a * d + k] += diff;
              g[t.p * d + k] -= diff;
            }
          }
          if (t.d_an > 0.0) {
            const double s = gy / t.d_an;
            for (std::int64_t k = 0; k < d; ++k) {
              const double diff = s * (ea[k] - en[k]);
              g[t.a * d + k] -= diff;
              g[t.neg * d + k] += diff;
            }
          }
        }
      });
  return out;
}

LossOutput contrastive_loss(Tape* tape, const Tensor& embeddings,
                            const std::vector<std::int64_t>& labels,
                            const LossConfig& cfg,
                            const std::vector<int>* domain_tags) {
  check_batch("contrastive_loss", embeddings, labels, domain_tags);
  const std::int64_t n = embeddings.shape()[0];
  const std::int64_t d = embeddings.shape()[1];
  const double* e = embeddings.data().data();

  struct ActivePair {
    std::int64_t i, j;
  };
  std::vector<ActivePair> active_pos;
  std::vector<ActivePair> active_neg;
  std::int64_t pos_count = 0;
  std::int64_t neg_count = 0;
  double pos_total = 0.0;
  double neg_total = 0.0;
  PairStats stats;

  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = i + 1; j < n; ++j) {
      const double s = dot_rows(e + i * d, e + j * d, d);
      count_pair(stats, domain_tags, i, j);
      if (labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]) {
        ++pos_count;
        const double term = cfg.pos_margin - s;
        if (term > 0.0) {
          pos_total += term;
          active_pos.push_back({i, j});
        }
      } else {
        ++neg_count;
        const double term = s - cfg.neg_margin;
        if (term > 0.0) {
          neg_total += term;
          active_neg.push_back({i, j});
        }
      }
    }
  }

  const double pos_mean = pos_count > 0 ? pos_total / static_cast<double>(pos_count) : 0.0;
  const double neg_mean = neg_count > 0 ? neg_total / static_cast<double>(neg_count) : 0.0;
  const bool degenerate = pos_count == 0;

  LossOutput out;
  out.value = Tensor::scalar(pos_mean + neg_mean);
  out.degenerate = degenerate;
  out.stats = stats;
  if (!tracked(tape, embeddings)) return out;

  out.value.set_requires_grad(true);
  Tensor emb_copy = embeddings;
  tape->record(
      {embeddings}, out.value,
      [emb_copy, y = out.value, active_pos = std::move(active_pos),
       active_neg = std::move(active_neg), pos_count, neg_count, d]() {
        const double gy = y.grad()[0];
        const double* e = emb_copy.data().data();
        double* g = emb_copy.grad_buffer().data();
        if (pos_count > 0) {
          const double s = gy / static_cast<double>(pos_count);
          for (const auto& pr : active_pos) {
            for (std::int64_t k = 0; k < d; ++k) {
              g[pr.i * d + k] -= s * e[pr.j * d + k];
              g[pr.j * d + k] -= s * e[pr.i * d + k];
            }
          }
        }
        if (neg_count > 0) {
          const double s = gy / static_cast<double>(neg_count);
          for (const auto& pr : active_neg) {
            for (std::int64_t k = 0; k < d; ++k) {
              g[pr.i * d + k] += s * e[pr.j * d + k];
              g[pr.j * d + k] += s * e[pr.i * d + k];
            }
          }
        }
      });
  return out;
}

LossOutput ms_loss(Tape* tape, const Tensor& embeddings,
                   const std::vector<std::int64_t>& labels, const LossConfig& cfg,
                   const std::vector<int>* domain_tags) {
  check_batch("ms_loss", embeddings, labels, domain_tags);
  const std::int64_t n = embeddings.shape()[0];
  const std::int64_t d = embeddings.shape()[1];
  const std::vector<double> sim = similarity_matrix(embeddings);
  const double alpha = cfg.ms_scale_pos;
  const double beta = cfg.ms_scale_neg;
  const double lambda = cfg.ms_threshold;
  const double eps = cfg.ms_margin;

  // Mined pairs per anchor with their exponential weights; denominators are
  // the log arguments, reused verbatim in backward.
  struct WeightedPair {
    std::int64_t j;
    double w;
  };
  struct AnchorTerms {
    std::int64_t a;
    std::vector<WeightedPair> pos, neg;
    double denom_pos, denom_neg;
  };
  std::vector<AnchorTerms> anchors;
  std::int64_t counted = 0;
  double total = 0.0;
  PairStats stats;

  for (std::int64_t a = 0; a < n; ++a) {
    const auto la = labels[static_cast<std::size_t>(a)];
    double min_pos = std::numeric_limits<double>::infinity();
    double max_neg = -std::numeric_limits<double>::infinity();
    bool has_pos = false;
    bool has_neg = false;
    for (std::int64_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double s = sim[static_cast<std::size_t>(a * n + j)];
      if (labels[static_cast<std::size_t>(j)] == la) {
        has_pos = true;
        if (s < min_pos) min_pos = s;
      } else {
        has_neg = true;
        if (s > max_neg) max_neg = s;
      }
    }
    // Anchors with no positive candidate are skipped and not counted.
    if (!has_pos) continue;
    ++counted;

    AnchorTerms terms;
    terms.a = a;
    double sum_pos = 0.0;
    double sum_neg = 0.0;
    for (std::int64_t j = 0; j < n; ++j) {
      if (j == a) continue;
      const double s = sim[static_cast<std::size_t>(a * n + j)];
      if (labels[static_cast<std::size_t>(j)] == la) {
        // Keep positives harder than the easiest negative, minus slack; with
        // no negatives there is nothing to rank against, so keep them all.
        if (!has_neg || s < max_neg + eps) {
          const double w = std::exp(-alpha * (s - lambda));
          terms.pos.push_back({j, w});
          sum_pos += w;
          count_pair(stats, domain_tags, a, j);
        }
      } else {
        // Keep negatives harder than the hardest positive, plus slack.
        if (s > min_pos - eps) {
          const double w = std::exp(beta * (s - lambda));
          terms.neg.push_back({j, w});
          sum_neg += w;
          count_pair(stats, domain_tags, a, j);
        }
      }
    }
    terms.denom_pos = 1.0 + sum_pos;
    terms.denom_neg = 1.0 + sum_neg;
    total += std::log1p(sum_pos) / alpha + std::log1p(sum_neg) / beta;
    if (!terms.pos.empty() || !terms.neg.empty()) anchors.push_back(std::move(terms));
  }

  if (counted == 0) return make_constant(0.0, true, stats);

  LossOutput out;
  out.value = Tensor::scalar(total / static_cast<double>(counted));
  out.stats = stats;
  if (!tracked(tape, embeddings)) return out;

  out.value.set_requires_grad(true);
  Tensor emb_copy = embeddings;
  tape->record(
      {embeddings}, out.value,
      [emb_copy, y = out.value, anchors = std::move(anchors), counted, d]() {
        const double gy = y.grad()[0] / static_cast<double>(counted);
        const double* e = emb_copy.data().data();
        double* g = emb_copy.grad_buffer().data();
        for (const auto& t : anchors) {
          for (const auto& pr : t.pos) {
            // d/dS of log1p(sum)/alpha with w = exp(-alpha (S - lambda)).
            const double c = -gy * pr.w / t.denom_pos;
            for (std::int64_t k = 0; k < d; ++k) {
              g[t.a * d + k] += c * e[pr.j * d + k];
              g[pr.j * d + k] += c * e[t.a * d + k];
            }
          }
          for (const auto& pr : t.neg) {
            const double c = gy * pr.w / t.denom_neg;
            for (std::int64_t k = 0; k < d; ++k) {
              g[t.a * d + k] += c * e[pr.j * d + k];
              g[pr.j * d + k] += c * e[t.a * d + k];
            }
          }
        }
      });
  return out;
}

LossOutput dml_loss(Tape* tape, const Tensor& embeddings,
                    const std::vector<std::int64_t>& labels, const LossConfig& cfg,
                    const std::vector<int>* domain_tags) {
  switch (cfg.kind) {
    case LossKind::kContrastive:
      return contrastive_loss(tape, embeddings, labels, cfg, domain_tags);
    case LossKind::kTriplet:
      return triplet_loss(tape, embeddings, labels, cfg, domain_tags);
    case LossKind::kMultiSimilarity:
      return ms_loss(tape, embeddings, labels, cfg, domain_tags);
  }
  throw std::invalid_argument("unknown LossKind");
}

LossOutput ideal_loss(Tape* tape, const EmbeddingModel& model, const Tensor& batch,
                      const std::vector<std::int64_t>& labels,
                      const DomainSet& domains, const LossConfig& cfg) {
  domains.validate();
  const auto k = static_cast<std::int64_t>(domains.size());
  if (model.config().split_heads && model.config().num_domains != k) {
    throw ConfigError("model was built for " + std::to_string(model.config().num_domains) +
                      " domains but the domain set has " + std::to_string(k));
  }

  LossOutput out;
  bool first = true;
  for (std::size_t i = 0; i < static_cast<std::size_t>(domains.size()); ++i) {
    const Tensor view = transform_batch(batch, domains.rotations[i]);
    const Tensor emb = model.embed(tape, view, static_cast<std::int64_t>(i));
    // Every row of this term carries the same tag, so the provenance counter
    // can certify that no term ever crossed domains.
    const std::vector<int> tags(labels.size(), static_cast<int>(i));
    LossOutput term = dml_loss(tape, emb, labels, cfg, &tags);
    out.degenerate = out.degenerate || term.degenerate;
    out.stats.same_domain += term.stats.same_domain;
    out.stats.cross_domain += term.stats.cross_domain;
    if (first) {
      out.value = term.value;
      first = false;
    } else {
      out.value = add(tape, out.value, term.value);
    }
  }
  return out;
}

}  // namespace idml
