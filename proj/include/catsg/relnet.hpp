// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "catsg/checkpoint.hpp"
#include "catsg/errors.hpp"
#include "catsg/evaluation.hpp"
#include "catsg/geometry.hpp"
#include "catsg/hash.hpp"
#include "catsg/nn.hpp"
#include "catsg/ontology.hpp"
#include "catsg/queries.hpp"
#include "catsg/scenegraph.hpp"

namespace catsg {

/// kCatSGG predicts from the last frame's queries; kCatSGGPlus max-pools
/// same-class queries over the whole chunk first.
enum class Variant { kCatSGG, kCatSGGPlus };

NLOHMANN_JSON_SERIALIZE_ENUM(Variant, {{Variant::kCatSGG, "CatSGG"},
                                       {Variant::kCatSGGPlus, "CatSGG+"}})

inline std::string variant_name(Variant v) { return v == Variant::kCatSGG ? "CatSGG" : "CatSGG+"; }

inline Variant parse_variant(const std::string& s) {
  std::string l;
  for (char c : s) l += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (l == "catsgg" || l == "base") return Variant::kCatSGG;
  if (l == "catsgg+" || l == "catsggplus" || l == "plus") return Variant::kCatSGGPlus;
  throw ConfigError("unknown variant `" + s + "` (expected CatSGG or CatSGG+)");
}

// ---------------------------------------------------------------------------
// Pair proposals

struct PairProposal {
  int subject_class = 0;
  int object_class = 0;
  QueryVector embedding;  // [q_subject; q_object]
};

/// Ordered pairs (tool subject, any other object) sorted by (subject,
/// object). T tools and A anatomy classes give T*(T-1+A) proposals.
inline std::vector<PairProposal> build_pair_proposals(
    const QueryMap& queries, const Ontology& onto = Ontology::default_instance()) {
  std::vector<PairProposal> out;
  for (const auto& [s, qs] : queries) {
    if (!onto.is_tool(s)) continue;
    for (const auto& [o, qo] : queries) {
      if (o == s) continue;
      if (qo.size() != qs.size())
        throw InconsistentDim("queries for classes " + std::to_string(s) + " and " +
                              std::to_string(o) + " differ in width");
      PairProposal p;
      p.subject_class = s;
      p.object_class = o;
      p.embedding.resize(qs.size() + qo.size());
      p.embedding << qs, qo;
      out.push_back(std::move(p));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Heads

struct RelHeadsConfig {
  int dim = 256;
  int h1 = 512;
  int h2 = 512;
  int h3 = 256;
  double tau_e = 0.5;
  double tau_c = 0.5;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RelHeadsConfig, dim, h1, h2, h3, tau_e, tau_c)

struct PairPrediction {
  int subject_class = 0;
  int object_class = 0;
  double existence = 0.0;
  bool classifier_evaluated = false;
  std::array<double, kNumSemanticPredicates> scores{};  // zero unless evaluated
  std::uint32_t labels = 0;                             // bit k = semantic predicate k
};

/// Existence head 2D->H1->1 and classification head 2D->H2->H3->7, both
/// trained with sigmoid binary cross-entropy.
template <typename S>
class RelHeads {
 public:
  struct Losses {
    double existence = 0.0;
    double classification = 0.0;
    std::size_t pairs = 0;
    std::size_t positives = 0;
  };

  explicit RelHeads(RelHeadsConfig cfg = {})
      : cfg_(cfg),
        existence_({2 * cfg.dim, cfg.h1, 1}),
        classification_({2 * cfg.dim, cfg.h2, cfg.h3, kNumSemanticPredicates}) {
    if (cfg.dim <= 0) throw ConfigError("relation heads need dim > 0");
    if (cfg.tau_e < 0.0 || cfg.tau_e > 1.0 || cfg.tau_c < 0.0 || cfg.tau_c > 1.0)
      throw ConfigError("thresholds must lie in [0, 1]");
  }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(derive_seed(seed, "relheads-init"));
    existence_.init(rng);
    classification_.init(rng);
  }

  const RelHeadsConfig& config() const { return cfg_; }
  nn::Mlp<S>& existence() { return existence_; }
  nn::Mlp<S>& classification() { return classification_; }
  const nn::Mlp<S>& existence() const { return existence_; }
  const nn::Mlp<S>& classification() const { return classification_; }

  std::vector<nn::ParamView<S>> params() {
    std::vector<nn::ParamView<S>> out;
    existence_.collect(out, "existence");
    classification_.collect(out, "classification");
    return out;
  }

  void zero_grad() {
    existence_.zero_grad();
    classification_.zero_grad();
  }

  /// Losses for a batch of pair columns X (2D x N). `has_rel[n]` is the
  /// existence target; `cls_targets` (7 x N) is read only where has_rel is
  /// set. Existence loss averages over all pairs, classification loss over
  /// (relation-bearing pair, predicate) entries. Gradients of their sum are
  /// accumulated when `backward` is true.
  Losses forward_backward(const nn::Mat<S>& X, const std::vector<int>& has_rel,
                          const nn::Mat<S>& cls_targets, bool backward = true) {
    const auto n = X.cols();
    if (static_cast<Eigen::Index>(has_rel.size()) != n || cls_targets.cols() != n ||
        cls_targets.rows() != kNumSemanticPredicates)
      throw DimensionMismatch("relation batch targets do not match the pair count");
    Losses out;
    out.pairs = static_cast<std::size_t>(n);
    if (n == 0) return out;

    typename nn::Mlp<S>::Cache ec;
    const nn::Mat<S> ez = existence_.forward(X, backward ? &ec : nullptr);
    nn::Mat<S> dez(1, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const S y = has_rel[static_cast<std::size_t>(i)] ? S(1) : S(0);
      out.existence += static_cast<double>(nn::bce_with_logit(ez(0, i), y));
      dez(0, i) = (nn::sigmoid(ez(0, i)) - y) / static_cast<S>(n);
    }
    out.existence /= static_cast<double>(n);
    if (backward) existence_.backward(ec, dez);

    std::vector<Eigen::Index> pos;
    for (Eigen::Index i = 0; i < n; ++i)
      if (has_rel[static_cast<std::size_t>(i)]) pos.push_back(i);
    out.positives = pos.size();
    if (pos.empty()) return out;
    nn::Mat<S> Xp(X.rows(), static_cast<Eigen::Index>(pos.size()));
    nn::Mat<S> Yp(kNumSemanticPredicates, Xp.cols());
    for (std::size_t k = 0; k < pos.size(); ++k) {
      Xp.col(static_cast<Eigen::Index>(k)) = X.col(pos[k]);
      Yp.col(static_cast<Eigen::Index>(k)) = cls_targets.col(pos[k]);
    }
    typename nn::Mlp<S>::Cache cc;
    const nn::Mat<S> cz = classification_.forward(Xp, backward ? &cc : nullptr);
    const S scale = S(1) / static_cast<S>(cz.size());
    nn::Mat<S> dcz(cz.rows(), cz.cols());
    for (Eigen::Index j = 0; j < cz.cols(); ++j)
      for (Eigen::Index k = 0; k < cz.rows(); ++k) {
        out.classification += static_cast<double>(nn::bce_with_logit(cz(k, j), Yp(k, j)));
        dcz(k, j) = (nn::sigmoid(cz(k, j)) - Yp(k, j)) * scale;
      }
    out.classification /= static_cast<double>(cz.size());
    if (backward) classification_.backward(cc, dcz);
    return out;
  }

 private:
  RelHeadsConfig cfg_;
  nn::Mlp<S> existence_;
  nn::Mlp<S> classification_;
};

/// Gated prediction: the classifier only runs on pairs whose existence
/// probability reaches tau_e; labels are the predicates scoring >= tau_c.
template <typename S>
std::vector<PairPrediction> predict(const RelHeads<S>& heads,
                                    const std::vector<PairProposal>& proposals) {
  const auto& cfg = heads.config();
  const Eigen::Index width = 2 * cfg.dim;
  std::vector<PairPrediction> out(proposals.size());
  if (proposals.empty()) return out;
  nn::Mat<S> X(width, static_cast<Eigen::Index>(proposals.size()));
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (proposals[i].embedding.size() != width)
      throw DimensionMismatch("pair embedding has width " +
                              std::to_string(proposals[i].embedding.size()) + ", heads expect " +
                              std::to_string(width));
    X.col(static_cast<Eigen::Index>(i)) = proposals[i].embedding.template cast<S>();
    out[i].subject_class = proposals[i].subject_class;
    out[i].object_class = proposals[i].object_class;
  }
  const nn::Mat<S> ez = heads.existence().forward(X);
  std::vector<Eigen::Index> open;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].existence = static_cast<double>(nn::sigmoid(ez(0, static_cast<Eigen::Index>(i))));
    if (out[i].existence >= cfg.tau_e) open.push_back(static_cast<Eigen::Index>(i));
  }
  if (open.empty()) return out;
  nn::Mat<S> Xo(width, static_cast<Eigen::Index>(open.size()));
  for (std::size_t k = 0; k < open.size(); ++k) Xo.col(static_cast<Eigen::Index>(k)) = X.col(open[k]);
  const nn::Mat<S> cz = heads.classification().forward(Xo);
  for (std::size_t k = 0; k < open.size(); ++k) {
    auto& p = out[static_cast<std::size_t>(open[k])];
    p.classifier_evaluated = true;
    for (int c = 0; c < kNumSemanticPredicates; ++c) {
      p.scores[static_cast<std::size_t>(c)] =
          static_cast<double>(nn::sigmoid(cz(c, static_cast<Eigen::Index>(k))));
      if (p.scores[static_cast<std::size_t>(c)] >= cfg.tau_c) p.labels |= 1U << c;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Chunks

/// Element-wise max over each class's vectors across the frames where the
/// class appears.
inline QueryMap pool_chunk_queries(const std::vector<QueryMap>& frames) {
  QueryMap out;
  Eigen::Index width = -1;
  for (const auto& frame : frames) {
    for (const auto& [cls, q] : frame) {
      if (width < 0) width = q.size();
      if (q.size() != width)
        throw InconsistentDim("query width " + std::to_string(q.size()) + " differs from " +
                              std::to_string(width));
      auto it = out.find(cls);
      if (it == out.end())
        out.emplace(cls, q);
      else
        it->second = it->second.cwiseMax(q);
    }
  }
  return out;
}

/// Queries used for the pairs of frame position `t`. Pooled vectors are
/// restricted to classes present in frame t so every output relation has
/// both endpoints in the predicted frame.
inline QueryMap frame_pair_queries(const QueryProvider& provider, const VideoRecord& video, int t,
                                   Variant variant, int chunk_size) {
  if (t < 0 || t >= static_cast<int>(video.frames.size()))
    throw ChunkOutOfRange("frame position " + std::to_string(t) + " outside video " +
                          video.video_id);
  if (variant == Variant::kCatSGG) return provider.frame_queries(video, t);
  QueryMap pooled = pool_chunk_queries(provider.chunk_queries(video, {t, chunk_size}));
  QueryMap out;
  for (const auto& e : video.frames[static_cast<std::size_t>(t)].entities) {
    auto it = pooled.find(e.cls);
    if (it != pooled.end()) out.emplace(e.cls, std::move(it->second));
  }
  return out;
}

/// Predicted semantic scene graph for frame position t. Entities are copied
/// from the input frame; relations hold predicted semantic labels only.
template <typename S>
FrameSceneGraph infer_frame(const RelHeads<S>& heads, const QueryProvider& provider,
                            const VideoRecord& video, int t, Variant variant, int chunk_size = 8,
                            const Ontology& onto = Ontology::default_instance(),
                            std::vector<PairPrediction>* trace = nullptr) {
  const QueryMap q = frame_pair_queries(provider, video, t, variant, chunk_size);
  auto preds = predict(heads, build_pair_proposals(q, onto));
  const auto& src = video.frames[static_cast<std::size_t>(t)];
  FrameSceneGraph g;
  g.video_id = src.video_id;
  g.frame_idx = src.frame_idx;
  g.time_s = src.time_s;
  g.phase = src.phase;
  g.technique = src.technique;
  g.entities = src.entities;
  for (const auto& p : preds) {
    if (p.existence < heads.config().tau_e && p.labels != 0)
      throw Error("gate violation: labels emitted for a pair below the existence threshold");
    for (int k = 0; k < kNumSemanticPredicates; ++k)
      if (p.labels & (1U << k)) {
        const Entity* s = g.find_class(p.subject_class);
        const Entity* o = g.find_class(p.object_class);
        g.relations.push_back({s->id, o->id, k});
      }
  }
  std::sort(g.relations.begin(), g.relations.end());
  if (trace) *trace = std::move(preds);
  return g;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int chunks_per_video = 18;
  int chunk_size = 8;
  int epochs = 40;
  int batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  std::string optimizer = "sgd";
  double weight_decay = 0.0;
  std::uint64_t seed = 42;
  Variant variant = Variant::kCatSGG;
  int h1 = 512;
  int h2 = 512;
  int h3 = 256;
  double tau_e = 0.5;
  double tau_c = 0.5;

  void validate() const {
    if (chunks_per_video <= 0) throw ConfigError("chunks_per_video must be > 0");
    if (chunk_size <= 0) throw ConfigError("chunk_size must be > 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size <= 0) throw ConfigError("batch_size must be > 0");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (optimizer != "sgd" && optimizer != "adam")
      throw ConfigError("optimizer must be `sgd` or `adam`");
  }

  nn::OptimizerConfig optimizer_config() const {
    nn::OptimizerConfig o;
    o.kind = optimizer == "adam" ? nn::OptimizerConfig::Kind::kAdam : nn::OptimizerConfig::Kind::kSgd;
    o.lr = lr;
    o.momentum = momentum;
    o.weight_decay = weight_decay;
    return o;
  }

  RelHeadsConfig heads_config(int dim) const { return {dim, h1, h2, h3, tau_e, tau_c}; }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, chunks_per_video, chunk_size, epochs,
                                                batch_size, lr, momentum, optimizer, weight_decay,
                                                seed, variant, h1, h2, h3, tau_e, tau_c)

inline bool has_semantic_relation(const FrameSceneGraph& f, const Ontology& onto) {
  return std::any_of(f.relations.begin(), f.relations.end(),
                     [&](const RelationInstance& r) { return onto.is_semantic(r.pred); });
}

/// Chunks whose last frame carries a semantic relation: without replacement
/// when enough positions qualify, otherwise uniformly with replacement.
inline std::vector<ChunkRange> sample_training_chunks(
    const VideoRecord& video, const TrainConfig& cfg, std::mt19937_64& rng,
    const Ontology& onto = Ontology::default_instance()) {
  const int n = static_cast<int>(video.frames.size());
  if (n < cfg.chunk_size)
    throw ChunkOutOfRange(video.video_id + " has fewer frames than one chunk");
  std::vector<int> ends;
  for (int p = cfg.chunk_size - 1; p < n; ++p)
    if (has_semantic_relation(video.frames[static_cast<std::size_t>(p)], onto)) ends.push_back(p);
  if (ends.empty())
    throw NoQualifyingChunk(video.video_id + " has no frame with a semantic relation");
  std::vector<int> picked;
  const auto want = static_cast<std::size_t>(cfg.chunks_per_video);
  if (ends.size() >= want) {
    std::sample(ends.begin(), ends.end(), std::back_inserter(picked), want, rng);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, ends.size() - 1);
    for (std::size_t i = 0; i < want; ++i) picked.push_back(ends[pick(rng)]);
  }
  std::vector<ChunkRange> out;
  for (int e : picked) out.push_back({e, cfg.chunk_size});
  return out;
}

struct TrainingLog {
  struct Epoch {
    int epoch = 0;
    double existence_loss = 0.0;
    double classification_loss = 0.0;
    std::size_t pairs = 0;
    std::size_t positives = 0;
  };
  std::vector<Epoch> epochs;
  std::vector<std::string> warnings;

  std::string to_jsonl() const {
    std::ostringstream out;
    for (const auto& e : epochs) {
      nlohmann::ordered_json j;
      j["epoch"] = e.epoch;
      j["existence_loss"] = e.existence_loss;
      j["classification_loss"] = e.classification_loss;
      j["pairs"] = e.pairs;
      j["positives"] = e.positives;
      out << j.dump() << '\n';
    }
    return out.str();
  }
};

/// Pair columns and targets for the last frame of each chunk.
template <typename S>
struct PairBatch {
  nn::Mat<S> X;
  std::vector<int> has_rel;
  nn::Mat<S> targets;
};

template <typename S>
PairBatch<S> collect_training_pairs(const QueryProvider& provider, const VideoRecord& video,
                                    const std::vector<ChunkRange>& chunks, Variant variant,
                                    const Ontology& onto) {
  std::vector<QueryVector> cols;
  std::vector<int> has;
  std::vector<std::uint32_t> bits;
  for (const auto& c : chunks) {
    const auto& f = video.frames[static_cast<std::size_t>(c.end)];
    std::map<std::pair<int, int>, std::uint32_t> gt;
    for (const auto& r : f.relations) {
      if (!onto.is_semantic(r.pred)) continue;
      const Entity* s = f.find(r.sub);
      const Entity* o = f.find(r.obj);
      gt[{s->cls, o->cls}] |= 1U << r.pred;
    }
    for (auto& p : build_pair_proposals(frame_pair_queries(provider, video, c.end, variant,
                                                           c.length),
                                        onto)) {
      auto it = gt.find({p.subject_class, p.object_class});
      const std::uint32_t b = it == gt.end() ? 0U : it->second;
      cols.push_back(std::move(p.embedding));
      has.push_back(b != 0);
      bits.push_back(b);
    }
  }
  PairBatch<S> out;
  const Eigen::Index width = cols.empty() ? 0 : cols.front().size();
  out.X.resize(width, static_cast<Eigen::Index>(cols.size()));
  out.targets = nn::Mat<S>::Zero(kNumSemanticPredicates, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    out.X.col(static_cast<Eigen::Index>(i)) = cols[i].template cast<S>();
    for (int k = 0; k < kNumSemanticPredicates; ++k)
      out.targets(k, static_cast<Eigen::Index>(i)) = (bits[i] >> k) & 1U ? S(1) : S(0);
  }
  out.has_rel = std::move(has);
  return out;
}

/// Minibatch training of both heads. Chunks are re-sampled every epoch from
/// a stream seeded by cfg.seed; videos with no qualifying chunk are skipped
/// with a warning.
template <typename S>
TrainingLog train(RelHeads<S>& heads, const QueryProvider& provider,
                  const std::vector<VideoRecord>& videos, const TrainConfig& cfg,
                  const Ontology& onto = Ontology::default_instance()) {
  cfg.validate();
  if (videos.empty()) throw EmptyDataset("relation training needs at least one video");
  if (provider.dim() != heads.config().dim)
    throw DimensionMismatch("provider dim " + std::to_string(provider.dim()) +
                            " differs from head dim " + std::to_string(heads.config().dim));
  TrainingLog log;
  std::mt19937_64 rng(derive_seed(cfg.seed, "relnet-train"));
  nn::Optimizer<S> opt(cfg.optimizer_config());
  auto params = heads.params();
  std::vector<bool> skipped(videos.size(), false);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<PairBatch<S>> parts;
    Eigen::Index total = 0;
    for (std::size_t v = 0; v < videos.size(); ++v) {
      if (skipped[v]) continue;
      std::vector<ChunkRange> chunks;
      try {
        chunks = sample_training_chunks(videos[v], cfg, rng, onto);
      } catch (const NoQualifyingChunk& e) {
        skipped[v] = true;
        log.warnings.push_back(std::string("skipping video: ") + e.what());
        continue;
      }
      parts.push_back(collect_training_pairs<S>(provider, videos[v], chunks, cfg.variant, onto));
      total += parts.back().X.cols();
    }
    if (total == 0) throw EmptyDataset("no training pairs after chunk sampling");

    PairBatch<S> all;
    all.X.resize(2 * heads.config().dim, total);
    all.targets.resize(kNumSemanticPredicates, total);
    Eigen::Index at = 0;
    for (auto& p : parts) {
      all.X.middleCols(at, p.X.cols()) = p.X;
      all.targets.middleCols(at, p.X.cols()) = p.targets;
      all.has_rel.insert(all.has_rel.end(), p.has_rel.begin(), p.has_rel.end());
      at += p.X.cols();
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);

    TrainingLog::Epoch rec;
    rec.epoch = epoch + 1;
    for (Eigen::Index start = 0; start < total; start += cfg.batch_size) {
      const Eigen::Index m = std::min<Eigen::Index>(cfg.batch_size, total - start);
      nn::Mat<S> X(all.X.rows(), m), Y(kNumSemanticPredicates, m);
      std::vector<int> has(static_cast<std::size_t>(m));
      for (Eigen::Index j = 0; j < m; ++j) {
        const Eigen::Index src = order[static_cast<std::size_t>(start + j)];
        X.col(j) = all.X.col(src);
        Y.col(j) = all.targets.col(src);
        has[static_cast<std::size_t>(j)] = all.has_rel[static_cast<std::size_t>(src)];
      }
      heads.zero_grad();
      const auto losses = heads.forward_backward(X, has, Y, true);
      if (!std::isfinite(losses.existence) || !std::isfinite(losses.classification))
        throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch + 1) +
                            ", batch starting at " + std::to_string(start) + " (existence " +
                            std::to_string(losses.existence) + ", classification " +
                            std::to_string(losses.classification) + ")");
      opt.step(params);
      rec.existence_loss += losses.existence * static_cast<double>(m);
      rec.classification_loss += losses.classification * static_cast<double>(losses.positives);
      rec.pairs += static_cast<std::size_t>(m);
      rec.positives += losses.positives;
    }
    rec.existence_loss /= static_cast<double>(rec.pairs);
    if (rec.positives) rec.classification_loss /= static_cast<double>(rec.positives);
    log.epochs.push_back(rec);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Evaluation

struct GateStats {
  std::size_t pairs = 0;
  std::size_t gate_open = 0;
  std::size_t classifier_runs = 0;
  std::size_t classifier_runs_below_gate = 0;
  std::size_t labels_below_gate = 0;
};

struct RelEvalResult {
  EvalReport report;
  GateStats gate;
  std::vector<FrameSceneGraph> predictions;
};

/// Predicts every frame of every video, adds geometric close_to from the
/// frame masks, and scores against the ground truth graphs.
template <typename S>
RelEvalResult evaluate_relnet(const RelHeads<S>& heads, const QueryProvider& provider,
                              const std::vector<VideoRecord>& videos, Variant variant,
                              int chunk_size = 8, int close_to_gap = 0,
                              const Ontology& onto = Ontology::default_instance(),
                              const RelationEvalPolicy& policy = {}) {
  RelEvalResult out;
  ConfusionCounter counter(relation_report_names(onto));
  std::vector<PairPrediction> trace;
  for (const auto& v : videos) {
    for (int t = 0; t < static_cast<int>(v.frames.size()); ++t) {
      FrameSceneGraph g = infer_frame(heads, provider, v, t, variant, chunk_size, onto, &trace);
      const auto& gt = v.frames[static_cast<std::size_t>(t)];
      for (const auto& r : infer_close_to(gt, close_to_gap, onto)) g.relations.push_back(r);
      std::sort(g.relations.begin(), g.relations.end());
      for (const auto& p : trace) {
        ++out.gate.pairs;
        const bool open = p.existence >= heads.config().tau_e;
        out.gate.gate_open += open;
        out.gate.classifier_runs += p.classifier_evaluated;
        if (!open) {
          out.gate.classifier_runs_below_gate += p.classifier_evaluated;
          out.gate.labels_below_gate += static_cast<std::size_t>(__builtin_popcount(p.labels));
        }
      }
      accumulate_relations(counter, g, gt, onto, policy);
      out.predictions.push_back(std::move(g));
    }
  }
  out.report = counter.report();
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr const char* kRelHeadsKind = "catsg-relheads";

template <typename S>
void save_rel_heads(const std::filesystem::path& path, RelHeads<S>& heads, const Ontology& onto,
                    const nlohmann::json& extra = nlohmann::json::object()) {
  Checkpoint ck;
  ck.header = extra;
  ck.header["kind"] = kRelHeadsKind;
  ck.header["ontology_fingerprint"] = onto.fingerprint_hex();
  ck.header["heads"] = heads.config();
  for (const auto& p : heads.params())
    for (Eigen::Index i = 0; i < p.size; ++i) ck.params.push_back(static_cast<double>(p.value[i]));
  save_checkpoint(path, ck);
}

template <typename S = double>
RelHeads<S> load_rel_heads(const std::filesystem::path& path, const Ontology& onto,
                           nlohmann::json* header = nullptr) {
  Checkpoint ck = load_checkpoint(path, kRelHeadsKind, onto.fingerprint_hex());
  RelHeads<S> heads;
  try {
    heads = RelHeads<S>(ck.header.at("heads").get<RelHeadsConfig>());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad relation-head header: ") + e.what());
  }
  std::size_t at = 0;
  for (const auto& p : heads.params()) {
    if (at + static_cast<std::size_t>(p.size) > ck.params.size())
      throw SchemaError("checkpoint parameter block too short");
    for (Eigen::Index i = 0; i < p.size; ++i) p.value[i] = static_cast<S>(ck.params[at++]);
  }
  if (at != ck.params.size()) throw SchemaError("checkpoint parameter block too long");
  if (header) *header = ck.header;
  return heads;
}

}  // namespace catsg
