// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "catsg/checkpoint.hpp"
#include "catsg/dynamicgraph.hpp"
#include "catsg/errors.hpp"
#include "catsg/evaluation.hpp"
#include "catsg/gat.hpp"
#include "catsg/hash.hpp"
#include "catsg/nn.hpp"
#include "catsg/ontology.hpp"
#include "catsg/scenegraph.hpp"

namespace catsg {

enum class Task { kPhase, kTechnique };

inline Task parse_task(const std::string& s) {
  if (s == "phase") return Task::kPhase;
  if (s == "technique") return Task::kTechnique;
  throw ConfigError("unknown task `" + s + "` (expected phase or technique)");
}

struct TaskConfig {
  std::string task = "phase";
  WindowConfig window{30, 3.0, true};
  int epochs = 12;
  int batch_size = 16;
  double lr = 0.003;
  std::string optimizer = "adam";
  std::uint64_t seed = 42;
  int hidden = 64;
  int heads = 4;
  int window_stride = 5;  // native frames between consecutive window ends
  double test_fraction = 0.25;

  Task task_kind() const { return parse_task(task); }

  void validate() const {
    parse_task(task);
    window.validate();
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size <= 0) throw ConfigError("batch_size must be > 0");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (optimizer != "sgd" && optimizer != "adam")
      throw ConfigError("optimizer must be `sgd` or `adam`");
    if (window_stride <= 0) throw ConfigError("window_stride must be > 0");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
      throw ConfigError("test_fraction must lie in (0, 1)");
  }

  int num_classes(const Ontology& onto) const {
    return task_kind() == Task::kPhase ? static_cast<int>(onto.phases().size())
                                       : static_cast<int>(onto.techniques().size());
  }

  GatConfig gat_config(const Ontology& onto) const {
    GatConfig g;
    g.in_dim = onto.num_classes() + (window.spatial ? 3 : 0);
    g.hidden = hidden;
    g.heads = heads;
    g.num_classes = num_classes(onto);
    g.edge_types = num_edge_types(onto);
    return g;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TaskConfig, task, window, epochs, batch_size, lr,
                                                optimizer, seed, hidden, heads, window_stride,
                                                test_fraction)

// ---------------------------------------------------------------------------
// Split

struct VideoSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

inline void assert_disjoint(const VideoSplit& s) {
  std::set<std::string> a(s.train.begin(), s.train.end());
  for (const auto& id : s.test)
    if (a.count(id)) throw ConfigError("video " + id + " appears in both train and test");
}

/// Video-level split stratified by technique. Each technique contributes
/// round(n * test_fraction) test videos, at least one when it has two or
/// more videos.
inline VideoSplit split_videos(const std::vector<VideoRecord>& videos, double test_fraction,
                               std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("test_fraction must lie in (0, 1)");
  std::map<int, std::vector<std::string>> by_tech;
  for (const auto& v : videos) by_tech[v.technique].push_back(v.video_id);
  std::mt19937_64 rng(derive_seed(seed, "video-split"));
  VideoSplit s;
  for (auto& [tech, ids] : by_tech) {
    std::sort(ids.begin(), ids.end());
    std::shuffle(ids.begin(), ids.end(), rng);
    auto n_test = static_cast<std::size_t>(std::lround(static_cast<double>(ids.size()) * test_fraction));
    if (ids.size() >= 2) n_test = std::clamp<std::size_t>(n_test, 1, ids.size() - 1);
    else n_test = 0;
    s.test.insert(s.test.end(), ids.begin(), ids.begin() + static_cast<long>(n_test));
    s.train.insert(s.train.end(), ids.begin() + static_cast<long>(n_test), ids.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  if (s.train.empty() || s.test.empty())
    throw EmptySplit("split of " + std::to_string(videos.size()) +
                     " videos leaves an empty train or test side");
  assert_disjoint(s);
  return s;
}

inline std::vector<VideoRecord> select_videos(const std::vector<VideoRecord>& videos,
                                              const std::vector<std::string>& ids) {
  std::vector<VideoRecord> out;
  for (const auto& id : ids) {
    auto it = std::find_if(videos.begin(), videos.end(),
                           [&](const VideoRecord& v) { return v.video_id == id; });
    if (it == videos.end()) throw ConfigError("unknown video " + id);
    out.push_back(*it);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Windows

struct LabeledWindow {
  std::size_t video = 0;
  int end = 0;
  int label = 0;
  GraphInput input;
};

/// Phase: window ends every `window_stride` frames, labelled with the end
/// frame's phase. Technique: ends inside nucleus-breaking frames only,
/// labelled with the video technique.
inline std::vector<LabeledWindow> task_windows(const std::vector<VideoRecord>& videos,
                                               const TaskConfig& cfg,
                                               const Ontology& onto = Ontology::default_instance(),
                                               const std::string& nucleus_phase = "Nucleus Breaking") {
  const Task task = cfg.task_kind();
  const int nucleus = onto.phase_id(nucleus_phase);
  std::vector<LabeledWindow> out;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const auto& vid = videos[v];
    std::vector<int> ends;
    for (int t = 0; t < static_cast<int>(vid.frames.size()); ++t)
      if (task == Task::kPhase || vid.frames[static_cast<std::size_t>(t)].phase == nucleus)
        ends.push_back(t);
    for (std::size_t i = 0; i < ends.size(); i += static_cast<std::size_t>(cfg.window_stride)) {
      LabeledWindow w;
      w.video = v;
      w.end = ends[i];
      const DynamicSceneGraph g = build_window(vid, w.end, cfg.window);
      w.label = task == Task::kPhase ? g.phase : g.technique;
      w.input = make_graph_input(g, cfg.window.spatial, onto);
      out.push_back(std::move(w));
    }
  }
  return out;
}

/// Most frequent label; ties go to the larger summed probability, then the
/// smaller label.
inline int majority_vote(const std::vector<int>& labels, const std::vector<std::vector<double>>& probs,
                         int num_classes) {
  if (labels.empty()) throw EmptyDataset("majority vote over zero windows");
  std::vector<int> count(static_cast<std::size_t>(num_classes), 0);
  std::vector<double> mass(static_cast<std::size_t>(num_classes), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++count[static_cast<std::size_t>(labels[i])];
    if (i < probs.size())
      for (int k = 0; k < num_classes; ++k) mass[static_cast<std::size_t>(k)] += probs[i][static_cast<std::size_t>(k)];
  }
  int best = 0;
  for (int k = 1; k < num_classes; ++k) {
    const auto uk = static_cast<std::size_t>(k), ub = static_cast<std::size_t>(best);
    if (count[uk] > count[ub] || (count[uk] == count[ub] && mass[uk] > mass[ub])) best = k;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Training and evaluation

struct TaskLog {
  struct Epoch {
    int epoch = 0;
    double loss = 0.0;
    double train_accuracy = 0.0;
    std::optional<double> val_accuracy;
  };
  std::vector<Epoch> epochs;

  std::string to_jsonl() const {
    std::ostringstream out;
    for (const auto& e : epochs) {
      nlohmann::ordered_json j;
      j["epoch"] = e.epoch;
      j["loss"] = e.loss;
      j["train_accuracy"] = e.train_accuracy;
      j["val_accuracy"] = e.val_accuracy ? nlohmann::ordered_json(*e.val_accuracy) : nullptr;
      out << j.dump() << '\n';
    }
    return out.str();
  }
};

struct TaskEvalResult {
  EvalReport windows;                 // per-window classification
  std::optional<EvalReport> videos;   // technique task: per-video majority vote
  std::vector<int> window_predictions;
};

inline double window_accuracy(const GraphClassifier<double>& model,
                              const std::vector<LabeledWindow>& windows) {
  if (windows.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& w : windows) {
    const auto p = model.classify(w.input);
    Eigen::Index arg;
    p.maxCoeff(&arg);
    ok += static_cast<int>(arg) == w.label;
  }
  return static_cast<double>(ok) / static_cast<double>(windows.size());
}

struct TaskTrainResult {
  GraphClassifier<double> model;
  TaskLog log;
};

/// Cross-entropy training over labelled windows. `val` may be empty.
inline TaskTrainResult train_task(const std::vector<VideoRecord>& train_videos,
                                  const TaskConfig& cfg,
                                  const Ontology& onto = Ontology::default_instance(),
                                  const std::vector<VideoRecord>& val_videos = {}) {
  cfg.validate();
  if (train_videos.empty()) throw EmptySplit("no training videos");
  {
    VideoSplit s;
    for (const auto& v : train_videos) s.train.push_back(v.video_id);
    for (const auto& v : val_videos) s.test.push_back(v.video_id);
    assert_disjoint(s);
  }
  const auto train = task_windows(train_videos, cfg, onto);
  if (train.empty()) throw EmptySplit("no training windows");
  const auto val = val_videos.empty() ? std::vector<LabeledWindow>{}
                                      : task_windows(val_videos, cfg, onto);

  TaskTrainResult r{GraphClassifier<double>(cfg.gat_config(onto)), {}};
  r.model.init(cfg.seed);
  nn::OptimizerConfig oc;
  oc.kind = cfg.optimizer == "adam" ? nn::OptimizerConfig::Kind::kAdam : nn::OptimizerConfig::Kind::kSgd;
  oc.lr = cfg.lr;
  nn::Optimizer<double> opt(oc);
  auto params = r.model.params();
  std::mt19937_64 rng(derive_seed(cfg.seed, "task-train"));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    TaskLog::Epoch rec;
    rec.epoch = epoch + 1;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      r.model.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const auto& w = train[order[i]];
        int pred = -1;
        const double l = r.model.loss(w.input, w.label, true, &pred);
        correct += pred == w.label;
        if (!std::isfinite(l))
          throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch + 1) + " on " +
                              train_videos[w.video].video_id + " window ending at " +
                              std::to_string(w.end));
        rec.loss += l;
      }
      opt.step(params, 1.0 / static_cast<double>(end - start));
    }
    rec.loss /= static_cast<double>(train.size());
    // Accuracy of the predictions made during the epoch, before each update.
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    if (!val.empty()) rec.val_accuracy = window_accuracy(r.model, val);
    r.log.epochs.push_back(rec);
  }
  return r;
}

inline TaskEvalResult evaluate_task(const GraphClassifier<double>& model,
                                    const std::vector<VideoRecord>& videos, const TaskConfig& cfg,
                                    const Ontology& onto = Ontology::default_instance()) {
  const auto windows = task_windows(videos, cfg, onto);
  if (windows.empty()) throw EmptySplit("no evaluation windows");
  const int k = cfg.num_classes(onto);
  const std::vector<std::string> names =
      cfg.task_kind() == Task::kPhase ? onto.phases() : onto.techniques();
  std::vector<int> preds, gts;
  std::map<std::size_t, std::pair<std::vector<int>, std::vector<std::vector<double>>>> per_video;
  for (const auto& w : windows) {
    const auto p = model.classify(w.input);
    Eigen::Index arg;
    p.maxCoeff(&arg);
    preds.push_back(static_cast<int>(arg));
    gts.push_back(w.label);
    auto& pv = per_video[w.video];
    pv.first.push_back(static_cast<int>(arg));
    pv.second.emplace_back(p.data(), p.data() + p.size());
  }
  TaskEvalResult r;
  r.windows = evaluate_classification(preds, gts, k, names);
  r.window_predictions = preds;
  if (cfg.task_kind() == Task::kTechnique) {
    std::vector<int> vp, vg;
    for (const auto& [v, pv] : per_video) {
      vp.push_back(majority_vote(pv.first, pv.second, k));
      vg.push_back(videos[v].technique);
    }
    r.videos = evaluate_classification(vp, vg, k, names);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr const char* kGraphClassifierKind = "catsg-graph-classifier";

inline void save_graph_classifier(const std::filesystem::path& path, GraphClassifier<double>& model,
                                  const TaskConfig& cfg, const Ontology& onto) {
  Checkpoint ck;
  ck.header["kind"] = kGraphClassifierKind;
  ck.header["ontology_fingerprint"] = onto.fingerprint_hex();
  ck.header["model"] = model.config();
  ck.header["task"] = cfg;
  for (const auto& p : model.params())
    for (Eigen::Index i = 0; i < p.size; ++i) ck.params.push_back(p.value[i]);
  save_checkpoint(path, ck);
}

inline GraphClassifier<double> load_graph_classifier(const std::filesystem::path& path,
                                                     const Ontology& onto,
                                                     TaskConfig* cfg_out = nullptr) {
  Checkpoint ck = load_checkpoint(path, kGraphClassifierKind, onto.fingerprint_hex());
  GatConfig gc;
  try {
    gc = ck.header.at("model").get<GatConfig>();
    if (cfg_out) *cfg_out = ck.header.at("task").get<TaskConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad classifier header: ") + e.what());
  }
  GraphClassifier<double> model(gc);
  std::size_t at = 0;
  for (const auto& p : model.params()) {
    if (at + static_cast<std::size_t>(p.size) > ck.params.size())
      throw SchemaError("checkpoint parameter block too short");
    for (Eigen::Index i = 0; i < p.size; ++i) p.value[i] = ck.params[at++];
  }
  if (at != ck.params.size()) throw SchemaError("checkpoint parameter block too long");
  return model;
}

}  // namespace catsg
