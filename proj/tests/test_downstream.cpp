// SPDX-License-Identifier: Apache-2.0
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "catsg/downstream.hpp"
#include "catsg/synthdata.hpp"
#include "generators.hpp"

using namespace catsg;
using namespace catsg::testing;

namespace {

const Ontology& onto() { return Ontology::default_instance(); }

GraphInput random_input(Rng& rng, int frames, int W, bool spatial) {
  VideoRecord v;
  v.video_id = "v";
  for (int i = 0; i < frames; ++i) {
    auto f = random_frame(rng, onto(), false, 16, 16, 6);
    f.video_id = "v";
    f.frame_idx = i;
    f.time_s = i / 5.0;
    f.technique = 0;
    if (f.entities.empty()) {
      Entity e;
      e.id = 1;
      e.cls = onto().class_id("Cornea");
      e.grounding = {0.5, 0.5, 0.3, 0.2, 0.2, 0.8, 0.8};
      f.entities.push_back(e);
    }
    v.frames.push_back(f);
  }
  return make_graph_input(build_window(v, frames - 1, {W, 0.2, spatial}), spatial);
}

GatConfig tiny_config(bool spatial, int classes = kNumPhases) {
  GatConfig c;
  c.in_dim = kNumClasses + (spatial ? 3 : 0);
  c.hidden = 8;
  c.heads = 2;
  c.num_classes = classes;
  c.edge_types = num_edge_types(onto());
  return c;
}

// Relabels nodes by `perm` (new index of old node i is perm[i]) and
// re-sorts the edge list.
GraphInput permute(const GraphInput& gi, const std::vector<int>& perm) {
  GraphInput out;
  out.x.resize(gi.x.rows(), gi.x.cols());
  for (Eigen::Index i = 0; i < gi.x.rows(); ++i) out.x.row(perm[static_cast<std::size_t>(i)]) = gi.x.row(i);
  std::vector<std::tuple<int, int, int>> e;
  for (std::size_t k = 0; k < gi.src.size(); ++k)
    e.emplace_back(perm[static_cast<std::size_t>(gi.dst[k])], perm[static_cast<std::size_t>(gi.src[k])],
                   gi.type[k]);
  std::sort(e.begin(), e.end());
  for (const auto& [d, s, t] : e) {
    out.dst.push_back(d);
    out.src.push_back(s);
    out.type.push_back(t);
  }
  return out;
}

SimConfig small_sim(int videos) {
  SimConfig cfg;
  cfg.n_videos = videos;
  cfg.min_duration_s = 60;
  cfg.max_duration_s = 70;
  return cfg;
}

}  // namespace

TEST(Classifier, OutputIsDistribution) {
  Rng rng(1);
  GraphClassifier<double> m(tiny_config(true));
  m.init(1);
  for (int it = 0; it < 50; ++it) {
    const auto gi = random_input(rng, 12, uniform_int(rng, 1, 6), true);
    const auto p = m.classify(gi);
    ASSERT_EQ(p.size(), kNumPhases);
    EXPECT_NEAR(p.sum(), 1.0, 1e-6);
    EXPECT_GE(p.minCoeff(), 0.0);
  }
}

TEST(Classifier, ZeroHeadGivesUniform) {
  Rng rng(2);
  GraphClassifier<double> m(tiny_config(false, 2));
  m.init(2);
  m.head().W.setZero();
  m.head().b.setZero();
  const auto p = m.classify(random_input(rng, 10, 4, false));
  EXPECT_NEAR(p[0], 0.5, 1e-12);
  EXPECT_NEAR(p[1], 0.5, 1e-12);
}

TEST(Classifier, NodePermutationInvariance) {
  Rng rng(3);
  GraphClassifier<double> m(tiny_config(true));
  m.init(3);
  for (int it = 0; it < 50; ++it) {
    const auto gi = random_input(rng, 15, uniform_int(rng, 1, 8), true);
    std::vector<int> perm(static_cast<std::size_t>(gi.x.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto a = m.classify(gi), b = m.classify(permute(gi, perm));
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Classifier, DimensionMismatch) {
  Rng rng(4);
  GraphClassifier<double> m(tiny_config(true));
  m.init(4);
  EXPECT_THROW(m.classify(random_input(rng, 5, 2, false)), DimensionMismatch);
  EXPECT_THROW(m.loss(random_input(rng, 5, 2, true), 99), ConfigError);
  GatConfig bad = tiny_config(true);
  bad.heads = 3;
  EXPECT_THROW(GraphClassifier<double>{bad}, ConfigError);
}

TEST(Classifier, GradientCheck) {
  Rng rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    GraphClassifier<double> m(tiny_config(true));
    m.init(10 + trial);
    const auto gi = random_input(rng, 10, 3, true);
    const int label = uniform_int(rng, 0, kNumPhases - 1);
    m.zero_grad();
    m.loss(gi, label, true);
    std::size_t checked = 0;
    const double err = max_gradient_error(
        m.params(), [&] { return m.loss(gi, label, false); }, 1e-5, 1e-6, &checked);
    EXPECT_LE(err, 1e-3);
    EXPECT_GT(checked, 300u);
  }
}

TEST(Split, StratifiedDisjointDeterministic) {
  const auto videos = generate(small_sim(8));
  const auto s = split_videos(videos, 0.25, 42);
  EXPECT_NO_THROW(assert_disjoint(s));
  EXPECT_EQ(s.train.size() + s.test.size(), 8u);
  std::set<int> test_tech;
  for (const auto& v : select_videos(videos, s.test)) test_tech.insert(v.technique);
  EXPECT_EQ(test_tech.size(), 2u);
  const auto again = split_videos(videos, 0.25, 42);
  EXPECT_EQ(again.train, s.train);
  EXPECT_EQ(again.test, s.test);
  EXPECT_THROW(split_videos({videos[0]}, 0.25, 42), EmptySplit);
  EXPECT_THROW(split_videos(videos, 1.5, 42), ConfigError);
  EXPECT_THROW(assert_disjoint({{"a", "b"}, {"b"}}), ConfigError);
  EXPECT_THROW(select_videos(videos, {"nope"}), ConfigError);
}

TEST(Split, TrainingRefusesOverlap) {
  const auto videos = generate(small_sim(2));
  TaskConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(train_task(videos, cfg, onto(), {videos[0]}), ConfigError);
  EXPECT_THROW(train_task({}, cfg), EmptySplit);
}

TEST(Vote, MajorityAndTies) {
  EXPECT_EQ(majority_vote({1, 1, 0}, {}, 2), 1);
  EXPECT_EQ(majority_vote({0, 1}, {{0.6, 0.4}, {0.3, 0.7}}, 2), 1);
  EXPECT_EQ(majority_vote({0, 1}, {{0.7, 0.3}, {0.4, 0.6}}, 2), 0);
  EXPECT_EQ(majority_vote({0, 1}, {{0.5, 0.5}, {0.5, 0.5}}, 2), 0);
  EXPECT_THROW(majority_vote({}, {}, 2), EmptyDataset);
}

TEST(Windows, TechniqueWindowsCoverNucleusBreakingOnly) {
  const auto videos = generate(small_sim(2));
  TaskConfig cfg;
  cfg.task = "technique";
  cfg.window = window_preset("10s@5fps");
  cfg.window_stride = 3;
  const auto windows = task_windows(videos, cfg);
  ASSERT_FALSE(windows.empty());
  const int nucleus = onto().phase_id("Nucleus Breaking");
  for (const auto& w : windows) {
    EXPECT_EQ(videos[w.video].frames[static_cast<std::size_t>(w.end)].phase, nucleus);
    EXPECT_EQ(w.label, videos[w.video].technique);
  }
  cfg.task = "phase";
  cfg.window = window_preset("single");
  for (const auto& w : task_windows(videos, cfg))
    EXPECT_EQ(w.label, videos[w.video].frames[static_cast<std::size_t>(w.end)].phase);
}

TEST(Training, DeterministicAndCheckpointed) {
  TempDir dir;
  const auto videos = generate(small_sim(4));
  const auto split = split_videos(videos, 0.25, 42);
  const auto train = select_videos(videos, split.train), test = select_videos(videos, split.test);
  TaskConfig cfg;
  cfg.window = {3, 1.0, true};
  cfg.epochs = 2;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.window_stride = 20;
  auto a = train_task(train, cfg, onto(), test);
  auto b = train_task(train, cfg, onto(), test);
  EXPECT_EQ(a.log.to_jsonl(), b.log.to_jsonl());
  ASSERT_EQ(a.log.epochs.size(), 2u);
  EXPECT_TRUE(a.log.epochs[0].val_accuracy.has_value());

  const auto path = dir.path() / "model.ckpt";
  save_graph_classifier(path, a.model, cfg, onto());
  TaskConfig back_cfg;
  const auto back = load_graph_classifier(path, onto(), &back_cfg);
  EXPECT_EQ(nlohmann::json(back_cfg).dump(), nlohmann::json(cfg).dump());
  const auto ea = evaluate_task(a.model, test, cfg), eb = evaluate_task(back, test, cfg);
  EXPECT_EQ(ea.window_predictions, eb.window_predictions);
  EXPECT_FALSE(ea.videos.has_value());
  EXPECT_THROW(load_rel_heads<double>(path, onto()), SchemaError);

  std::string text(kDefaultOntologyText);
  text.replace(text.find("Hand = tool"), 11, "Hand = anatomy");
  EXPECT_THROW(load_graph_classifier(path, Ontology::parse(text)), FingerprintMismatch);
}

TEST(Training, TechniqueReportsPerVideoVote) {
  const auto videos = generate(small_sim(4));
  const auto split = split_videos(videos, 0.25, 42);
  TaskConfig cfg;
  cfg.task = "technique";
  cfg.window = {5, 0.2, true};
  cfg.epochs = 1;
  cfg.hidden = 8;
  cfg.heads = 2;
  cfg.window_stride = 5;
  auto r = train_task(select_videos(videos, split.train), cfg);
  const auto ev = evaluate_task(r.model, select_videos(videos, split.test), cfg);
  ASSERT_TRUE(ev.videos.has_value());
  EXPECT_EQ(ev.videos->units, split.test.size());
}

TEST(TaskConfigJson, ParseTask) {
  EXPECT_EQ(parse_task("phase"), Task::kPhase);
  EXPECT_EQ(parse_task("technique"), Task::kTechnique);
  EXPECT_THROW(parse_task("Phase"), ConfigError);
}

TEST(TaskConfigJson, Defaults) {
  const auto c = nlohmann::json::parse(R"({"task":"technique"})").get<TaskConfig>();
  EXPECT_EQ(c.task, "technique");
  EXPECT_EQ(c.window.W, 30);
  EXPECT_EQ(c.num_classes(onto()), 2);
  TaskConfig bad;
  bad.task = "x";
  EXPECT_THROW(bad.validate(), ConfigError);
}
