// SPDX-License-Identifier: Apache-2.0
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "catsg/dynamicgraph.hpp"
#include "catsg/synthdata.hpp"
#include "generators.hpp"

using namespace catsg;
using namespace catsg::testing;

namespace {

const Ontology& onto() { return Ontology::default_instance(); }

VideoRecord random_video(Rng& rng, int frames) {
  VideoRecord v;
  v.video_id = "v";
  v.fps = 5.0;
  for (int i = 0; i < frames; ++i) {
    auto f = random_frame(rng, onto(), false, 16, 16, 6);
    f.video_id = "v";
    f.frame_idx = i;
    f.time_s = i / 5.0;
    f.technique = 0;
    v.frames.push_back(f);
  }
  return v;
}

FrameSceneGraph frame_with(const std::vector<std::string>& classes, int idx) {
  FrameSceneGraph f;
  f.video_id = "v";
  f.frame_idx = idx;
  f.time_s = idx / 5.0;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    Entity e;
    e.id = static_cast<int>(i) + 1;
    e.cls = onto().class_id(classes[i]);
    e.grounding = {0.5, 0.5, 0.3, 0.2, 0.2, 0.8, 0.8};
    f.entities.push_back(e);
  }
  return f;
}

}  // namespace

TEST(Window, SingleSlotHasNoTemporalEdges) {
  Rng rng(1);
  const auto v = random_video(rng, 20);
  const auto g = build_window(v, 10, window_preset("single"));
  EXPECT_EQ(g.slot_positions, std::vector<int>{10});
  EXPECT_TRUE(g.temporal_edges.empty());
  EXPECT_EQ(g.nodes.size(), v.frames[10].entities.size());
  EXPECT_EQ(g.phase, v.frames[10].phase);
}

TEST(Window, TwoSlotsSharingTwoClasses) {
  VideoRecord v;
  v.video_id = "v";
  for (int i = 0; i < 10; ++i)
    v.frames.push_back(frame_with({"Cornea", "Phacoemulsification Handpiece"}, i));
  const auto g = build_window(v, 9, {2, 1.0, true});
  EXPECT_EQ(g.slot_positions, (std::vector<int>{4, 9}));
  ASSERT_EQ(g.temporal_edges.size(), 2u);
  for (const auto& e : g.temporal_edges) {
    EXPECT_EQ(g.nodes[e.src].slot, 0);
    EXPECT_EQ(g.nodes[e.dst].slot, 1);
    EXPECT_EQ(g.nodes[e.src].cls, g.nodes[e.dst].cls);
  }
}

TEST(Window, PhaseWindowSlotsAreFifteenFramesApart) {
  VideoRecord v;
  v.video_id = "v";
  for (int i = 0; i < 600; ++i) v.frames.push_back(frame_with({"Cornea"}, i));
  const auto g = build_window(v, 500, window_preset("w30s90"));
  ASSERT_EQ(g.slot_positions.size(), 30u);
  EXPECT_EQ(g.slot_positions.front(), 500 - 29 * 15);
  for (std::size_t k = 1; k < 30; ++k) EXPECT_EQ(g.slot_positions[k] - g.slot_positions[k - 1], 15);
  EXPECT_EQ(g.temporal_edges.size(), 29u);
  // Underflow clamps to frame 0 and keeps W slots.
  const auto early = build_window(v, 20, window_preset("w30s90"));
  EXPECT_EQ(early.slot_positions.size(), 30u);
  EXPECT_EQ(early.slot_positions.front(), 0);
  EXPECT_EQ(early.slot_positions.back(), 20);
}

TEST(Window, Presets) {
  EXPECT_EQ(window_preset("10s@5fps").W, 50);
  EXPECT_EQ(window_preset("10s@5fps").step(5.0), 1);
  EXPECT_EQ(window_preset("50s@1fps").step(5.0), 5);
  EXPECT_EQ(window_preset("w30s90").step(5.0), 15);
  EXPECT_THROW(window_preset("nope"), ConfigError);
}

TEST(Window, InvalidConfigs) {
  Rng rng(2);
  const auto v = random_video(rng, 10);
  EXPECT_THROW(build_window(v, 0, {0, 1.0, true}), InvalidWindow);
  EXPECT_THROW(build_window(v, 0, {3, 0.0, true}), InvalidWindow);
  EXPECT_THROW(build_window(v, 0, {3, 0.01, true}), InvalidWindow);
  EXPECT_THROW(build_window(v, 10, {1, 1.0, true}), InvalidWindow);
  EXPECT_THROW(build_window(v, -1, {1, 1.0, true}), InvalidWindow);
  EXPECT_NO_THROW(build_window(v, 0, {1, 0.0, true}));
}

TEST(Window, TemporalEdgeCountFormula) {
  Rng rng(3);
  for (int it = 0; it < 200; ++it) {
    const auto v = random_video(rng, 60);
    const WindowConfig cfg{uniform_int(rng, 1, 12), 0.2 * uniform_int(rng, 1, 5), true};
    const int end = uniform_int(rng, 0, 59);
    const auto g = build_window(v, end, cfg);
    std::size_t expected = 0;
    for (std::size_t k = 0; k + 1 < g.slot_positions.size(); ++k) {
      std::set<int> a, b;
      for (const auto& e : v.frames[g.slot_positions[k]].entities) a.insert(e.cls);
      for (const auto& e : v.frames[g.slot_positions[k + 1]].entities) b.insert(e.cls);
      for (int c : a) expected += b.count(c);
    }
    EXPECT_EQ(g.temporal_edges.size(), expected);
    std::size_t rel = 0;
    for (int p : g.slot_positions) rel += v.frames[p].relations.size();
    EXPECT_EQ(g.relation_edges.size(), rel);
    for (const auto& e : g.temporal_edges)
      EXPECT_EQ(g.nodes[e.dst].slot, g.nodes[e.src].slot + 1);
    for (const auto& e : g.relation_edges) EXPECT_EQ(g.nodes[e.src].slot, g.nodes[e.dst].slot);
    for (std::size_t i = 1; i < g.nodes.size(); ++i)
      EXPECT_LT(std::make_pair(g.nodes[i - 1].slot, g.nodes[i - 1].cls),
                std::make_pair(g.nodes[i].slot, g.nodes[i].cls));
  }
}

TEST(Features, WidthsAndRows) {
  VideoRecord v;
  v.video_id = "v";
  v.frames.push_back(frame_with({"Cornea"}, 0));
  const auto g = build_window(v, 0, {});
  const auto on = encode_features(g, true), off = encode_features(g, false);
  EXPECT_EQ(on.cols(), 32);
  EXPECT_EQ(off.cols(), 29);
  Eigen::RowVectorXd expect = Eigen::RowVectorXd::Zero(32);
  expect[onto().class_id("Cornea")] = 1.0;
  expect[29] = 0.5;
  expect[30] = 0.5;
  expect[31] = 0.3;
  EXPECT_EQ(on.row(0), expect);
  EXPECT_EQ(off.row(0), expect.head(29));
}

TEST(Features, CanonicalUnderEntityShuffle) {
  Rng rng(4);
  for (int it = 0; it < 50; ++it) {
    auto v = random_video(rng, 30);
    const WindowConfig cfg{5, 1.0, true};
    const auto g = build_window(v, 29, cfg);
    for (auto& f : v.frames) {
      std::shuffle(f.entities.begin(), f.entities.end(), rng);
      std::shuffle(f.relations.begin(), f.relations.end(), rng);
    }
    const auto h = build_window(v, 29, cfg);
    EXPECT_EQ(encode_features(g, true), encode_features(h, true));
    EXPECT_EQ(g.relation_edges, h.relation_edges);
    EXPECT_EQ(g.temporal_edges, h.temporal_edges);
  }
}

TEST(Features, PureAndDumpable) {
  SimConfig cfg;
  cfg.n_videos = 1;
  cfg.max_duration_s = 60;
  const auto v = generate(cfg).front();
  const auto a = build_window(v, 200, window_preset("w30s90"));
  const auto b = build_window(v, 200, window_preset("w30s90"));
  EXPECT_EQ(encode_features(a, true), encode_features(b, true));
  EXPECT_EQ(window_to_text(a), window_to_text(b));
  EXPECT_NE(window_to_text(a).find("temporal"), std::string::npos);
}
