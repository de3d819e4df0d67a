// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "catsg/scenegraph.hpp"
#include "generators.hpp"

using namespace catsg;
using namespace catsg::testing;
namespace fs = std::filesystem;

namespace {

FrameSceneGraph cornea_frame() {
  FrameSceneGraph f;
  f.video_id = "v";
  Entity e;
  e.id = 1;
  e.cls = Ontology::default_instance().class_id("Cornea");
  e.grounding = {0.5, 0.5, 0.3, 0.2, 0.2, 0.8, 0.8};
  f.entities.push_back(e);
  return f;
}

VideoRecord random_video(Rng& rng, const Ontology& onto, int frames, bool masks) {
  VideoRecord v;
  v.video_id = "video_x";
  v.fps = 5.0;
  v.technique = uniform_int(rng, 0, 1);
  int idx = 0;
  for (int i = 0; i < frames; ++i) {
    auto f = random_frame(rng, onto, masks, 16, 16);
    idx += uniform_int(rng, 1, 3);
    f.video_id = v.video_id;
    f.frame_idx = idx;
    f.time_s = idx / v.fps;
    f.technique = v.technique;
    v.frames.push_back(f);
  }
  return v;
}

void write_lines(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace

TEST(Prompt, GroundedEntityLine) {
  EXPECT_EQ(to_prompt(cornea_frame(), {}, true), "Scene graph t:\nCornea at (0.50, 0.50) with size 0.30\n");
}

TEST(Prompt, UngroundedEntityLine) {
  EXPECT_EQ(to_prompt(cornea_frame(), {}, false), "Scene graph t:\nCornea\n");
}

TEST(Prompt, RelationsAndHistoryBlocks) {
  const auto& onto = Ontology::default_instance();
  auto f = cornea_frame();
  Entity knife;
  knife.id = 7;
  knife.cls = onto.class_id("Primary Knife");
  knife.grounding = {0.25, 0.125, 0.01, 0.2, 0.1, 0.3, 0.15};
  f.entities.push_back(knife);
  f.relations.push_back({7, 1, onto.predicate_id("Cutting")});
  const std::string p = to_prompt(f, {cornea_frame(), cornea_frame()}, true);
  EXPECT_NE(p.find("Scene graph t-2:\n"), std::string::npos);
  EXPECT_NE(p.find("Scene graph t-1:\n"), std::string::npos);
  EXPECT_NE(p.find("Primary Knife at (0.25, 0.12) with size 0.01\n"), std::string::npos);
  EXPECT_NE(p.find("Primary Knife Cutting Cornea\n"), std::string::npos);
  EXPECT_LT(p.find("t-2"), p.find("t-1"));
  EXPECT_EQ(p.rfind("Scene graph t:\n"), p.find("Scene graph t:\n"));
}

TEST(Prompt, PureAndOrderIndependent) {
  Rng rng(21);
  const auto& onto = Ontology::default_instance();
  for (int i = 0; i < 100; ++i) {
    auto f = random_frame(rng, onto, false);
    const std::string a = to_prompt(f, {}, true);
    EXPECT_EQ(a, to_prompt(f, {}, true));
    std::shuffle(f.entities.begin(), f.entities.end(), rng);
    std::shuffle(f.relations.begin(), f.relations.end(), rng);
    EXPECT_EQ(a, to_prompt(f, {}, true));
  }
}

TEST(Prompt, DistinctGraphsGiveDistinctText) {
  Rng rng(22);
  const auto& onto = Ontology::default_instance();
  for (int i = 0; i < 200; ++i) {
    auto f = random_frame(rng, onto, false);
    if (f.entities.size() < 2) continue;
    auto g = f;
    // Drop one relation or add a new one: the text must change.
    if (!g.relations.empty()) {
      g.relations.pop_back();
    } else {
      const Entity* tool = nullptr;
      for (const auto& e : g.entities)
        if (onto.is_tool(e.cls)) tool = &e;
      if (!tool) continue;
      const int obj = tool == &g.entities[0] ? g.entities[1].id : g.entities[0].id;
      g.relations.push_back({tool->id, obj, 0});
    }
    EXPECT_NE(to_prompt(f, {}, false), to_prompt(g, {}, false));
  }
}

TEST(Validation, RejectsBrokenFrames) {
  const auto& onto = Ontology::default_instance();
  auto base = cornea_frame();
  Entity hand;
  hand.id = 2;
  hand.cls = onto.class_id("Hand");
  hand.grounding = {0.1, 0.1, 0.01, 0, 0, 0.2, 0.2};
  base.entities.push_back(hand);
  EXPECT_NO_THROW(validate_frame(base));

  auto f = base;
  f.relations.push_back({2, 99, 0});
  EXPECT_THROW(validate_frame(f), SchemaError);
  f = base;
  f.relations.push_back({1, 2, 0});  // anatomy subject, semantic predicate
  EXPECT_THROW(validate_frame(f), SchemaError);
  f = base;
  f.relations.push_back({1, 2, onto.close_to_id()});
  EXPECT_NO_THROW(validate_frame(f));
  f.relations.push_back({2, 2, onto.close_to_id()});
  EXPECT_THROW(validate_frame(f), SchemaError);
  f = base;
  f.entities[1].cls = f.entities[0].cls;
  EXPECT_THROW(validate_frame(f), SchemaError);
  f = base;
  f.entities[1].id = 1;
  EXPECT_THROW(validate_frame(f), SchemaError);
  f = base;
  f.entities[0].grounding.cx = 1.5;
  EXPECT_THROW(validate_frame(f), SchemaError);
  f = base;
  std::vector<std::uint8_t> bits(16, 0);
  bits[5] = 1;
  f.entities[0].mask = Mask::encode(4, 4, bits);
  EXPECT_THROW(validate_frame(f), SchemaError);
  f.entities[0].grounding = grounding_from_mask(*f.entities[0].mask);
  EXPECT_NO_THROW(validate_frame(f));
}

TEST(Jsonl, RoundTripRandomVideos) {
  TempDir dir;
  Rng rng(31);
  const auto& onto = Ontology::default_instance();
  DatasetMeta meta;
  meta.frame_width = meta.frame_height = 16;
  for (int i = 0; i < 20; ++i) {
    const auto v = random_video(rng, onto, uniform_int(rng, 1, 30), i % 2 == 0);
    const auto p = dir.path() / "v.jsonl";
    write_jsonl(v, p);
    EXPECT_EQ(read_jsonl(p, meta), v);
  }
}

TEST(Jsonl, ReadWriteIsIdentityOnText) {
  TempDir dir;
  Rng rng(32);
  DatasetMeta meta;
  meta.frame_width = meta.frame_height = 16;
  const auto v = random_video(rng, Ontology::default_instance(), 10, true);
  write_jsonl(v, dir.path() / "a.jsonl");
  write_jsonl(read_jsonl(dir.path() / "a.jsonl", meta), dir.path() / "b.jsonl");
  std::ifstream a(dir.path() / "a.jsonl"), b(dir.path() / "b.jsonl");
  const std::string sa((std::istreambuf_iterator<char>(a)), {});
  const std::string sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
}

TEST(Jsonl, SchemaErrorsCarryLineNumbers) {
  TempDir dir;
  const auto p = dir.path() / "bad.jsonl";
  const std::string good =
      R"({"video_id":"v","frame_idx":0,"time_s":0.0,"phase":0,"technique":0,)"
      R"("entities":[{"id":1,"class":6,"cx":0.5,"cy":0.5,"area":0.3,"bbox":[0,0,1,1],"mask_rle":null}],"relations":[]})";
  const std::string dangling =
      R"({"video_id":"v","frame_idx":1,"time_s":0.2,"phase":0,"technique":0,)"
      R"("entities":[{"id":1,"class":6,"cx":0.5,"cy":0.5,"area":0.3,"bbox":[0,0,1,1],"mask_rle":null}],)"
      R"("relations":[{"sub":1,"obj":5,"pred":7}]})";
  write_lines(p, good + "\n" + dangling + "\n");
  try {
    read_jsonl(p);
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
  write_lines(p, good + "\n{not json\n");
  EXPECT_THROW(read_jsonl(p), SchemaError);
  write_lines(p, R"({"video_id":"v"})" "\n");
  EXPECT_THROW(read_jsonl(p), SchemaError);
  write_lines(p, "");
  EXPECT_THROW(read_jsonl(p), SchemaError);
  write_lines(p, good + "\n" + good + "\n");  // repeated frame_idx
  EXPECT_THROW(read_jsonl(p), SchemaError);
  EXPECT_NO_THROW(read_jsonl((write_lines(p, good + "\n"), p)));
  EXPECT_THROW(read_jsonl(dir.path() / "missing.jsonl"), IoError);
}

TEST(Dataset, SaveLoadRoundTrip) {
  TempDir dir;
  Rng rng(33);
  DatasetMeta meta;
  meta.frame_width = meta.frame_height = 16;
  std::vector<VideoRecord> videos;
  for (int i = 0; i < 3; ++i) {
    auto v = random_video(rng, Ontology::default_instance(), 5, true);
    v.video_id = "video_" + std::to_string(i);
    for (auto& f : v.frames) f.video_id = v.video_id;
    videos.push_back(v);
  }
  save_dataset(dir.path(), videos, meta);
  DatasetMeta got;
  EXPECT_EQ(load_dataset(dir.path(), Ontology::default_instance(), &got), videos);
  EXPECT_EQ(got.frame_width, 16);
  EXPECT_THROW(load_dataset(dir.path() / "nope"), IoError);
}

TEST(Stats, OneFrameOneRelation) {
  const auto& onto = Ontology::default_instance();
  VideoRecord v;
  v.video_id = "v";
  auto f = cornea_frame();
  Entity hand;
  hand.id = 2;
  hand.cls = onto.class_id("Hand");
  hand.grounding = {0.1, 0.1, 0.01, 0, 0, 0.2, 0.2};
  f.entities.push_back(hand);
  f.relations.push_back({2, 1, onto.predicate_id("Holding")});
  v.frames.push_back(f);
  const auto s = dataset_stats({v});
  EXPECT_EQ(s.videos, 1u);
  EXPECT_EQ(s.frames, 1u);
  EXPECT_EQ(s.relations, 1u);
  EXPECT_EQ(s.unique_objects, 2u);
  EXPECT_EQ(s.unique_relations, 1u);
  EXPECT_EQ(s.per_predicate[0], (std::pair<std::string, std::size_t>{"Holding", 1}));
  EXPECT_EQ(s.per_predicate.size(), 8u);
  EXPECT_THROW(dataset_stats({}), EmptyDataset);
}
