// SPDX-License-Identifier: Apache-2.0
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "catsg/geometry.hpp"
#include "catsg/mask.hpp"
#include "generators.hpp"

using namespace catsg;
using namespace catsg::testing;

namespace {

std::vector<std::uint8_t> rect(int w, int h, int x0, int y0, int x1, int y1) {
  std::vector<std::uint8_t> b(static_cast<std::size_t>(w) * h, 0);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) b[static_cast<std::size_t>(y) * w + x] = 1;
  return b;
}

}  // namespace

TEST(Mask, TextFormatExample) {
  std::vector<std::uint8_t> bits(100, 0);
  for (int i = 3; i < 7; ++i) bits[static_cast<std::size_t>(i)] = 1;
  const Mask m = Mask::encode(10, 10, bits);
  EXPECT_EQ(m.to_string(), "3,4,93");
  EXPECT_EQ(Mask::parse("3,4,93", 10, 10), m);
  EXPECT_EQ(m.foreground(), 4u);
}

TEST(Mask, FirstRunMayBeZero) {
  std::vector<std::uint8_t> bits(4, 0);
  bits[0] = 1;
  EXPECT_EQ(Mask::encode(2, 2, bits).to_string(), "0,1,3");
  EXPECT_EQ(Mask::encode(2, 2, std::vector<std::uint8_t>(4, 1)).to_string(), "0,4");
  EXPECT_EQ(Mask::encode(2, 2, std::vector<std::uint8_t>(4, 0)).to_string(), "4");
}

TEST(Mask, RejectsMalformedRuns) {
  EXPECT_THROW(Mask::parse("3,4,92", 10, 10), SchemaError);
  EXPECT_THROW(Mask::parse("3,x,93", 10, 10), SchemaError);
  EXPECT_THROW(Mask::parse("3,-4,97", 10, 10), SchemaError);
  EXPECT_THROW(Mask::parse("", 10, 10), SchemaError);
  EXPECT_THROW(Mask::encode(3, 3, std::vector<std::uint8_t>(8, 0)), DimensionMismatch);
}

TEST(Mask, RoundTripRandom) {
  Rng rng(7);
  for (int i = 0; i < 500; ++i) {
    const int w = uniform_int(rng, 1, 40), h = uniform_int(rng, 1, 40);
    const auto bits = random_bits(rng, w, h);
    const Mask m = Mask::encode(w, h, bits);
    EXPECT_EQ(m.decode(), bits);
    EXPECT_EQ(Mask::parse(m.to_string(), w, h).decode(), bits);
  }
}

TEST(Grounding, FullFrame) {
  const Mask m = Mask::encode(8, 6, std::vector<std::uint8_t>(48, 1));
  const Grounding g = grounding_from_mask(m);
  EXPECT_DOUBLE_EQ(g.cx, 0.5);
  EXPECT_DOUBLE_EQ(g.cy, 0.5);
  EXPECT_DOUBLE_EQ(g.area, 1.0);
  EXPECT_EQ(g, (Grounding{0.5, 0.5, 1.0, 0.0, 0.0, 1.0, 1.0}));
}

TEST(Grounding, SinglePixelAtOrigin) {
  std::vector<std::uint8_t> bits(100, 0);
  bits[0] = 1;
  const Grounding g = grounding_from_mask(Mask::encode(10, 10, bits));
  EXPECT_DOUBLE_EQ(g.area, 0.01);
  EXPECT_DOUBLE_EQ(g.x0, 0.0);
  EXPECT_DOUBLE_EQ(g.y0, 0.0);
  EXPECT_DOUBLE_EQ(g.x1, 0.1);
  EXPECT_DOUBLE_EQ(g.y1, 0.1);
  EXPECT_DOUBLE_EQ(g.cx, 0.05);
}

TEST(Grounding, EmptyMaskThrows) {
  EXPECT_THROW(grounding_from_mask(Mask::encode(4, 4, std::vector<std::uint8_t>(16, 0))), EmptyMask);
}

TEST(Grounding, MatchesPixelScan) {
  Rng rng(11);
  for (int i = 0; i < 300; ++i) {
    const int w = uniform_int(rng, 1, 48), h = uniform_int(rng, 1, 48);
    auto bits = random_bits(rng, w, h);
    if (std::count(bits.begin(), bits.end(), 1) == 0) bits[0] = 1;
    const Grounding g = grounding_from_mask(Mask::encode(w, h, bits));
    const Grounding o = oracle_grounding(bits, w, h);
    EXPECT_NEAR(g.cx, o.cx, 1e-12);
    EXPECT_NEAR(g.cy, o.cy, 1e-12);
    EXPECT_NEAR(g.area, o.area, 1e-12);
    EXPECT_NEAR(g.x0, o.x0, 1e-12);
    EXPECT_NEAR(g.y0, o.y0, 1e-12);
    EXPECT_NEAR(g.x1, o.x1, 1e-12);
    EXPECT_NEAR(g.y1, o.y1, 1e-12);
    EXPECT_TRUE(grounding_valid(g));
  }
}

TEST(Adjacency, SharedEdgeAndSeparation) {
  const int w = 20, h = 10;
  const auto a = Mask::encode(w, h, rect(w, h, 0, 0, 4, 9));
  EXPECT_TRUE(masks_adjacent(a, Mask::encode(w, h, rect(w, h, 5, 0, 9, 9))));
  // One empty column between: Chebyshev distance 2.
  EXPECT_FALSE(masks_adjacent(a, Mask::encode(w, h, rect(w, h, 6, 0, 9, 9))));
  EXPECT_TRUE(masks_adjacent(a, Mask::encode(w, h, rect(w, h, 6, 0, 9, 9)), 1));
  // Separated by 2 + gap empty columns never touch.
  for (int gap = 0; gap < 4; ++gap)
    EXPECT_FALSE(masks_adjacent(a, Mask::encode(w, h, rect(w, h, 5 + 2 + gap, 0, 19, 9)), gap));
  // Diagonal touch counts.
  EXPECT_TRUE(masks_adjacent(Mask::encode(w, h, rect(w, h, 0, 0, 0, 0)),
                             Mask::encode(w, h, rect(w, h, 1, 1, 1, 1))));
}

TEST(Adjacency, Errors) {
  const auto a = Mask::encode(4, 4, std::vector<std::uint8_t>(16, 1));
  const auto b = Mask::encode(4, 5, std::vector<std::uint8_t>(20, 1));
  EXPECT_THROW(masks_adjacent(a, b), DimensionMismatch);
  EXPECT_THROW(masks_adjacent(a, a, -1), ConfigError);
}

TEST(Adjacency, MatchesOracleAndIsSymmetric) {
  Rng rng(3);
  int positives = 0;
  for (int i = 0; i < 300; ++i) {
    const int w = uniform_int(rng, 1, 24), h = uniform_int(rng, 1, 24);
    const int gap = uniform_int(rng, 0, 2);
    const auto a = random_bits(rng, w, h), b = random_bits(rng, w, h);
    const Mask ma = Mask::encode(w, h, a), mb = Mask::encode(w, h, b);
    const bool expect = oracle_adjacent(a, b, w, h, 1 + gap);
    positives += expect;
    EXPECT_EQ(masks_adjacent(ma, mb, gap), expect);
    EXPECT_EQ(masks_adjacent(mb, ma, gap), expect);
  }
  EXPECT_GT(positives, 30);
  EXPECT_LT(positives, 290);
}

TEST(Adjacency, MonotoneUnderAddedForeground) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const int w = 16, h = 16;
    auto a = random_blob(rng, w, h);
    const auto b = random_blob(rng, w, h);
    const bool before = masks_adjacent(Mask::encode(w, h, a), Mask::encode(w, h, b));
    for (int k = 0; k < 10; ++k) a[static_cast<std::size_t>(uniform_int(rng, 0, w * h - 1))] = 1;
    const bool after = masks_adjacent(Mask::encode(w, h, a), Mask::encode(w, h, b));
    EXPECT_TRUE(!before || after);
  }
}

TEST(CloseTo, ThreeMutuallyAdjacent) {
  const int w = 10, h = 10;
  FrameSceneGraph f;
  f.video_id = "v";
  const std::vector<std::vector<std::uint8_t>> shapes = {
      rect(w, h, 0, 0, 4, 4), rect(w, h, 5, 0, 9, 4), rect(w, h, 0, 5, 9, 9)};
  for (int i = 0; i < 3; ++i) {
    Entity e;
    e.id = 10 - i;
    e.cls = i;
    e.mask = Mask::encode(w, h, shapes[static_cast<std::size_t>(i)]);
    e.grounding = grounding_from_mask(*e.mask);
    f.entities.push_back(e);
  }
  const auto rels = infer_close_to(f);
  ASSERT_EQ(rels.size(), 6u);
  const int close = Ontology::default_instance().close_to_id();
  for (std::size_t k = 0; k < rels.size(); k += 2) {
    EXPECT_LT(rels[k].sub, rels[k].obj);
    EXPECT_EQ(rels[k + 1].sub, rels[k].obj);
    EXPECT_EQ(rels[k + 1].obj, rels[k].sub);
    EXPECT_EQ(rels[k].pred, close);
  }
}

TEST(CloseTo, NoAdjacencyAndMissingMask) {
  const int w = 10, h = 10;
  FrameSceneGraph f;
  Entity a, b;
  a.id = 1;
  a.cls = 0;
  a.mask = Mask::encode(w, h, rect(w, h, 0, 0, 1, 1));
  b.id = 2;
  b.cls = 1;
  b.mask = Mask::encode(w, h, rect(w, h, 8, 8, 9, 9));
  f.entities.clear();
  f.entities.push_back(a);
  f.entities.push_back(b);
  EXPECT_TRUE(infer_close_to(f).empty());
  f.entities[1].mask.reset();
  EXPECT_THROW(infer_close_to(f), MissingMask);
}

TEST(CloseTo, MatchesPairwiseOracle) {
  Rng rng(9);
  const auto& onto = Ontology::default_instance();
  for (int i = 0; i < 200; ++i) {
    const auto f = random_frame(rng, onto, true, 12, 12);
    const int gap = uniform_int(rng, 0, 1);
    std::set<std::pair<int, int>> expected;
    for (const auto& a : f.entities)
      for (const auto& b : f.entities)
        if (a.id != b.id && oracle_adjacent(a.mask->decode(), b.mask->decode(), 12, 12, 1 + gap))
          expected.emplace(a.id, b.id);
    std::set<std::pair<int, int>> got;
    for (const auto& r : infer_close_to(f, gap)) got.emplace(r.sub, r.obj);
    EXPECT_EQ(got, expected);
    EXPECT_EQ(infer_close_to(f, gap).size(), expected.size());
  }
}
