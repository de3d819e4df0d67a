// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "catsg/synthdata.hpp"
#include "generators.hpp"

using namespace catsg;
using namespace catsg::testing;

namespace {

SimConfig small_config(int videos = 3) {
  SimConfig cfg;
  cfg.n_videos = videos;
  cfg.min_duration_s = 60;
  cfg.max_duration_s = 90;
  return cfg;
}

const std::vector<VideoRecord>& default_dataset() {
  static const auto videos = generate(SimConfig{});
  return videos;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(SimConfigValidation, RejectsBadValues) {
  auto bad = [](auto mutate) {
    SimConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  bad([](SimConfig& c) { c.fps = 0; });
  bad([](SimConfig& c) { c.dim = SimConfig::kMinDim - 1; });
  bad([](SimConfig& c) { c.n_videos = 0; });
  bad([](SimConfig& c) { c.noise = -1; });
  bad([](SimConfig& c) { c.max_duration_s = 10; });
  bad([](SimConfig& c) { c.grammar.pop_back(); });
  bad([](SimConfig& c) { std::swap(c.grammar[2], c.grammar[3]); });
  bad([](SimConfig& c) { c.grammar[4].relations.at(0).subject = "Cornea"; });
  bad([](SimConfig& c) { c.techniques.pop_back(); });
  EXPECT_NO_THROW(SimConfig{}.validate());
}

TEST(SimConfigValidation, JsonRoundTrip) {
  SimConfig c;
  c.seed = 7;
  c.noise = 0.1;
  const nlohmann::json j = c;
  const auto back = j.get<SimConfig>();
  EXPECT_EQ(nlohmann::json(back).dump(), j.dump());
  // Missing keys fall back to defaults.
  const auto partial = nlohmann::json::parse(R"({"seed": 9})").get<SimConfig>();
  EXPECT_EQ(partial.seed, 9u);
  EXPECT_EQ(partial.dim, 256);
}

TEST(Generate, SixtySecondsIsThreeHundredFrames) {
  SimConfig cfg = small_config(2);
  cfg.max_duration_s = 60;
  for (const auto& v : generate(cfg)) {
    EXPECT_EQ(v.frames.size(), 300u);
    EXPECT_EQ(v.frames.front().frame_idx, 0);
    EXPECT_EQ(v.frames.back().frame_idx, 299);
  }
}

TEST(Generate, DeterministicAndByteIdentical) {
  TempDir a, b;
  const auto cfg = small_config();
  const auto v1 = generate(cfg), v2 = generate(cfg);
  EXPECT_EQ(v1, v2);
  save_dataset(a.path(), v1, dataset_meta(cfg));
  save_dataset(b.path(), v2, dataset_meta(cfg));
  for (const auto& v : v1)
    EXPECT_EQ(slurp(a.path() / (v.video_id + ".jsonl")), slurp(b.path() / (v.video_id + ".jsonl")));
  SimConfig other = cfg;
  other.seed = 43;
  EXPECT_NE(generate(other), v1);
}

TEST(Generate, VideosSatisfySchemaAndReloadEqual) {
  TempDir dir;
  const auto cfg = small_config();
  const auto videos = generate(cfg);
  for (const auto& v : videos) EXPECT_NO_THROW(validate_video(v));
  save_dataset(dir.path(), videos, dataset_meta(cfg));
  EXPECT_EQ(load_dataset(dir.path()), videos);
}

TEST(Generate, PhasesFollowGrammarOrder) {
  const auto& onto = Ontology::default_instance();
  for (const auto& v : generate(small_config(4))) {
    int prev = -1;
    std::set<int> seen;
    for (const auto& f : v.frames) {
      if (f.phase != prev) {
        EXPECT_TRUE(seen.insert(f.phase).second) << "phase revisited in " << v.video_id;
        EXPECT_GT(f.phase, prev);
        prev = f.phase;
      }
    }
    EXPECT_TRUE(seen.count(onto.phase_id("Nucleus Breaking")));
  }
}

TEST(Generate, PredicateFrequencyOrderMatchesTargets) {
  const auto& onto = Ontology::default_instance();
  const auto stats = dataset_stats(default_dataset());
  std::map<std::string, std::size_t> got(stats.per_predicate.begin(), stats.per_predicate.end());
  auto targets = SimConfig{}.predicate_targets;
  std::sort(targets.begin(), targets.end(),
            [](const auto& a, const auto& b) { return a.second > b.second; });
  for (std::size_t i = 0; i + 1 < targets.size(); ++i)
    EXPECT_GT(got.at(targets[i].first), got.at(targets[i + 1].first))
        << targets[i].first << " vs " << targets[i + 1].first;
  EXPECT_EQ(stats.unique_relations, static_cast<std::size_t>(onto.num_predicates()));
  EXPECT_EQ(dataset_stats(generate(SimConfig{})), stats);
}

TEST(Generate, TechniqueVisibleInNucleusBreaking) {
  // Divide and Conquer favours Pushing, Stop and Chop favours Pulling for
  // the micromanipulator during nucleus breaking, at a 70/30 mix.
  const auto& onto = Ontology::default_instance();
  const int nucleus = onto.phase_id("Nucleus Breaking");
  const int micro = onto.class_id("Micromanipulator");
  const int push = onto.predicate_id("Pushing"), pull = onto.predicate_id("Pulling");
  const int dc = onto.technique_id("Divide and Conquer");
  long n_push[2] = {0, 0}, n_pull[2] = {0, 0};
  int per_tech[2] = {0, 0};
  for (const auto& v : generate(small_config(48))) {
    ++per_tech[v.technique];
    for (const auto& f : v.frames) {
      if (f.phase != nucleus) continue;
      for (const auto& r : f.relations) {
        if (f.find(r.sub)->cls != micro) continue;
        n_push[v.technique] += r.pred == push;
        n_pull[v.technique] += r.pred == pull;
      }
    }
  }
  EXPECT_GE(per_tech[0], 3);
  EXPECT_GE(per_tech[1], 3);
  const int sc = 1 - dc;
  const double dc_push = static_cast<double>(n_push[dc]) / static_cast<double>(n_push[dc] + n_pull[dc]);
  const double sc_push = static_cast<double>(n_push[sc]) / static_cast<double>(n_push[sc] + n_pull[sc]);
  EXPECT_GT(dc_push, 0.55);
  EXPECT_LT(dc_push, 0.85);
  EXPECT_GT(sc_push, 0.15);
  EXPECT_LT(sc_push, 0.45);
}

TEST(Queries, LayoutAtZeroNoise) {
  SimConfig cfg = small_config(1);
  cfg.noise = 0.0;
  const auto v = generate(cfg).front();
  const SyntheticQueryProvider provider(cfg);
  EXPECT_EQ(provider.class_dims(), kNumClasses);
  const int role = provider.role_offset();
  bool saw_idle = false;
  for (int p = 0; p < static_cast<int>(v.frames.size()); p += 7) {
    const auto& f = v.frames[static_cast<std::size_t>(p)];
    const auto q = provider.frame_queries(v, p);
    ASSERT_EQ(q.size(), f.entities.size());
    for (const auto& e : f.entities) {
      const auto& x = q.at(e.cls);
      EXPECT_EQ(x.size(), cfg.dim);
      EXPECT_DOUBLE_EQ(x[e.cls], 1.0);
      EXPECT_DOUBLE_EQ(x.head(kNumClasses).sum(), 1.0);
      EXPECT_DOUBLE_EQ(x[provider.grounding_offset()], e.grounding.cx);
      bool related = false;
      for (const auto& r : f.relations)
        related |= Ontology::default_instance().is_semantic(r.pred) && (r.sub == e.id || r.obj == e.id);
      if (!related) {
        EXPECT_DOUBLE_EQ(x.segment(role, SyntheticQueryProvider::kRoleDims).norm(), 0.0);
        saw_idle = true;
      }
      EXPECT_DOUBLE_EQ(x.tail(cfg.dim - role - SyntheticQueryProvider::kRoleDims).norm(), 0.0);
    }
  }
  EXPECT_TRUE(saw_idle);
}

TEST(Queries, DeterministicPerChunk) {
  const auto cfg = small_config(1);
  const auto v = generate(cfg).front();
  const ChunkRange chunk{40, cfg.chunk_size};
  const auto a = synthetic_queries(v, chunk, cfg);
  const auto b = synthetic_queries(v, chunk, cfg);
  ASSERT_EQ(a.size(), 8u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].size(), b[i].size());
    for (const auto& [cls, q] : a[i]) EXPECT_EQ(q, b[i].at(cls));
  }
  EXPECT_THROW(synthetic_queries(v, {40, 4}, cfg), ChunkOutOfRange);
  EXPECT_THROW(synthetic_queries(v, {static_cast<int>(v.frames.size()), 8}, cfg), ChunkOutOfRange);
  // Positions before the start repeat frame 0.
  const auto early = synthetic_queries(v, {2, 8}, cfg);
  for (int i = 0; i < 5; ++i)
    for (const auto& [cls, q] : early[static_cast<std::size_t>(i)])
      EXPECT_EQ(q, early[5].at(cls));
}

TEST(Queries, SmallDimUsesClassCodes) {
  SimConfig cfg = small_config(1);
  cfg.dim = SimConfig::kMinDim;
  cfg.noise = 0.0;
  const SyntheticQueryProvider provider(cfg);
  EXPECT_EQ(provider.class_dims(), SimConfig::kMinDim - 3 - SyntheticQueryProvider::kRoleDims);
  const auto v = generate(cfg).front();
  const auto q = provider.frame_queries(v, 0);
  for (const auto& [cls, x] : q) EXPECT_NEAR(x.head(provider.class_dims()).norm(), 1.0, 1e-12);
}

TEST(Queries, ExistenceLinearlySeparableAtZeroNoise) {
  // Pair [q_i; q_j] is related iff q_i carries the any-subject bit and q_j
  // the any-object bit, a threshold on two coordinates.
  SimConfig cfg = small_config(2);
  cfg.noise = 0.0;
  const auto& onto = Ontology::default_instance();
  const SyntheticQueryProvider provider(cfg);
  const int any_sub = provider.role_offset() + 2 * kNumSemanticPredicates;
  std::vector<std::pair<Eigen::VectorXd, int>> pairs;
  std::size_t positives = 0;
  for (const auto& v : generate(cfg)) {
    for (int p = 0; p < static_cast<int>(v.frames.size()); p += 3) {
      const auto& f = v.frames[static_cast<std::size_t>(p)];
      const auto q = provider.frame_queries(v, p);
      std::set<std::pair<int, int>> related;
      for (const auto& r : f.relations)
        if (onto.is_semantic(r.pred)) related.emplace(r.sub, r.obj);
      for (const auto& s : f.entities) {
        if (!onto.is_tool(s.cls)) continue;
        for (const auto& o : f.entities) {
          if (s.id == o.id) continue;
          Eigen::VectorXd x(2 * cfg.dim + 1);
          x << q.at(s.cls), q.at(o.cls), 1.0;
          const int y = related.count({s.id, o.id}) ? 1 : -1;
          positives += y > 0;
          const double score = x[any_sub] + x[cfg.dim + any_sub + 1] - 1.5;
          EXPECT_EQ(score > 0 ? 1 : -1, y);
          pairs.emplace_back(std::move(x), y);
        }
      }
    }
  }
  ASSERT_GT(positives, 50u);
  // A plain perceptron finds a separator as well.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(2 * cfg.dim + 1);
  std::size_t errors = 1;
  for (int epoch = 0; epoch < 500 && errors > 0; ++epoch) {
    errors = 0;
    for (const auto& [x, y] : pairs)
      if (y * w.dot(x) <= 0) {
        w += y * x;
        ++errors;
      }
  }
  EXPECT_EQ(errors, 0u);
}

TEST(ExternalQueries, RoundTripAndErrors) {
  TempDir dir;
  SimConfig cfg = small_config(1);
  cfg.dim = 32;
  cfg.max_duration_s = 60;
  auto videos = generate(cfg);
  videos[0].frames.resize(20);
  const SyntheticQueryProvider synth(cfg);
  const auto path = dir.path() / "q.jsonl";
  write_queries_jsonl(path, synth, videos);
  const auto ext = load_external_queries(path, 32);
  for (int p = 0; p < 20; ++p) {
    const auto a = synth.frame_queries(videos[0], p), b = ext.frame_queries(videos[0], p);
    ASSERT_EQ(a.size(), b.size());
    for (const auto& [cls, q] : a) EXPECT_EQ(q, b.at(cls));
  }
  EXPECT_THROW(load_external_queries(path, 16), DimensionMismatch);
  EXPECT_THROW(load_external_queries(dir.path() / "missing", 32), IoError);
  auto longer = generate(cfg);
  EXPECT_THROW(ext.frame_queries(longer[0], 25), MissingFrame);
}
