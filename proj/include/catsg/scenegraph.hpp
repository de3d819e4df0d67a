// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "catsg/errors.hpp"
#include "catsg/mask.hpp"
#include "catsg/ontology.hpp"

namespace catsg {

struct Entity {
  int id = 0;
  int cls = 0;
  Grounding grounding;
  std::optional<Mask> mask;

  bool operator==(const Entity&) const = default;
};

struct RelationInstance {
  int sub = 0;
  int obj = 0;
  int pred = 0;

  auto operator<=>(const RelationInstance&) const = default;
};

struct FrameSceneGraph {
  std::string video_id;
  int frame_idx = 0;
  double time_s = 0.0;
  int phase = 0;
  int technique = 0;
  std::vector<Entity> entities;
  std::vector<RelationInstance> relations;

  const Entity* find(int instance_id) const {
    for (const auto& e : entities)
      if (e.id == instance_id) return &e;
    return nullptr;
  }
  const Entity* find_class(int cls) const {
    for (const auto& e : entities)
      if (e.cls == cls) return &e;
    return nullptr;
  }

  bool operator==(const FrameSceneGraph&) const = default;
};

struct VideoRecord {
  std::string video_id;
  double fps = 5.0;
  int technique = 0;
  std::vector<FrameSceneGraph> frames;

  bool operator==(const VideoRecord&) const = default;
};

/// Per-dataset facts that the per-frame JSONL lines do not carry.
struct DatasetMeta {
  double fps = 5.0;
  int frame_width = 64;
  int frame_height = 64;
};

inline constexpr double kGroundingTolerance = 1e-6;

/// Throws SchemaError describing the first violated frame invariant.
inline void validate_frame(const FrameSceneGraph& f,
                           const Ontology& onto = Ontology::default_instance()) {
  const std::string where = f.video_id + "#" + std::to_string(f.frame_idx) + ": ";
  std::set<int> ids, classes;
  for (const auto& e : f.entities) {
    if (!ids.insert(e.id).second)
      throw SchemaError(where + "duplicate instance id " + std::to_string(e.id));
    if (e.cls < 0 || e.cls >= onto.num_classes())
      throw SchemaError(where + "class id out of range " + std::to_string(e.cls));
    if (!classes.insert(e.cls).second)
      throw SchemaError(where + "more than one instance of class " +
                        onto.object_class(e.cls).name);
    if (!grounding_valid(e.grounding))
      throw SchemaError(where + "grounding out of range for instance " + std::to_string(e.id));
    if (e.mask) {
      Grounding g;
      try {
        g = grounding_from_mask(*e.mask);
      } catch (const EmptyMask&) {
        throw SchemaError(where + "empty mask for instance " + std::to_string(e.id));
      }
      const double d = std::max({std::abs(g.cx - e.grounding.cx), std::abs(g.cy - e.grounding.cy),
                                 std::abs(g.area - e.grounding.area),
                                 std::abs(g.x0 - e.grounding.x0), std::abs(g.y0 - e.grounding.y0),
                                 std::abs(g.x1 - e.grounding.x1), std::abs(g.y1 - e.grounding.y1)});
      if (d > kGroundingTolerance)
        throw SchemaError(where + "grounding inconsistent with mask for instance " +
                          std::to_string(e.id));
    }
  }
  for (const auto& r : f.relations) {
    const Entity* s = f.find(r.sub);
    const Entity* o = f.find(r.obj);
    if (!s || !o)
      throw SchemaError(where + "relation references missing instance id");
    if (r.sub == r.obj) throw SchemaError(where + "relation subject equals object");
    if (r.pred < 0 || r.pred >= onto.num_predicates())
      throw SchemaError(where + "predicate id out of range " + std::to_string(r.pred));
    if (onto.is_semantic(r.pred) && !onto.is_tool(s->cls))
      throw SchemaError(where + "semantic relation with non-tool subject " +
                        onto.object_class(s->cls).name);
  }
  if (f.phase < 0 || f.phase >= static_cast<int>(onto.phases().size()))
    throw SchemaError(where + "phase id out of range");
  if (f.technique < 0 || f.technique >= static_cast<int>(onto.techniques().size()))
    throw SchemaError(where + "technique id out of range");
}

inline void validate_video(const VideoRecord& v,
                           const Ontology& onto = Ontology::default_instance()) {
  if (v.frames.empty()) throw SchemaError("video " + v.video_id + " has no frames");
  if (!(v.fps > 0.0)) throw SchemaError("video " + v.video_id + " has non-positive fps");
  int prev = -1;
  for (const auto& f : v.frames) {
    if (f.video_id != v.video_id)
      throw SchemaError("frame video_id `" + f.video_id + "` differs from `" + v.video_id + "`");
    if (f.frame_idx <= prev)
      throw SchemaError("video " + v.video_id + ": frame_idx not strictly increasing at " +
                        std::to_string(f.frame_idx));
    prev = f.frame_idx;
    if (f.technique != v.technique)
      throw SchemaError("video " + v.video_id + ": frames disagree on technique");
    if (std::abs(f.time_s - f.frame_idx / v.fps) > 1e-6)
      throw SchemaError("video " + v.video_id + ": time_s inconsistent with frame_idx/fps at " +
                        std::to_string(f.frame_idx));
    validate_frame(f, onto);
  }
}

// ---------------------------------------------------------------------------
// JSONL

inline nlohmann::ordered_json frame_to_json(const FrameSceneGraph& f) {
  nlohmann::ordered_json j;
  j["video_id"] = f.video_id;
  j["frame_idx"] = f.frame_idx;
  j["time_s"] = f.time_s;
  j["phase"] = f.phase;
  j["technique"] = f.technique;
  auto ents = nlohmann::ordered_json::array();
  for (const auto& e : f.entities) {
    nlohmann::ordered_json je;
    je["id"] = e.id;
    je["class"] = e.cls;
    je["cx"] = e.grounding.cx;
    je["cy"] = e.grounding.cy;
    je["area"] = e.grounding.area;
    je["bbox"] = {e.grounding.x0, e.grounding.y0, e.grounding.x1, e.grounding.y1};
    if (e.mask)
      je["mask_rle"] = e.mask->to_string();
    else
      je["mask_rle"] = nullptr;
    ents.push_back(std::move(je));
  }
  j["entities"] = std::move(ents);
  auto rels = nlohmann::ordered_json::array();
  for (const auto& r : f.relations) {
    nlohmann::ordered_json jr;
    jr["sub"] = r.sub;
    jr["obj"] = r.obj;
    jr["pred"] = r.pred;
    rels.push_back(std::move(jr));
  }
  j["relations"] = std::move(rels);
  return j;
}

inline FrameSceneGraph frame_from_json(const nlohmann::json& j, const DatasetMeta& meta) {
  FrameSceneGraph f;
  f.video_id = j.at("video_id").get<std::string>();
  f.frame_idx = j.at("frame_idx").get<int>();
  f.time_s = j.at("time_s").get<double>();
  f.phase = j.at("phase").get<int>();
  f.technique = j.at("technique").get<int>();
  for (const auto& je : j.at("entities")) {
    Entity e;
    e.id = je.at("id").get<int>();
    e.cls = je.at("class").get<int>();
    e.grounding.cx = je.at("cx").get<double>();
    e.grounding.cy = je.at("cy").get<double>();
    e.grounding.area = je.at("area").get<double>();
    const auto& bb = je.at("bbox");
    if (!bb.is_array() || bb.size() != 4) throw SchemaError("bbox must have 4 numbers");
    e.grounding.x0 = bb[0].get<double>();
    e.grounding.y0 = bb[1].get<double>();
    e.grounding.x1 = bb[2].get<double>();
    e.grounding.y1 = bb[3].get<double>();
    const auto& m = je.at("mask_rle");
    if (!m.is_null())
      e.mask = Mask::parse(m.get<std::string>(), meta.frame_width, meta.frame_height);
    f.entities.push_back(std::move(e));
  }
  for (const auto& jr : j.at("relations"))
    f.relations.push_back(
        {jr.at("sub").get<int>(), jr.at("obj").get<int>(), jr.at("pred").get<int>()});
  return f;
}

inline void write_jsonl(const VideoRecord& video, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  for (const auto& f : video.frames) out << frame_to_json(f).dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline VideoRecord read_jsonl(const std::filesystem::path& path, const DatasetMeta& meta = {},
                              const Ontology& onto = Ontology::default_instance()) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  VideoRecord v;
  v.fps = meta.fps;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto f = frame_from_json(nlohmann::json::parse(line), meta);
      if (v.frames.empty()) {
        v.video_id = f.video_id;
        v.technique = f.technique;
      }
      validate_frame(f, onto);
      v.frames.push_back(std::move(f));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (v.frames.empty()) throw SchemaError(path.string() + ": video has no frames");
  try {
    validate_video(v, onto);
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return v;
}

inline constexpr const char* kManifestName = "dataset.json";

/// Writes `<dir>/<video_id>.jsonl` per video plus a `dataset.json` manifest.
inline void save_dataset(const std::filesystem::path& dir, const std::vector<VideoRecord>& videos,
                         const DatasetMeta& meta) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  nlohmann::ordered_json manifest;
  manifest["format"] = "catsg-dataset";
  manifest["version"] = 1;
  manifest["fps"] = meta.fps;
  manifest["frame_width"] = meta.frame_width;
  manifest["frame_height"] = meta.frame_height;
  manifest["videos"] = nlohmann::ordered_json::array();
  for (const auto& v : videos) {
    write_jsonl(v, dir / (v.video_id + ".jsonl"));
    manifest["videos"].push_back(v.video_id);
  }
  std::ofstream out(dir / kManifestName, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

inline DatasetMeta read_manifest(const std::filesystem::path& dir,
                                 std::vector<std::string>* video_ids = nullptr) {
  std::ifstream in(dir / kManifestName);
  if (!in) throw IoError("missing dataset manifest: " + (dir / kManifestName).string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
    DatasetMeta meta;
    meta.fps = m.at("fps").get<double>();
    meta.frame_width = m.at("frame_width").get<int>();
    meta.frame_height = m.at("frame_height").get<int>();
    if (m.at("version").get<int>() != 1) throw SchemaError("unsupported dataset version");
    if (video_ids) *video_ids = m.at("videos").get<std::vector<std::string>>();
    return meta;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("bad dataset manifest: " + std::string(e.what()));
  }
}

inline std::vector<VideoRecord> load_dataset(const std::filesystem::path& dir,
                                             const Ontology& onto = Ontology::default_instance(),
                                             DatasetMeta* meta_out = nullptr) {
  std::vector<std::string> ids;
  const DatasetMeta meta = read_manifest(dir, &ids);
  if (meta_out) *meta_out = meta;
  std::vector<VideoRecord> videos;
  for (const auto& id : ids) videos.push_back(read_jsonl(dir / (id + ".jsonl"), meta, onto));
  return videos;
}

// ---------------------------------------------------------------------------
// Text serialization for language-model prompts

namespace detail {

inline std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline void append_graph_lines(std::string& out, const FrameSceneGraph& g, bool grounding,
                               const Ontology& onto) {
  std::vector<const Entity*> ents;
  for (const auto& e : g.entities) ents.push_back(&e);
  std::sort(ents.begin(), ents.end(), [](auto* a, auto* b) { return a->cls < b->cls; });
  for (const Entity* e : ents) {
    out += onto.object_class(e->cls).name;
    if (grounding) {
      out += " at (" + fixed2(e->grounding.cx) + ", " + fixed2(e->grounding.cy) +
             ") with size " + fixed2(e->grounding.area);
    }
    out += '\n';
  }
  std::vector<std::tuple<int, int, int>> rels;
  for (const auto& r : g.relations) {
    const Entity* s = g.find(r.sub);
    const Entity* o = g.find(r.obj);
    if (s && o) rels.emplace_back(s->cls, r.pred, o->cls);
  }
  std::sort(rels.begin(), rels.end());
  rels.erase(std::unique(rels.begin(), rels.end()), rels.end());
  for (const auto& [s, p, o] : rels) {
    out += onto.object_class(s).name + " " + onto.predicates()[static_cast<std::size_t>(p)].name +
           " " + onto.object_class(o).name + '\n';
  }
}

}  // namespace detail

/// Serializes `history` (oldest first) followed by `graph`, one block per
/// step, each opened by a `Scene graph t-k:` marker line.
inline std::string to_prompt(const FrameSceneGraph& graph,
                             const std::vector<FrameSceneGraph>& history, bool include_grounding,
                             const Ontology& onto = Ontology::default_instance()) {
  std::string out;
  const std::size_t n = history.size();
  for (std::size_t i = 0; i < n; ++i) {
    out += "Scene graph t-" + std::to_string(n - i) + ":\n";
    detail::append_graph_lines(out, history[i], include_grounding, onto);
  }
  out += "Scene graph t:\n";
  detail::append_graph_lines(out, graph, include_grounding, onto);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset statistics

struct StatsReport {
  std::size_t videos = 0;
  std::size_t frames = 0;
  std::size_t relations = 0;
  std::size_t unique_objects = 0;
  std::size_t unique_relations = 0;
  std::vector<std::pair<std::string, std::size_t>> per_predicate;  // ontology order
  std::vector<std::pair<std::string, std::size_t>> per_technique;

  bool operator==(const StatsReport&) const = default;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["videos"] = videos;
    j["frames"] = frames;
    j["relations"] = relations;
    j["unique_objects"] = unique_objects;
    j["unique_relations"] = unique_relations;
    nlohmann::ordered_json pp;
    for (const auto& [name, n] : per_predicate) pp[name] = n;
    j["per_predicate"] = pp;
    nlohmann::ordered_json pt;
    for (const auto& [name, n] : per_technique) pt[name] = n;
    j["per_technique"] = pt;
    return j;
  }
};

/// close_to is counted per directed record (two per touching pair).
inline StatsReport dataset_stats(const std::vector<VideoRecord>& videos,
                                 const Ontology& onto = Ontology::default_instance()) {
  if (videos.empty()) throw EmptyDataset("dataset_stats: no videos");
  StatsReport s;
  s.videos = videos.size();
  std::vector<std::size_t> per_pred(static_cast<std::size_t>(onto.num_predicates()), 0);
  std::vector<std::size_t> per_tech(onto.techniques().size(), 0);
  std::set<int> objects;
  for (const auto& v : videos) {
    ++per_tech.at(static_cast<std::size_t>(v.technique));
    s.frames += v.frames.size();
    for (const auto& f : v.frames) {
      for (const auto& e : f.entities) objects.insert(e.cls);
      for (const auto& r : f.relations) {
        ++per_pred.at(static_cast<std::size_t>(r.pred));
        ++s.relations;
      }
    }
  }
  s.unique_objects = objects.size();
  for (const auto& p : onto.predicates()) {
    s.per_predicate.emplace_back(p.name, per_pred[static_cast<std::size_t>(p.id)]);
    if (per_pred[static_cast<std::size_t>(p.id)] > 0) ++s.unique_relations;
  }
  for (std::size_t t = 0; t < per_tech.size(); ++t)
    s.per_technique.emplace_back(onto.techniques()[t], per_tech[t]);
  return s;
}

}  // namespace catsg
