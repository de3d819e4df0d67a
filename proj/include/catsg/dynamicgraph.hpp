// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "catsg/errors.hpp"
#include "catsg/mask.hpp"
#include "catsg/ontology.hpp"
#include "catsg/scenegraph.hpp"

namespace catsg {

/// W sampled slots, `spacing_s` seconds apart, ending at the target frame.
struct WindowConfig {
  int W = 1;
  double spacing_s = 1.0;
  bool spatial = true;

  void validate() const {
    if (W < 1) throw InvalidWindow("window needs W >= 1");
    if (W > 1 && !(spacing_s > 0.0)) throw InvalidWindow("window needs spacing_s > 0 when W > 1");
  }

  /// Slot spacing in native frames.
  int step(double fps) const {
    if (W == 1) return 0;
    const int s = static_cast<int>(std::lround(spacing_s * fps));
    if (s < 1)
      throw InvalidWindow("spacing of " + std::to_string(spacing_s) + " s is below one frame at " +
                          std::to_string(fps) + " fps");
    return s;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(WindowConfig, W, spacing_s, spatial)

/// Named windows: `single` (1 frame), `w30s90` (30 slots over 90 s),
/// `10s@5fps` (50 slots, 0.2 s apart), `50s@1fps` (50 slots, 1 s apart).
inline WindowConfig window_preset(const std::string& name) {
  if (name == "single" || name == "1") return {1, 1.0, true};
  if (name == "w30s90" || name == "30x3s") return {30, 3.0, true};
  if (name == "10s@5fps") return {50, 0.2, true};
  if (name == "50s@1fps") return {50, 1.0, true};
  throw ConfigError("unknown window preset `" + name +
                    "` (single, w30s90, 10s@5fps, 50s@1fps)");
}

struct DynNode {
  int slot = 0;
  int cls = 0;
  int entity_id = 0;
  Grounding grounding;
};

/// Edge between node indices. Relation edges keep the direction and
/// predicate of the source record; temporal edges run from slot k to k+1.
struct DynEdge {
  int src = 0;
  int dst = 0;
  int type = 0;

  auto operator<=>(const DynEdge&) const = default;
};

struct DynamicSceneGraph {
  std::string video_id;
  int end_position = 0;
  int W = 1;
  double spacing_s = 0.0;
  double fps = 5.0;
  std::vector<int> slot_positions;  // frame positions, oldest first
  std::vector<DynNode> nodes;       // ordered by (slot, class)
  std::vector<DynEdge> relation_edges;
  std::vector<DynEdge> temporal_edges;
  int phase = 0;      // phase of the end frame
  int technique = 0;  // video technique
};

/// Builds the window ending at frame position `end_t`. Slots before the
/// first frame repeat frame 0. Temporal edges link same-class nodes of
/// adjacent slots.
inline DynamicSceneGraph build_window(const VideoRecord& video, int end_t, const WindowConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(video.frames.size());
  if (end_t < 0 || end_t >= n)
    throw InvalidWindow("window end " + std::to_string(end_t) + " outside video " +
                        video.video_id + " of " + std::to_string(n) + " frames");
  const int step = cfg.step(video.fps);
  DynamicSceneGraph g;
  g.video_id = video.video_id;
  g.end_position = end_t;
  g.W = cfg.W;
  g.spacing_s = cfg.spacing_s;
  g.fps = video.fps;
  const auto& last = video.frames[static_cast<std::size_t>(end_t)];
  g.phase = last.phase;
  g.technique = video.technique;

  std::vector<std::vector<int>> slot_nodes_by_class;
  for (int k = cfg.W - 1; k >= 0; --k) {
    const int pos = std::max(0, end_t - k * step);
    const int slot = static_cast<int>(g.slot_positions.size());
    g.slot_positions.push_back(pos);
    const auto& f = video.frames[static_cast<std::size_t>(pos)];
    std::vector<const Entity*> ents;
    for (const auto& e : f.entities) ents.push_back(&e);
    std::sort(ents.begin(), ents.end(),
              [](const Entity* a, const Entity* b) { return a->cls < b->cls; });
    std::vector<std::pair<int, int>> id_to_node;
    for (const Entity* e : ents) {
      id_to_node.emplace_back(e->id, static_cast<int>(g.nodes.size()));
      g.nodes.push_back({slot, e->cls, e->id, e->grounding});
    }
    auto node_of = [&](int id) {
      for (const auto& [eid, idx] : id_to_node)
        if (eid == id) return idx;
      throw SchemaError("relation endpoint " + std::to_string(id) + " missing in " +
                        video.video_id + "#" + std::to_string(f.frame_idx));
    };
    std::vector<DynEdge> rel;
    for (const auto& r : f.relations) rel.push_back({node_of(r.sub), node_of(r.obj), r.pred});
    std::sort(rel.begin(), rel.end());
    rel.erase(std::unique(rel.begin(), rel.end()), rel.end());
    g.relation_edges.insert(g.relation_edges.end(), rel.begin(), rel.end());
    slot_nodes_by_class.emplace_back();
    for (const auto& [eid, idx] : id_to_node) slot_nodes_by_class.back().push_back(idx);
  }
  for (std::size_t s = 0; s + 1 < slot_nodes_by_class.size(); ++s)
    for (int a : slot_nodes_by_class[s])
      for (int b : slot_nodes_by_class[s + 1])
        if (g.nodes[static_cast<std::size_t>(a)].cls == g.nodes[static_cast<std::size_t>(b)].cls)
          g.temporal_edges.push_back({a, b, -1});
  return g;
}

/// One row per node: class one-hot, then (cx, cy, area) when spatial.
inline Eigen::MatrixXd encode_features(const DynamicSceneGraph& g, bool spatial,
                                       int num_classes = kNumClasses) {
  const int width = num_classes + (spatial ? 3 : 0);
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g.nodes.size()), width);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    const auto r = static_cast<Eigen::Index>(i);
    x(r, n.cls) = 1.0;
    if (spatial) {
      x(r, num_classes) = n.grounding.cx;
      x(r, num_classes + 1) = n.grounding.cy;
      x(r, num_classes + 2) = n.grounding.area;
    }
  }
  return x;
}

/// Plain-text dump for debugging.
inline std::string window_to_text(const DynamicSceneGraph& g,
                                  const Ontology& onto = Ontology::default_instance()) {
  std::ostringstream out;
  out << "window " << g.video_id << " end=" << g.end_position << " W=" << g.W
      << " spacing_s=" << g.spacing_s << " phase=" << onto.phases()[static_cast<std::size_t>(g.phase)]
      << '\n';
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& n = g.nodes[i];
    out << "node " << i << " slot=" << n.slot << " frame="
        << g.slot_positions[static_cast<std::size_t>(n.slot)] << ' '
        << onto.object_class(n.cls).name << '\n';
  }
  for (const auto& e : g.relation_edges)
    out << "edge " << e.src << " -> " << e.dst << ' '
        << onto.predicates()[static_cast<std::size_t>(e.type)].name << '\n';
  for (const auto& e : g.temporal_edges) out << "temporal " << e.src << " -- " << e.dst << '\n';
  return out.str();
}

}  // namespace catsg
