// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <vector>

#include "catsg/mask.hpp"
#include "catsg/ontology.hpp"
#include "catsg/scenegraph.hpp"

namespace catsg {

/// Geometric `close_to` relations from mask adjacency. Each touching pair
/// yields two directed records, lower instance id as subject first.
inline std::vector<RelationInstance> infer_close_to(const FrameSceneGraph& frame, int gap = 0,
                                                    const Ontology& onto =
                                                        Ontology::default_instance()) {
  std::vector<const Entity*> ents;
  for (const auto& e : frame.entities) {
    if (!e.mask)
      throw MissingMask("entity " + std::to_string(e.id) + " in " + frame.video_id + "#" +
                        std::to_string(frame.frame_idx) + " has no mask");
    ents.push_back(&e);
  }
  std::sort(ents.begin(), ents.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<PreparedMask> prepared;
  prepared.reserve(ents.size());
  for (const Entity* e : ents) prepared.emplace_back(*e->mask, gap);
  std::vector<RelationInstance> out;
  const int close_to = onto.close_to_id();
  for (std::size_t i = 0; i < ents.size(); ++i) {
    for (std::size_t j = i + 1; j < ents.size(); ++j) {
      if (prepared[i].adjacent(prepared[j])) {
        out.push_back({ents[i]->id, ents[j]->id, close_to});
        out.push_back({ents[j]->id, ents[i]->id, close_to});
      }
    }
  }
  return out;
}

}  // namespace catsg
