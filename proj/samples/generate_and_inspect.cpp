// SPDX-License-Identifier: Apache-2.0
// Simulates a small dataset, prints its statistics and one frame as text.
#include <iostream>

#include "catsg/catsg.hpp"

int main() {
  using namespace catsg;
  SimConfig cfg;
  cfg.n_videos = 2;
  cfg.max_duration_s = 120;
  const auto videos = generate(cfg);

  std::cout << dataset_stats(videos).to_json().dump(2) << "\n\n";

  const auto& v = videos.front();
  const std::size_t t = v.frames.size() / 2;
  const std::vector<FrameSceneGraph> history(v.frames.begin() + static_cast<long>(t) - 2,
                                             v.frames.begin() + static_cast<long>(t));
  std::cout << v.video_id << " frame " << v.frames[t].frame_idx << " ("
            << Ontology::default_instance().phases()[static_cast<std::size_t>(v.frames[t].phase)]
            << ")\n"
            << to_prompt(v.frames[t], history, true);
}
