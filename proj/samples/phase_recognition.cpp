// SPDX-License-Identifier: Apache-2.0
// Phase recognition from scene-graph windows. Usage: sample_phase_recognition [preset]
#include <iostream>

#include "catsg/catsg.hpp"

int main(int argc, char** argv) {
  using namespace catsg;
  SimConfig sim;
  sim.n_videos = 12;
  const auto videos = generate(sim);
  const auto split = split_videos(videos, 0.25, sim.seed);

  TaskConfig cfg;
  cfg.window = window_preset(argc > 1 ? argv[1] : "single");
  cfg.epochs = 10;
  cfg.window_stride = 10;
  auto res = train_task(select_videos(videos, split.train), cfg, Ontology::default_instance(),
                        select_videos(videos, split.test));
  std::cout << res.log.to_jsonl();
  const auto ev = evaluate_task(res.model, select_videos(videos, split.test), cfg);
  std::cout << ev.windows.to_table();
}
