// SPDX-License-Identifier: Apache-2.0
// Trains relation heads on synthetic queries and compares both inference
// variants on held-out videos.
#include <iostream>

#include "catsg/catsg.hpp"

int main() {
  using namespace catsg;
  SimConfig sim;
  const auto videos = generate(sim);
  const auto split = split_videos(videos, 0.2, sim.seed);
  const SyntheticQueryProvider provider(sim);

  const TrainConfig tc;
  RelHeads<double> heads(tc.heads_config(sim.dim));
  heads.init(tc.seed);
  const auto log = train(heads, provider, select_videos(videos, split.train), tc);
  std::cout << log.to_jsonl();

  for (Variant v : {Variant::kCatSGG, Variant::kCatSGGPlus}) {
    const auto res = evaluate_relnet(heads, provider, select_videos(videos, split.test), v);
    std::cout << "\n" << variant_name(v) << "\n" << res.report.to_table();
  }
}
