// Plans one step in a fresh scene: finds a safe anchor, builds the scene
// vocabulary, draws a candidate group around the anchor and ranks it.
//
//   demo_plan [RUN_DIR]
//
// Without a run directory candidates are ranked by the reward oracle. With
// the directory of a completed train-rm stage they are ranked by the reward
// model on world-model imagination, and the oracle score is shown alongside.

#include <algorithm>
#include <cstdio>
#include <memory>

#include "dreamlane/pipeline.hpp"

using namespace dreamlane;

int main(int argc, char** argv) {
  try {
    SeededRng rng(2024);
    const Scene scene = generate_scene(rng, Difficulty::mixed, 0);
    const auto anchor = find_anchor(scene, rng);
    if (!anchor) throw Error("no safe anchor for this scene");
    std::printf("scene: %s, speed %.1f m/s, anchor found after %d attempts\n",
                std::string(to_string(scene.difficulty)).c_str(), scene.initial_speed, anchor->attempts);

    SeededRng lib_rng(1);
    const auto library = generate_library(lib_rng, 8192);
    const auto vocab = build_vocabulary(library, anchor->trajectory, 256, {});
    std::printf("vocabulary: %zu of %zu library entries pass the end-state filter, kept %zu\n",
                vocab.provenance.filtered_size, library.size(), vocab.size());

    const TrajVec sigma = sigma_vector();
    auto group = sample_candidates(vocab.entries, anchor->trajectory.flat(), sigma, 8, 8, 1.0, rng);

    std::unique_ptr<WorldModel> wm;
    std::unique_ptr<RewardModel> rm;
    History history;
    if (argc > 1) {
      const RunPaths paths(argv[1]);
      const RunConfig cfg = load_config(paths.config().string());
      SeededRng wrng(cfg.seed, kStreamWorldModel);
      wm = std::make_unique<WorldModel>(cfg.wm.model, wrng);
      load_world_model(*wm, paths);
      RewardModelConfig mc = cfg.rm.model;
      mc.latent_dim = cfg.wm.model.latent_dim;
      SeededRng rrng(cfg.seed, kStreamRewardModel);
      rm = std::make_unique<RewardModel>(mc, rrng);
      nn::load_checkpoint(paths.checkpoint("rm").string(), rm->params());
      history = wm->encode_history(scene);
      std::printf("scoring with the trained models in %s\n", argv[1]);
    }

    std::vector<double> oracle;
    for (auto& c : group) {
      oracle.push_back(dense_final_reward(simulate_rewards(scene, c.traj)));
      c.reward = oracle.back();
      if (rm) {
        SeededRng crng = rng.fork(static_cast<std::uint64_t>(c.vocab_index));
        c.reward = dense_final_reward(score_trajectory(*wm, *rm, history, c.traj, 1, crng));
      }
    }
    std::vector<std::size_t> order(group.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return group[a].reward > group[b].reward; });

    std::printf("\n%4s %6s %-12s %9s %9s %8s %8s\n", "rank", "entry", "source", "distance", "score", "oracle",
                "end y");
    for (std::size_t r = 0; r < order.size(); ++r) {
      const auto& c = group[order[r]];
      std::printf("%4zu %6d %-12s %9.2f %9.3f %8.3f %8.2f\n", r + 1, c.vocab_index,
                  c.source == CandidateSource::softmax ? "softmax" : "neighbour", c.distance, c.reward,
                  oracle[order[r]], c.traj.back().y);
    }
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "demo_plan: %s\n", e.what());
    return 1;
  }
}
