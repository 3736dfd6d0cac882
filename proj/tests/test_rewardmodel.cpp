#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dreamlane/rewardmodel.hpp"

using namespace dreamlane;

namespace {

RewardModelConfig small_rm(std::size_t latent = 16) {
  RewardModelConfig c;
  c.latent_dim = latent;
  c.token_dim = 8;
  c.model_dim = 16;
  c.traj_hidden = 16;
  c.head_hidden = 16;
  return c;
}

struct Fixture {
  History history;
  std::vector<LatentState> imagined;
  PoseSequence traj;

  explicit Fixture(std::size_t latent, std::uint64_t seed = 1) {
    SeededRng rng(seed);
    for (auto& z : history) {
      z.resize(latent);
      for (double& v : z) v = rng.normal(0.0, 0.5);
    }
    imagined.assign(kHorizon, LatentState(latent));
    for (auto& z : imagined)
      for (double& v : z) v = rng.normal(0.0, 0.5);
    ControlSequence c;
    for (auto& u : c) u = {rng.uniform(2.0, 8.0), rng.uniform(-0.3, 0.3)};
    traj = rollout_dynamics(Pose(), c).poses();
  }
};

double reference_bce(double logit, double y) {
  const double p = 1.0 / (1.0 + std::exp(-logit));
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

}  // namespace

TEST(Compression, DeterministicAndWidthL) {
  SeededRng rng(1);
  const RewardModel rm(small_rm(32), rng);
  const Fixture f(32);
  const auto a = rm.compress_latent(f.history[0]);
  EXPECT_EQ(a, rm.compress_latent(f.history[0]));
  EXPECT_EQ(a.size(), 8u);
  EXPECT_THROW(rm.compress_latent(LatentState(31, 0.0)), Error);
}

TEST(Compression, AttentionOverChunksSumsToOne) {
  SeededRng rng(2);
  const RewardModel rm(small_rm(32), rng);
  const Fixture f(32);
  nn::CrossAttention::Cache cache;
  rm.compress_latent(f.history[1], &cache);
  ASSERT_EQ(cache.attn.rows, 1u);
  ASSERT_EQ(cache.attn.cols, 4u);
  double s = 0.0;
  for (std::size_t j = 0; j < 4; ++j) s += cache.attn(0, j);
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(Compression, SingleChunkIsValueProjection) {
  SeededRng rng(3);
  RewardModel rm(small_rm(8), rng);
  const Fixture f(8);
  const auto token = rm.compress_latent(f.history[2]);
  const auto params = rm.compressor().params();  // q.w q.b k.w k.b v.w v.b
  const nn::Param& w = *params[4];
  const nn::Param& b = *params[5];
  for (std::size_t o = 0; o < 8; ++o) {
    double acc = b.value[o];
    for (std::size_t i = 0; i < 8; ++i) acc += static_cast<double>(w.value[o * 8 + i]) * f.history[2][i];
    EXPECT_NEAR(token[o], acc, 1e-12);
  }
}

TEST(RewardModel, RejectsBadInput) {
  SeededRng rng(4);
  const RewardModel rm(small_rm(), rng);
  const Fixture f(16);
  EXPECT_THROW(rm.predict_rewards(f.history, std::span(f.imagined).first(2), f.traj, 3), Error);
  EXPECT_THROW(rm.predict_rewards(f.history, std::span(f.imagined).first(0), f.traj, 0), Error);
  EXPECT_THROW(rm.predict_table(f.history, std::span(f.imagined).first(7), f.traj), Error);
  EXPECT_THROW(RewardModel(RewardModelConfig{.latent_dim = 12, .token_dim = 8}, rng), Error);
}

TEST(RewardModel, ScoresAreProbabilities) {
  SeededRng rng(5);
  const RewardModel rm(small_rm(), rng);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Fixture f(16, seed);
    const auto table = rm.predict_table(f.history, f.imagined, f.traj);
    ASSERT_EQ(table.rows.size(), static_cast<std::size_t>(kHorizon));
    for (const auto& row : table.rows)
      for (double s : row.v) {
        EXPECT_GT(s, 0.0);
        EXPECT_LT(s, 1.0);
      }
  }
}

TEST(RewardModel, PermutingQueryBasesPermutesOutputs) {
  SeededRng rng(6);
  RewardModel rm(small_rm(), rng);
  const Fixture f(16);
  const std::size_t D = rm.config().model_dim;
  const auto before = rm.predict_rewards(f.history, std::span(f.imagined).first(5), f.traj, 5);
  const std::array<int, kRewardDims> perm{3, 7, 0, 5, 1, 6, 2, 4};
  auto& q = rm.query_bases();
  const auto saved = q.value;
  for (int r = 0; r < kRewardDims; ++r)
    std::copy_n(saved.begin() + perm[r] * D, D, q.value.begin() + r * D);
  const auto after = rm.predict_rewards(f.history, std::span(f.imagined).first(5), f.traj, 5);
  for (int r = 0; r < kRewardDims; ++r) EXPECT_EQ(after.logits[r], before.logits[perm[r]]);
}

TEST(RewardModel, HorizonEmbeddingsAreDistinct) {
  SeededRng rng(7);
  const RewardModel rm(small_rm(), rng);
  const auto& e = rm.step_embedding();
  const std::size_t D = rm.config().model_dim;
  for (int a = 0; a < kHorizon; ++a)
    for (int b = a + 1; b < kHorizon; ++b) {
      double d = 0.0;
      for (std::size_t i = 0; i < D; ++i) d += std::pow(e.value[a * D + i] - e.value[b * D + i], 2);
      EXPECT_GT(d, 0.0);
    }
}

TEST(RewardModel, HorizonNeverReadsFutureLatents) {
  SeededRng rng(8);
  const RewardModel rm(small_rm(), rng);
  const Fixture f(16);
  const auto base = rm.predict_table(f.history, f.imagined, f.traj);
  for (int t = 1; t < kHorizon; ++t) {
    auto perturbed = f.imagined;
    for (int k = t; k < kHorizon; ++k)
      for (double& v : perturbed[k]) v += 3.0;
    auto traj = f.traj;
    for (int k = t; k < kHorizon; ++k) traj[k] = Pose(traj[k].x + 1.0, traj[k].y - 1.0, traj[k].theta);
    const auto table = rm.predict_table(f.history, perturbed, traj);
    for (int h = 0; h < t; ++h) EXPECT_EQ(table[h], base[h]) << "horizon " << h + 1 << " read beyond " << t;
  }
}

TEST(Bce, SaturatedLogitsGiveNearZeroLoss) {
  EXPECT_LT(bce_with_logits(20.0, 1.0), 1e-8);
  EXPECT_LT(bce_with_logits(-20.0, 0.0), 1e-8);
}

TEST(Bce, HalfLabelAtZeroLogitIsLn2) {
  EXPECT_NEAR(bce_with_logits(0.0, 0.5), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_with_logits(0.0, 1.0), std::log(2.0), 1e-15);
}

TEST(Bce, MatchesReferenceAcrossRange) {
  // The naive reference loses digits in log(1 - p) beyond |x| ~ 8.
  SeededRng rng(9);
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.uniform(-8.0, 8.0), y = rng.uniform(0.0, 1.0);
    EXPECT_NEAR(bce_with_logits(x, y), reference_bce(x, y), 1e-10);
  }
}

TEST(RewardLoss, MatchesScalarReference) {
  SeededRng rng(10);
  RewardModelConfig cfg = small_rm();
  cfg.dim_weights = {1.0, 0.5, 2.0, 1.5, 1.0, 0.25, 3.0, 1.0};
  cfg.horizon_weights = {1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3};
  const RewardModel rm(cfg, rng);
  std::vector<Fixture> fx;
  for (std::uint64_t s = 0; s < 6; ++s) fx.emplace_back(16, 20 + s);
  std::vector<RewardSample> batch;
  for (std::size_t i = 0; i < fx.size(); ++i) {
    RewardSample s{&fx[i].history, &fx[i].imagined, &fx[i].traj, static_cast<int>(1 + i), {}};
    for (double& v : s.label.v) v = rng.uniform(0.0, 1.0);
    batch.push_back(s);
  }
  double ref = 0.0;
  for (const auto& s : batch) {
    const auto p = rm.predict_rewards(*s.history, std::span(*s.imagined).first(s.t), *s.traj, s.t);
    for (int k = 0; k < kRewardDims; ++k)
      ref += cfg.dim_weights[k] * cfg.horizon_weights[s.t - 1] * reference_bce(p.logits[k], s.label[k]);
  }
  ref /= static_cast<double>(batch.size() * kRewardDims);
  EXPECT_NEAR(rm_loss(rm, batch), ref, 1e-10);
}

TEST(RewardLoss, WeightScalingIsExact) {
  SeededRng rng(11);
  RewardModel rm(small_rm(), rng);
  const Fixture f(16);
  std::vector<RewardSample> batch;
  for (int t = 1; t <= kHorizon; ++t) {
    RewardSample s{&f.history, &f.imagined, &f.traj, t, {}};
    for (double& v : s.label.v) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    batch.push_back(s);
  }
  const double base = rm_loss(rm, batch);
  for (double& w : rm.mutable_config().dim_weights) w *= 4.0;
  EXPECT_EQ(rm_loss(rm, batch), 4.0 * base);
}

TEST(RewardLoss, RejectsLabelsOutsideUnitInterval) {
  SeededRng rng(12);
  const RewardModel rm(small_rm(), rng);
  const Fixture f(16);
  RewardSample s{&f.history, &f.imagined, &f.traj, 2, {}};
  s.label[kEp] = 1.5;
  EXPECT_THROW(rm_loss(rm, std::span(&s, 1)), Error);
}

TEST(RewardTraining, OverfitsOneSample) {
  SeededRng rng(13);
  RewardModel rm(small_rm(), rng);
  const Fixture f(16);
  RewardSample s{&f.history, &f.imagined, &f.traj, 6, {{1.0, 0.0, 1.0, 1.0, 0.7, 0.0, 0.35, 1.0}}};
  nn::AdamW opt(rm.params(), {.lr = 1e-2});
  for (int i = 0; i < 500; ++i) rm_train_step(rm, std::span(&s, 1), opt);
  const auto p = rm.predict_rewards(f.history, std::span(f.imagined).first(6), f.traj, 6);
  for (int k = 0; k < kRewardDims; ++k) EXPECT_NEAR(p.scores[k], s.label[k], 0.05) << "dim " << k;
}

TEST(RewardGradients, FullComposite) {
  SeededRng rng(14);
  RewardModel rm(small_rm(32), rng);
  std::vector<Fixture> fx;
  for (std::uint64_t s = 0; s < 3; ++s) fx.emplace_back(32, 40 + s);
  std::vector<RewardSample> batch;
  for (std::size_t i = 0; i < fx.size(); ++i) {
    RewardSample s{&fx[i].history, &fx[i].imagined, &fx[i].traj, static_cast<int>(3 * i + 2), {}};
    for (double& v : s.label.v) v = rng.uniform(0.0, 1.0);
    batch.push_back(s);
  }
  auto params = rm.params();
  const auto res = nn::gradient_check(
      params, [&] { return rm_loss(rm, batch); }, [&] { rm_accumulate(rm, batch); }, rng, 64);
  EXPECT_GE(res.coords, 32);
  EXPECT_EQ(res.failures, 0) << "max rel error " << res.max_rel_error;
}

TEST(ScoreTrajectory, DeterministicEightByEight) {
  SeededRng rng(15);
  WorldModelConfig wc;
  wc.latent_dim = 16;
  wc.obs_hidden = 16;
  wc.velocity_hidden = {16};
  const WorldModel wm(wc, rng);
  const RewardModel rm(small_rm(16), rng);
  SeededRng srng(3);
  const Scene scene = generate_scene(srng, Difficulty::mixed, 0);
  const History h = wm.encode_history(scene);
  const Fixture f(16);
  SeededRng a(99), b(99);
  const auto ta = score_trajectory(wm, rm, h, f.traj, 4, a);
  const auto tb = score_trajectory(wm, rm, h, f.traj, 4, b);
  EXPECT_EQ(ta, tb);
  EXPECT_EQ(ta.rows.size(), static_cast<std::size_t>(kHorizon));
  EXPECT_EQ(ta[0].v.size(), static_cast<std::size_t>(kRewardDims));
}
