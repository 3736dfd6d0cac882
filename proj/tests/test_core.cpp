#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "dreamlane/core.hpp"
#include "dreamlane/env.hpp"

using namespace dreamlane;

TEST(WrapAngleDiff, Examples) {
  EXPECT_NEAR(wrap_angle_diff(0.1, 2.0 * kPi - 0.1), 0.2, 1e-12);
  EXPECT_EQ(wrap_angle_diff(1.3, 1.3), 0.0);
  EXPECT_NEAR(wrap_angle_diff(0.0, kPi), kPi, 1e-15);
}

TEST(WrapAngleDiff, SymmetricAndPeriodic) {
  SeededRng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const double a = rng.uniform(-20.0, 20.0);
    const double b = rng.uniform(-20.0, 20.0);
    EXPECT_EQ(wrap_angle_diff(a, b), wrap_angle_diff(b, a));
    const double r = wrap_angle_diff(a, b);
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, kPi);
    const int k = rng.uniform_int(-3, 3);
    EXPECT_NEAR(wrap_angle_diff(a, a + 2.0 * kPi * k), 0.0, 1e-12);
  }
}

TEST(Pose, ThetaNormalized) {
  SeededRng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Pose p(0.0, 0.0, rng.uniform(-50.0, 50.0));
    EXPECT_GE(p.theta, -kPi);
    EXPECT_LT(p.theta, kPi);
  }
  EXPECT_EQ(Pose(0, 0, kPi).theta, -kPi);
  EXPECT_EQ(Pose(0, 0, 0.25).theta, 0.25);
}

TEST(Trajectory, RejectsExcessiveDisplacement) {
  PoseSequence poses;
  for (int k = 0; k < kHorizon; ++k) poses[k] = Pose(7.5 * (k + 1), 0.0, 0.0);
  EXPECT_NO_THROW(Trajectory{poses});
  poses[5] = Pose(poses[4].x + 7.6, 0.0, 0.0);
  EXPECT_THROW(Trajectory{poses}, Error);
  EXPECT_NO_THROW(Trajectory(poses, 20.0));
}

TEST(EndState, Examples) {
  PoseSequence straight;
  for (int k = 0; k < kHorizon; ++k) straight[k] = Pose(1.25 * (k + 1), 0.0, 0.0);
  EXPECT_EQ(end_state(Trajectory(straight)), Pose(10, 0, 0));
  EXPECT_EQ(end_state(Trajectory(PoseSequence{})), Pose(0, 0, 0));
}

TEST(EndState, LeftTurnMatchesClosedFormSum) {
  ControlSequence c;
  c.fill({5.0, 0.2});
  const Pose end = end_state(rollout_dynamics(Pose(0, 0, 0), c));
  // x_n = v dt sum_{j=1..n} cos(j a), y_n = v dt sum sin(j a), a = w dt.
  const double a = 0.2 * kDt, n = kHorizon, vdt = 5.0 * kDt;
  const double common = std::sin(n * a / 2.0) / std::sin(a / 2.0);
  EXPECT_NEAR(end.x, vdt * common * std::cos((n + 1) * a / 2.0), 1e-12);
  EXPECT_NEAR(end.y, vdt * common * std::sin((n + 1) * a / 2.0), 1e-12);
  EXPECT_NEAR(end.theta, 0.8, 1e-12);
}

TEST(TrajectoryFile, RoundTripBitExact) {
  SeededRng rng(5);
  std::vector<Trajectory> trajs;
  for (int i = 0; i < 200; ++i) {
    ControlSequence c;
    for (auto& u : c) u = {rng.uniform(0.0, 15.0), rng.uniform(-1.0, 1.0)};
    trajs.push_back(rollout_dynamics(Pose(rng.normal(), rng.normal(), rng.uniform(-3.0, 3.0)), c));
  }
  std::stringstream ss;
  write_trajectories(ss, trajs, "test set");
  const auto back = read_trajectories(ss);
  ASSERT_EQ(back.size(), trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i) EXPECT_EQ(back[i], trajs[i]);
}

TEST(TrajectoryFile, RejectsMalformed) {
  std::stringstream bad("1,2,3\n");
  EXPECT_THROW(read_trajectories(bad), Error);
  std::stringstream junk("# ok\n1,2,x,4,5,6,7,8,9,10,11,12,13,14,15,16,17,18,19,20,21,22,23,24\n");
  EXPECT_THROW(read_trajectories(junk), Error);
}

TEST(SeededRng, Deterministic) {
  SeededRng a(42, 7), b(42, 7), c(42, 8);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs = differs || x != c.next_u64();
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(SeededRng(1).fork(3).next_u64(), SeededRng(1).fork(3).next_u64());
  EXPECT_NE(SeededRng(1).fork(3).next_u64(), SeededRng(1).fork(4).next_u64());
}

TEST(SeededRng, FrozenFirstDraws) {
  // Pins seeding and the hand-written distributions across platforms.
  SeededRng rng(2024, 1);
  EXPECT_EQ(rng.next_u64(), 8103689562142257932ULL);
  EXPECT_EQ(rng.uniform(), 0.56100596669599156);
  EXPECT_EQ(rng.normal(), 0.68761407623217496);
}

TEST(SeededRng, UniformIndexCoversRange) {
  SeededRng rng(9);
  std::array<int, 5> counts{};
  for (int i = 0; i < 50000; ++i) ++counts[rng.uniform_index(5)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(SeededRng, NormalMoments) {
  SeededRng rng(10);
  double s = 0, s2 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.02);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Numbers, FormatParseRoundTrip) {
  SeededRng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform_int(-8, 8));
    EXPECT_EQ(parse_double(format_double(v)), v);
  }
  EXPECT_THROW(parse_double("1.5abc"), Error);
}
