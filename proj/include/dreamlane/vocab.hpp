#pragma once

// Spatially constrained trajectory vocabulary: a kinematically feasible
// candidate library, end-state filtering against an anchor and stratified
// selection by lateral deviation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "dreamlane/core.hpp"
#include "dreamlane/env.hpp"

namespace dreamlane {

struct LibraryConfig {
  double v_max = kDefaultVMax;
  double yaw_bias_sd = 0.15;     // rad/s, per-trajectory constant turn
  double yaw_noise_sd = 0.25;    // rad/s, innovation of the filtered noise
  double yaw_smoothing = 0.7;    // AR(1) coefficient
  double max_speed_jump = 5.0;   // m/s between piecewise-constant segments
  double swerve_fraction = 0.08; // slow out-and-back heading swings
  double dedup_xy = 0.5;         // m
  double dedup_theta_deg = 5.0;
};

/// Library of feasible trajectories from the origin. End states are unique on
/// the dedup grid.
inline std::vector<Trajectory> generate_library(SeededRng& rng, std::size_t size, const LibraryConfig& lc = {},
                                                const EnvConfig& cfg = {}) {
  if (size == 0) throw Error("generate_library: size must be at least 1");
  std::vector<Trajectory> out;
  out.reserve(size);
  std::set<std::tuple<long, long, long>> seen;
  const double dtheta = deg_to_rad(lc.dedup_theta_deg);
  const std::size_t max_draws = 100 * size + 1000;
  for (std::size_t draw = 0; out.size() < size; ++draw) {
    if (draw >= max_draws) throw Error("generate_library: dedup grid exhausted");
    ControlSequence c;
    if (rng.bernoulli(lc.swerve_fraction)) {
      const double w = rng.uniform(0.6, cfg.max_yaw_rate) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
      const int turn_back = rng.uniform_int(3, 5);
      for (int k = 0; k < kHorizon; ++k) c[k] = {rng.uniform(0.3, 3.0), k < turn_back ? w : -w};
    } else {
      std::array<double, kHorizon> speed{};
      double v = rng.uniform(0.0, lc.v_max);
      const int changes = rng.uniform_int(0, 2);
      std::array<int, 2> at{rng.uniform_int(1, kHorizon - 1), rng.uniform_int(1, kHorizon - 1)};
      for (int k = 0; k < kHorizon; ++k) {
        for (int j = 0; j < changes; ++j) {
          if (at[j] == k) v = std::clamp(v + rng.uniform(-lc.max_speed_jump, lc.max_speed_jump), 0.0, lc.v_max);
        }
        speed[k] = v;
      }
      const double bias = rng.normal(0.0, lc.yaw_bias_sd);
      double noise = 0.0;
      for (int k = 0; k < kHorizon; ++k) {
        noise = lc.yaw_smoothing * noise + (1.0 - lc.yaw_smoothing) * rng.normal(0.0, lc.yaw_noise_sd);
        c[k] = {speed[k], std::clamp(bias + noise, -cfg.max_yaw_rate, cfg.max_yaw_rate)};
      }
    }
    Trajectory traj = rollout_dynamics(Pose(), c, cfg);
    const Pose e = end_state(traj);
    const auto key = std::make_tuple(std::lround(e.x / lc.dedup_xy), std::lround(e.y / lc.dedup_xy),
                                     std::lround(e.theta / dtheta));
    if (!seen.insert(key).second) continue;
    out.push_back(std::move(traj));
  }
  return out;
}

struct EndStateThresholds {
  double x = 10.0;           // m
  double y = 5.0;            // m
  double theta_deg = 20.0;   // deg
};

/// |dx| <= x, |dy| <= y and wrapped heading deviation <= theta, end states.
inline bool passes_end_state(const Trajectory& traj, const Trajectory& anchor, const EndStateThresholds& th) {
  if (!(th.x > 0.0 && th.y > 0.0 && th.theta_deg > 0.0)) throw Error("end-state thresholds must be positive");
  const Pose a = end_state(anchor), e = end_state(traj);
  return std::abs(e.x - a.x) <= th.x && std::abs(e.y - a.y) <= th.y &&
         wrap_angle_diff(e.theta, a.theta) <= deg_to_rad(th.theta_deg);
}

/// Library indices that pass the end-state constraints, in library order.
inline std::vector<std::size_t> filter_indices(std::span<const Trajectory> library, const Trajectory& anchor,
                                               const EndStateThresholds& th = {}) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < library.size(); ++i)
    if (passes_end_state(library[i], anchor, th)) out.push_back(i);
  return out;
}

inline std::vector<Trajectory> filter_by_end_state(std::span<const Trajectory> library, const Trajectory& anchor,
                                                   const EndStateThresholds& th = {}) {
  std::vector<Trajectory> out;
  for (std::size_t i : filter_indices(library, anchor, th)) out.push_back(library[i]);
  return out;
}

/// Positions into `filtered` chosen by stratified selection: sort by |dy|
/// (then |dx|, then position), take round(i (N - 1) / (K - 1)).
inline std::vector<std::size_t> stratified_positions(std::span<const Trajectory> filtered, const Trajectory& anchor,
                                                     std::size_t k) {
  if (filtered.empty()) throw Error("stratified_select: empty candidate set");
  if (k == 0) throw Error("stratified_select: K must be positive");
  const Pose a = end_state(anchor);
  std::vector<std::size_t> order(filtered.size());
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](std::size_t i) {
    const Pose e = end_state(filtered[i]);
    return std::make_tuple(std::abs(e.y - a.y), std::abs(e.x - a.x), i);
  };
  std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return key(l) < key(r); });
  const std::size_t n = order.size();
  if (n <= k) return order;
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t pos = k == 1 ? 0
                                   : static_cast<std::size_t>(std::lround(static_cast<double>(i) * (n - 1) /
                                                                          static_cast<double>(k - 1)));
    out[i] = order[pos];
  }
  return out;
}

struct VocabProvenance {
  std::size_t source_size = 0;
  std::size_t filtered_size = 0;
  EndStateThresholds thresholds;
  int anchor_id = 0;
  std::uint64_t seed = 0;
};

struct TrajectoryVocabulary {
  std::vector<Trajectory> entries;
  VocabProvenance provenance;
  std::vector<std::string> warnings;

  std::size_t size() const { return entries.size(); }
};

inline TrajectoryVocabulary stratified_select(std::span<const Trajectory> filtered, const Trajectory& anchor,
                                              std::size_t k) {
  TrajectoryVocabulary v;
  for (std::size_t p : stratified_positions(filtered, anchor, k)) v.entries.push_back(filtered[p]);
  v.provenance.filtered_size = filtered.size();
  if (filtered.size() < k) {
    v.warnings.push_back("only " + std::to_string(filtered.size()) + " candidates survived filtering (K = " +
                         std::to_string(k) + ")");
  }
  return v;
}

/// Filter then select; records provenance.
inline TrajectoryVocabulary build_vocabulary(std::span<const Trajectory> library, const Trajectory& anchor,
                                             std::size_t k, const EndStateThresholds& th, int anchor_id = 0,
                                             std::uint64_t seed = 0) {
  const auto filtered = filter_by_end_state(library, anchor, th);
  if (filtered.empty()) {
    // The anchor itself always satisfies the constraints.
    const std::vector<Trajectory> self{anchor};
    TrajectoryVocabulary v = stratified_select(self, anchor, k);
    v.warnings.insert(v.warnings.begin(), "no library entry passed the end-state filter; using the anchor");
    v.provenance = {library.size(), 0, th, anchor_id, seed};
    return v;
  }
  TrajectoryVocabulary v = stratified_select(filtered, anchor, k);
  v.provenance = {library.size(), filtered.size(), th, anchor_id, seed};
  return v;
}

}  // namespace dreamlane
