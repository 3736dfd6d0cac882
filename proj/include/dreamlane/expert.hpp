#pragma once

// Anchor (expert) trajectories: a privileged lane-following controller swept
// over lateral offsets, cruise speeds and braking strengths, scored by the
// oracle. The best all-safe candidate stands in for a human log.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "dreamlane/core.hpp"
#include "dreamlane/env.hpp"

namespace dreamlane {

struct ExpertParams {
  double lateral_offset = 0.0;  // m, left positive
  double cruise_factor = 1.0;   // fraction of the speed limit
  double brake_decel = 3.0;     // m/s^2 used for stop targets
};

namespace detail {

/// Arc length at which the ego front must stop for static obstacles that
/// intrude on the band swept at `offset`, or nullopt when the band is clear.
inline std::optional<double> blocking_s(const Scene& scene, double offset, const EnvConfig& cfg) {
  const double band = 0.5 * cfg.ego_width + 0.35;
  std::optional<double> best;
  for (const auto& r : scene.obstacles) {
    double s_lo = std::numeric_limits<double>::infinity(), lat_lo = s_lo;
    double lat_hi = -lat_lo;
    for (const Vec2& c : r.box().corners()) {
      const auto p = scene.project(c);
      s_lo = std::min(s_lo, p.s);
      lat_lo = std::min(lat_lo, p.lateral);
      lat_hi = std::max(lat_hi, p.lateral);
    }
    if (lat_hi < offset - band || lat_lo > offset + band || s_lo < 0.0) continue;
    if (!best || s_lo < *best) best = s_lo;
  }
  return best;
}

}  // namespace detail

/// Closed-loop pure pursuit toward the lane offset, with speed capped by
/// stopping distance to an active stop line, blocking obstacles and slower
/// agents ahead. Acceleration stays within the comfort bounds.
inline ControlSequence expert_controls(const Scene& scene, const ExpertParams& p, const EnvConfig& cfg = {}) {
  ControlSequence out;
  const double hl = 0.5 * cfg.ego_length;
  double x = 0.0, y = 0.0, theta = 0.0, v = scene.initial_speed, accel = 0.0;
  const double cruise = std::min(cfg.v_max, p.cruise_factor * scene.speed_limit);
  std::optional<double> stop_s = detail::blocking_s(scene, p.lateral_offset, cfg);
  if (scene.has_active_stop_line()) stop_s = std::min(stop_s.value_or(1e9), scene.stop_line->s);

  for (int k = 0; k < kHorizon; ++k) {
    const auto proj = scene.project({x, y});
    const double front_s = proj.s + hl;
    double desired = cruise;
    if (stop_s) {
      const double room = *stop_s - 1.0 - front_s - v * kDt;
      desired = std::min(desired, std::sqrt(std::max(0.0, 2.0 * p.brake_decel * room)));
    }
    const double t = k * kDt;
    for (const auto& a : scene.agents) {
      // Keep a time gap to anything ahead in the lane band over the step.
      const OrientedBox b = a.box_at(t + kDt);
      const auto ap = scene.project(b.center);
      if (std::abs(ap.lateral - p.lateral_offset) > 0.5 * cfg.ego_width + b.half_width + 0.6) continue;
      const double gap = ap.s - b.half_length - front_s;
      if (gap < -1.0) continue;
      const double along = a.vx * std::cos(ap.heading) + a.vy * std::sin(ap.heading);
      desired = std::min(desired, std::max(0.0, along + (gap - 6.0) / 1.5));
    }
    // Rate-limited speed tracking: |accel| <= 4 and |jerk| <= 8 per step.
    double target_acc = std::clamp((desired - v) / kDt, -cfg.max_accel, 0.5 * cfg.max_accel);
    target_acc = std::clamp(target_acc, accel - 0.9 * cfg.max_jerk * kDt, accel + 0.9 * cfg.max_jerk * kDt);
    const double v_next = std::clamp(v + target_acc * kDt, 0.0, cfg.v_max);
    accel = (v_next - v) / kDt;
    v = v_next;

    const double look = std::max(4.0, 1.2 * v);
    const Vec2 target = scene.lane_point(proj.s + look, p.lateral_offset);
    const double dx = target.x - x, dy = target.y - y;
    const double alpha = normalize_angle(std::atan2(dy, dx) - theta);
    const double dist = std::max(1e-6, std::hypot(dx, dy));
    double yaw_rate = v > 1e-6 ? v * 2.0 * std::sin(alpha) / dist : 0.0;
    yaw_rate = std::clamp(yaw_rate, -cfg.max_yaw_rate, cfg.max_yaw_rate);

    out[k] = {v, yaw_rate};
    theta += yaw_rate * kDt;
    x += v * std::cos(theta) * kDt;
    y += v * std::sin(theta) * kDt;
  }
  return out;
}

struct AnchorResult {
  Trajectory trajectory;
  HorizonRewardTable table;
  int attempts = 0;
  double score = 0.0;
};

/// Preference among safe candidates: progress first, then comfort, ttc and
/// lane keeping, then small offsets.
inline double anchor_score(const HorizonRewardTable& t, double offset) {
  const RewardVector& r = t[kHorizon - 1];
  return r[kEp] + 0.5 * r[kTtc] + 0.5 * r[kHc] + 0.25 * r[kLk] - 0.05 * std::abs(offset);
}

inline bool all_safe(const HorizonRewardTable& t) {
  for (int k = 0; k < kHorizon; ++k)
    if (!is_safe(t[k])) return false;
  return true;
}

/// Sweeps the expert grid and keeps the best all-safe candidate; falls back
/// to random controls. Returns nullopt after `max_attempts` evaluations
/// without an all-safe trajectory.
inline std::optional<AnchorResult> find_anchor(const Scene& scene, SeededRng& rng, int max_attempts = 10000,
                                               const EnvConfig& cfg = {}) {
  static constexpr std::array<double, 7> kOffsets = {0.0, 0.4, -0.4, 0.8, -0.8, 1.05, -1.05};
  static constexpr std::array<double, 6> kCruise = {1.0, 0.85, 0.7, 0.55, 0.4, 0.25};
  static constexpr std::array<double, 2> kBrake = {2.5, 4.0};
  std::optional<AnchorResult> best;
  int attempts = 0;
  for (double off : kOffsets) {
    for (double cr : kCruise) {
      for (double br : kBrake) {
        if (attempts >= max_attempts) break;
        ++attempts;
        const Trajectory traj = rollout_dynamics(Pose(), expert_controls(scene, {off, cr, br}, cfg), cfg);
        const auto table = simulate_rewards(scene, traj, cfg);
        if (!all_safe(table)) continue;
        const double score = anchor_score(table, off);
        if (!best || score > best->score) best = AnchorResult{traj, table, 0, score};
      }
    }
  }
  while (!best && attempts < max_attempts) {
    ++attempts;
    ControlSequence c;
    if (rng.bernoulli(0.5)) {
      c = expert_controls(scene, {rng.uniform(-1.1, 1.1), rng.uniform(0.0, 1.0), rng.uniform(1.0, 4.0)}, cfg);
    } else {
      const double v0 = rng.uniform(0.0, scene.speed_limit);
      for (auto& u : c) u = {std::clamp(v0 + rng.normal(0.0, 1.0), 0.0, cfg.v_max), rng.uniform(-0.3, 0.3)};
    }
    const Trajectory traj = rollout_dynamics(Pose(), c, cfg);
    const auto table = simulate_rewards(scene, traj, cfg);
    if (all_safe(table)) best = AnchorResult{traj, table, 0, anchor_score(table, 0.0)};
  }
  if (best) best->attempts = attempts;
  return best;
}

}  // namespace dreamlane
