#pragma once

// Desk-scale 2D driving environment: procedural scenes, unicycle rollout and
// the geometric reward oracle that labels eight reward dimensions at eight
// prefix horizons.

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dreamlane/core.hpp"
#include "dreamlane/geometry.hpp"

namespace dreamlane {

struct EnvConfig {
  double v_max = kDefaultVMax;
  double max_yaw_rate = 1.0;
  double lane_half_width = 2.0;
  double ego_length = 4.0;
  double ego_width = 1.8;
  double ttc_threshold = 1.0;
  double max_accel = 4.0;
  double max_jerk = 8.0;
  double speed_limit_min = 8.0;
  double speed_limit_max = 12.0;
  double curvature_max = 0.05;
  double straight_prob = 0.3;
  double stop_line_prob = 0.3;
  double stop_line_active_prob = 0.7;
  double centerline_start = -20.0;
  double centerline_end = 80.0;
  double centerline_spacing = 0.5;
};

enum class Difficulty { empty, static_obstacles, dynamic, mixed };

inline std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::empty: return "empty";
    case Difficulty::static_obstacles: return "static";
    case Difficulty::dynamic: return "dynamic";
    case Difficulty::mixed: return "mixed";
  }
  return "empty";
}

inline Difficulty parse_difficulty(std::string_view s) {
  if (s == "empty") return Difficulty::empty;
  if (s == "static") return Difficulty::static_obstacles;
  if (s == "dynamic") return Difficulty::dynamic;
  if (s == "mixed") return Difficulty::mixed;
  throw Error("unknown difficulty '" + std::string(s) + "'");
}

struct CenterlinePoint {
  double s = 0.0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

/// Axis-aligned rectangle in the ego frame at t = 0.
struct Rect {
  double cx = 0.0;
  double cy = 0.0;
  double half_length = 0.0;  // along x
  double half_width = 0.0;   // along y

  OrientedBox box() const { return {{cx, cy}, half_length, half_width, 0.0}; }
};

struct Agent {
  Rect rect;
  double vx = 0.0;
  double vy = 0.0;

  /// Footprint at time `t` seconds under constant velocity.
  OrientedBox box_at(double t) const {
    return {{rect.cx + vx * t, rect.cy + vy * t}, rect.half_length, rect.half_width, 0.0};
  }
};

struct StopLine {
  double s = 0.0;
  bool active = true;
};

struct LaneProjection {
  double s = 0.0;
  double lateral = 0.0;  // left positive
  double heading = 0.0;  // lane tangent
};

struct Scene {
  int id = 0;
  Difficulty difficulty = Difficulty::empty;
  double speed_limit = 10.0;
  double lane_half_width = 2.0;
  double initial_speed = 8.0;
  double curvature = 0.0;
  std::vector<CenterlinePoint> centerline;
  std::vector<Rect> obstacles;
  std::vector<Agent> agents;
  std::optional<StopLine> stop_line;

  /// Nearest-segment projection onto the centerline polyline. The first and
  /// last segments extrapolate so points beyond the ends still get a
  /// meaningful lateral offset.
  LaneProjection project(Vec2 p) const {
    const std::size_t n = centerline.size();
    if (n < 2) throw Error("scene centerline has fewer than two points");
    double best_d2 = std::numeric_limits<double>::infinity();
    LaneProjection best;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const auto& a = centerline[i];
      const auto& b = centerline[i + 1];
      const Vec2 pa{a.x, a.y};
      const Vec2 d{b.x - a.x, b.y - a.y};
      const double len2 = dot(d, d);
      double u = dot(p - pa, d) / len2;
      if (i > 0) u = std::max(u, 0.0);
      if (i + 2 < n) u = std::min(u, 1.0);
      const Vec2 foot = pa + u * d;
      const double d2 = dot(p - foot, p - foot);
      if (d2 < best_d2) {
        best_d2 = d2;
        const double len = std::sqrt(len2);
        best.s = a.s + u * (b.s - a.s);
        best.lateral = cross({d.x / len, d.y / len}, p - pa);
        best.heading = normalize_angle(a.heading + u * normalize_angle(b.heading - a.heading));
      }
    }
    return best;
  }

  /// Pose on the centerline at arc length s (linear interpolation).
  Pose centerline_pose(double s) const {
    const std::size_t n = centerline.size();
    const double s0 = centerline.front().s;
    const double spacing = centerline[1].s - s0;
    double fi = (s - s0) / spacing;
    auto i = static_cast<std::ptrdiff_t>(std::floor(fi));
    i = std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 2);
    const double u = fi - static_cast<double>(i);
    const auto& a = centerline[static_cast<std::size_t>(i)];
    const auto& b = centerline[static_cast<std::size_t>(i) + 1];
    return Pose(a.x + u * (b.x - a.x), a.y + u * (b.y - a.y),
                a.heading + u * normalize_angle(b.heading - a.heading));
  }

  /// Point displaced laterally (left positive) from the centerline at s.
  Vec2 lane_point(double s, double lateral) const {
    const Pose c = centerline_pose(s);
    return {c.x - lateral * std::sin(c.theta), c.y + lateral * std::cos(c.theta)};
  }

  bool has_active_stop_line() const { return stop_line && stop_line->active; }
};

/// Constant-curvature centerline through the origin with heading 0 at s = 0.
inline std::vector<CenterlinePoint> make_centerline(double curvature, const EnvConfig& cfg) {
  std::vector<CenterlinePoint> pts;
  const int count = static_cast<int>(std::lround((cfg.centerline_end - cfg.centerline_start) / cfg.centerline_spacing)) + 1;
  pts.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double s = cfg.centerline_start + i * cfg.centerline_spacing;
    CenterlinePoint p;
    p.s = s;
    if (std::abs(curvature) < 1e-12) {
      p.x = s;
      p.y = 0.0;
    } else {
      p.x = std::sin(curvature * s) / curvature;
      p.y = (1.0 - std::cos(curvature * s)) / curvature;
    }
    p.heading = normalize_angle(curvature * s);
    pts.push_back(p);
  }
  return pts;
}

inline OrientedBox ego_box(const Pose& pose, const EnvConfig& cfg) {
  return {{pose.x, pose.y}, 0.5 * cfg.ego_length, 0.5 * cfg.ego_width, pose.theta};
}

/// True when any part of the rectangle lies inside the drivable corridor
/// (|lateral| <= lane_half_width, ahead of the rear end of the centerline).
inline bool rect_intersects_corridor(const Scene& scene, const Rect& r, double grid = 0.1) {
  const int nx = static_cast<int>(std::ceil(2.0 * r.half_length / grid));
  const int ny = static_cast<int>(std::ceil(2.0 * r.half_width / grid));
  for (int i = 0; i <= nx; ++i) {
    for (int j = 0; j <= ny; ++j) {
      const Vec2 p{r.cx - r.half_length + std::min(2.0 * r.half_length, i * grid),
                   r.cy - r.half_width + std::min(2.0 * r.half_width, j * grid)};
      const auto proj = scene.project(p);
      if (std::abs(proj.lateral) <= scene.lane_half_width) return true;
    }
  }
  return false;
}

/// Procedural scene. `empty` has no obstacles, agents or stop line; `static`
/// always has at least one obstacle footprint inside the corridor.
inline Scene generate_scene(SeededRng& rng, Difficulty difficulty, int id = 0, const EnvConfig& cfg = {}) {
  Scene scene;
  scene.id = id;
  scene.difficulty = difficulty;
  scene.lane_half_width = cfg.lane_half_width;
  scene.speed_limit = rng.uniform(cfg.speed_limit_min, cfg.speed_limit_max);
  scene.initial_speed = scene.speed_limit * rng.uniform(0.6, 1.0);
  scene.curvature = rng.bernoulli(cfg.straight_prob) ? 0.0 : rng.uniform(-cfg.curvature_max, cfg.curvature_max);
  scene.centerline = make_centerline(scene.curvature, cfg);
  if (difficulty == Difficulty::empty) return scene;

  auto make_obstacle = [&](double lat_lo, double lat_hi) {
    const double s = rng.uniform(15.0, 50.0);
    const double lat = rng.uniform(lat_lo, lat_hi);
    const Vec2 c = scene.lane_point(s, lat);
    return Rect{c.x, c.y, rng.uniform(0.8, 2.3), rng.uniform(0.4, 1.0)};
  };

  int n_static = 0;
  if (difficulty == Difficulty::static_obstacles) n_static = rng.uniform_int(1, 4);
  if (difficulty == Difficulty::mixed) n_static = rng.uniform_int(1, 3);
  if (n_static > 0) {
    Rect blocking = make_obstacle(-2.6, 2.6);
    while (!rect_intersects_corridor(scene, blocking)) blocking = make_obstacle(-2.6, 2.6);
    scene.obstacles.push_back(blocking);
    for (int i = 1; i < n_static; ++i) scene.obstacles.push_back(make_obstacle(-4.0, 4.0));
  }

  int n_agents = 0;
  if (difficulty == Difficulty::dynamic) n_agents = rng.uniform_int(1, 2);
  if (difficulty == Difficulty::mixed) n_agents = rng.uniform_int(0, 2);
  for (int i = 0; i < n_agents; ++i) {
    Agent agent;
    if (rng.bernoulli(0.5)) {
      // Slower lead vehicle travelling along the lane.
      const double s = rng.uniform(15.0, 35.0);
      const Pose c = scene.centerline_pose(s);
      const Vec2 p = scene.lane_point(s, rng.uniform(-0.5, 0.5));
      const double v = scene.speed_limit * rng.uniform(0.0, 0.6);
      agent.rect = {p.x, p.y, 2.2, 0.9};
      agent.vx = v * std::cos(c.theta);
      agent.vy = v * std::sin(c.theta);
    } else {
      // Crossing pedestrian or cyclist heading into the lane.
      const double s = rng.uniform(20.0, 45.0);
      const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const Pose c = scene.centerline_pose(s);
      const Vec2 p = scene.lane_point(s, side * rng.uniform(5.0, 8.0));
      const double v = rng.uniform(1.0, 2.5);
      agent.rect = {p.x, p.y, 0.4, 0.4};
      agent.vx = side * v * std::sin(c.theta);
      agent.vy = -side * v * std::cos(c.theta);
    }
    scene.agents.push_back(agent);
  }

  if (rng.bernoulli(cfg.stop_line_prob)) {
    scene.stop_line = StopLine{rng.uniform(15.0, 45.0), rng.bernoulli(cfg.stop_line_active_prob)};
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Kinematics

struct Control {
  double speed = 0.0;     // m/s
  double yaw_rate = 0.0;  // rad/s
};

using ControlSequence = std::array<Control, kHorizon>;

/// Unicycle integration at dt = 0.5 s; heading is updated before position.
inline Trajectory rollout_dynamics(const Pose& start, const ControlSequence& controls, const EnvConfig& cfg = {}) {
  PoseSequence poses;
  double x = start.x, y = start.y, theta = start.theta;
  for (int k = 0; k < kHorizon; ++k) {
    const auto& c = controls[k];
    if (!(c.speed >= 0.0 && c.speed <= cfg.v_max + 1e-12)) {
      throw Error("rollout_dynamics: speed " + std::to_string(c.speed) + " outside [0, v_max]");
    }
    if (!(std::abs(c.yaw_rate) <= cfg.max_yaw_rate + 1e-12)) {
      throw Error("rollout_dynamics: yaw rate " + std::to_string(c.yaw_rate) + " outside limit");
    }
    theta += c.yaw_rate * kDt;
    x += c.speed * std::cos(theta) * kDt;
    y += c.speed * std::sin(theta) * kDt;
    poses[k] = Pose(x, y, theta);
  }
  return Trajectory(poses, cfg.v_max);
}

/// Ego history before t = 0: driving along the centerline at the scene's
/// initial speed. Frames at t = -1.5, -1.0, -0.5, 0.0.
struct HistoryFrame {
  Pose pose;
  double speed = 0.0;
  double time = 0.0;
};

inline std::array<HistoryFrame, 4> history_frames(const Scene& scene) {
  std::array<HistoryFrame, 4> out;
  for (int i = 0; i < 4; ++i) {
    const double t = -(3 - i) * kDt;
    Pose p = scene.centerline_pose(scene.initial_speed * t);
    if (i == 3) p = Pose(0.0, 0.0, 0.0);
    out[i] = {p, scene.initial_speed, t};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reward oracle

enum RewardDim : int { kNc = 0, kDac, kDdc, kTlc, kEp, kTtc, kLk, kHc };
inline constexpr int kRewardDims = 8;
inline constexpr std::array<std::string_view, kRewardDims> kRewardNames = {"nc", "dac", "ddc", "tlc",
                                                                          "ep", "ttc", "lk",  "hc"};
inline constexpr std::array<int, 4> kSafetyDims = {kNc, kDac, kDdc, kTlc};
inline constexpr std::array<int, 4> kTaskDims = {kEp, kTtc, kLk, kHc};

struct RewardVector {
  std::array<double, kRewardDims> v{};

  double& operator[](int i) { return v[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return v[static_cast<std::size_t>(i)]; }
  friend bool operator==(const RewardVector&, const RewardVector&) = default;
};

/// Row t-1 covers the trajectory prefix up to t * 0.5 s.
struct HorizonRewardTable {
  std::array<RewardVector, kHorizon> rows{};

  RewardVector& operator[](int t) { return rows[static_cast<std::size_t>(t)]; }
  const RewardVector& operator[](int t) const { return rows[static_cast<std::size_t>(t)]; }
  friend bool operator==(const HorizonRewardTable&, const HorizonRewardTable&) = default;
};

/// Per-step quantities the oracle aggregates over prefixes.
struct StepDiagnostics {
  std::array<bool, kHorizon> collision{};
  std::array<bool, kHorizon> off_corridor{};
  std::array<bool, kHorizon> wrong_direction{};
  std::array<bool, kHorizon> crossed_stop_line{};
  std::array<bool, kHorizon> ttc_violation{};
  std::array<double, kHorizon> lateral{};
  std::array<double, kHorizon> progress{};
  std::array<double, kHorizon> speed{};
  std::array<double, kHorizon> accel{};
};

inline StepDiagnostics step_diagnostics(const Scene& scene, const PoseSequence& poses, const EnvConfig& cfg = {}) {
  StepDiagnostics diag;
  const double s_origin = scene.project({0.0, 0.0}).s;
  Vec2 prev{0.0, 0.0};
  double prev_speed = scene.initial_speed;
  for (int k = 0; k < kHorizon; ++k) {
    const Pose& pose = poses[k];
    const double t = (k + 1) * kDt;
    const OrientedBox ego = ego_box(pose, cfg);
    const Vec2 center{pose.x, pose.y};

    bool hit = false;
    for (const auto& obs : scene.obstacles) hit = hit || boxes_overlap(ego, obs.box());
    for (const auto& agent : scene.agents) hit = hit || boxes_overlap(ego, agent.box_at(t));
    diag.collision[k] = hit;

    bool off = false;
    for (const Vec2& c : ego.corners()) off = off || std::abs(scene.project(c).lateral) > scene.lane_half_width;
    diag.off_corridor[k] = off;

    const auto proj = scene.project(center);
    diag.lateral[k] = proj.lateral;
    diag.progress[k] = proj.s - s_origin;
    diag.wrong_direction[k] = wrap_angle_diff(pose.theta, proj.heading) > 0.5 * kPi;

    if (scene.has_active_stop_line()) {
      const Vec2 front = center + (0.5 * cfg.ego_length) * ego.axis_u();
      diag.crossed_stop_line[k] = scene.project(front).s >= scene.stop_line->s;
    }

    const double speed = norm(center - prev) / kDt;
    diag.speed[k] = speed;
    diag.accel[k] = (speed - prev_speed) / kDt;
    prev = center;
    prev_speed = speed;

    // Forward time-to-collision: constant-velocity projection of ego and
    // agents over the next ttc_threshold seconds, agents ahead only.
    bool ttc_bad = false;
    const Vec2 heading = ego.axis_u();
    for (const auto& agent : scene.agents) {
      const OrientedBox now = agent.box_at(t);
      if (dot(now.center - center, heading) <= 0.0) continue;
      for (double tau = 0.0; tau < cfg.ttc_threshold - 1e-9; tau += 0.05) {
        OrientedBox ego_future = ego;
        ego_future.center = center + (speed * tau) * heading;
        if (boxes_overlap(ego_future, agent.box_at(t + tau))) {
          ttc_bad = true;
          break;
        }
      }
      if (ttc_bad) break;
    }
    diag.ttc_violation[k] = ttc_bad;
  }
  return diag;
}

/// Eight reward dimensions at each of eight prefix horizons. Binary safety
/// dimensions latch to 0 once violated.
inline HorizonRewardTable simulate_rewards(const Scene& scene, const PoseSequence& poses, const EnvConfig& cfg = {}) {
  const StepDiagnostics d = step_diagnostics(scene, poses, cfg);
  HorizonRewardTable table;
  bool collided = false, off = false, wrong = false, crossed = false, ttc_bad = false;
  double max_lat = 0.0, max_acc = 0.0, max_jerk = 0.0;
  for (int k = 0; k < kHorizon; ++k) {
    collided = collided || d.collision[k];
    off = off || d.off_corridor[k];
    wrong = wrong || d.wrong_direction[k];
    crossed = crossed || d.crossed_stop_line[k];
    ttc_bad = ttc_bad || d.ttc_violation[k];
    max_lat = std::max(max_lat, std::abs(d.lateral[k]));
    max_acc = std::max(max_acc, std::abs(d.accel[k]));
    if (k > 0) max_jerk = std::max(max_jerk, std::abs(d.accel[k] - d.accel[k - 1]) / kDt);

    RewardVector& r = table[k];
    r[kNc] = collided ? 0.0 : 1.0;
    r[kDac] = off ? 0.0 : 1.0;
    r[kDdc] = wrong ? 0.0 : 1.0;
    r[kTlc] = crossed ? 0.0 : 1.0;
    const double expected = scene.speed_limit * (k + 1) * kDt;
    r[kEp] = std::clamp(d.progress[k] / expected, 0.0, 1.0);
    r[kTtc] = ttc_bad ? 0.0 : 1.0;
    const double half = scene.lane_half_width;
    r[kLk] = max_lat <= 0.5 * half ? 1.0 : std::max(0.0, 1.0 - (max_lat - 0.5 * half) / half);
    r[kHc] = (max_acc <= cfg.max_accel && max_jerk <= cfg.max_jerk) ? 1.0 : 0.0;
  }
  return table;
}

inline HorizonRewardTable simulate_rewards(const Scene& scene, const Trajectory& traj, const EnvConfig& cfg = {}) {
  return simulate_rewards(scene, traj.poses(), cfg);
}

inline bool is_safe(const RewardVector& r) {
  return r[kNc] == 1.0 && r[kDac] == 1.0 && r[kDdc] == 1.0 && r[kTlc] == 1.0;
}

// ---------------------------------------------------------------------------
// Scene file: '[section]' headers, 'key = value' pairs and CSV rows.

inline void write_scene(std::ostream& os, const Scene& scene) {
  os << "# dreamlane scene v1\n[scene]\n";
  os << "id = " << scene.id << '\n';
  os << "difficulty = " << to_string(scene.difficulty) << '\n';
  os << "speed_limit = " << format_double(scene.speed_limit) << '\n';
  os << "lane_half_width = " << format_double(scene.lane_half_width) << '\n';
  os << "initial_speed = " << format_double(scene.initial_speed) << '\n';
  os << "curvature = " << format_double(scene.curvature) << '\n';
  os << "[centerline]\n# s,x,y,heading\n";
  for (const auto& p : scene.centerline) {
    os << format_double(p.s) << ',' << format_double(p.x) << ',' << format_double(p.y) << ','
       << format_double(p.heading) << '\n';
  }
  os << "[obstacles]\n# cx,cy,half_length,half_width\n";
  for (const auto& r : scene.obstacles) {
    os << format_double(r.cx) << ',' << format_double(r.cy) << ',' << format_double(r.half_length) << ','
       << format_double(r.half_width) << '\n';
  }
  os << "[agents]\n# cx,cy,half_length,half_width,vx,vy\n";
  for (const auto& a : scene.agents) {
    os << format_double(a.rect.cx) << ',' << format_double(a.rect.cy) << ',' << format_double(a.rect.half_length)
       << ',' << format_double(a.rect.half_width) << ',' << format_double(a.vx) << ',' << format_double(a.vy) << '\n';
  }
  os << "[stop_line]\n";
  if (scene.stop_line) {
    os << "s = " << format_double(scene.stop_line->s) << '\n';
    os << "active = " << (scene.stop_line->active ? 1 : 0) << '\n';
  }
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline Scene read_scene(std::istream& is) {
  Scene scene;
  std::string section;
  std::string line;
  std::optional<double> stop_s;
  bool stop_active = true;
  while (std::getline(is, line)) {
    const std::string_view view = detail::trim(line);
    if (is_blank_or_comment(view)) continue;
    if (view.front() == '[') {
      section = std::string(view.substr(1, view.find(']') - 1));
      continue;
    }
    if (section == "scene" || section == "stop_line") {
      const auto eq = view.find('=');
      if (eq == std::string_view::npos) throw Error("scene file: expected key = value in [" + section + "]");
      const auto key = detail::trim(view.substr(0, eq));
      const auto value = detail::trim(view.substr(eq + 1));
      if (section == "stop_line") {
        if (key == "s") stop_s = parse_double(value);
        else if (key == "active") stop_active = parse_double(value) != 0.0;
        else throw Error("scene file: unknown stop_line key '" + std::string(key) + "'");
      } else if (key == "id") scene.id = static_cast<int>(parse_double(value));
      else if (key == "difficulty") scene.difficulty = parse_difficulty(value);
      else if (key == "speed_limit") scene.speed_limit = parse_double(value);
      else if (key == "lane_half_width") scene.lane_half_width = parse_double(value);
      else if (key == "initial_speed") scene.initial_speed = parse_double(value);
      else if (key == "curvature") scene.curvature = parse_double(value);
      else throw Error("scene file: unknown key '" + std::string(key) + "'");
      continue;
    }
    const auto f = parse_csv_doubles(view);
    if (section == "centerline" && f.size() == 4) {
      scene.centerline.push_back({f[0], f[1], f[2], f[3]});
    } else if (section == "obstacles" && f.size() == 4) {
      scene.obstacles.push_back({f[0], f[1], f[2], f[3]});
    } else if (section == "agents" && f.size() == 6) {
      scene.agents.push_back({{f[0], f[1], f[2], f[3]}, f[4], f[5]});
    } else {
      throw Error("scene file: malformed row in [" + section + "]");
    }
  }
  if (stop_s) scene.stop_line = StopLine{*stop_s, stop_active};
  if (scene.centerline.size() < 64) throw Error("scene file: centerline needs at least 64 points");
  return scene;
}

// ---------------------------------------------------------------------------
// Label file: scene_id,traj_id followed by 64 reals (8 horizons x 8 dims,
// horizon-major).

struct LabelRecord {
  int scene_id = 0;
  int traj_id = 0;
  HorizonRewardTable table;
};

inline void write_label(std::ostream& os, const LabelRecord& rec) {
  os << rec.scene_id << ',' << rec.traj_id;
  for (int t = 0; t < kHorizon; ++t) {
    for (int k = 0; k < kRewardDims; ++k) os << ',' << format_double(rec.table[t][k]);
  }
  os << '\n';
}

inline std::vector<LabelRecord> read_labels(std::istream& is) {
  std::vector<LabelRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (is_blank_or_comment(line)) continue;
    const auto f = parse_csv_doubles(line);
    if (f.size() != 2 + kHorizon * kRewardDims) throw Error("label file: expected 66 fields per line");
    LabelRecord rec;
    rec.scene_id = static_cast<int>(f[0]);
    rec.traj_id = static_cast<int>(f[1]);
    for (int t = 0; t < kHorizon; ++t) {
      for (int k = 0; k < kRewardDims; ++k) rec.table[t][k] = f[2 + t * kRewardDims + k];
    }
    out.push_back(rec);
  }
  return out;
}

}  // namespace dreamlane
