#pragma once

// Shared value types: poses, fixed-horizon trajectories, angle helpers,
// reproducible random streams and the plain-text trajectory format.

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <exception>
#include <mutex>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

namespace dreamlane {

inline constexpr int kHorizon = 8;
inline constexpr double kDt = 0.5;
inline constexpr double kPi = std::numbers::pi;
inline constexpr double kDefaultVMax = 15.0;
inline constexpr int kTrajCoords = 3 * kHorizon;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Maps any angle into [-pi, pi).
inline double normalize_angle(double a) {
  if (a >= -kPi && a < kPi) return a;
  double r = std::fmod(a + kPi, 2.0 * kPi);
  if (r < 0.0) r += 2.0 * kPi;
  double out = r - kPi;
  if (out >= kPi) out -= 2.0 * kPi;
  return out;
}

/// Unsigned heading deviation in [0, pi], symmetric in its arguments.
inline double wrap_angle_diff(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 2.0 * kPi);
  return std::min(d, 2.0 * kPi - d);
}

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose() = default;
  Pose(double x_, double y_, double theta_) : x(x_), y(y_), theta(normalize_angle(theta_)) {}

  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Unchecked fixed-length pose sequence. Used where candidates may be
/// kinematically infeasible (random Gaussian samples).
using PoseSequence = std::array<Pose, kHorizon>;

/// Flat (x0, y0, theta0, ..., x7, y7, theta7) layout.
using TrajVec = std::array<double, kTrajCoords>;

inline TrajVec flatten(const PoseSequence& poses) {
  TrajVec out{};
  for (int k = 0; k < kHorizon; ++k) {
    out[3 * k] = poses[k].x;
    out[3 * k + 1] = poses[k].y;
    out[3 * k + 2] = poses[k].theta;
  }
  return out;
}

inline PoseSequence unflatten(const TrajVec& v) {
  PoseSequence out;
  for (int k = 0; k < kHorizon; ++k) out[k] = Pose(v[3 * k], v[3 * k + 1], v[3 * k + 2]);
  return out;
}

/// Eight poses at 2 Hz (0.5 s .. 4.0 s) in the ego frame at t = 0:
/// x forward, y left, theta counterclockwise from +x.
class Trajectory {
 public:
  static constexpr double dt = kDt;

  /// Throws Error when a consecutive displacement exceeds v_max * dt.
  explicit Trajectory(const PoseSequence& poses, double v_max = kDefaultVMax) : poses_(poses) {
    const double limit = v_max * dt + 1e-9;
    for (int k = 1; k < kHorizon; ++k) {
      const double step = std::hypot(poses_[k].x - poses_[k - 1].x, poses_[k].y - poses_[k - 1].y);
      if (!std::isfinite(step) || step > limit) {
        throw Error("trajectory step " + std::to_string(k) + " displacement " + std::to_string(step) +
                    " m exceeds v_max*dt");
      }
    }
  }

  static Trajectory from_flat(const TrajVec& v, double v_max = kDefaultVMax) {
    return Trajectory(unflatten(v), v_max);
  }

  const Pose& operator[](std::size_t k) const { return poses_[k]; }
  const PoseSequence& poses() const { return poses_; }
  TrajVec flat() const { return flatten(poses_); }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;

 private:
  PoseSequence poses_;
};

/// Final pose of the trajectory.
inline Pose end_state(const Trajectory& traj) { return traj[kHorizon - 1]; }

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministic random stream keyed by (seed, stream). The engine is the
/// standard mt19937_64; the distributions are written out here because the
/// std:: distributions are not specified bit-for-bit across library vendors.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream),
        engine_(detail::splitmix64(seed ^ detail::splitmix64(stream ^ 0xD1B54A32D192ED03ULL))) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Independent child stream; same (parent, id) gives the same child.
  SeededRng fork(std::uint64_t id) const {
    return SeededRng(detail::splitmix64(seed_ + 0x632BE59BD9B4E019ULL * (stream_ + 1)), id);
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw Error("uniform_index: empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r = engine_();
    while (r >= limit) r = engine_();
    return r % n;
  }

  int uniform_int(int lo, int hi_inclusive) {
    return lo + static_cast<int>(uniform_index(static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller.
  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    return r * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

/// Calls fn(i) once for every i in [0, n) on up to `workers` threads.
/// Callers write results by index, so outcomes do not depend on `workers`.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
  for (std::size_t w = 1; w < count; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Plain-text numeric helpers (shortest round-trip representation).

inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw Error("format_double failed");
  return std::string(buf.data(), ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error("cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<double> parse_csv_doubles(std::string_view line) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= line.size()) {
    const std::size_t comma = line.find(',', start);
    const std::size_t end = comma == std::string_view::npos ? line.size() : comma;
    out.push_back(parse_double(line.substr(start, end - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline bool is_blank_or_comment(std::string_view line) {
  for (char c : line) {
    if (c == '#') return true;
    if (c != ' ' && c != '\t' && c != '\r') return false;
  }
  return true;
}

/// Writes one trajectory per line: x0,y0,theta0,...,x7,y7,theta7.
inline void write_trajectories(std::ostream& os, std::span<const Trajectory> trajs,
                               std::string_view comment = {}) {
  if (!comment.empty()) os << "# " << comment << '\n';
  for (const auto& traj : trajs) {
    const TrajVec v = traj.flat();
    for (int i = 0; i < kTrajCoords; ++i) {
      if (i) os << ',';
      os << format_double(v[i]);
    }
    os << '\n';
  }
}

inline std::vector<Trajectory> read_trajectories(std::istream& is, double v_max = kDefaultVMax) {
  std::vector<Trajectory> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (is_blank_or_comment(line)) continue;
    const auto fields = parse_csv_doubles(line);
    if (fields.size() != kTrajCoords) {
      throw Error("trajectory line " + std::to_string(lineno) + ": expected 24 fields, got " +
                  std::to_string(fields.size()));
    }
    TrajVec v{};
    std::copy(fields.begin(), fields.end(), v.begin());
    out.push_back(Trajectory::from_flat(v, v_max));
  }
  return out;
}

}  // namespace dreamlane
