#pragma once

// Reinforcement learning in imagination: log-fused dense rewards, Gaussian
// candidate sampling over a trajectory vocabulary (and the unconstrained
// Gaussian baseline), group-normalized advantages, the clipped surrogate and
// the policy head with its behaviour-cloning and KL regularizers.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dreamlane/core.hpp"
#include "dreamlane/env.hpp"
#include "dreamlane/nn.hpp"
#include "dreamlane/rewardmodel.hpp"
#include "dreamlane/worldmodel.hpp"

namespace dreamlane {

// ---------------------------------------------------------------------------
// Reward fusion

struct FusionConfig {
  std::array<double, 4> safety_weights{1.0, 1.0, 1.0, 1.0};  // nc, dac, ddc, tlc
  std::array<double, 4> task_weights{0.25, 0.25, 0.25, 0.25};  // ep, ttc, lk, hc
  std::array<double, kHorizon> temporal_weights{0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125};
  double floor = 1e-6;
  // Sum of w_i log(sigmoid(r_i)) for the safety term instead of w_i log(r_i).
  bool log_sigmoid_variant = false;
};

namespace detail {

inline void check_convex(std::span<const double> w, const char* what) {
  double sum = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error(std::string(what) + " weights must be nonnegative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error(std::string(what) + " weights must sum to 1");
}

}  // namespace detail

inline void validate_fusion(const FusionConfig& f) {
  for (double w : f.safety_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error("safety weights must be nonnegative");
  }
  detail::check_convex(f.task_weights, "task");
  detail::check_convex(f.temporal_weights, "temporal");
  if (!(f.floor > 0.0 && f.floor < 1.0)) throw Error("fusion floor must lie in (0, 1)");
}

/// Safety term plus log of the task-weighted mix, both floored.
inline double fuse_reward(const RewardVector& r, const FusionConfig& f = {}) {
  validate_fusion(f);
  for (int k = 0; k < kRewardDims; ++k) {
    if (!(r[k] >= 0.0 && r[k] <= 1.0)) throw Error("fuse_reward: reward component outside [0, 1]");
  }
  double safety = 0.0;
  for (std::size_t i = 0; i < kSafetyDims.size(); ++i) {
    const double ri = r[kSafetyDims[i]];
    safety += f.safety_weights[i] * (f.log_sigmoid_variant ? std::log(nn::sigmoid(ri)) : std::log(std::max(ri, f.floor)));
  }
  double task = 0.0;
  for (std::size_t j = 0; j < kTaskDims.size(); ++j) task += f.task_weights[j] * r[kTaskDims[j]];
  return safety + std::log(std::max(task, f.floor));
}

/// Temporal weighted sum of the fused per-horizon rewards.
inline double dense_final_reward(const HorizonRewardTable& table, const FusionConfig& f = {}) {
  double out = 0.0;
  for (int t = 0; t < kHorizon; ++t) out += f.temporal_weights[t] * fuse_reward(table[t], f);
  return out;
}

// ---------------------------------------------------------------------------
// Gaussian over trajectories

struct SigmaSchedule {
  double xy_base = 0.2, xy_slope = 0.05;        // m
  double theta_base = 0.05, theta_slope = 0.01;  // rad
};

/// Per-coordinate standard deviations, growing with the horizon t = 1..8.
inline TrajVec sigma_vector(const SigmaSchedule& s = {}) {
  TrajVec out{};
  for (int k = 0; k < kHorizon; ++k) {
    const double t = k + 1;
    out[3 * k] = out[3 * k + 1] = s.xy_base + s.xy_slope * t;
    out[3 * k + 2] = s.theta_base + s.theta_slope * t;
  }
  for (double v : out) {
    if (!(v > 0.0)) throw Error("sigma schedule must be positive at every horizon");
  }
  return out;
}

/// Coordinate difference with the heading component wrapped into (-pi, pi].
inline double coord_diff(const TrajVec& a, const TrajVec& b, std::size_t i) {
  const double d = a[i] - b[i];
  return i % 3 == 2 ? normalize_angle(d) : d;
}

inline double mahalanobis(const TrajVec& traj, const TrajVec& mean, const TrajVec& sigma) {
  double out = 0.0;
  for (std::size_t i = 0; i < kTrajCoords; ++i) {
    if (!(sigma[i] > 0.0)) throw Error("mahalanobis: sigma must be positive");
    const double z = coord_diff(traj, mean, i) / sigma[i];
    out += z * z;
  }
  return out;
}

inline double mahalanobis(const PoseSequence& traj, const TrajVec& mean, const TrajVec& sigma) {
  return mahalanobis(flatten(traj), mean, sigma);
}

/// Diagonal Gaussian log-density.
inline double log_density(const TrajVec& x, const TrajVec& mean, const TrajVec& sigma) {
  double log_norm = 0.0;
  for (double s : sigma) log_norm += std::log(s);
  return -0.5 * mahalanobis(x, mean, sigma) - log_norm - 0.5 * kTrajCoords * std::log(2.0 * kPi);
}

// ---------------------------------------------------------------------------
// Candidate sampling

enum class CandidateSource { softmax, neighborhood, gaussian };

struct Candidate {
  PoseSequence traj{};
  int vocab_index = -1;  // -1 for unconstrained Gaussian draws
  CandidateSource source = CandidateSource::gaussian;
  double distance = 0.0;
  double reward = 0.0;
  double advantage = 0.0;
};

using CandidateSet = std::vector<Candidate>;

/// g1 entries drawn without replacement with probability proportional to
/// exp(-d / temperature), then the g2 nearest remaining entries (ties by
/// index).
inline CandidateSet sample_candidates(std::span<const Trajectory> vocab, const TrajVec& mean, const TrajVec& sigma,
                                      int g1, int g2, double temperature, SeededRng& rng) {
  if (g1 < 0 || g2 < 0) throw Error("sample_candidates: group sizes must be nonnegative");
  if (static_cast<std::size_t>(g1 + g2) > vocab.size()) {
    throw Error("sample_candidates: g1 + g2 = " + std::to_string(g1 + g2) + " exceeds vocabulary size " +
                std::to_string(vocab.size()));
  }
  if (!(temperature > 0.0)) throw Error("sample_candidates: temperature must be positive");
  const std::size_t K = vocab.size();
  std::vector<double> d(K);
  for (std::size_t i = 0; i < K; ++i) d[i] = mahalanobis(vocab[i].poses(), mean, sigma);

  CandidateSet out;
  out.reserve(static_cast<std::size_t>(g1 + g2));
  std::vector<char> taken(K, 0);
  std::vector<double> w(K);
  for (int draw = 0; draw < g1; ++draw) {
    // Weights are taken relative to the closest remaining entry, so at least
    // one weight is exactly 1.
    double dmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < K; ++i)
      if (!taken[i]) dmin = std::min(dmin, d[i]);
    double total = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
      w[i] = taken[i] ? 0.0 : std::exp(-(d[i] - dmin) / temperature);
      total += w[i];
    }
    const double u = rng.uniform() * total;
    std::size_t pick = K;
    double acc = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
      if (w[i] <= 0.0) continue;
      acc += w[i];
      pick = i;
      if (u < acc) break;
    }
    taken[pick] = 1;
    out.push_back({vocab[pick].poses(), static_cast<int>(pick), CandidateSource::softmax, d[pick], 0.0, 0.0});
  }
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  int added = 0;
  for (std::size_t i : order) {
    if (added == g2) break;
    if (taken[i]) continue;
    taken[i] = 1;
    out.push_back({vocab[i].poses(), static_cast<int>(i), CandidateSource::neighborhood, d[i], 0.0, 0.0});
    ++added;
  }
  return out;
}

/// G coordinate-wise draws from N(mean, sigma^2), without smoothing or
/// feasibility constraints.
inline CandidateSet sample_candidates_random_baseline(const TrajVec& mean, const TrajVec& sigma, int G,
                                                      SeededRng& rng) {
  if (G < 1) throw Error("random baseline: G must be at least 1");
  CandidateSet out;
  out.reserve(static_cast<std::size_t>(G));
  for (int g = 0; g < G; ++g) {
    TrajVec x{};
    for (std::size_t i = 0; i < kTrajCoords; ++i) x[i] = mean[i] + sigma[i] * rng.normal();
    Candidate c;
    c.traj = unflatten(x);
    c.distance = mahalanobis(x, mean, sigma);
    out.push_back(std::move(c));
  }
  return out;
}

/// Mean squared second difference of candidate positions (x, y), a proxy for
/// dynamic discontinuity. The origin is prepended as the step-0 position.
inline double mean_squared_second_difference(const CandidateSet& set) {
  if (set.empty()) throw Error("second difference: empty candidate set");
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& c : set) {
    std::array<Vec2, kHorizon + 1> p{};
    for (int k = 0; k < kHorizon; ++k) p[k + 1] = {c.traj[k].x, c.traj[k].y};
    for (int k = 1; k < kHorizon; ++k) {
      const Vec2 dd = p[k + 1] - 2.0 * p[k] + p[k - 1];
      total += dot(dd, dd);
      ++n;
    }
  }
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// GRPO pieces

/// (r - mean) / sqrt(max(var, 1e-8)), population statistics.
inline std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw Error("group_advantages: need at least two rewards");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= n;
  const double sd = std::sqrt(std::max(var, 1e-8));
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / sd);
  return out;
}

namespace detail {

inline double ratio(double logp_new, double logp_old) {
  if (!std::isfinite(logp_new) || !std::isfinite(logp_old)) throw Error("actor_loss: non-finite log-probability");
  return std::exp(logp_new - logp_old);
}

inline void check_epsilon(double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error("actor_loss: epsilon must lie in (0, 1)");
}

}  // namespace detail

/// max(-A rho, -A clip(rho, 1 - eps, 1 + eps)).
inline double actor_loss(double A, double logp_new, double logp_old, double epsilon) {
  detail::check_epsilon(epsilon);
  const double rho = detail::ratio(logp_new, logp_old);
  return std::max(-A * rho, -A * std::clamp(rho, 1.0 - epsilon, 1.0 + epsilon));
}

/// d actor_loss / d logp_new. The clipped branch has zero gradient.
inline double actor_loss_grad(double A, double logp_new, double logp_old, double epsilon) {
  detail::check_epsilon(epsilon);
  const double rho = detail::ratio(logp_new, logp_old);
  const double clipped = std::clamp(rho, 1.0 - epsilon, 1.0 + epsilon);
  if (-A * rho >= -A * clipped) return -A * rho;
  return 0.0;
}

/// Mean of actor_loss over candidates.
inline double actor_loss(std::span<const double> A, std::span<const double> logp_new, std::span<const double> logp_old,
                         double epsilon) {
  if (A.empty() || A.size() != logp_new.size() || A.size() != logp_old.size()) {
    throw Error("actor_loss: mismatched candidate arrays");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) total += actor_loss(A[i], logp_new[i], logp_old[i], epsilon);
  return total / static_cast<double>(A.size());
}

// ---------------------------------------------------------------------------
// Policy head

struct PolicyConfig {
  std::vector<std::size_t> hidden{128, 128};
};

/// Network input plus the ego speed the controls integrate from.
struct PolicyInput {
  nn::Vec x;
  double initial_speed = 0.0;
};

/// Maps the current observation features and the four history latents to
/// sixteen controls (jerk, yaw rate per step). Jerk integrates to an
/// acceleration clamped to +-max_accel, which integrates from the current
/// speed (history runs at constant speed) to a speed clamped to [0, v_max];
/// the unicycle model turns speeds and yaw rates into the mean trajectory.
/// Consecutive accelerations differ by at most max_jerk * dt. Headings stay
/// unwrapped.
class Policy {
 public:
  struct Cache {
    nn::DenseNet::Cache net;
    std::array<double, kHorizon> speed{}, theta{};
    std::array<double, kHorizon> jerk_slope{}, yaw_slope{};
    std::array<bool, kHorizon> accel_clamped{}, speed_clamped{};
  };

  Policy() = default;
  Policy(const PolicyConfig& cfg, std::size_t latent_dim, SeededRng& rng, const EnvConfig& env = {})
      : env_(env), latent_dim_(latent_dim) {
    std::vector<std::size_t> widths{kObsFeatures + kContextFrames * latent_dim};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(2 * kHorizon);
    std::vector<nn::Activation> acts(widths.size() - 1, nn::Activation::tanh);
    acts.back() = nn::Activation::identity;
    net_ = nn::DenseNet("pi", widths, acts, rng);
  }

  std::size_t input_width() const { return net_.input_width(); }

  PolicyInput input(const nn::Vec& obs_features, const History& history, double initial_speed) const {
    if (obs_features.size() != kObsFeatures) throw Error("policy: observation width mismatch");
    PolicyInput in{obs_features, initial_speed};
    for (const auto& z : history) {
      if (z.size() != latent_dim_) throw Error("policy: latent width mismatch");
      in.x.insert(in.x.end(), z.begin(), z.end());
    }
    return in;
  }

  TrajVec mean(const PolicyInput& in, Cache* cache = nullptr) const {
    const nn::Vec raw = net_.forward(in.x, cache ? &cache->net : nullptr);
    TrajVec mu{};
    double x = 0.0, y = 0.0, theta = 0.0, v = in.initial_speed, a = 0.0;
    for (int k = 0; k < kHorizon; ++k) {
      const double tj = std::tanh(raw[2 * k]);
      const double tw = std::tanh(raw[2 * k + 1]);
      const double a_raw = a + kComfortMargin * env_.max_jerk * tj * kDt;
      a = std::clamp(a_raw, -kComfortMargin * env_.max_accel, kComfortMargin * env_.max_accel);
      const double v_raw = v + a * kDt;
      v = std::clamp(v_raw, 0.0, env_.v_max);
      const double w = env_.max_yaw_rate * tw;
      theta += w * kDt;
      x += v * std::cos(theta) * kDt;
      y += v * std::sin(theta) * kDt;
      mu[3 * k] = x;
      mu[3 * k + 1] = y;
      mu[3 * k + 2] = theta;
      if (cache) {
        cache->speed[k] = v;
        cache->theta[k] = theta;
        cache->accel_clamped[k] = a != a_raw;
        cache->speed_clamped[k] = v != v_raw;
        cache->jerk_slope[k] = kComfortMargin * env_.max_jerk * (1.0 - tj * tj);
        cache->yaw_slope[k] = env_.max_yaw_rate * (1.0 - tw * tw);
      }
    }
    return mu;
  }

  /// Accumulates parameter gradients for an upstream gradient on the mean.
  void backward(const Cache& c, const TrajVec& dmu) {
    std::array<double, kHorizon> gx{}, gy{}, dtheta{};
    double sx = 0.0, sy = 0.0;
    for (int j = kHorizon - 1; j >= 0; --j) {
      sx += dmu[3 * j];
      sy += dmu[3 * j + 1];
      gx[j] = sx;
      gy[j] = sy;
    }
    nn::Vec draw(2 * kHorizon);
    // Speed and acceleration states pass gradient back until a clamp cuts
    // the chain.
    double carry_v = 0.0, carry_a = 0.0;
    for (int j = kHorizon - 1; j >= 0; --j) {
      const double cs = std::cos(c.theta[j]), sn = std::sin(c.theta[j]);
      const double gv = c.speed_clamped[j] ? 0.0 : kDt * (cs * gx[j] + sn * gy[j]) + carry_v;
      dtheta[j] = kDt * c.speed[j] * (-sn * gx[j] + cs * gy[j]) + dmu[3 * j + 2];
      const double ga = c.accel_clamped[j] ? 0.0 : gv * kDt + carry_a;
      carry_v = gv;
      carry_a = ga;
      draw[2 * j] = ga * kDt * c.jerk_slope[j];
    }
    double acc = 0.0;
    for (int i = kHorizon - 1; i >= 0; --i) {
      acc += dtheta[i];
      draw[2 * i + 1] = kDt * acc * c.yaw_slope[i];
    }
    net_.backward(c.net, draw);
  }

  nn::ParamList params() { return net_.params(); }
  nn::DenseNet& net() { return net_; }

 private:
  // Keeps rollouts strictly inside the comfort bounds after rounding.
  static constexpr double kComfortMargin = 0.95;

  EnvConfig env_;
  std::size_t latent_dim_ = 0;
  nn::DenseNet net_;
};

/// Pose sequence (headings wrapped) of a mean trajectory.
inline PoseSequence mean_poses(const TrajVec& mu) { return unflatten(mu); }

/// Mean absolute deviation over the 24 coordinates, headings wrapped.
inline double bc_loss(const TrajVec& mu, const TrajVec& anchor, TrajVec* grad = nullptr, double scale = 1.0) {
  double total = 0.0;
  for (std::size_t i = 0; i < kTrajCoords; ++i) {
    const double d = coord_diff(mu, anchor, i);
    total += std::abs(d);
    if (grad) (*grad)[i] += scale * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / kTrajCoords;
  }
  return total / kTrajCoords;
}

/// KL between diagonal Gaussians with a shared sigma.
inline double kl_loss(const TrajVec& mu, const TrajVec& ref, const TrajVec& sigma, TrajVec* grad = nullptr,
                      double scale = 1.0) {
  double total = 0.0;
  for (std::size_t i = 0; i < kTrajCoords; ++i) {
    const double d = coord_diff(mu, ref, i);
    total += 0.5 * d * d / (sigma[i] * sigma[i]);
    if (grad) (*grad)[i] += scale * d / (sigma[i] * sigma[i]);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Training

enum class Sampler { vocab, random };

inline Sampler parse_sampler(std::string_view s) {
  if (s == "vocab") return Sampler::vocab;
  if (s == "random") return Sampler::random;
  throw Error("unknown sampler '" + std::string(s) + "' (expected vocab or random)");
}

struct RlConfig {
  double epsilon = 0.2;
  double lambda_bc = 1.0;
  double lambda_kl = 0.1;
  int g1 = 8;
  int g2 = 8;
  double temperature = 1.0;
  SigmaSchedule sigma;
  FusionConfig fusion;
  int wm_steps = 1;
  Sampler sampler = Sampler::vocab;
  int workers = 1;

  int group_size() const { return g1 + g2; }
};

/// Per-scene inputs for the policy.
struct PolicyScene {
  const Scene* scene = nullptr;
  History history;
  PolicyInput input;
  TrajVec anchor{};
  std::vector<Trajectory> vocab;
};

/// A scored candidate group with its frozen old-policy log-densities.
struct RlGroup {
  PolicyInput input;
  TrajVec anchor{};
  TrajVec ref_mean{};
  CandidateSet candidates;
  std::vector<double> logp_old;
};

struct RlLosses {
  double actor = 0.0, bc = 0.0, kl = 0.0, total = 0.0;
  double mean_reward = 0.0;
  double collision = 0.0;  // oracle 1 - nc at horizon 8 of the policy means
};

/// Samples and scores the candidate group of one scene. World and reward
/// models are read-only; candidate rngs are forked by index.
inline RlGroup build_group(const Policy& policy, const Policy& ref, const WorldModel& wm, const RewardModel& rm,
                           const PolicyScene& ps, const RlConfig& cfg, SeededRng rng) {
  RlGroup g;
  g.input = ps.input;
  g.anchor = ps.anchor;
  g.ref_mean = ref.mean(ps.input);
  const TrajVec mu = policy.mean(ps.input);
  const TrajVec sigma = sigma_vector(cfg.sigma);
  SeededRng draw = rng.fork(0);
  if (cfg.sampler == Sampler::vocab) {
    // Small vocabularies shrink the group: softmax draws first, then the
    // neighbourhood fills what is left.
    const int k = static_cast<int>(ps.vocab.size());
    const int g1 = std::min(cfg.g1, k);
    const int g2 = std::min(cfg.g2, k - g1);
    g.candidates = sample_candidates(ps.vocab, mu, sigma, g1, g2, cfg.temperature, draw);
  } else {
    g.candidates = sample_candidates_random_baseline(mu, sigma, cfg.group_size(), draw);
  }
  parallel_for(g.candidates.size(), cfg.workers, [&](std::size_t i) {
    SeededRng crng = rng.fork(1 + i);
    const auto table = score_trajectory(wm, rm, ps.history, g.candidates[i].traj, cfg.wm_steps, crng);
    g.candidates[i].reward = dense_final_reward(table, cfg.fusion);
  });
  std::vector<double> rewards;
  for (const auto& c : g.candidates) rewards.push_back(c.reward);
  // A single candidate carries no relative signal.
  const auto adv = rewards.size() >= 2 ? group_advantages(rewards) : std::vector<double>(rewards.size(), 0.0);
  for (std::size_t i = 0; i < adv.size(); ++i) {
    g.candidates[i].advantage = adv[i];
    g.logp_old.push_back(log_density(flatten(g.candidates[i].traj), mu, sigma));
  }
  return g;
}

/// Mean over groups of actor + lambda_bc bc + lambda_kl kl. Accumulates policy
/// gradients when `accumulate` is set.
inline RlLosses rl_objective(Policy& policy, std::span<const RlGroup> groups, const RlConfig& cfg, bool accumulate) {
  if (groups.empty()) throw Error("rl: empty scene batch");
  const TrajVec sigma = sigma_vector(cfg.sigma);
  const double inv_b = 1.0 / static_cast<double>(groups.size());
  RlLosses out;
  for (const auto& g : groups) {
    Policy::Cache cache;
    const TrajVec mu = policy.mean(g.input, accumulate ? &cache : nullptr);
    const double inv_g = 1.0 / static_cast<double>(g.candidates.size());
    TrajVec dmu{};
    double actor = 0.0;
    for (std::size_t i = 0; i < g.candidates.size(); ++i) {
      const auto& c = g.candidates[i];
      const TrajVec x = flatten(c.traj);
      const double lp = log_density(x, mu, sigma);
      actor += actor_loss(c.advantage, lp, g.logp_old[i], cfg.epsilon) * inv_g;
      if (accumulate) {
        const double dl = actor_loss_grad(c.advantage, lp, g.logp_old[i], cfg.epsilon) * inv_g * inv_b;
        if (dl != 0.0) {
          for (std::size_t k = 0; k < kTrajCoords; ++k) dmu[k] += dl * coord_diff(x, mu, k) / (sigma[k] * sigma[k]);
        }
      }
    }
    const double bc = bc_loss(mu, g.anchor, accumulate ? &dmu : nullptr, cfg.lambda_bc * inv_b);
    const double kl = kl_loss(mu, g.ref_mean, sigma, accumulate ? &dmu : nullptr, cfg.lambda_kl * inv_b);
    if (!std::isfinite(actor) || !std::isfinite(bc) || !std::isfinite(kl)) throw Error("rl: non-finite loss");
    out.actor += actor * inv_b;
    out.bc += bc * inv_b;
    out.kl += kl * inv_b;
    if (accumulate) policy.backward(cache, dmu);
  }
  out.total = out.actor + cfg.lambda_bc * out.bc + cfg.lambda_kl * out.kl;
  return out;
}

/// One GRPO update over a batch of scenes (single inner epoch, so the old
/// policy is the current one). Only the policy's parameters change.
inline RlLosses rl_train_step(Policy& policy, const Policy& ref, const WorldModel& wm, const RewardModel& rm,
                              std::span<const PolicyScene> scenes, const RlConfig& cfg, nn::AdamW& opt,
                              SeededRng& rng, const EnvConfig& env = {}) {
  if (scenes.empty()) throw Error("rl: empty scene batch");
  const SeededRng base = rng.fork(rng.next_u64());
  std::vector<RlGroup> groups;
  groups.reserve(scenes.size());
  double reward = 0.0, collision = 0.0;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    groups.push_back(build_group(policy, ref, wm, rm, scenes[s], cfg, base.fork(s)));
    for (const auto& c : groups.back().candidates) reward += c.reward / static_cast<double>(groups.back().candidates.size());
    const auto table = simulate_rewards(*scenes[s].scene, mean_poses(policy.mean(scenes[s].input)), env);
    collision += 1.0 - table[kHorizon - 1][kNc];
  }
  opt.zero_grad();
  RlLosses out = rl_objective(policy, groups, cfg, true);
  if (!std::isfinite(out.total)) throw Error("rl: non-finite loss");
  opt.step();
  out.mean_reward = reward / static_cast<double>(scenes.size());
  out.collision = collision / static_cast<double>(scenes.size());
  return out;
}

/// Behaviour-cloning update: mean absolute deviation from the anchors.
inline double bc_train_step(Policy& policy, std::span<const PolicyScene> scenes, nn::AdamW& opt) {
  if (scenes.empty()) throw Error("bc: empty scene batch");
  opt.zero_grad();
  const double inv_b = 1.0 / static_cast<double>(scenes.size());
  double total = 0.0;
  for (const auto& s : scenes) {
    Policy::Cache cache;
    const TrajVec mu = policy.mean(s.input, &cache);
    TrajVec dmu{};
    total += bc_loss(mu, s.anchor, &dmu, inv_b) * inv_b;
    policy.backward(cache, dmu);
  }
  if (!std::isfinite(total)) throw Error("bc: non-finite loss");
  opt.step();
  return total;
}

struct PolicyEval {
  std::array<double, kRewardDims> dim_means{};  // oracle, horizon 8
  double fused = 0.0;                           // mean dense_final_reward of the oracle tables
  double collision = 0.0;                       // mean 1 - nc at horizon 8
  std::size_t scenes = 0;
};

/// Closed-loop oracle scores of the policy mean trajectory.
inline PolicyEval evaluate_policy(const Policy& policy, std::span<const PolicyScene> scenes,
                                  const FusionConfig& fusion = {}, const EnvConfig& env = {}) {
  if (scenes.empty()) throw Error("evaluate_policy: no scenes");
  PolicyEval e;
  for (const auto& s : scenes) {
    const auto table = simulate_rewards(*s.scene, mean_poses(policy.mean(s.input)), env);
    for (int k = 0; k < kRewardDims; ++k) e.dim_means[k] += table[kHorizon - 1][k];
    e.fused += dense_final_reward(table, fusion);
    e.collision += 1.0 - table[kHorizon - 1][kNc];
  }
  const double n = static_cast<double>(scenes.size());
  for (double& v : e.dim_means) v /= n;
  e.fused /= n;
  e.collision /= n;
  e.scenes = scenes.size();
  return e;
}

}  // namespace dreamlane
