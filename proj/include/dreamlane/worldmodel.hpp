#pragma once

// Latent world model: an observation encoder (trained as an autoencoder over
// hand-built scene features), an action encoder and a shortcut-forcing
// velocity network that predicts the next latent from the last four latents
// and the current action.

#include <array>
#include <cmath>
#include <ostream>
#include <span>
#include <vector>

#include "dreamlane/core.hpp"
#include "dreamlane/env.hpp"
#include "dreamlane/flow.hpp"
#include "dreamlane/geometry.hpp"
#include "dreamlane/nn.hpp"

namespace dreamlane {

using LatentState = nn::Vec;

inline constexpr std::size_t kObsFeatures = 13;
inline constexpr std::size_t kActionFeatures = 3;
inline constexpr std::size_t kContextFrames = 4;
inline constexpr int kSectors = 8;
inline constexpr double kSectorClamp = 30.0;
inline constexpr double kSectorFloor = -5.0;
inline constexpr double kNearField = 8.0;

struct ObservationFeatures {
  double lateral = 0.0;
  double heading_error = 0.0;
  double speed = 0.0;
  std::array<double, kSectors> sectors{};  // sector i centred on bearing i * 45 deg
  double stop_distance = kSectorClamp;
  double curvature = 0.0;

  nn::Vec normalized() const {
    nn::Vec out;
    out.reserve(kObsFeatures);
    out.push_back(lateral / 2.0);
    out.push_back(heading_error);
    out.push_back(speed / 10.0);
    // tanh keeps sub-metre clearances distinguishable; far values saturate.
    for (double s : sectors) out.push_back(std::tanh(s / kNearField));
    out.push_back(std::tanh(stop_distance / kNearField));
    out.push_back(curvature * 20.0);
    return out;
  }
};

namespace detail {

template <typename Fn>
void for_each_perimeter_point(const OrientedBox& box, double spacing, Fn&& fn) {
  const auto c = box.corners();
  for (int e = 0; e < 4; ++e) {
    const Vec2 a = c[e], b = c[(e + 1) % 4];
    const double len = norm(b - a);
    const int n = std::max(1, static_cast<int>(std::ceil(len / spacing)));
    for (int i = 0; i < n; ++i) fn(a + (static_cast<double>(i) / n) * (b - a));
  }
}

}  // namespace detail

/// Scene features seen from `pose` at absolute time `time` (agents are
/// advanced to that time). Sector values are boundary distances to the
/// nearest obstacle point minus the ego footprint extent in that direction.
inline ObservationFeatures observation_features(const Scene& scene, const Pose& pose, double speed, double time,
                                                const EnvConfig& cfg = {}) {
  ObservationFeatures f;
  const Vec2 centre{pose.x, pose.y};
  const auto proj = scene.project(centre);
  f.lateral = proj.lateral;
  f.heading_error = normalize_angle(pose.theta - proj.heading);
  f.speed = speed;
  f.curvature = scene.curvature;
  f.sectors.fill(kSectorClamp);

  const double c = std::cos(pose.theta), s = std::sin(pose.theta);
  const double hl = 0.5 * cfg.ego_length, hw = 0.5 * cfg.ego_width;
  auto visit = [&](Vec2 p) {
    const Vec2 d = p - centre;
    const double lx = c * d.x + s * d.y;
    const double ly = -s * d.x + c * d.y;
    const double bearing = std::atan2(ly, lx);
    const double dist = std::hypot(lx, ly) - box_radial_extent(hl, hw, bearing);
    int idx = static_cast<int>(std::floor((bearing + kPi / kSectors) / (2.0 * kPi / kSectors)));
    idx = ((idx % kSectors) + kSectors) % kSectors;
    f.sectors[idx] = std::min(f.sectors[idx], dist);
  };
  for (const auto& r : scene.obstacles) detail::for_each_perimeter_point(r.box(), 0.25, visit);
  for (const auto& a : scene.agents) detail::for_each_perimeter_point(a.box_at(time), 0.25, visit);
  for (double& v : f.sectors) v = std::clamp(v, kSectorFloor, kSectorClamp);

  if (scene.has_active_stop_line()) {
    f.stop_distance = std::clamp(scene.stop_line->s - (proj.s + hl), kSectorFloor, kSectorClamp);
  }
  return f;
}

/// Step displacement expressed in the frame of the previous pose, scaled to
/// unit order: (dx / 5, dy, dtheta / 0.5).
inline nn::Vec action_features(const Pose& from, const Pose& to) {
  const double dx = to.x - from.x, dy = to.y - from.y;
  const double c = std::cos(from.theta), s = std::sin(from.theta);
  return {(c * dx + s * dy) / 5.0, -s * dx + c * dy, normalize_angle(to.theta - from.theta) / 0.5};
}

/// Ego speed implied by each step of a pose sequence starting at the origin.
inline std::array<double, kHorizon> step_speeds(const PoseSequence& poses) {
  std::array<double, kHorizon> out{};
  Vec2 prev{0.0, 0.0};
  for (int k = 0; k < kHorizon; ++k) {
    const Vec2 p{poses[k].x, poses[k].y};
    out[k] = norm(p - prev) / kDt;
    prev = p;
  }
  return out;
}

struct WorldModelConfig {
  std::size_t latent_dim = 32;
  std::size_t obs_hidden = 64;
  std::size_t action_dim = 16;
  std::size_t action_hidden = 32;
  std::vector<std::size_t> velocity_hidden{128, 128};
  int k_max = 16;
};

using History = std::array<LatentState, kContextFrames>;

struct Transition {
  History history;
  nn::Vec action;  // action_features of the step
  LatentState next;
};

class WorldModel {
 public:
  WorldModel(const WorldModelConfig& cfg, SeededRng& rng)
      : cfg_(cfg), delta_scale_("wm.delta_scale", {1, cfg.latent_dim}) {
    using A = nn::Activation;
    const std::size_t L = cfg.latent_dim;
    std::fill(delta_scale_.value.begin(), delta_scale_.value.end(), 1.0f);
    encoder_ = nn::DenseNet("wm.enc", {kObsFeatures, cfg.obs_hidden, L}, {A::tanh, A::tanh}, rng);
    decoder_ = nn::DenseNet("wm.dec", {L, cfg.obs_hidden, kObsFeatures}, {A::tanh, A::identity}, rng);
    action_ = nn::DenseNet("wm.act", {kActionFeatures, cfg.action_hidden, cfg.action_dim}, {A::tanh, A::tanh}, rng);
    flow_ = ShortcutFlow("wm.vel", L, kContextFrames * L + cfg.action_dim, cfg.velocity_hidden, StepGrid(cfg.k_max),
                         rng);
  }

  WorldModel(const WorldModel&) = delete;
  WorldModel& operator=(const WorldModel&) = delete;

  const WorldModelConfig& config() const { return cfg_; }
  std::size_t latent_dim() const { return cfg_.latent_dim; }
  std::size_t context_dim() const { return flow_.context_dim(); }

  nn::DenseNet& encoder() { return encoder_; }
  nn::DenseNet& decoder() { return decoder_; }
  nn::DenseNet& action_encoder() { return action_; }
  ShortcutFlow& flow() { return flow_; }
  const ShortcutFlow& flow() const { return flow_; }

  LatentState encode_features(std::span<const double> normalized, nn::DenseNet::Cache* cache = nullptr) const {
    return encoder_.forward(normalized, cache);
  }

  LatentState encode_observation(const Scene& scene, const Pose& pose, double speed, double time = 0.0,
                                 const EnvConfig& cfg = {}) const {
    return encode_features(observation_features(scene, pose, speed, time, cfg).normalized());
  }

  /// Latents of the four observed frames z_{-3}..z_0.
  History encode_history(const Scene& scene, const EnvConfig& cfg = {}) const {
    History h;
    const auto frames = history_frames(scene);
    for (std::size_t i = 0; i < kContextFrames; ++i) {
      h[i] = encode_observation(scene, frames[i].pose, frames[i].speed, frames[i].time, cfg);
    }
    return h;
  }

  nn::Vec embed_action(std::span<const double> feats, nn::DenseNet::Cache* cache = nullptr) const {
    return action_.forward(feats, cache);
  }

  nn::Vec context(std::span<const LatentState> last, std::span<const double> action_embedding) const {
    if (last.size() != kContextFrames) throw Error("world model context needs exactly four latents");
    nn::Vec ctx;
    ctx.reserve(context_dim());
    for (const auto& z : last) {
      if (z.size() != cfg_.latent_dim) throw Error("world model: latent width mismatch");
      ctx.insert(ctx.end(), z.begin(), z.end());
    }
    ctx.insert(ctx.end(), action_embedding.begin(), action_embedding.end());
    return ctx;
  }

  /// The flow generates the standardized change from the newest context
  /// latent: x = (z_next - z_0) / scale.
  nn::Vec to_delta(const LatentState& newest, const LatentState& next) const {
    nn::Vec x(next.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (next[i] - newest[i]) / delta_scale_.value[i];
    return x;
  }

  LatentState from_delta(const LatentState& newest, std::span<const double> x) const {
    LatentState z(x.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = newest[i] + delta_scale_.value[i] * x[i];
    return z;
  }

  /// Sets the per-dimension scale to the standard deviation of observed
  /// latent changes (floored so constant dimensions stay finite).
  void fit_delta_scale(std::span<const Transition> transitions);
  const nn::Param& delta_scale() const { return delta_scale_; }

  LatentState sample_next_latent(std::span<const LatentState> last, std::span<const double> action_feats, int steps,
                                 SeededRng& rng) const {
    if (last.size() != kContextFrames) throw Error("world model context needs exactly four latents");
    const nn::Vec x = flow_.sample(context(last, embed_action(action_feats)), steps, rng);
    return from_delta(last.back(), x);
  }

  /// Eight autoregressive next-latent predictions along the trajectory. Each
  /// step draws one fresh noise vector, so rng consumption does not depend on
  /// the step count.
  std::vector<LatentState> imagine_rollout(const History& history, const PoseSequence& traj, int steps,
                                           SeededRng& rng) const {
    std::vector<LatentState> window(history.begin(), history.end());
    std::vector<LatentState> out;
    out.reserve(kHorizon);
    Pose prev(0.0, 0.0, 0.0);
    for (int k = 0; k < kHorizon; ++k) {
      const auto feats = action_features(prev, traj[k]);
      LatentState z = sample_next_latent(std::span<const LatentState>(window).last(kContextFrames), feats, steps, rng);
      window.push_back(z);
      out.push_back(std::move(z));
      prev = traj[k];
    }
    return out;
  }

  nn::ParamList autoencoder_params() {
    nn::ParamList p = encoder_.params();
    nn::append(p, decoder_.params());
    return p;
  }

  nn::ParamList dynamics_params() {
    nn::ParamList p = action_.params();
    nn::append(p, flow_.params());
    return p;
  }

  /// Everything that is checkpointed, including the fitted delta scale.
  nn::ParamList params() {
    nn::ParamList p = autoencoder_params();
    nn::append(p, dynamics_params());
    p.push_back(&delta_scale_);
    return p;
  }

 private:
  WorldModelConfig cfg_;
  nn::Param delta_scale_;
  nn::DenseNet encoder_, decoder_, action_;
  ShortcutFlow flow_;
};

// ---------------------------------------------------------------------------
// Training

/// Mean squared reconstruction error of normalized features; accumulates
/// gradients into encoder and decoder.
inline double autoencoder_accumulate(WorldModel& wm, std::span<const nn::Vec> batch) {
  if (batch.empty()) throw Error("autoencoder: empty batch");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& x : batch) {
    nn::DenseNet::Cache ce, cd;
    const LatentState z = wm.encoder().forward(x, &ce);
    const nn::Vec y = wm.decoder().forward(z, &cd);
    nn::Vec g(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double e = y[i] - x[i];
      total += e * e;
      g[i] = 2.0 * e * inv_b;
    }
    const nn::Vec dz = wm.decoder().backward(cd, g);
    wm.encoder().backward(ce, dz);
  }
  return total * inv_b;
}

inline double autoencoder_step(WorldModel& wm, std::span<const nn::Vec> batch, nn::AdamW& opt) {
  opt.zero_grad();
  const double loss = autoencoder_accumulate(wm, batch);
  if (!std::isfinite(loss)) throw Error("autoencoder: non-finite loss");
  opt.step();
  return loss;
}

inline void WorldModel::fit_delta_scale(std::span<const Transition> transitions) {
  if (transitions.empty()) throw Error("fit_delta_scale: no transitions");
  const std::size_t L = cfg_.latent_dim;
  std::vector<double> sum(L, 0.0), sq(L, 0.0);
  for (const auto& t : transitions) {
    for (std::size_t i = 0; i < L; ++i) {
      const double d = t.next[i] - t.history.back()[i];
      sum[i] += d;
      sq[i] += d * d;
    }
  }
  const double n = static_cast<double>(transitions.size());
  for (std::size_t i = 0; i < L; ++i) {
    const double var = std::max(0.0, sq[i] / n - (sum[i] / n) * (sum[i] / n));
    delta_scale_.value[i] = static_cast<float>(std::max(std::sqrt(var), 1e-3));
  }
}

/// Eight transitions of one trajectory through a scene, with latents from the
/// (frozen) observation encoder.
inline std::vector<Transition> make_transitions(const WorldModel& wm, const Scene& scene, const PoseSequence& traj,
                                                const EnvConfig& cfg = {}) {
  const History h = wm.encode_history(scene, cfg);
  std::vector<LatentState> window(h.begin(), h.end());
  const auto speeds = step_speeds(traj);
  std::vector<Transition> out;
  Pose prev(0.0, 0.0, 0.0);
  for (int k = 0; k < kHorizon; ++k) {
    Transition tr;
    std::copy(window.end() - kContextFrames, window.end(), tr.history.begin());
    tr.action = action_features(prev, traj[k]);
    tr.next = wm.encode_observation(scene, traj[k], speeds[k], (k + 1) * kDt, cfg);
    window.push_back(tr.next);
    out.push_back(std::move(tr));
    prev = traj[k];
  }
  return out;
}

/// Flow elements (context, next latent) for a batch of transitions.
inline std::vector<FlowElement> wm_elements(const WorldModel& wm, std::span<const Transition> batch,
                                            std::vector<nn::DenseNet::Cache>* caches = nullptr) {
  std::vector<FlowElement> elems;
  elems.reserve(batch.size());
  if (caches) caches->assign(batch.size(), {});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto emb = wm.embed_action(batch[b].action, caches ? &(*caches)[b] : nullptr);
    elems.push_back({wm.context(batch[b].history, emb), wm.to_delta(batch[b].history.back(), batch[b].next)});
  }
  return elems;
}

/// Shortcut-forcing loss with frozen targets; gradients flow into the
/// velocity network and through the context into the action encoder.
inline double wm_accumulate_prepared(WorldModel& wm, std::span<const Transition> batch,
                                     std::span<const ShortcutFlow::Prepared> prep) {
  std::vector<nn::DenseNet::Cache> caches;
  const auto elems = wm_elements(wm, batch, &caches);
  std::vector<nn::Vec> ctx_grads;
  const double loss = wm.flow().accumulate_prepared(elems, prep, &ctx_grads);
  const std::size_t off = kContextFrames * wm.latent_dim();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::span<const double> da(ctx_grads[b].data() + off, wm.config().action_dim);
    wm.action_encoder().backward(caches[b], da);
  }
  return loss;
}

inline double wm_accumulate(WorldModel& wm, std::span<const Transition> batch, SeededRng& rng) {
  const auto prep = wm.flow().prepare(wm_elements(wm, batch), rng);
  return wm_accumulate_prepared(wm, batch, prep);
}

inline double wm_train_step(WorldModel& wm, std::span<const Transition> batch, SeededRng& rng, nn::AdamW& opt) {
  opt.zero_grad();
  const double loss = wm_accumulate(wm, batch, rng);
  if (!std::isfinite(loss)) throw Error("world model: non-finite loss");
  opt.step();
  return loss;
}

/// Per-step latent trace, one row per imagined frame.
inline void write_latent_csv(std::ostream& os, std::span<const LatentState> latents) {
  for (std::size_t k = 0; k < latents.size(); ++k) {
    os << k + 1;
    for (double v : latents[k]) os << ',' << format_double(v);
    os << '\n';
  }
}

}  // namespace dreamlane
