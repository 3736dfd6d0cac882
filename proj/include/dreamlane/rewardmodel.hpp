#pragma once

// Autoregressive dense reward model. Each frame latent is compressed to an
// l-wide token by a single learnable query, lifted to width D by a shared
// per-frame encoder, and read by eight reward queries Q_base + C_dyn through
// cross-attention. A shared head maps each query to one logit.

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "dreamlane/core.hpp"
#include "dreamlane/env.hpp"
#include "dreamlane/nn.hpp"
#include "dreamlane/worldmodel.hpp"

namespace dreamlane {

struct RewardModelConfig {
  std::size_t latent_dim = 32;  // L
  std::size_t token_dim = 8;    // l
  std::size_t model_dim = 32;   // D
  std::size_t traj_hidden = 64;
  std::size_t head_hidden = 64;
  std::array<double, kRewardDims> dim_weights{1, 1, 1, 1, 1, 1, 1, 1};     // omega_k
  std::array<double, kHorizon> horizon_weights{1, 1, 1, 1, 1, 1, 1, 1};    // gamma(t)
};

struct RewardPrediction {
  std::array<double, kRewardDims> logits{};
  RewardVector scores;
};

/// Normalized trajectory prefix: poses 1..t as (x / 20, y / 5, theta), zero
/// beyond t.
inline nn::Vec trajectory_prefix(const PoseSequence& traj, int t) {
  nn::Vec v(kTrajCoords, 0.0);
  for (int k = 0; k < t; ++k) {
    v[3 * k] = traj[k].x / 20.0;
    v[3 * k + 1] = traj[k].y / 5.0;
    v[3 * k + 2] = traj[k].theta;
  }
  return v;
}

class RewardModel {
 public:
  struct TokenCache {
    nn::CrossAttention::Cache compress;
    nn::DenseNet::Cache lift;
  };
  struct Cache {
    int t = 0;
    std::vector<TokenCache> tokens;
    nn::DenseNet::Cache traj;
    nn::CrossAttention::Cache decode;
    std::array<nn::DenseNet::Cache, kRewardDims> head;
  };

  RewardModel(const RewardModelConfig& cfg, SeededRng& rng)
      : cfg_(cfg),
        query_("rm.cmp.query", {1, cfg.token_dim}),
        chunk_pos_("rm.cmp.pos", {chunks(cfg), cfg.token_dim}),
        frame_emb_("rm.frame", {kContextFrames + kHorizon, cfg.model_dim}),
        step_emb_("rm.step", {kHorizon, cfg.model_dim}),
        q_base_("rm.qbase", {kRewardDims, cfg.model_dim}) {
    using A = nn::Activation;
    const std::size_t l = cfg.token_dim, D = cfg.model_dim;
    compress_ = nn::CrossAttention("rm.cmp", l, l, l, false, false, rng);
    lift_ = nn::DenseNet("rm.his", {l, D, D}, {A::tanh, A::identity}, rng);
    traj_ = nn::DenseNet("rm.traj", {static_cast<std::size_t>(kTrajCoords), cfg.traj_hidden, D},
                         {A::tanh, A::identity}, rng);
    decode_ = nn::CrossAttention("rm.dec", D, D, D, true, true, rng);
    head_ = nn::DenseNet("rm.head", {D, cfg.head_hidden, 1}, {A::tanh, A::identity}, rng);
    for (nn::Param* p : {&query_, &chunk_pos_, &frame_emb_, &step_emb_, &q_base_}) {
      for (auto& v : p->value) v = static_cast<float>(rng.normal(0.0, 0.5));
    }
  }

  RewardModel(const RewardModel&) = delete;
  RewardModel& operator=(const RewardModel&) = delete;

  const RewardModelConfig& config() const { return cfg_; }
  RewardModelConfig& mutable_config() { return cfg_; }

  /// One learnable query attends over the L / l chunks of z (keys carry a
  /// chunk position embedding, values are the raw chunks).
  nn::Vec compress_latent(std::span<const double> z, nn::CrossAttention::Cache* cache = nullptr) const {
    const std::size_t l = cfg_.token_dim, n = chunks(cfg_);
    if (z.size() != cfg_.latent_dim) throw Error("compress_latent: latent width mismatch");
    nn::Matrix q(1, l), k(n, l), v(n, l);
    for (std::size_t i = 0; i < l; ++i) q(0, i) = query_.value[i];
    for (std::size_t c = 0; c < n; ++c) {
      for (std::size_t i = 0; i < l; ++i) {
        v(c, i) = z[c * l + i];
        k(c, i) = z[c * l + i] + chunk_pos_.value[c * l + i];
      }
    }
    return compress_.forward(q, k, v, cache).data;
  }

  /// Eight logits and scores at horizon t from the four history latents and
  /// exactly t imagined latents.
  RewardPrediction predict_rewards(const History& history, std::span<const LatentState> imagined,
                                   const PoseSequence& traj, int t, Cache* cache = nullptr) const {
    if (t < 1 || t > kHorizon) throw Error("predict_rewards: horizon must be in 1..8");
    if (imagined.size() != static_cast<std::size_t>(t)) throw Error("predict_rewards: need exactly t imagined latents");
    const std::size_t D = cfg_.model_dim;
    const std::size_t n = kContextFrames + static_cast<std::size_t>(t);
    Cache local;
    Cache& c = cache ? *cache : local;
    c.t = t;
    c.tokens.assign(n, {});

    nn::Matrix his(n, D);
    for (std::size_t f = 0; f < n; ++f) {
      const LatentState& z = f < kContextFrames ? history[f] : imagined[f - kContextFrames];
      const nn::Vec tok = compress_latent(z, &c.tokens[f].compress);
      const nn::Vec h = lift_.forward(tok, &c.tokens[f].lift);
      for (std::size_t i = 0; i < D; ++i) his(f, i) = h[i] + frame_emb_.value[f * D + i];
    }

    const nn::Vec tv = traj_.forward(trajectory_prefix(traj, t), &c.traj);
    nn::Matrix q(kRewardDims, D);
    for (int r = 0; r < kRewardDims; ++r) {
      for (std::size_t i = 0; i < D; ++i) {
        q(r, i) = q_base_.value[r * D + i] + tv[i] + step_emb_.value[(t - 1) * D + i];
      }
    }
    const nn::Matrix out = decode_.forward(q, his, his, &c.decode);
    RewardPrediction pred;
    for (int r = 0; r < kRewardDims; ++r) {
      const std::span<const double> row(out.data.data() + r * D, D);
      pred.logits[r] = head_.forward(row, &c.head[r])[0];
      pred.scores[r] = nn::sigmoid(pred.logits[r]);
    }
    return pred;
  }

  /// Accumulates parameter gradients for d loss / d logits.
  void backward(const Cache& c, const std::array<double, kRewardDims>& dlogits) {
    const std::size_t D = cfg_.model_dim, l = cfg_.token_dim, nch = chunks(cfg_);
    nn::Matrix dout(kRewardDims, D);
    for (int r = 0; r < kRewardDims; ++r) {
      const nn::Vec g = head_.backward(c.head[r], std::array<double, 1>{dlogits[r]});
      std::copy(g.begin(), g.end(), dout.data.begin() + r * D);
    }
    const auto g = decode_.backward(c.decode, dout);
    nn::Vec dcdyn(D, 0.0);
    for (int r = 0; r < kRewardDims; ++r) {
      for (std::size_t i = 0; i < D; ++i) {
        const double v = g.dq_in(r, i);
        q_base_.grad[r * D + i] += v;
        dcdyn[i] += v;
      }
    }
    for (std::size_t i = 0; i < D; ++i) step_emb_.grad[(c.t - 1) * D + i] += dcdyn[i];
    traj_.backward(c.traj, dcdyn);

    const std::size_t n = c.tokens.size();
    for (std::size_t f = 0; f < n; ++f) {
      nn::Vec dh(D);
      for (std::size_t i = 0; i < D; ++i) {
        dh[i] = g.dk_in(f, i) + g.dv_in(f, i);
        frame_emb_.grad[f * D + i] += dh[i];
      }
      const nn::Vec dtok = lift_.backward(c.tokens[f].lift, dh);
      nn::Matrix dtok_m(1, l);
      std::copy(dtok.begin(), dtok.end(), dtok_m.data.begin());
      const auto gc = compress_.backward(c.tokens[f].compress, dtok_m);
      for (std::size_t i = 0; i < l; ++i) query_.grad[i] += gc.dq_in(0, i);
      for (std::size_t ch = 0; ch < nch; ++ch)
        for (std::size_t i = 0; i < l; ++i) chunk_pos_.grad[ch * l + i] += gc.dk_in(ch, i);
    }
  }

  /// Predicted table over all horizons; row t - 1 reads only imagined[0..t).
  HorizonRewardTable predict_table(const History& history, std::span<const LatentState> imagined,
                                   const PoseSequence& traj) const {
    if (imagined.size() != kHorizon) throw Error("predict_table: need eight imagined latents");
    HorizonRewardTable table;
    for (int t = 1; t <= kHorizon; ++t) {
      table[t - 1] = predict_rewards(history, imagined.first(static_cast<std::size_t>(t)), traj, t).scores;
    }
    return table;
  }

  nn::ParamList params() {
    nn::ParamList p{&query_, &chunk_pos_};
    nn::append(p, compress_.params());
    nn::append(p, lift_.params());
    p.push_back(&frame_emb_);
    nn::append(p, traj_.params());
    p.push_back(&step_emb_);
    p.push_back(&q_base_);
    nn::append(p, decode_.params());
    nn::append(p, head_.params());
    return p;
  }

  const nn::Param& query_bases() const { return q_base_; }
  nn::Param& query_bases() { return q_base_; }
  const nn::Param& step_embedding() const { return step_emb_; }
  nn::CrossAttention& compressor() { return compress_; }

 private:
  static std::size_t chunks(const RewardModelConfig& cfg) {
    if (cfg.token_dim == 0 || cfg.latent_dim % cfg.token_dim != 0) {
      throw Error("reward model: latent width must be a multiple of the token width");
    }
    return cfg.latent_dim / cfg.token_dim;
  }

  RewardModelConfig cfg_;
  nn::Param query_, chunk_pos_, frame_emb_, step_emb_, q_base_;
  nn::CrossAttention compress_, decode_;
  nn::DenseNet lift_, traj_, head_;
};

/// max(x, 0) - x y + log(1 + exp(-|x|)).
inline double bce_with_logits(double logit, double label) {
  return std::max(logit, 0.0) - logit * label + std::log1p(std::exp(-std::abs(logit)));
}

/// One supervised element: a trajectory's context and imagined latents, the
/// horizon and its oracle label row.
struct RewardSample {
  const History* history = nullptr;
  const std::vector<LatentState>* imagined = nullptr;  // eight latents
  const PoseSequence* traj = nullptr;
  int t = 1;
  RewardVector label;
};

inline void validate_label(const RewardVector& label) {
  for (int k = 0; k < kRewardDims; ++k) {
    if (!(label[k] >= 0.0 && label[k] <= 1.0)) throw Error("reward label outside [0, 1]");
  }
}

/// Weighted BCE, averaged over batch elements and the eight dimensions.
inline double rm_loss(const RewardModel& rm, std::span<const RewardSample> batch) {
  if (batch.empty()) throw Error("reward model: empty batch");
  const auto& cfg = rm.config();
  double total = 0.0;
  for (const auto& s : batch) {
    validate_label(s.label);
    const auto pred = rm.predict_rewards(*s.history, std::span(*s.imagined).first(static_cast<std::size_t>(s.t)),
                                         *s.traj, s.t);
    for (int k = 0; k < kRewardDims; ++k) {
      total += cfg.dim_weights[k] * cfg.horizon_weights[s.t - 1] * bce_with_logits(pred.logits[k], s.label[k]);
    }
  }
  return total / (static_cast<double>(batch.size()) * kRewardDims);
}

inline double rm_accumulate(RewardModel& rm, std::span<const RewardSample> batch) {
  if (batch.empty()) throw Error("reward model: empty batch");
  const auto& cfg = rm.config();
  const double norm = 1.0 / (static_cast<double>(batch.size()) * kRewardDims);
  double total = 0.0;
  for (const auto& s : batch) {
    validate_label(s.label);
    RewardModel::Cache cache;
    const auto pred = rm.predict_rewards(*s.history, std::span(*s.imagined).first(static_cast<std::size_t>(s.t)),
                                         *s.traj, s.t, &cache);
    std::array<double, kRewardDims> g{};
    for (int k = 0; k < kRewardDims; ++k) {
      const double w = cfg.dim_weights[k] * cfg.horizon_weights[s.t - 1];
      total += w * bce_with_logits(pred.logits[k], s.label[k]);
      g[k] = w * (nn::sigmoid(pred.logits[k]) - s.label[k]) * norm;
    }
    rm.backward(cache, g);
  }
  return total * norm;
}

inline double rm_train_step(RewardModel& rm, std::span<const RewardSample> batch, nn::AdamW& opt) {
  opt.zero_grad();
  const double loss = rm_accumulate(rm, batch);
  if (!std::isfinite(loss)) throw Error("reward model: non-finite loss");
  opt.step();
  return loss;
}

/// Imagines the trajectory once, then decodes every horizon prefix.
inline HorizonRewardTable score_trajectory(const WorldModel& wm, const RewardModel& rm, const History& history,
                                           const PoseSequence& traj, int steps, SeededRng& rng) {
  const auto imagined = wm.imagine_rollout(history, traj, steps, rng);
  return rm.predict_table(history, imagined, traj);
}

}  // namespace dreamlane
