#pragma once

// Rectified flow with step-size conditioning and shortcut self-distillation.
//
// The velocity network sees (x_t, context, emb(t), emb(d)). For the smallest
// step d_min it regresses the straight-line velocity x1 - x0; for larger
// steps it regresses the average of two half-steps taken by itself with
// gradients blocked through the teacher evaluations.

#include <bit>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "dreamlane/core.hpp"
#include "dreamlane/nn.hpp"

namespace dreamlane {

/// Admissible step sizes 2^k / K_max <= 1 for a power-of-two K_max.
class StepGrid {
 public:
  explicit StepGrid(int k_max = 16) : k_max_(k_max) {
    if (k_max < 1 || !std::has_single_bit(static_cast<unsigned>(k_max))) {
      throw Error("StepGrid: K_max must be a positive power of two");
    }
  }

  int k_max() const { return k_max_; }
  double d_min() const { return 1.0 / k_max_; }
  int levels() const { return std::countr_zero(static_cast<unsigned>(k_max_)) + 1; }

  /// {1, 1/2, 1/4, ..., 1/K_max}.
  std::vector<double> step_sizes() const {
    std::vector<double> out;
    for (int n = 1; n <= k_max_; n *= 2) out.push_back(1.0 / n);
    return out;
  }

  bool admissible(double d) const {
    for (double s : step_sizes())
      if (s == d) return true;
    return false;
  }

  bool admissible_steps(int steps) const {
    return steps >= 1 && steps <= k_max_ && std::has_single_bit(static_cast<unsigned>(steps));
  }

 private:
  int k_max_;
};

/// d = 1 / U({1, 2, 4, ..., K_max}), then t = U({0, d, ..., 1 - d}).
inline std::pair<double, double> sample_training_pair(SeededRng& rng, const StepGrid& grid) {
  const int level = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(grid.levels())));
  const int n = 1 << level;
  const double d = 1.0 / n;
  const double t = d * static_cast<double>(rng.uniform_index(static_cast<std::uint64_t>(n)));
  return {t, d};
}

/// Loss weight over signal level.
inline double flow_weight(double t) { return 0.9 * t + 0.1; }

/// [sin(2^k pi v), cos(2^k pi v)] for k = 0..3.
inline nn::Vec sinusoidal_embedding(double v) {
  nn::Vec out(8);
  for (int k = 0; k < 4; ++k) {
    const double a = std::ldexp(kPi * v, k);
    out[2 * k] = std::sin(a);
    out[2 * k + 1] = std::cos(a);
  }
  return out;
}

struct FlowSample {
  nn::Vec x0;
  nn::Vec x1;
  nn::Vec xt;
  double t = 0.0;
  double d = 1.0;

  /// x_t = t x1 + (1 - t) x0.
  static FlowSample make(nn::Vec x0, nn::Vec x1, double t, double d) {
    if (x0.size() != x1.size()) throw Error("FlowSample: x0/x1 width mismatch");
    FlowSample s{std::move(x0), std::move(x1), {}, t, d};
    s.xt.resize(s.x0.size());
    for (std::size_t i = 0; i < s.xt.size(); ++i) s.xt[i] = t * s.x1[i] + (1.0 - t) * s.x0[i];
    return s;
  }

  nn::Vec velocity() const {
    nn::Vec v(x0.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x1[i] - x0[i];
    return v;
  }
};

struct FlowElement {
  nn::Vec context;
  nn::Vec x1;
};

class ShortcutFlow {
 public:
  ShortcutFlow() = default;

  ShortcutFlow(const std::string& name, std::size_t dim, std::size_t context_dim, const std::vector<std::size_t>& hidden,
               StepGrid grid, SeededRng& rng, nn::Activation act = nn::Activation::tanh)
      : dim_(dim), context_dim_(context_dim), grid_(grid) {
    std::vector<std::size_t> widths{dim + context_dim + 16};
    std::vector<nn::Activation> acts;
    for (auto h : hidden) {
      widths.push_back(h);
      acts.push_back(act);
    }
    widths.push_back(dim);
    acts.push_back(nn::Activation::identity);
    net_ = nn::DenseNet(name, widths, acts, rng);
  }

  std::size_t dim() const { return dim_; }
  std::size_t context_dim() const { return context_dim_; }
  const StepGrid& grid() const { return grid_; }
  nn::DenseNet& net() { return net_; }
  const nn::DenseNet& net() const { return net_; }
  nn::ParamList params() { return net_.params(); }

  nn::Vec input(std::span<const double> x, std::span<const double> context, double t, double d) const {
    if (x.size() != dim_ || context.size() != context_dim_) throw Error("ShortcutFlow: input width mismatch");
    nn::Vec in;
    in.reserve(net_.input_width());
    in.insert(in.end(), x.begin(), x.end());
    in.insert(in.end(), context.begin(), context.end());
    const auto te = sinusoidal_embedding(t);
    const auto de = sinusoidal_embedding(d);
    in.insert(in.end(), te.begin(), te.end());
    in.insert(in.end(), de.begin(), de.end());
    return in;
  }

  /// phi(x, t, d | context).
  nn::Vec velocity(std::span<const double> x, std::span<const double> context, double t, double d,
                   nn::DenseNet::Cache* cache = nullptr) const {
    return net_.forward(input(x, context, t, d), cache);
  }

  /// x1 - x0 at d_min; otherwise the (blocked) mean of two half-step
  /// velocities.
  nn::Vec shortcut_target(const FlowSample& s, std::span<const double> context) const {
    if (!grid_.admissible(s.d)) throw Error("shortcut_target: step size not on the grid");
    if (s.d == grid_.d_min()) return s.velocity();
    const double h = 0.5 * s.d;
    const nn::Vec v1 = velocity(s.xt, context, s.t, h);
    nn::Vec mid(dim_);
    for (std::size_t i = 0; i < dim_; ++i) mid[i] = s.xt[i] + v1[i] * h;
    const nn::Vec v2 = velocity(mid, context, s.t + h, h);
    nn::Vec out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) out[i] = 0.5 * (v1[i] + v2[i]);
    return out;
  }

  /// A drawn (t, d, x0) with its frozen regression target.
  struct Prepared {
    FlowSample sample;
    nn::Vec target;
  };

  /// Draws (t, d) and x0 per element and evaluates the stop-gradient target.
  std::vector<Prepared> prepare(std::span<const FlowElement> batch, SeededRng& rng) const {
    if (batch.empty()) throw Error("flow training: empty batch");
    std::vector<Prepared> out;
    out.reserve(batch.size());
    for (const auto& el : batch) {
      const auto [t, d] = sample_training_pair(rng, grid_);
      nn::Vec x0(dim_);
      for (auto& v : x0) v = rng.normal();
      FlowSample s = FlowSample::make(std::move(x0), el.x1, t, d);
      nn::Vec target = shortcut_target(s, el.context);
      out.push_back({std::move(s), std::move(target)});
    }
    return out;
  }

  /// Batch mean of w(t) |phi(x_t, t, d) - target|^2 with targets held fixed.
  double loss_prepared(std::span<const FlowElement> batch, std::span<const Prepared> prep) const {
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& s = prep[b].sample;
      const nn::Vec pred = velocity(s.xt, batch[b].context, s.t, s.d);
      double sq = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) sq += (pred[i] - prep[b].target[i]) * (pred[i] - prep[b].target[i]);
      total += flow_weight(s.t) * sq;
    }
    return total / static_cast<double>(batch.size());
  }

  /// Accumulates parameter gradients of loss_prepared and optionally returns
  /// d loss / d context per element. Returns the loss.
  double accumulate_prepared(std::span<const FlowElement> batch, std::span<const Prepared> prep,
                             std::vector<nn::Vec>* context_grads = nullptr) {
    if (batch.empty() || batch.size() != prep.size()) throw Error("flow training: batch/sample mismatch");
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    if (context_grads) context_grads->assign(batch.size(), nn::Vec(context_dim_, 0.0));
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& s = prep[b].sample;
      nn::DenseNet::Cache cache;
      const nn::Vec pred = velocity(s.xt, batch[b].context, s.t, s.d, &cache);
      const double w = flow_weight(s.t);
      nn::Vec g(dim_);
      double sq = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) {
        const double e = pred[i] - prep[b].target[i];
        sq += e * e;
        g[i] = 2.0 * w * e * inv_b;
      }
      if (!std::isfinite(sq)) throw Error("flow training: non-finite loss");
      total += w * sq;
      const nn::Vec din = net_.backward(cache, g);
      if (context_grads) {
        std::copy(din.begin() + static_cast<std::ptrdiff_t>(dim_),
                  din.begin() + static_cast<std::ptrdiff_t>(dim_ + context_dim_), (*context_grads)[b].begin());
      }
    }
    return total * inv_b;
  }

  double accumulate(std::span<const FlowElement> batch, SeededRng& rng, std::vector<nn::Vec>* context_grads = nullptr) {
    const auto prep = prepare(batch, rng);
    return accumulate_prepared(batch, prep, context_grads);
  }

  /// One optimizer step on the shortcut-forcing objective.
  double train_step(std::span<const FlowElement> batch, SeededRng& rng, nn::AdamW& opt) {
    opt.zero_grad();
    const double loss = accumulate(batch, rng);
    opt.step();
    return loss;
  }

  /// Euler integration from a given x0 with `steps` uniform steps.
  nn::Vec integrate(nn::Vec x, std::span<const double> context, int steps) const {
    if (!grid_.admissible_steps(steps)) throw Error("sampling: invalid step count " + std::to_string(steps));
    const double d = 1.0 / steps;
    double t = 0.0;
    for (int i = 0; i < steps; ++i) {
      const nn::Vec v = velocity(x, context, t, d);
      for (std::size_t j = 0; j < dim_; ++j) x[j] += v[j] * d;
      t += d;
    }
    return x;
  }

  nn::Vec sample(std::span<const double> context, int steps, SeededRng& rng) const {
    if (!grid_.admissible_steps(steps)) throw Error("sampling: invalid step count " + std::to_string(steps));
    nn::Vec x0(dim_);
    for (auto& v : x0) v = rng.normal();
    return integrate(std::move(x0), context, steps);
  }

  /// |phi(x_t, t, d) - (v1 + v2) / 2|, the self-distillation residual.
  double distillation_residual(const FlowSample& s, std::span<const double> context) const {
    const nn::Vec pred = velocity(s.xt, context, s.t, s.d);
    const nn::Vec target = shortcut_target(s, context);
    double sq = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) sq += (pred[i] - target[i]) * (pred[i] - target[i]);
    return std::sqrt(sq);
  }

 private:
  std::size_t dim_ = 0;
  std::size_t context_dim_ = 0;
  StepGrid grid_{16};
  nn::DenseNet net_;
};

}  // namespace dreamlane
