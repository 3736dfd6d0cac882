#pragma once

// Minimal differentiable building blocks. Parameters are stored as 32-bit
// floats; all arithmetic (activations, gradients, losses) runs in double.
// Each learnable block owns its parameter gradients, which backward()
// accumulates and the optimizer consumes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "dreamlane/core.hpp"

namespace dreamlane::nn {

using Vec = std::vector<double>;

struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> value;
  std::vector<double> grad;

  Param() = default;
  Param(std::string name_, std::vector<std::size_t> shape_) : name(std::move(name_)), shape(std::move(shape_)) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    value.assign(n, 0.0f);
    grad.assign(n, 0.0);
  }

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

using ParamList = std::vector<Param*>;

inline void zero_grads(const ParamList& params) {
  for (Param* p : params) p->zero_grad();
}

inline std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const Param* p : params) n += p->size();
  return n;
}

inline void append(ParamList& dst, const ParamList& src) { dst.insert(dst.end(), src.begin(), src.end()); }

/// Copies values between identically shaped parameter lists.
inline void copy_values(const ParamList& src, const ParamList& dst) {
  if (src.size() != dst.size()) throw Error("copy_values: parameter count mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i]->shape != dst[i]->shape) throw Error("copy_values: shape mismatch for " + src[i]->name);
    dst[i]->value = src[i]->value;
  }
}

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline void glorot_init(Param& p, std::size_t fan_in, std::size_t fan_out, SeededRng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : p.value) v = static_cast<float>(rng.uniform(-limit, limit));
}

enum class Activation { identity, relu, tanh, sigmoid };

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
    case Activation::sigmoid: return sigmoid(x);
  }
  return x;
}

/// Derivative expressed through the activation output.
inline double activation_grad(Activation a, double out) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return out > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: return 1.0 - out * out;
    case Activation::sigmoid: return out * (1.0 - out);
  }
  return 1.0;
}

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// y = W x + b with W stored out x in.
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, SeededRng& rng)
      : in_(in), out_(out), weight_(name + ".weight", {out, in}), bias_(name + ".bias", {out}) {
    glorot_init(weight_, in, out, rng);
  }

  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }

  void forward(const double* x, double* y) const {
    const float* w = weight_.value.data();
    for (std::size_t o = 0; o < out_; ++o) {
      double acc = bias_.value[o];
      const float* row = w + o * in_;
      for (std::size_t i = 0; i < in_; ++i) acc += static_cast<double>(row[i]) * x[i];
      y[o] = acc;
    }
  }

  /// Accumulates parameter gradients; writes dx when non-null.
  void backward(const double* x, const double* dy, double* dx) {
    double* gw = weight_.grad.data();
    for (std::size_t o = 0; o < out_; ++o) {
      const double g = dy[o];
      if (g == 0.0) continue;
      bias_.grad[o] += g;
      double* grow = gw + o * in_;
      for (std::size_t i = 0; i < in_; ++i) grow[i] += g * x[i];
    }
    if (dx) input_grad(dy, dx);
  }

  void input_grad(const double* dy, double* dx) const {
    std::fill(dx, dx + in_, 0.0);
    const float* w = weight_.value.data();
    for (std::size_t o = 0; o < out_; ++o) {
      const double g = dy[o];
      if (g == 0.0) continue;
      const float* row = w + o * in_;
      for (std::size_t i = 0; i < in_; ++i) dx[i] += static_cast<double>(row[i]) * g;
    }
  }

  Matrix forward(const Matrix& x) const {
    Matrix y(x.rows, out_);
    for (std::size_t r = 0; r < x.rows; ++r) forward(x.row(r).data(), y.row(r).data());
    return y;
  }

  Matrix backward(const Matrix& x, const Matrix& dy) {
    Matrix dx(x.rows, in_);
    for (std::size_t r = 0; r < x.rows; ++r) backward(x.row(r).data(), dy.row(r).data(), dx.row(r).data());
    return dx;
  }

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  ParamList params() { return {&weight_, &bias_}; }

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Param weight_;
  Param bias_;
};

/// Fully connected network: affine + activation per layer.
class DenseNet {
 public:
  struct Cache {
    std::vector<Vec> acts;  // acts[0] = input, acts[i + 1] = output of layer i
  };

  DenseNet() = default;

  DenseNet(const std::string& name, const std::vector<std::size_t>& widths, const std::vector<Activation>& acts,
           SeededRng& rng)
      : acts_(acts) {
    if (widths.size() < 2 || acts.size() != widths.size() - 1) {
      throw Error("DenseNet " + name + ": need one activation per layer");
    }
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      layers_.emplace_back(name + ".l" + std::to_string(i), widths[i], widths[i + 1], rng);
    }
  }

  std::size_t input_width() const { return layers_.front().in(); }
  std::size_t output_width() const { return layers_.back().out(); }
  std::size_t num_layers() const { return layers_.size(); }
  Linear& layer(std::size_t i) { return layers_[i]; }
  Activation activation(std::size_t i) const { return acts_[i]; }

  Vec forward(std::span<const double> x, Cache* cache = nullptr) const {
    if (x.size() != input_width()) {
      throw Error("DenseNet forward: input width " + std::to_string(x.size()) + " != " +
                  std::to_string(input_width()));
    }
    Vec cur(x.begin(), x.end());
    if (cache) {
      cache->acts.clear();
      cache->acts.push_back(cur);
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      Vec next(layers_[l].out());
      layers_[l].forward(cur.data(), next.data());
      for (double& v : next) v = activate(acts_[l], v);
      cur = std::move(next);
      if (cache) cache->acts.push_back(cur);
    }
    return cur;
  }

  /// Reverse pass: accumulates parameter gradients and returns d loss / d input.
  Vec backward(const Cache& cache, std::span<const double> upstream) { return backward_impl(*this, cache, upstream); }

  /// Gradient with respect to the input only (frozen weights).
  Vec input_gradient(const Cache& cache, std::span<const double> upstream) const {
    return backward_impl(*this, cache, upstream);
  }

  ParamList params() {
    ParamList out;
    for (auto& l : layers_) append(out, l.params());
    return out;
  }

 private:
  // Self is DenseNet (accumulates parameter gradients) or const DenseNet.
  template <typename Self>
  static Vec backward_impl(Self& self, const Cache& cache, std::span<const double> upstream) {
    if (cache.acts.size() != self.layers_.size() + 1) throw Error("DenseNet backward: missing forward cache");
    if (upstream.size() != self.output_width()) throw Error("DenseNet backward: upstream width mismatch");
    Vec g(upstream.begin(), upstream.end());
    for (std::size_t l = self.layers_.size(); l-- > 0;) {
      const Vec& out = cache.acts[l + 1];
      for (std::size_t o = 0; o < g.size(); ++o) g[o] *= activation_grad(self.acts_[l], out[o]);
      Vec dx(self.layers_[l].in());
      if constexpr (std::is_const_v<Self>) {
        self.layers_[l].input_grad(g.data(), dx.data());
      } else {
        self.layers_[l].backward(cache.acts[l].data(), g.data(), dx.data());
      }
      g = std::move(dx);
    }
    return g;
  }

  std::vector<Linear> layers_;
  std::vector<Activation> acts_;
};

inline void softmax_inplace(std::span<double> x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  double sum = 0.0;
  for (double& v : x) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : x) v /= sum;
}

/// Single-head scaled dot-product cross-attention with optional output
/// projection and query residual.
class CrossAttention {
 public:
  struct Cache {
    Matrix q_in, k_in, v_in, q, k, v, attn, ctx;
  };
  struct InputGrads {
    Matrix dq_in, dk_in, dv_in;
  };

  CrossAttention() = default;

  CrossAttention(const std::string& name, std::size_t query_width, std::size_t kv_width, std::size_t model_width,
                 bool output_projection, bool residual, SeededRng& rng)
      : model_width_(model_width), output_projection_(output_projection), residual_(residual),
        wq_(name + ".q", query_width, model_width, rng), wk_(name + ".k", kv_width, model_width, rng),
        wv_(name + ".v", kv_width, model_width, rng) {
    if (output_projection_) wo_ = Linear(name + ".o", model_width, model_width, rng);
    if (residual_ && query_width != model_width) throw Error("CrossAttention residual needs query width == model width");
  }

  std::size_t model_width() const { return model_width_; }

  Matrix forward(const Matrix& q_in, const Matrix& k_in, const Matrix& v_in, Cache* cache = nullptr) const {
    if (k_in.rows != v_in.rows || k_in.rows == 0) throw Error("CrossAttention: key/value count mismatch");
    Cache local;
    Cache& c = cache ? *cache : local;
    c.q_in = q_in;
    c.k_in = k_in;
    c.v_in = v_in;
    c.q = wq_.forward(q_in);
    c.k = wk_.forward(k_in);
    c.v = wv_.forward(v_in);
    const double scale = 1.0 / std::sqrt(static_cast<double>(model_width_));
    c.attn = Matrix(q_in.rows, k_in.rows);
    for (std::size_t i = 0; i < q_in.rows; ++i) {
      for (std::size_t j = 0; j < k_in.rows; ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < model_width_; ++d) s += c.q(i, d) * c.k(j, d);
        c.attn(i, j) = s * scale;
      }
      softmax_inplace(c.attn.row(i));
    }
    c.ctx = Matrix(q_in.rows, model_width_);
    for (std::size_t i = 0; i < q_in.rows; ++i) {
      for (std::size_t j = 0; j < k_in.rows; ++j) {
        const double a = c.attn(i, j);
        for (std::size_t d = 0; d < model_width_; ++d) c.ctx(i, d) += a * c.v(j, d);
      }
    }
    Matrix out = output_projection_ ? wo_.forward(c.ctx) : c.ctx;
    if (residual_) {
      for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += q_in.data[i];
    }
    return out;
  }

  InputGrads backward(const Cache& c, const Matrix& dout) {
    const std::size_t nq = c.q.rows, nk = c.k.rows, dm = model_width_;
    Matrix dctx = output_projection_ ? wo_.backward(c.ctx, dout) : dout;
    Matrix dattn(nq, nk), dv(nk, dm);
    for (std::size_t i = 0; i < nq; ++i) {
      for (std::size_t j = 0; j < nk; ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < dm; ++d) {
          s += dctx(i, d) * c.v(j, d);
          dv(j, d) += c.attn(i, j) * dctx(i, d);
        }
        dattn(i, j) = s;
      }
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(dm));
    Matrix dq(nq, dm), dk(nk, dm);
    for (std::size_t i = 0; i < nq; ++i) {
      double dotp = 0.0;
      for (std::size_t j = 0; j < nk; ++j) dotp += dattn(i, j) * c.attn(i, j);
      for (std::size_t j = 0; j < nk; ++j) {
        const double ds = c.attn(i, j) * (dattn(i, j) - dotp) * scale;
        if (ds == 0.0) continue;
        for (std::size_t d = 0; d < dm; ++d) {
          dq(i, d) += ds * c.k(j, d);
          dk(j, d) += ds * c.q(i, d);
        }
      }
    }
    InputGrads g;
    g.dq_in = wq_.backward(c.q_in, dq);
    g.dk_in = wk_.backward(c.k_in, dk);
    g.dv_in = wv_.backward(c.v_in, dv);
    if (residual_) {
      for (std::size_t i = 0; i < g.dq_in.data.size(); ++i) g.dq_in.data[i] += dout.data[i];
    }
    return g;
  }

  ParamList params() {
    ParamList out;
    append(out, wq_.params());
    append(out, wk_.params());
    append(out, wv_.params());
    if (output_projection_) append(out, wo_.params());
    return out;
  }

  Linear& value_projection() { return wv_; }
  const Linear& value_projection_const() const { return wv_; }

 private:
  std::size_t model_width_ = 0;
  bool output_projection_ = true;
  bool residual_ = false;
  Linear wq_, wk_, wv_, wo_;
};

// ---------------------------------------------------------------------------
// Optimizer

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Adaptive-moment optimizer with bias correction and decoupled weight decay.
class AdamW {
 public:
  AdamW() = default;
  AdamW(ParamList params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const Param* p : params_) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }

  const AdamWConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::uint64_t steps() const { return t_; }

  void zero_grad() { zero_grads(params_); }

  /// Applies one update from the accumulated gradients. Throws on NaN/Inf
  /// gradients (before touching parameters) or non-finite results.
  void step(double grad_scale = 1.0) {
    for (const Param* p : params_) {
      for (double g : p->grad) {
        if (!std::isfinite(g)) throw Error("optimizer: non-finite gradient in " + p->name);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Param& p = *params_[k];
      auto& m = m_[k];
      auto& v = v_[k];
      if (m.size() != p.size()) throw Error("optimizer: moment shape mismatch for " + p.name);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = p.grad[i] * grad_scale;
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        double w = p.value[i];
        w -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w);
        if (!std::isfinite(w)) throw Error("optimizer: non-finite parameter in " + p.name);
        p.value[i] = static_cast<float>(w);
      }
    }
  }

 private:
  ParamList params_;
  AdamWConfig cfg_;
  std::vector<Vec> m_, v_;
  std::uint64_t t_ = 0;
};

/// Scales all gradients so their global L2 norm is at most max_norm.
inline double clip_grad_norm(const ParamList& params, double max_norm) {
  double sq = 0.0;
  for (const Param* p : params)
    for (double g : p->grad) sq += g * g;
  const double n = std::sqrt(sq);
  if (n > max_norm && n > 0.0) {
    const double s = max_norm / n;
    for (Param* p : params)
      for (double& g : p->grad) g *= s;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Checkpoints: "DLCK" magic, u32 version, u32 tensor count, then per tensor
// (u32 name length, name bytes, u32 rank, u32 dims...), then the
// concatenated little-endian float32 blob in manifest order.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw Error("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void save_checkpoint(std::ostream& os, const ParamList& params) {
  os.write("DLCK", 4);
  detail::put_u32(os, kCheckpointVersion);
  detail::put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) {
    detail::put_u32(os, static_cast<std::uint32_t>(p->name.size()));
    os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(p->shape.size()));
    for (auto d : p->shape) detail::put_u32(os, static_cast<std::uint32_t>(d));
  }
  for (const Param* p : params) {
    for (float f : p->value) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      detail::put_u32(os, bits);
    }
  }
}

/// Loads values into an identically named and shaped parameter list.
inline void load_checkpoint(std::istream& is, const ParamList& params) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "DLCK", 4) != 0) throw Error("checkpoint: bad magic");
  const auto version = detail::get_u32(is);
  if (version != kCheckpointVersion) throw Error("checkpoint: unsupported version " + std::to_string(version));
  const auto count = detail::get_u32(is);
  if (count != params.size()) throw Error("checkpoint: tensor count mismatch");
  for (const Param* p : params) {
    const auto len = detail::get_u32(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw Error("checkpoint: truncated manifest");
    if (name != p->name) throw Error("checkpoint: expected tensor " + p->name + ", found " + name);
    const auto rank = detail::get_u32(is);
    std::vector<std::size_t> shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(detail::get_u32(is));
    if (shape != p->shape) throw Error("checkpoint: shape mismatch for " + name);
  }
  for (Param* p : params) {
    for (float& f : p->value) {
      const std::uint32_t bits = detail::get_u32(is);
      std::memcpy(&f, &bits, 4);
    }
  }
}

inline void save_checkpoint(const std::string& path, const ParamList& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write checkpoint " + path);
  save_checkpoint(os, params);
}

inline void load_checkpoint(const std::string& path, const ParamList& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read checkpoint " + path);
  load_checkpoint(is, params);
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckResult {
  int coords = 0;
  int failures = 0;
  double max_rel_error = 0.0;
};

/// Compares accumulated analytic gradients against central differences at
/// `coords` random parameter coordinates. `accumulate` must zero nothing and
/// add d loss / d param into each Param::grad; `loss` must be a pure function
/// of the current parameter values. The step is measured on the float-rounded
/// perturbed values, so float storage does not bias the estimate.
inline GradCheckResult gradient_check(const ParamList& params, const std::function<double()>& loss,
                                      const std::function<void()>& accumulate, SeededRng& rng, int coords,
                                      double h = 1e-4, double tol = 1e-4, double abs_floor = 1e-6) {
  zero_grads(params);
  accumulate();
  const std::size_t total = parameter_count(params);
  GradCheckResult res;
  for (int c = 0; c < coords; ++c) {
    std::size_t flat = rng.uniform_index(total);
    std::size_t pi = 0;
    while (flat >= params[pi]->size()) flat -= params[pi++]->size();
    Param& p = *params[pi];
    const float orig = p.value[flat];
    const float plus = static_cast<float>(orig + h);
    const float minus = static_cast<float>(orig - h);
    p.value[flat] = plus;
    const double lp = loss();
    p.value[flat] = minus;
    const double lm = loss();
    p.value[flat] = orig;
    const double numeric = (lp - lm) / (static_cast<double>(plus) - static_cast<double>(minus));
    const double analytic = p.grad[flat];
    const double denom = std::max({std::abs(numeric), std::abs(analytic), abs_floor});
    const double rel = std::abs(numeric - analytic) / denom;
    res.max_rel_error = std::max(res.max_rel_error, rel);
    ++res.coords;
    if (rel >= tol) ++res.failures;
  }
  return res;
}

}  // namespace dreamlane::nn
