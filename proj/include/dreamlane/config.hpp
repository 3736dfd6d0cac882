#pragma once

// Run configuration: INI file with sections, every key optional, unknown keys
// rejected.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dreamlane/core.hpp"
#include "dreamlane/env.hpp"
#include "dreamlane/rewardmodel.hpp"
#include "dreamlane/rl.hpp"
#include "dreamlane/vocab.hpp"
#include "dreamlane/worldmodel.hpp"

namespace dreamlane {

struct DataConfig {
  std::size_t train_scenes = 200;
  std::size_t eval_scenes = 50;
  std::size_t library_size = 8192;
  std::size_t vocab_size = 256;
  int anchor_attempts = 10000;
  EndStateThresholds thresholds;
};

struct WmTrainConfig {
  WorldModelConfig model;
  int ae_steps = 3000;
  std::size_t ae_batch = 64;
  double ae_lr = 1e-3;
  int steps = 6000;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::size_t trajectories_per_scene = 16;  // anchor plus vocabulary entries
};

struct RmTrainConfig {
  RewardModelConfig model;
  int steps = 6000;
  std::size_t batch = 64;
  double lr = 1e-3;
  double label_fraction = 1.0;
  int imagine_steps = 1;
};

struct PolicyTrainConfig {
  PolicyConfig model;
  int bc_steps = 9000;
  std::size_t bc_batch = 32;
  double bc_lr = 1e-3;
};

struct RlTrainConfig {
  RlConfig rl;
  int steps = 200;
  std::size_t batch = 16;
  double lr = 3e-5;
};

struct EvalConfig {
  int latency_repeats = 20;
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::string out = "run";
  int workers = 1;
  DataConfig data;
  WmTrainConfig wm;
  RmTrainConfig rm;
  PolicyTrainConfig policy;
  RlTrainConfig rl;
  EvalConfig eval;
};

namespace detail {

struct Binding {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

template <typename T>
T parse_integer(const std::string& s, const std::string& key) {
  std::istringstream is(s);
  long long v = 0;
  is >> v;
  if (!is || !(is >> std::ws).eof()) throw Error("config: " + key + " expects an integer, got '" + s + "'");
  if constexpr (std::is_unsigned_v<T>) {
    if (v < 0) throw Error("config: " + key + " must be nonnegative");
  }
  return static_cast<T>(v);
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw Error("config: " + key + " expects true or false, got '" + s + "'");
}

template <typename T>
std::string join(const T& xs) {
  std::string out;
  for (const auto& x : xs) {
    if (!out.empty()) out += ',';
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(x)>>) {
      out += format_double(x);
    } else {
      out += std::to_string(x);
    }
  }
  return out;
}

template <std::size_t N>
void parse_array(const std::string& s, std::array<double, N>& dst, const std::string& key) {
  const auto v = parse_csv_doubles(s);
  if (v.size() != N) throw Error("config: " + key + " expects " + std::to_string(N) + " values");
  std::copy(v.begin(), v.end(), dst.begin());
}

inline std::vector<std::size_t> parse_widths(const std::string& s, const std::string& key) {
  std::vector<std::size_t> out;
  for (double v : parse_csv_doubles(s)) {
    if (!(v >= 1.0) || v != std::floor(v)) throw Error("config: " + key + " expects positive integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw Error("config: " + key + " is empty");
  return out;
}

}  // namespace detail

/// Key table "section.key" -> accessors on `c`.
inline std::map<std::string, detail::Binding> config_bindings(RunConfig& c) {
  using detail::Binding;
  std::map<std::string, Binding> b;
  auto real = [&b](const std::string& k, double& v) {
    b[k] = {[&v, k](const std::string& s) { v = parse_double(s); }, [&v] { return format_double(v); }};
  };
  auto integer = [&b]<typename T>(const std::string& k, T& v) {
    b[k] = {[&v, k](const std::string& s) { v = detail::parse_integer<T>(s, k); },
            [&v] { return std::to_string(v); }};
  };
  auto flag = [&b](const std::string& k, bool& v) {
    b[k] = {[&v, k](const std::string& s) { v = detail::parse_bool(s, k); },
            [&v] { return std::string(v ? "true" : "false"); }};
  };
  auto widths = [&b](const std::string& k, std::vector<std::size_t>& v) {
    b[k] = {[&v, k](const std::string& s) { v = detail::parse_widths(s, k); }, [&v] { return detail::join(v); }};
  };
  auto array8 = [&b](const std::string& k, std::array<double, 8>& v) {
    b[k] = {[&v, k](const std::string& s) { detail::parse_array(s, v, k); }, [&v] { return detail::join(v); }};
  };
  auto array4 = [&b](const std::string& k, std::array<double, 4>& v) {
    b[k] = {[&v, k](const std::string& s) { detail::parse_array(s, v, k); }, [&v] { return detail::join(v); }};
  };

  integer("run.seed", c.seed);
  b["run.out"] = {[&c](const std::string& s) { c.out = s; }, [&c] { return c.out; }};
  integer("run.workers", c.workers);

  integer("data.train_scenes", c.data.train_scenes);
  integer("data.eval_scenes", c.data.eval_scenes);
  integer("data.library_size", c.data.library_size);
  integer("data.vocab_size", c.data.vocab_size);
  integer("data.anchor_attempts", c.data.anchor_attempts);
  real("data.threshold_x", c.data.thresholds.x);
  real("data.threshold_y", c.data.thresholds.y);
  real("data.threshold_theta_deg", c.data.thresholds.theta_deg);

  integer("wm.latent_dim", c.wm.model.latent_dim);
  integer("wm.obs_hidden", c.wm.model.obs_hidden);
  integer("wm.action_dim", c.wm.model.action_dim);
  integer("wm.action_hidden", c.wm.model.action_hidden);
  widths("wm.velocity_hidden", c.wm.model.velocity_hidden);
  integer("wm.k_max", c.wm.model.k_max);
  integer("wm.ae_steps", c.wm.ae_steps);
  integer("wm.ae_batch", c.wm.ae_batch);
  real("wm.ae_lr", c.wm.ae_lr);
  integer("wm.steps", c.wm.steps);
  integer("wm.batch", c.wm.batch);
  real("wm.lr", c.wm.lr);
  integer("wm.trajectories_per_scene", c.wm.trajectories_per_scene);

  integer("rm.token_dim", c.rm.model.token_dim);
  integer("rm.model_dim", c.rm.model.model_dim);
  integer("rm.traj_hidden", c.rm.model.traj_hidden);
  integer("rm.head_hidden", c.rm.model.head_hidden);
  array8("rm.dim_weights", c.rm.model.dim_weights);
  array8("rm.horizon_weights", c.rm.model.horizon_weights);
  integer("rm.steps", c.rm.steps);
  integer("rm.batch", c.rm.batch);
  real("rm.lr", c.rm.lr);
  real("rm.label_fraction", c.rm.label_fraction);
  integer("rm.imagine_steps", c.rm.imagine_steps);

  widths("policy.hidden", c.policy.model.hidden);
  integer("policy.bc_steps", c.policy.bc_steps);
  integer("policy.bc_batch", c.policy.bc_batch);
  real("policy.bc_lr", c.policy.bc_lr);

  integer("rl.steps", c.rl.steps);
  integer("rl.batch", c.rl.batch);
  real("rl.lr", c.rl.lr);
  real("rl.epsilon", c.rl.rl.epsilon);
  real("rl.lambda_bc", c.rl.rl.lambda_bc);
  real("rl.lambda_kl", c.rl.rl.lambda_kl);
  integer("rl.g1", c.rl.rl.g1);
  integer("rl.g2", c.rl.rl.g2);
  real("rl.temperature", c.rl.rl.temperature);
  real("rl.sigma_xy_base", c.rl.rl.sigma.xy_base);
  real("rl.sigma_xy_slope", c.rl.rl.sigma.xy_slope);
  real("rl.sigma_theta_base", c.rl.rl.sigma.theta_base);
  real("rl.sigma_theta_slope", c.rl.rl.sigma.theta_slope);
  array4("rl.safety_weights", c.rl.rl.fusion.safety_weights);
  array4("rl.task_weights", c.rl.rl.fusion.task_weights);
  array8("rl.temporal_weights", c.rl.rl.fusion.temporal_weights);
  real("rl.reward_floor", c.rl.rl.fusion.floor);
  flag("rl.log_sigmoid_variant", c.rl.rl.fusion.log_sigmoid_variant);
  integer("rl.wm_steps", c.rl.rl.wm_steps);
  b["rl.sampler"] = {[&c](const std::string& s) { c.rl.rl.sampler = parse_sampler(s); },
                     [&c] { return std::string(c.rl.rl.sampler == Sampler::vocab ? "vocab" : "random"); }};

  integer("eval.latency_repeats", c.eval.latency_repeats);
  return b;
}

/// Range checks shared by every stage.
inline void validate(const RunConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw Error("config: " + what);
  };
  need(c.workers >= 1, "run.workers must be at least 1");
  need(c.data.train_scenes >= 1 && c.data.eval_scenes >= 1, "scene counts must be positive");
  need(c.data.vocab_size >= 1 && c.data.library_size >= 1, "library and vocabulary sizes must be positive");
  need(c.data.anchor_attempts >= 1, "data.anchor_attempts must be positive");
  need(c.data.thresholds.x > 0 && c.data.thresholds.y > 0 && c.data.thresholds.theta_deg > 0,
       "end-state thresholds must be positive");
  need(StepGrid(c.wm.model.k_max).k_max() == c.wm.model.k_max, "wm.k_max must be a power of two");
  need(c.wm.model.latent_dim >= 1 && c.wm.model.action_dim >= 1, "wm widths must be positive");
  need(c.wm.ae_batch >= 1 && c.wm.batch >= 1 && c.rm.batch >= 1 && c.policy.bc_batch >= 1 && c.rl.batch >= 1,
       "batch sizes must be positive");
  need(c.wm.ae_steps >= 0 && c.wm.steps >= 0 && c.rm.steps >= 0 && c.policy.bc_steps >= 0 && c.rl.steps >= 0,
       "step counts must be nonnegative");
  need(c.wm.ae_lr > 0 && c.wm.lr > 0 && c.rm.lr > 0 && c.policy.bc_lr > 0 && c.rl.lr > 0,
       "learning rates must be positive");
  need(c.wm.trajectories_per_scene >= 1, "wm.trajectories_per_scene must be positive");
  need(c.rm.label_fraction > 0.0 && c.rm.label_fraction <= 1.0, "rm.label_fraction must lie in (0, 1]");
  need(c.rm.model.latent_dim == c.wm.model.latent_dim, "reward model latent width must match the world model");
  need(c.rl.rl.epsilon > 0.0 && c.rl.rl.epsilon < 1.0, "rl.epsilon must lie in (0, 1)");
  need(c.rl.rl.lambda_bc >= 0.0 && c.rl.rl.lambda_kl >= 0.0, "rl lambdas must be nonnegative");
  need(c.rl.rl.g1 >= 0 && c.rl.rl.g2 >= 0 && c.rl.rl.group_size() >= 2, "rl group size must be at least 2");
  need(c.rl.rl.temperature > 0.0, "rl.temperature must be positive");
  need(c.eval.latency_repeats >= 1, "eval.latency_repeats must be positive");
  validate_fusion(c.rl.rl.fusion);
  sigma_vector(c.rl.rl.sigma);
  for (int s : {c.rm.imagine_steps, c.rl.rl.wm_steps}) {
    need(StepGrid(c.wm.model.k_max).admissible_steps(s), "sampling steps must divide wm.k_max");
  }
}

/// Applies INI text over the defaults. Unknown sections or keys are errors.
inline RunConfig parse_config(std::istream& is) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(std::string("config: ") + e.what());
  }
  RunConfig c;
  auto b = config_bindings(c);
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw Error("config: key '" + section + "' outside any section");
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      const auto it = b.find(full);
      if (it == b.end()) throw Error("config: unknown key '" + full + "'");
      it->second.set(value.data());
    }
  }
  c.rm.model.latent_dim = c.wm.model.latent_dim;
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("config: cannot open " + path);
  return parse_config(is);
}

/// Fully resolved configuration as INI text; parse_config of the output
/// reproduces `c`.
inline std::string to_ini(const RunConfig& c) {
  RunConfig copy = c;
  const auto b = config_bindings(copy);
  std::string out, current;
  for (const auto& [full, binding] : b) {
    const auto dot = full.find('.');
    const std::string section = full.substr(0, dot);
    if (section != current) {
      if (!current.empty()) out += '\n';
      out += "[" + section + "]\n";
      current = section;
    }
    out += full.substr(dot + 1) + " = " + binding.get() + "\n";
  }
  return out;
}

}  // namespace dreamlane
