#pragma once

// Pipeline stages behind the command-line tool. Each stage reads artifacts
// from the run directory, trains or evaluates, and writes checkpoints, JSON
// metrics (schema_version 1) and CSV curves. Everything except the files
// under timing/ is a pure function of the configuration.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dreamlane/config.hpp"
#include "dreamlane/core.hpp"
#include "dreamlane/env.hpp"
#include "dreamlane/expert.hpp"
#include "dreamlane/metrics.hpp"
#include "dreamlane/nn.hpp"
#include "dreamlane/rewardmodel.hpp"
#include "dreamlane/rl.hpp"
#include "dreamlane/vocab.hpp"
#include "dreamlane/worldmodel.hpp"

namespace dreamlane {

inline constexpr int kMetricsSchemaVersion = 1;

// Stream ids of the per-stage generators.
enum StageStream : std::uint64_t {
  kStreamScenes = 1,
  kStreamLibrary = 2,
  kStreamWorldModel = 3,
  kStreamRewardModel = 4,
  kStreamPolicy = 5,
  kStreamRl = 6,
  kStreamEval = 7,
};

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

class RunPaths {
 public:
  explicit RunPaths(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const { return root_; }
  fs::path config() const { return root_ / "config.ini"; }
  fs::path scene(std::size_t i) const { return root_ / "scenes" / numbered("scene_", i, ".txt"); }
  fs::path anchor(std::size_t i) const { return root_ / "anchors" / numbered("anchor_", i, ".txt"); }
  fs::path vocab(std::size_t i) const { return root_ / "vocab" / numbered("vocab_", i, ".txt"); }
  fs::path vocab_meta(std::size_t i) const { return root_ / "vocab" / numbered("vocab_", i, ".json"); }
  fs::path labels() const { return root_ / "labels" / "labels.txt"; }
  fs::path checkpoint(const std::string& name) const { return root_ / "checkpoints" / (name + ".ckpt"); }
  fs::path metrics(const std::string& name) const { return root_ / "metrics" / (name + ".json"); }
  fs::path curve(const std::string& name) const { return root_ / "curves" / (name + ".csv"); }
  fs::path log(const std::string& name) const { return root_ / "logs" / (name + ".jsonl"); }
  fs::path timing(const std::string& name) const { return root_ / "timing" / (name + ".json"); }

 private:
  static std::string numbered(const char* prefix, std::size_t i, const char* suffix) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%04zu%s", prefix, i, suffix);
    return buf;
  }

  fs::path root_;
};

namespace detail {

inline std::ofstream open_out(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error("cannot write " + p.string());
  return os;
}

inline std::ifstream open_in(const fs::path& p, const std::string& producer) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw Error("missing artifact " + p.string() + " (run " + producer + " first)");
  return is;
}

inline void save_params(const fs::path& p, const nn::ParamList& params) {
  auto os = open_out(p);
  nn::save_checkpoint(os, params);
}

inline void write_json(const fs::path& p, const Json& j) { open_out(p) << j.dump(2) << '\n'; }

inline Json metrics_header(const std::string& stage, const RunConfig& cfg) {
  Json j;
  j["schema_version"] = kMetricsSchemaVersion;
  j["stage"] = stage;
  j["seed"] = cfg.seed;
  return j;
}

inline void require_checkpoint(const RunPaths& paths, const std::string& name, const std::string& producer) {
  if (!fs::exists(paths.checkpoint(name))) {
    throw Error("missing artifact " + paths.checkpoint(name).string() + " (run " + producer + " first)");
  }
}

}  // namespace detail

/// Name suffix that identifies an RL run.
inline std::string rl_tag(int steps, Sampler sampler, int run = 0) {
  std::string t = "steps" + std::to_string(steps) + "_" + (sampler == Sampler::vocab ? "vocab" : "random");
  if (run != 0) t += "_run" + std::to_string(run);
  return t;
}

/// Reward model checkpoint name for a label fraction.
inline std::string rm_name(double label_fraction) {
  return label_fraction == 1.0 ? "rm" : "rm_frac" + format_double(label_fraction);
}

// ---------------------------------------------------------------------------
// Data

struct Dataset {
  std::vector<Scene> scenes;
  std::vector<Trajectory> anchors;
  std::vector<std::vector<Trajectory>> vocabs;
  std::size_t n_train = 0;

  std::size_t size() const { return scenes.size(); }
  bool is_train(std::size_t i) const { return i < n_train; }
};

/// Training scenes cycle all four difficulties; held-out scenes cycle the
/// three that contain obstacles or agents.
inline Difficulty scene_difficulty(std::size_t i, std::size_t n_train) {
  static constexpr std::array<Difficulty, 4> kAll = {Difficulty::empty, Difficulty::static_obstacles,
                                                     Difficulty::dynamic, Difficulty::mixed};
  if (i < n_train) return kAll[i % 4];
  return kAll[1 + (i - n_train) % 3];
}

struct GenDataSummary {
  std::size_t scenes = 0;
  int regenerations = 0;
  std::size_t min_filtered = 0;
  std::size_t vocab_warnings = 0;
};

inline GenDataSummary run_gen_data(const RunConfig& cfg, const RunPaths& paths, const EnvConfig& env = {}) {
  const std::size_t n = cfg.data.train_scenes + cfg.data.eval_scenes;
  SeededRng lib_rng(cfg.seed, kStreamLibrary);
  LibraryConfig lc;
  lc.v_max = env.v_max;
  const auto library = generate_library(lib_rng, cfg.data.library_size, lc, env);

  std::vector<Scene> scenes(n);
  std::vector<std::optional<AnchorResult>> anchors(n);
  std::vector<int> regen(n, 0);
  std::vector<TrajectoryVocabulary> vocabs(n);
  const SeededRng scene_base(cfg.seed, kStreamScenes);
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    SeededRng rng = scene_base.fork(i);
    const Difficulty diff = scene_difficulty(i, cfg.data.train_scenes);
    for (;;) {
      scenes[i] = generate_scene(rng, diff, static_cast<int>(i), env);
      anchors[i] = find_anchor(scenes[i], rng, cfg.data.anchor_attempts, env);
      if (anchors[i]) break;
      if (++regen[i] > 100) throw Error("gen-data: no safe anchor after 100 regenerated scenes");
    }
    vocabs[i] = build_vocabulary(library, anchors[i]->trajectory, cfg.data.vocab_size, cfg.data.thresholds,
                                 static_cast<int>(i), cfg.seed);
  });

  GenDataSummary sum;
  sum.scenes = n;
  sum.min_filtered = std::numeric_limits<std::size_t>::max();
  Json per_scene = Json::array();
  for (std::size_t i = 0; i < n; ++i) {
    {
      auto os = detail::open_out(paths.scene(i));
      write_scene(os, scenes[i]);
    }
    {
      auto os = detail::open_out(paths.anchor(i));
      write_trajectories(os, std::span(&anchors[i]->trajectory, 1), "anchor of scene " + std::to_string(i));
    }
    {
      auto os = detail::open_out(paths.vocab(i));
      write_trajectories(os, vocabs[i].entries, "vocabulary of scene " + std::to_string(i));
    }
    const auto& p = vocabs[i].provenance;
    Json meta;
    meta["schema_version"] = kMetricsSchemaVersion;
    meta["scene_id"] = i;
    meta["anchor_id"] = p.anchor_id;
    meta["seed"] = p.seed;
    meta["source_size"] = p.source_size;
    meta["filtered_size"] = p.filtered_size;
    meta["size"] = vocabs[i].size();
    meta["thresholds"] = {{"x", p.thresholds.x}, {"y", p.thresholds.y}, {"theta_deg", p.thresholds.theta_deg}};
    meta["warnings"] = vocabs[i].warnings;
    detail::write_json(paths.vocab_meta(i), meta);

    sum.regenerations += regen[i];
    sum.min_filtered = std::min(sum.min_filtered, p.filtered_size);
    sum.vocab_warnings += vocabs[i].warnings.empty() ? 0 : 1;
    per_scene.push_back({{"scene", i},
                         {"split", i < cfg.data.train_scenes ? "train" : "eval"},
                         {"difficulty", std::string(to_string(scenes[i].difficulty))},
                         {"anchor_attempts", anchors[i]->attempts},
                         {"regenerations", regen[i]},
                         {"filtered_size", p.filtered_size},
                         {"vocab_size", vocabs[i].size()}});
  }
  Json j = detail::metrics_header("gen-data", cfg);
  j["train_scenes"] = cfg.data.train_scenes;
  j["eval_scenes"] = cfg.data.eval_scenes;
  j["library_size"] = library.size();
  j["regenerations"] = sum.regenerations;
  j["min_filtered_size"] = sum.min_filtered;
  j["scenes_with_vocab_warnings"] = sum.vocab_warnings;
  j["scenes"] = per_scene;
  detail::write_json(paths.metrics("gen_data"), j);
  detail::open_out(paths.config()) << to_ini(cfg);
  return sum;
}

inline Dataset load_dataset(const RunConfig& cfg, const RunPaths& paths, const EnvConfig& env = {}) {
  Dataset d;
  d.n_train = cfg.data.train_scenes;
  const std::size_t n = cfg.data.train_scenes + cfg.data.eval_scenes;
  for (std::size_t i = 0; i < n; ++i) {
    {
      auto is = detail::open_in(paths.scene(i), "gen-data");
      d.scenes.push_back(read_scene(is));
    }
    {
      auto is = detail::open_in(paths.anchor(i), "gen-data");
      auto a = read_trajectories(is, env.v_max);
      if (a.size() != 1) throw Error("anchor file " + paths.anchor(i).string() + " must hold one trajectory");
      d.anchors.push_back(a.front());
    }
    {
      auto is = detail::open_in(paths.vocab(i), "gen-data");
      d.vocabs.push_back(read_trajectories(is, env.v_max));
      if (d.vocabs.back().empty()) throw Error("empty vocabulary file " + paths.vocab(i).string());
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// World model

/// Trajectories used for world-model training in scene i: the anchor plus
/// evenly spaced vocabulary entries.
inline std::vector<Trajectory> wm_trajectories(const Dataset& d, std::size_t i, std::size_t count) {
  std::vector<Trajectory> out{d.anchors[i]};
  const auto& v = d.vocabs[i];
  const std::size_t extra = std::min(count - 1, v.size());
  for (std::size_t j = 0; j < extra; ++j) out.push_back(v[j * v.size() / extra]);
  return out;
}

inline void load_world_model(WorldModel& wm, const RunPaths& paths) {
  detail::require_checkpoint(paths, "wm", "train-wm");
  nn::load_checkpoint(paths.checkpoint("wm").string(), wm.params());
}

inline void write_curve(const fs::path& p, const std::string& header, const std::vector<std::vector<double>>& rows) {
  auto os = detail::open_out(p);
  os << header << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << format_double(r[i]);
    os << '\n';
  }
}

struct WmSummary {
  double ae_loss = 0.0, flow_loss = 0.0, eval_flow_loss = 0.0;
};

inline WmSummary run_train_wm(const RunConfig& cfg, const RunPaths& paths, const EnvConfig& env = {}) {
  const Dataset d = load_dataset(cfg, paths, env);
  SeededRng rng(cfg.seed, kStreamWorldModel);
  WorldModel wm(cfg.wm.model, rng);

  // Observation features of every visited state.
  std::vector<nn::Vec> feats;
  for (std::size_t i = 0; i < d.n_train; ++i) {
    for (const auto& f : history_frames(d.scenes[i]))
      feats.push_back(observation_features(d.scenes[i], f.pose, f.speed, f.time, env).normalized());
    for (const auto& traj : wm_trajectories(d, i, cfg.wm.trajectories_per_scene)) {
      const auto speeds = step_speeds(traj.poses());
      for (int k = 0; k < kHorizon; ++k)
        feats.push_back(observation_features(d.scenes[i], traj[k], speeds[k], (k + 1) * kDt, env).normalized());
    }
  }
  WmSummary sum;
  std::vector<std::vector<double>> ae_curve, flow_curve;
  {
    nn::AdamW opt(wm.autoencoder_params(), {.lr = cfg.wm.ae_lr});
    std::vector<nn::Vec> batch(cfg.wm.ae_batch);
    double ema = 0.0;
    for (int s = 0; s < cfg.wm.ae_steps; ++s) {
      for (auto& b : batch) b = feats[rng.uniform_index(feats.size())];
      const double loss = autoencoder_step(wm, batch, opt);
      ema = s == 0 ? loss : 0.98 * ema + 0.02 * loss;
      if (s % 50 == 0 || s + 1 == cfg.wm.ae_steps) ae_curve.push_back({double(s), loss});
    }
    sum.ae_loss = ema;
  }

  auto transitions_of = [&](std::size_t lo, std::size_t hi) {
    std::vector<Transition> out;
    for (std::size_t i = lo; i < hi; ++i) {
      for (const auto& traj : wm_trajectories(d, i, cfg.wm.trajectories_per_scene)) {
        auto t = make_transitions(wm, d.scenes[i], traj.poses(), env);
        out.insert(out.end(), t.begin(), t.end());
      }
    }
    return out;
  };
  const auto train = transitions_of(0, d.n_train);
  const auto held = transitions_of(d.n_train, d.size());
  wm.fit_delta_scale(train);
  {
    nn::AdamW opt(wm.dynamics_params(), {.lr = cfg.wm.lr});
    std::vector<Transition> batch(cfg.wm.batch);
    double ema = 0.0;
    for (int s = 0; s < cfg.wm.steps; ++s) {
      for (auto& b : batch) b = train[rng.uniform_index(train.size())];
      const double loss = wm_train_step(wm, batch, rng, opt);
      ema = s == 0 ? loss : 0.98 * ema + 0.02 * loss;
      if (s % 50 == 0 || s + 1 == cfg.wm.steps) flow_curve.push_back({double(s), loss});
    }
    sum.flow_loss = ema;
  }
  {
    SeededRng eval_rng(cfg.seed, kStreamEval);
    const auto elems = wm_elements(wm, held);
    const auto prep = wm.flow().prepare(elems, eval_rng);
    sum.eval_flow_loss = wm.flow().loss_prepared(elems, prep);
  }
  detail::save_params(paths.checkpoint("wm"), wm.params());
  write_curve(paths.curve("wm_autoencoder_loss"), "step,loss", ae_curve);
  write_curve(paths.curve("wm_flow_loss"), "step,loss", flow_curve);
  Json j = detail::metrics_header("train-wm", cfg);
  j["observation_samples"] = feats.size();
  j["train_transitions"] = train.size();
  j["heldout_transitions"] = held.size();
  j["autoencoder_loss_ema"] = sum.ae_loss;
  j["flow_loss_ema"] = sum.flow_loss;
  j["heldout_flow_loss"] = sum.eval_flow_loss;
  j["parameters"] = nn::parameter_count(wm.params());
  detail::write_json(paths.metrics("train_wm"), j);
  return sum;
}

// ---------------------------------------------------------------------------
// Labels and reward model

inline std::size_t run_label(const RunConfig& cfg, const RunPaths& paths, const EnvConfig& env = {}) {
  const Dataset d = load_dataset(cfg, paths, env);
  std::vector<std::vector<LabelRecord>> per_scene(d.size());
  parallel_for(d.size(), cfg.workers, [&](std::size_t i) {
    for (std::size_t j = 0; j < d.vocabs[i].size(); ++j)
      per_scene[i].push_back({static_cast<int>(i), static_cast<int>(j), simulate_rewards(d.scenes[i], d.vocabs[i][j], env)});
  });
  auto os = detail::open_out(paths.labels());
  std::array<double, kRewardDims> neg{};
  std::size_t count = 0;
  for (const auto& recs : per_scene) {
    for (const auto& r : recs) {
      write_label(os, r);
      for (int t = 0; t < kHorizon; ++t)
        for (int k = 0; k < kRewardDims; ++k) neg[k] += r.table[t][k] < 0.5 ? 1.0 : 0.0;
      ++count;
    }
  }
  Json j = detail::metrics_header("label", cfg);
  j["records"] = count;
  Json rates;
  for (int k = 0; k < kRewardDims; ++k) rates[std::string(kRewardNames[k])] = neg[k] / (count * double(kHorizon));
  j["below_half_rate"] = rates;
  detail::write_json(paths.metrics("label"), j);
  return count;
}

inline std::vector<LabelRecord> load_labels(const RunPaths& paths) {
  auto is = detail::open_in(paths.labels(), "label");
  return read_labels(is);
}

/// A labelled trajectory with its imagined latents.
struct ImaginedRecord {
  std::size_t scene = 0;
  PoseSequence traj{};
  std::vector<LatentState> imagined;
  HorizonRewardTable table;
};

inline std::vector<ImaginedRecord> imagine_records(const WorldModel& wm, const Dataset& d,
                                                   std::span<const LabelRecord> labels,
                                                   std::span<const History> histories, int steps,
                                                   const SeededRng& base, int workers) {
  std::vector<ImaginedRecord> out(labels.size());
  parallel_for(labels.size(), workers, [&](std::size_t r) {
    const auto& lab = labels[r];
    if (lab.scene_id < 0 || static_cast<std::size_t>(lab.scene_id) >= d.size() || lab.traj_id < 0 ||
        static_cast<std::size_t>(lab.traj_id) >= d.vocabs[lab.scene_id].size()) {
      throw Error("label refers to an unknown scene or vocabulary entry");
    }
    ImaginedRecord& rec = out[r];
    rec.scene = static_cast<std::size_t>(lab.scene_id);
    rec.traj = d.vocabs[rec.scene][lab.traj_id].poses();
    rec.table = lab.table;
    SeededRng rng = base.fork((static_cast<std::uint64_t>(lab.scene_id) << 20) + static_cast<std::uint64_t>(lab.traj_id));
    rec.imagined = wm.imagine_rollout(histories[rec.scene], rec.traj, steps, rng);
  });
  return out;
}

struct RewardEval {
  std::array<double, kRewardDims> auc{};  // NaN when a class is absent
  std::array<double, kRewardDims> mae{};
  std::size_t pairs = 0;

  double safety_auc_mean() const {
    double s = 0.0;
    for (int k : kSafetyDims) s += auc[k];
    return s / kSafetyDims.size();
  }
};

/// Per-dimension AUC (label >= 0.5 is positive) and MAE over all
/// (record, horizon) pairs.
inline RewardEval evaluate_reward_model(const RewardModel& rm, std::span<const ImaginedRecord> records,
                                        std::span<const History> histories, int workers = 1) {
  if (records.empty()) throw Error("evaluate_reward_model: no records");
  std::vector<HorizonRewardTable> pred(records.size());
  parallel_for(records.size(), workers, [&](std::size_t r) {
    pred[r] = rm.predict_table(histories[records[r].scene], records[r].imagined, records[r].traj);
  });
  RewardEval e;
  for (int k = 0; k < kRewardDims; ++k) {
    std::vector<double> scores, labels;
    std::vector<int> pos;
    for (std::size_t r = 0; r < records.size(); ++r) {
      for (int t = 0; t < kHorizon; ++t) {
        scores.push_back(pred[r][t][k]);
        labels.push_back(records[r].table[t][k]);
        pos.push_back(records[r].table[t][k] >= 0.5 ? 1 : 0);
      }
    }
    const auto npos = std::count(pos.begin(), pos.end(), 1);
    e.auc[k] = (npos == 0 || npos == static_cast<long>(pos.size())) ? std::numeric_limits<double>::quiet_NaN()
                                                                    : roc_auc(scores, pos);
    e.mae[k] = mean_absolute_error(scores, labels);
    e.pairs = scores.size();
  }
  return e;
}

inline std::vector<History> encode_histories(const WorldModel& wm, const Dataset& d, const EnvConfig& env = {}) {
  std::vector<History> out;
  out.reserve(d.size());
  for (const auto& s : d.scenes) out.push_back(wm.encode_history(s, env));
  return out;
}

inline Json reward_eval_json(const RewardEval& e) {
  Json j;
  for (int k = 0; k < kRewardDims; ++k) {
    const std::string n(kRewardNames[k]);
    j["auc"][n] = std::isnan(e.auc[k]) ? Json(nullptr) : Json(e.auc[k]);
    j["mae"][n] = e.mae[k];
  }
  j["safety_auc_mean"] = e.safety_auc_mean();
  j["pairs"] = e.pairs;
  return j;
}

struct RmSummary {
  RewardEval heldout;
  double final_loss = 0.0;
  std::size_t train_records = 0;
};

/// Trains the reward model on a label_fraction subset of the training-scene
/// labels and evaluates it on every held-out label.
inline RmSummary run_train_rm(const RunConfig& cfg, const RunPaths& paths, const EnvConfig& env = {}) {
  const Dataset d = load_dataset(cfg, paths, env);
  SeededRng wm_rng(cfg.seed, kStreamWorldModel);
  WorldModel wm(cfg.wm.model, wm_rng);
  load_world_model(wm, paths);
  const auto labels = load_labels(paths);
  const auto histories = encode_histories(wm, d, env);

  SeededRng rng(cfg.seed, kStreamRewardModel);
  std::vector<LabelRecord> train_labels, held_labels;
  for (const auto& l : labels) (d.is_train(static_cast<std::size_t>(l.scene_id)) ? train_labels : held_labels).push_back(l);
  if (train_labels.empty() || held_labels.empty()) throw Error("train-rm: need labels for both splits");
  {
    // Deterministic subset: shuffle with the stage generator, keep a prefix.
    for (std::size_t i = train_labels.size(); i > 1; --i) std::swap(train_labels[i - 1], train_labels[rng.uniform_index(i)]);
    const auto keep = static_cast<std::size_t>(std::ceil(cfg.rm.label_fraction * train_labels.size()));
    train_labels.resize(std::max<std::size_t>(1, keep));
  }
  const SeededRng imagine_base(cfg.seed, kStreamEval);
  const auto train = imagine_records(wm, d, train_labels, histories, cfg.rm.imagine_steps, imagine_base, cfg.workers);
  const auto held = imagine_records(wm, d, held_labels, histories, cfg.rm.imagine_steps, imagine_base, cfg.workers);

  RewardModelConfig mc = cfg.rm.model;
  mc.latent_dim = cfg.wm.model.latent_dim;
  RewardModel rm(mc, rng);
  nn::AdamW opt(rm.params(), {.lr = cfg.rm.lr});
  std::vector<RewardSample> batch(cfg.rm.batch);
  std::vector<std::vector<double>> curve;
  double ema = 0.0;
  for (int s = 0; s < cfg.rm.steps; ++s) {
    for (auto& b : batch) {
      const auto& r = train[rng.uniform_index(train.size())];
      const int t = 1 + static_cast<int>(rng.uniform_index(kHorizon));
      b = {&histories[r.scene], &r.imagined, &r.traj, t, r.table[t - 1]};
    }
    const double loss = rm_train_step(rm, batch, opt);
    ema = s == 0 ? loss : 0.98 * ema + 0.02 * loss;
    if (s % 50 == 0 || s + 1 == cfg.rm.steps) curve.push_back({double(s), loss});
  }
  RmSummary sum;
  sum.final_loss = ema;
  sum.train_records = train.size();
  sum.heldout = evaluate_reward_model(rm, held, histories, cfg.workers);

  const std::string name = rm_name(cfg.rm.label_fraction);
  detail::save_params(paths.checkpoint(name), rm.params());
  write_curve(paths.curve(name + "_loss"), "step,loss", curve);
  Json j = detail::metrics_header("train-rm", cfg);
  j["label_fraction"] = cfg.rm.label_fraction;
  j["train_records"] = train.size();
  j["heldout_records"] = held.size();
  j["loss_ema"] = sum.final_loss;
  j["heldout"] = reward_eval_json(sum.heldout);
  detail::write_json(paths.metrics("train_" + name), j);
  return sum;
}

// ---------------------------------------------------------------------------
// Policy

inline std::vector<PolicyScene> make_policy_scenes(const Policy& policy, const Dataset& d,
                                                   std::span<const History> histories, std::size_t lo,
                                                   std::size_t hi, const EnvConfig& env = {}) {
  std::vector<PolicyScene> out;
  for (std::size_t i = lo; i < hi; ++i) {
    PolicyScene ps;
    ps.scene = &d.scenes[i];
    ps.history = histories[i];
    const auto f = observation_features(d.scenes[i], Pose(), d.scenes[i].initial_speed, 0.0, env).normalized();
    ps.input = policy.input(f, histories[i], d.scenes[i].initial_speed);
    ps.anchor = d.anchors[i].flat();
    ps.vocab = d.vocabs[i];
    out.push_back(std::move(ps));
  }
  return out;
}

inline Json policy_eval_json(const PolicyEval& e) {
  Json j;
  for (int k = 0; k < kRewardDims; ++k) j["dim_means_h8"][std::string(kRewardNames[k])] = e.dim_means[k];
  j["fused_reward"] = e.fused;
  j["collision_rate"] = e.collision;
  j["scenes"] = e.scenes;
  return j;
}

/// Shared state of the RL stages: data, frozen models and scene inputs.
struct RlWorkspace {
  Dataset data;
  std::unique_ptr<WorldModel> wm;
  std::unique_ptr<RewardModel> rm;
  std::vector<History> histories;
  Policy policy;
  std::vector<PolicyScene> train, held;

  RlWorkspace(const RunConfig& cfg, const RunPaths& paths, const EnvConfig& env = {}) {
    data = load_dataset(cfg, paths, env);
    SeededRng wm_rng(cfg.seed, kStreamWorldModel);
    wm = std::make_unique<WorldModel>(cfg.wm.model, wm_rng);
    load_world_model(*wm, paths);
    RewardModelConfig mc = cfg.rm.model;
    mc.latent_dim = cfg.wm.model.latent_dim;
    SeededRng rm_rng(cfg.seed, kStreamRewardModel);
    rm = std::make_unique<RewardModel>(mc, rm_rng);
    const std::string name = rm_name(cfg.rm.label_fraction);
    detail::require_checkpoint(paths, name, "train-rm");
    nn::load_checkpoint(paths.checkpoint(name).string(), rm->params());
    histories = encode_histories(*wm, data, env);
    SeededRng prng(cfg.seed, kStreamPolicy);
    policy = Policy(cfg.policy.model, cfg.wm.model.latent_dim, prng, env);
    train = make_policy_scenes(policy, data, histories, 0, data.n_train, env);
    held = make_policy_scenes(policy, data, histories, data.n_train, data.size(), env);
  }
};

/// Behaviour cloning from the policy's initial weights. Deterministic, so
/// every RL run starts from the same policy.
inline double train_bc(Policy& policy, std::span<const PolicyScene> scenes, const RunConfig& cfg,
                       std::vector<std::vector<double>>* curve = nullptr) {
  SeededRng rng(cfg.seed, kStreamPolicy);
  rng = rng.fork(1);
  nn::AdamW opt(policy.params(), {.lr = cfg.policy.bc_lr});
  std::vector<PolicyScene> batch(cfg.policy.bc_batch);
  double ema = 0.0;
  for (int s = 0; s < cfg.policy.bc_steps; ++s) {
    for (auto& b : batch) b = scenes[rng.uniform_index(scenes.size())];
    const double loss = bc_train_step(policy, batch, opt);
    ema = s == 0 ? loss : 0.98 * ema + 0.02 * loss;
    if (curve && (s % 50 == 0 || s + 1 == cfg.policy.bc_steps)) curve->push_back({double(s), loss});
  }
  return ema;
}

struct RlSummary {
  PolicyEval bc, rl;
  RlLosses last;
};

/// Behaviour cloning then GRPO in imagination. `run` selects an independent
/// RL generator stream (0 is the default run).
inline RlSummary run_train_rl(const RunConfig& cfg, const RunPaths& paths, int run = 0, const EnvConfig& env = {}) {
  RlWorkspace ws(cfg, paths, env);
  std::vector<std::vector<double>> bc_curve;
  const double bc_loss_ema = train_bc(ws.policy, ws.train, cfg, &bc_curve);
  detail::save_params(paths.checkpoint("policy_bc"), ws.policy.params());
  write_curve(paths.curve("bc_loss"), "step,loss", bc_curve);

  RlSummary sum;
  sum.bc = evaluate_policy(ws.policy, ws.held, cfg.rl.rl.fusion, env);
  const Policy ref = ws.policy;
  RlConfig rc = cfg.rl.rl;
  rc.workers = cfg.workers;
  SeededRng rng = SeededRng(cfg.seed, kStreamRl).fork(static_cast<std::uint64_t>(run));
  nn::AdamW opt(ws.policy.params(), {.lr = cfg.rl.lr});
  const std::string tag = rl_tag(rc.wm_steps, rc.sampler, run);
  auto log = detail::open_out(paths.log("train_rl_" + tag));
  std::vector<std::vector<double>> curve;
  std::vector<PolicyScene> batch(cfg.rl.batch);
  const auto t0 = std::chrono::steady_clock::now();
  for (int s = 0; s < cfg.rl.steps; ++s) {
    for (auto& b : batch) b = ws.train[rng.uniform_index(ws.train.size())];
    sum.last = rl_train_step(ws.policy, ref, *ws.wm, *ws.rm, batch, rc, opt, rng, env);
    Json rec;
    rec["step"] = s;
    rec["actor"] = sum.last.actor;
    rec["bc"] = sum.last.bc;
    rec["kl"] = sum.last.kl;
    rec["total"] = sum.last.total;
    rec["mean_reward"] = sum.last.mean_reward;
    rec["collision"] = sum.last.collision;
    log << rec.dump() << '\n';
    curve.push_back({double(s), sum.last.total, sum.last.mean_reward, sum.last.collision});
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  sum.rl = evaluate_policy(ws.policy, ws.held, cfg.rl.rl.fusion, env);
  detail::save_params(paths.checkpoint("policy_rl_" + tag), ws.policy.params());
  write_curve(paths.curve("rl_" + tag), "step,total,mean_reward,collision", curve);
  Json j = detail::metrics_header("train-rl", cfg);
  j["tag"] = tag;
  j["bc_loss_ema"] = bc_loss_ema;
  j["rl_steps"] = cfg.rl.steps;
  j["heldout_bc"] = policy_eval_json(sum.bc);
  j["heldout_rl"] = policy_eval_json(sum.rl);
  detail::write_json(paths.metrics("train_rl_" + tag), j);
  Json timing;
  timing["schema_version"] = kMetricsSchemaVersion;
  timing["rl_seconds"] = seconds;
  timing["seconds_per_step"] = cfg.rl.steps > 0 ? seconds / cfg.rl.steps : 0.0;
  detail::write_json(paths.timing("train_rl_" + tag), timing);
  return sum;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Wall-clock seconds per imagined frame for each step count, over the
/// held-out scenes' policy means.
inline std::map<int, double> imagination_latency(const WorldModel& wm, const Policy& policy,
                                                 std::span<const PolicyScene> scenes, std::span<const int> steps,
                                                 int repeats) {
  std::map<int, double> out;
  SeededRng rng(0, kStreamEval);
  std::vector<PoseSequence> means;
  for (const auto& s : scenes) means.push_back(mean_poses(policy.mean(s.input)));
  double sink = 0.0;
  for (int n : steps) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < repeats; ++r)
      for (std::size_t i = 0; i < scenes.size(); ++i) sink += wm.imagine_rollout(scenes[i].history, means[i], n, rng)[0][0];
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out[n] = sec / (static_cast<double>(repeats) * static_cast<double>(scenes.size()) * kHorizon);
  }
  if (!std::isfinite(sink)) throw Error("imagination produced non-finite latents");
  return out;
}

struct EvalSummary {
  PolicyEval bc, rl;
  std::map<int, double> latency;
};

/// Oracle scores of the BC and RL policy means on the held-out scenes, and
/// imagination latency at 1, 4 and 16 steps (written under timing/).
inline EvalSummary run_eval(const RunConfig& cfg, const RunPaths& paths, int run = 0, const EnvConfig& env = {}) {
  RlWorkspace ws(cfg, paths, env);
  const std::string tag = rl_tag(cfg.rl.rl.wm_steps, cfg.rl.rl.sampler, run);
  detail::require_checkpoint(paths, "policy_bc", "train-rl");
  detail::require_checkpoint(paths, "policy_rl_" + tag, "train-rl");
  EvalSummary sum;
  nn::load_checkpoint(paths.checkpoint("policy_bc").string(), ws.policy.params());
  sum.bc = evaluate_policy(ws.policy, ws.held, cfg.rl.rl.fusion, env);
  nn::load_checkpoint(paths.checkpoint("policy_rl_" + tag).string(), ws.policy.params());
  sum.rl = evaluate_policy(ws.policy, ws.held, cfg.rl.rl.fusion, env);
  static constexpr std::array<int, 3> kSteps = {1, 4, 16};
  sum.latency = imagination_latency(*ws.wm, ws.policy, ws.held, kSteps, cfg.eval.latency_repeats);

  Json j = detail::metrics_header("eval", cfg);
  j["tag"] = tag;
  j["bc"] = policy_eval_json(sum.bc);
  j["rl"] = policy_eval_json(sum.rl);
  j["collision_relative_reduction"] =
      sum.bc.collision > 0.0 ? (sum.bc.collision - sum.rl.collision) / sum.bc.collision : 0.0;
  j["ep_relative_change"] =
      sum.bc.dim_means[kEp] > 0.0 ? (sum.rl.dim_means[kEp] - sum.bc.dim_means[kEp]) / sum.bc.dim_means[kEp] : 0.0;
  detail::write_json(paths.metrics("eval_" + tag), j);
  Json timing;
  timing["schema_version"] = kMetricsSchemaVersion;
  for (const auto& [n, sec] : sum.latency) timing["seconds_per_frame"]["steps" + std::to_string(n)] = sec;
  timing["ratio_16_to_1"] = sum.latency.at(16) / sum.latency.at(1);
  detail::write_json(paths.timing("eval_" + tag), timing);
  return sum;
}

}  // namespace dreamlane
