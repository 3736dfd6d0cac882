// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
//
//   dreamlane_acceptance [N ...]
//
// With arguments, only the listed criteria run. The pipeline artifacts go to
// $DREAMLANE_ACCEPTANCE_DIR (default: <tmp>/dreamlane_acceptance), which is
// wiped first.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "dreamlane/config.hpp"
#include "dreamlane/flow.hpp"
#include "dreamlane/metrics.hpp"
#include "dreamlane/pipeline.hpp"
#include "reference.hpp"

using namespace dreamlane;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void report(int id, const char* name, const Outcome& o, double seconds, int& failures) {
  std::printf("%s criterion %d (%s): %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), seconds);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

// ---------------------------------------------------------------------------
// 1. Gradient integrity

Outcome gradient_integrity() {
  const WorldModelConfig wc;
  RewardModelConfig rc;
  rc.latent_dim = wc.latent_dim;
  SeededRng rng(101);
  WorldModel wm(wc, rng);
  RewardModel rm(rc, rng);

  std::vector<Scene> scenes;
  for (int i = 0; i < 4; ++i) {
    SeededRng srng(200 + i);
    scenes.push_back(generate_scene(srng, static_cast<Difficulty>(i), i));
  }
  std::vector<Transition> tr;
  for (const auto& s : scenes) {
    ControlSequence c;
    for (auto& u : c) u = {rng.uniform(2.0, 8.0), rng.uniform(-0.3, 0.3)};
    const auto t = make_transitions(wm, s, rollout_dynamics(Pose(), c).poses());
    tr.insert(tr.end(), t.begin(), t.begin() + 2);
  }

  std::vector<std::string> lines;
  bool ok = true;
  auto check = [&](const char* name, const nn::ParamList& params, const std::function<double()>& loss,
                   const std::function<void()>& acc, double h, double tol) {
    SeededRng crng(rng.next_u64());
    const auto r = nn::gradient_check(params, loss, acc, crng, 32, h, tol);
    ok = ok && r.failures == 0 && r.coords >= 32;
    lines.push_back(fmt("%s %d/%d max_rel=%.2e", name, r.coords - r.failures, r.coords, r.max_rel_error));
  };

  {
    const auto elems = wm_elements(wm, tr);
    const auto prep = wm.flow().prepare(elems, rng);
    check("velocity", wm.flow().params(), [&] { return wm.flow().loss_prepared(elems, prep); },
          [&] { wm.flow().accumulate_prepared(elems, prep); }, 1e-4, 1e-4);
    check("action_encoder", wm.action_encoder().params(),
          [&] { return wm.flow().loss_prepared(wm_elements(wm, tr), prep); },
          [&] {
            nn::zero_grads(wm.dynamics_params());
            wm_accumulate_prepared(wm, tr, prep);
          },
          1e-4, 1e-4);
  }
  {
    std::vector<nn::Vec> batch;
    for (const auto& s : scenes) batch.push_back(observation_features(s, Pose(), s.initial_speed, 0.0).normalized());
    auto loss = [&] {
      double total = 0.0;
      for (const auto& x : batch) {
        const auto y = wm.decoder().forward(wm.encoder().forward(x));
        for (std::size_t i = 0; i < y.size(); ++i) total += (y[i] - x[i]) * (y[i] - x[i]);
      }
      return total / static_cast<double>(batch.size());
    };
    check("observation_autoencoder", wm.autoencoder_params(), loss, [&] { autoencoder_accumulate(wm, batch); }, 1e-4,
          1e-4);
  }
  std::vector<History> histories;
  for (const auto& s : scenes) histories.push_back(wm.encode_history(s));
  {
    std::vector<std::vector<LatentState>> imagined;
    std::vector<PoseSequence> trajs;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      ControlSequence c;
      for (auto& u : c) u = {rng.uniform(2.0, 8.0), rng.uniform(-0.3, 0.3)};
      trajs.push_back(rollout_dynamics(Pose(), c).poses());
      imagined.push_back(wm.imagine_rollout(histories[i], trajs.back(), 1, rng));
    }
    std::vector<RewardSample> batch;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      RewardSample s{&histories[i], &imagined[i], &trajs[i], static_cast<int>(1 + 2 * i), {}};
      for (double& v : s.label.v) v = rng.uniform();
      batch.push_back(s);
    }
    check("reward_model", rm.params(), [&] { return rm_loss(rm, batch); }, [&] { rm_accumulate(rm, batch); }, 1e-4,
          1e-4);
  }
  {
    SeededRng prng(5);
    Policy p(PolicyConfig{}, wc.latent_dim, prng);
    SeededRng rrng(6);
    const Policy ref_policy(PolicyConfig{}, wc.latent_dim, rrng);
    SeededRng lib_rng(2);
    const auto library = generate_library(lib_rng, 2048);
    RlConfig cfg;
    std::vector<RlGroup> groups;
    for (std::size_t i = 1; i < scenes.size(); ++i) {
      PolicyScene ps;
      ps.scene = &scenes[i];
      ps.history = histories[i];
      ps.input = p.input(observation_features(scenes[i], Pose(), scenes[i].initial_speed, 0.0).normalized(),
                         histories[i], scenes[i].initial_speed);
      ControlSequence c;
      for (auto& u : c) u = {scenes[i].initial_speed, 0.02};
      const Trajectory anchor = rollout_dynamics(Pose(), c);
      ps.anchor = anchor.flat();
      ps.vocab = build_vocabulary(library, anchor, 64, {}).entries;
      groups.push_back(build_group(p, ref_policy, wm, rm, ps, cfg, SeededRng(40 + i)));
    }
    // Heading sigmas of 0.05 curve the log-density sharply; a small step
    // keeps the central-difference error below tolerance.
    check("policy_composite", p.params(), [&] { return rl_objective(p, groups, cfg, false).total; },
          [&] { rl_objective(p, groups, cfg, true); }, 1e-6, 1e-3);
  }
  std::string detail;
  for (const auto& l : lines) detail += (detail.empty() ? "" : "; ") + l;
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// 2. Shortcut consistency on a two-mode toy target

Outcome shortcut_consistency() {
  SeededRng rng(202);
  const StepGrid grid(16);
  ShortcutFlow flow("toy", 2, 0, {64, 64}, grid, rng);
  auto target = [](SeededRng& r) {
    const double side = r.bernoulli(0.5) ? 1.5 : -1.5;
    return nn::Vec{side + 0.2 * r.normal(), 0.2 * r.normal()};
  };
  nn::AdamW opt(flow.params(), {.lr = 1e-3});
  std::vector<FlowElement> batch(128);
  for (int s = 0; s < 6000; ++s) {
    for (auto& b : batch) b.x1 = target(rng);
    flow.train_step(batch, rng, opt);
  }

  const std::vector<double> none;
  bool ok = true;
  std::string detail;
  SeededRng eval(303);
  for (double d : {0.125, 0.25, 0.5, 1.0}) {
    double residual = 0.0, norm = 0.0;
    const int n = 1024;
    const int slots = static_cast<int>(std::lround(1.0 / d));
    for (int i = 0; i < n; ++i) {
      const double t = d * static_cast<double>(eval.uniform_index(static_cast<std::uint64_t>(slots)));
      const FlowSample s = FlowSample::make({eval.normal(), eval.normal()}, target(eval), t, d);
      residual += flow.distillation_residual(s, none);
      const auto v = flow.velocity(s.xt, none, t, d);
      norm += std::hypot(v[0], v[1]);
    }
    const double ratio = residual / norm;
    ok = ok && ratio < 0.2;
    detail += fmt("d=%g residual/|v|=%.3f; ", d, ratio);
  }
  std::vector<std::vector<double>> one, sixteen;
  SeededRng s1(404), s16(405);
  for (int i = 0; i < 1024; ++i) {
    one.push_back(flow.sample(none, 1, s1));
    sixteen.push_back(flow.sample(none, 16, s16));
  }
  const double ed = energy_distance(one, sixteen);
  ok = ok && ed < 0.1;
  detail += fmt("energy(1 vs 16 steps)=%.4f", ed);
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// 8. Formula-level oracle equivalence

Outcome oracle_equivalence() {
  SeededRng rng(808);
  const int n = 1000;
  double worst[5] = {0, 0, 0, 0, 0};
  for (int i = 0; i < n; ++i) {
    FusionConfig f;
    for (double& w : f.safety_weights) w = rng.uniform(0.0, 2.0);
    double ts = 0.0, tw = 0.0;
    for (double& w : f.task_weights) ts += (w = rng.uniform(0.01, 1.0));
    for (double& w : f.task_weights) w /= ts;
    for (double& w : f.temporal_weights) tw += (w = rng.uniform(0.0, 1.0));
    for (double& w : f.temporal_weights) w /= tw;

    RewardVector r;
    for (double& v : r.v) v = rng.bernoulli(0.1) ? 0.0 : rng.uniform();
    worst[0] = std::max(worst[0], std::abs(fuse_reward(r, f) - ref::fuse(r.v, f.safety_weights, f.task_weights, f.floor)));

    HorizonRewardTable table;
    std::array<std::array<double, 8>, 8> raw{};
    for (int t = 0; t < kHorizon; ++t)
      for (int k = 0; k < kRewardDims; ++k) raw[t][k] = table[t][k] = rng.bernoulli(0.05) ? 0.0 : rng.uniform();
    worst[1] = std::max(worst[1], std::abs(dense_final_reward(table, f) -
                                           ref::dense(raw, f.temporal_weights, f.safety_weights, f.task_weights, f.floor)));

    TrajVec x, m, s;
    for (std::size_t k = 0; k < kTrajCoords; ++k) {
      x[k] = rng.uniform(-20.0, 20.0);
      m[k] = rng.uniform(-20.0, 20.0);
      s[k] = rng.uniform(0.05, 2.0);
    }
    const double md = ref::mahalanobis(x, m, s);
    worst[2] = std::max(worst[2], std::abs(mahalanobis(x, m, s) - md) / std::max(1.0, md));

    std::vector<double> rewards(2 + rng.uniform_index(20));
    const double spread = rng.bernoulli(0.1) ? 1e-6 : 5.0;
    for (double& v : rewards) v = rng.normal(-3.0, spread);
    const auto a = group_advantages(rewards), b = ref::advantages(rewards);
    for (std::size_t k = 0; k < a.size(); ++k) worst[3] = std::max(worst[3], std::abs(a[k] - b[k]));

    const double A = rng.normal(0.0, 2.0), lpn = rng.normal(-20.0, 1.0), lpo = lpn + rng.normal(0.0, 0.5);
    const double eps = rng.uniform(0.05, 0.5);
    worst[4] = std::max(worst[4], std::abs(actor_loss(A, lpn, lpo, eps) - ref::actor(A, lpn, lpo, eps)));
  }
  const bool ok = std::all_of(std::begin(worst), std::end(worst), [](double w) { return w <= 1e-10; });
  return {ok, fmt("max |diff| over %d inputs: fuse=%.1e dense=%.1e mahalanobis(rel)=%.1e advantages=%.1e actor=%.1e",
                  n, worst[0], worst[1], worst[2], worst[3], worst[4])};
}

// ---------------------------------------------------------------------------
// 9. Vocabulary contract, checked on the generated run data

Outcome vocabulary_contract(const RunConfig& cfg, const RunPaths& paths) {
  const Dataset d = load_dataset(cfg, paths);
  SeededRng lib_rng(cfg.seed, kStreamLibrary);
  LibraryConfig lc;
  lc.v_max = EnvConfig{}.v_max;
  const auto library = generate_library(lib_rng, cfg.data.library_size, lc);
  std::size_t entries = 0, violations = 0, quantile_checks = 0, quantile_misses = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (const auto& t : d.vocabs[i]) {
      ++entries;
      if (!passes_end_state(t, d.anchors[i], cfg.data.thresholds)) ++violations;
    }
    const auto pool = filter_by_end_state(library, d.anchors[i], cfg.data.thresholds);
    const double ay = end_state(d.anchors[i]).y;
    std::vector<double> p, c;
    for (const auto& t : pool) p.push_back(std::abs(end_state(t).y - ay));
    for (const auto& t : d.vocabs[i]) c.push_back(std::abs(end_state(t).y - ay));
    std::sort(p.begin(), p.end());
    std::sort(c.begin(), c.end());
    if (c.size() < 3) continue;
    for (double q : {0.1, 0.25, 0.5, 0.75, 0.9}) {
      const auto ci = static_cast<std::size_t>(std::lround(q * static_cast<double>(c.size() - 1)));
      const double pq = p[static_cast<std::size_t>(std::lround(q * static_cast<double>(p.size() - 1)))];
      // The gap between the entry at the quantile and its farther neighbour.
      const double gap = std::max(ci > 0 ? c[ci] - c[ci - 1] : 0.0, ci + 1 < c.size() ? c[ci + 1] - c[ci] : 0.0);
      ++quantile_checks;
      if (std::abs(pq - c[ci]) > gap + 1e-12) ++quantile_misses;
    }
  }
  const bool ok = entries > 0 && violations == 0 && quantile_misses == 0;
  return {ok, fmt("%zu entries over %zu scenes, %zu threshold violations; %zu/%zu quantiles within one gap", entries,
                  d.size(), violations, quantile_checks - quantile_misses, quantile_checks)};
}

// ---------------------------------------------------------------------------
// Pipeline-backed criteria

double mean_second_difference(const RunConfig& cfg, const RunPaths& paths, Sampler sampler) {
  RlWorkspace ws(cfg, paths);
  nn::load_checkpoint(paths.checkpoint("policy_bc").string(), ws.policy.params());
  const TrajVec sigma = sigma_vector(cfg.rl.rl.sigma);
  SeededRng rng(cfg.seed, kStreamEval);
  double total = 0.0;
  for (const auto& ps : ws.held) {
    const TrajVec mu = ws.policy.mean(ps.input);
    const auto set = sampler == Sampler::vocab
                         ? sample_candidates(ps.vocab, mu, sigma, cfg.rl.rl.g1, cfg.rl.rl.g2,
                                             cfg.rl.rl.temperature, rng)
                         : sample_candidates_random_baseline(mu, sigma, cfg.rl.rl.group_size(), rng);
    total += mean_squared_second_difference(set);
  }
  return total / static_cast<double>(ws.held.size());
}

double relative_gap(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int id) { return only.empty() || only.count(id) > 0; };
  auto pipeline_wanted = [&] {
    for (int id : {3, 4, 5, 6, 7, 9})
      if (wanted(id)) return true;
    return false;
  };

  int failures = 0;
  auto run = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    if (!wanted(id)) return;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    report(id, name, o, seconds_since(t0), failures);
  };

  run(8, "formula oracle equivalence", oracle_equivalence);
  run(1, "gradient integrity", [] {
    const auto t0 = Clock::now();
    Outcome o = gradient_integrity();
    const double s = seconds_since(t0);
    o.pass = o.pass && s < 60.0;
    return o;
  });
  run(2, "shortcut consistency", [] {
    const auto t0 = Clock::now();
    Outcome o = shortcut_consistency();
    o.pass = o.pass && seconds_since(t0) < 600.0;
    return o;
  });
  if (!pipeline_wanted()) return failures == 0 ? 0 : 1;

  RunConfig cfg;
  const char* dir = std::getenv("DREAMLANE_ACCEPTANCE_DIR");
  cfg.out = dir ? dir : (fs::temp_directory_path() / "dreamlane_acceptance").string();
  fs::remove_all(cfg.out);
  const RunPaths paths(cfg.out);
  std::printf("pipeline run directory: %s\n", cfg.out.c_str());

  auto timed = [](auto&& fn) {
    const auto t0 = Clock::now();
    auto r = fn();
    return std::make_pair(r, seconds_since(t0));
  };
  try {
    const auto [gen, t_gen] = timed([&] { return run_gen_data(cfg, paths); });
    std::printf("gen-data: %zu scenes [%.1f s]\n", gen.scenes, t_gen);
    const auto [labels, t_label] = timed([&] { return run_label(cfg, paths); });
    std::printf("label: %zu records [%.1f s]\n", labels, t_label);
  } catch (const std::exception& e) {
    std::printf("FAIL pipeline setup: %s\n", e.what());
    return 1;
  }
  run(9, "vocabulary contract", [&] {
    const auto t0 = Clock::now();
    Outcome o = vocabulary_contract(cfg, paths);
    o.pass = o.pass && seconds_since(t0) < 60.0;
    return o;
  });
  if (!(wanted(3) || wanted(4) || wanted(5) || wanted(6) || wanted(7))) return failures == 0 ? 0 : 1;

  double t_wm = 0.0, t_rm = 0.0;
  std::optional<RmSummary> rm_full;
  try {
    t_wm = timed([&] { return run_train_wm(cfg, paths); }).second;
    std::printf("train-wm [%.1f s]\n", t_wm);
    const auto r = timed([&] { return run_train_rm(cfg, paths); });
    rm_full = r.first;
    t_rm = r.second;
    std::printf("train-rm [%.1f s]\n", t_rm);
  } catch (const std::exception& e) {
    std::printf("FAIL pipeline training: %s\n", e.what());
    return 1;
  }

  run(4, "reward model fidelity", [&] {
    const auto& e = rm_full->heldout;
    bool ok = true;
    std::string detail;
    for (int k : kSafetyDims) {
      ok = ok && e.auc[k] > 0.8;
      detail += fmt("auc_%s=%.3f ", kRewardNames[k].data(), e.auc[k]);
    }
    ok = ok && e.mae[kEp] < 0.15;
    detail += fmt("mae_ep=%.3f; ", e.mae[kEp]);

    // Causality on trained models: perturbing latents and poses from horizon t
    // on leaves every earlier prediction bit-identical.
    const auto t0 = Clock::now();
    const Dataset d = load_dataset(cfg, paths);
    SeededRng wrng(cfg.seed, kStreamWorldModel);
    WorldModel wm(cfg.wm.model, wrng);
    load_world_model(wm, paths);
    RewardModelConfig mc = cfg.rm.model;
    mc.latent_dim = cfg.wm.model.latent_dim;
    SeededRng rrng(cfg.seed, kStreamRewardModel);
    RewardModel rm(mc, rrng);
    nn::load_checkpoint(paths.checkpoint("rm").string(), rm.params());
    SeededRng rng(99);
    std::size_t checks = 0, breaks = 0;
    for (std::size_t i = d.n_train; i < d.size(); ++i) {
      const History h = wm.encode_history(d.scenes[i]);
      const PoseSequence traj = d.vocabs[i][rng.uniform_index(d.vocabs[i].size())].poses();
      const auto imagined = wm.imagine_rollout(h, traj, 1, rng);
      const auto base = rm.predict_table(h, imagined, traj);
      for (int t = 1; t < kHorizon; ++t) {
        auto z = imagined;
        auto p = traj;
        for (int k = t; k < kHorizon; ++k) {
          for (double& v : z[k]) v = rng.normal(0.0, 3.0);
          p[k] = Pose(p[k].x + rng.normal(), p[k].y + rng.normal(), p[k].theta);
        }
        const auto table = rm.predict_table(h, z, p);
        for (int hz = 0; hz < t; ++hz) {
          ++checks;
          if (!(table[hz] == base[hz])) ++breaks;
        }
      }
    }
    ok = ok && breaks == 0;
    const double t_eval = seconds_since(t0);
    detail += fmt("causality %zu/%zu bit-exact; train %.0f s (wm %.0f + rm %.0f), eval %.0f s", checks - breaks,
                  checks, t_wm + t_rm, t_wm, t_rm, t_eval);
    ok = ok && t_wm + t_rm < 1200.0 && t_eval < 120.0;
    return Outcome{ok, detail};
  });

  run(5, "label-fraction robustness", [&] {
    RunConfig c20 = cfg;
    c20.rm.label_fraction = 0.2;
    const auto [s20, sec] = timed([&] { return run_train_rm(c20, paths); });
    const double full = rm_full->heldout.safety_auc_mean(), part = s20.heldout.safety_auc_mean();
    std::string detail = fmt("safety AUC mean 100%%=%.4f 20%%=%.4f drop=%.2f pp (", full, part, 100.0 * (full - part));
    for (int k : kSafetyDims)
      detail += fmt("%s %.3f/%.3f ", kRewardNames[k].data(), rm_full->heldout.auc[k], s20.heldout.auc[k]);
    detail += fmt(") 20%% run %.0f s", sec);
    const bool ok = std::isfinite(part) && full - part < 0.05 && t_wm + t_rm + sec < 1800.0;
    return Outcome{ok, detail};
  });

  if (!(wanted(3) || wanted(6) || wanted(7))) return failures == 0 ? 0 : 1;

  // Default RL run: 1 imagination step, vocabulary sampler, stream 0.
  std::optional<RlSummary> rl_default;
  double t_rl = 0.0;
  try {
    const auto r = timed([&] { return run_train_rl(cfg, paths); });
    rl_default = r.first;
    t_rl = r.second;
    std::printf("train-rl steps1 vocab [%.1f s]\n", t_rl);
  } catch (const std::exception& e) {
    std::printf("FAIL default RL run: %s\n", e.what());
    return 1;
  }

  run(6, "RL improvement", [&] {
    const auto& bc = rl_default->bc;
    const auto& rl = rl_default->rl;
    const double reduction = bc.collision > 0.0 ? (bc.collision - rl.collision) / bc.collision : 0.0;
    const double ep_drop = (bc.dim_means[kEp] - rl.dim_means[kEp]) / bc.dim_means[kEp];
    const bool ok = rl.collision < bc.collision && reduction >= 0.2 && ep_drop <= 0.1 && t_rl < 3600.0;
    return Outcome{ok, fmt("%zu held-out scenes: collision %.3f -> %.3f (%.1f%% reduction), ep %.3f -> %.3f "
                           "(%.1f%% change), %.0f s",
                           rl.scenes, bc.collision, rl.collision, 100.0 * reduction, bc.dim_means[kEp],
                           rl.dim_means[kEp], -100.0 * ep_drop, t_rl)};
  });

  run(3, "step-count latency and parity", [&] {
    const auto t0 = Clock::now();
    const auto ev = run_eval(cfg, paths);
    const double ratio = ev.latency.at(16) / ev.latency.at(1);
    std::map<int, double> fused{{1, rl_default->rl.fused}};
    for (int steps : {4, 16}) {
      RunConfig c = cfg;
      c.rl.rl.wm_steps = steps;
      fused[steps] = run_train_rl(c, paths).rl.fused;
    }
    const double g4 = relative_gap(fused[1], fused[4]), g16 = relative_gap(fused[1], fused[16]);
    const double sec = seconds_since(t0) + t_rl;
    const bool ok = ratio >= 8.0 && g4 <= 0.02 && g16 <= 0.02 && sec < 900.0;
    return Outcome{ok, fmt("latency/frame 1=%.2e 4=%.2e 16=%.2e s (16/1 ratio %.1f); fused reward 1=%.4f 4=%.4f "
                           "16=%.4f (gap %.2f%% / %.2f%%), %.0f s",
                           ev.latency.at(1), ev.latency.at(4), ev.latency.at(16), ratio, fused[1], fused[4],
                           fused[16], 100.0 * g4, 100.0 * g16, sec)};
  });

  run(7, "vocabulary vs random-Gaussian sampling", [&] {
    const auto t0 = Clock::now();
    int wins = 0;
    std::string detail;
    for (int r = 0; r < 5; ++r) {
      const double v = r == 0 ? rl_default->rl.fused : run_train_rl(cfg, paths, r).rl.fused;
      RunConfig c = cfg;
      c.rl.rl.sampler = Sampler::random;
      const double b = run_train_rl(c, paths, r).rl.fused;
      wins += v >= b ? 1 : 0;
      detail += fmt("run%d %.3f vs %.3f; ", r, v, b);
    }
    const double msd_vocab = mean_second_difference(cfg, paths, Sampler::vocab);
    const double msd_random = mean_second_difference(cfg, paths, Sampler::random);
    const double sec = seconds_since(t0) + t_rl;
    const bool ok = wins >= 4 && msd_random > msd_vocab && sec < 7200.0;
    detail += fmt("vocab wins %d/5; mean squared second difference vocab=%.4f random=%.4f, %.0f s", wins, msd_vocab,
                  msd_random, sec);
    return Outcome{ok, detail};
  });

  return failures == 0 ? 0 : 1;
}
