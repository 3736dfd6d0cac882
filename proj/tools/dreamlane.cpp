// dreamlane command-line tool: runs one pipeline stage per invocation.
// Failures print a single JSON line {"error": ..., "command": ...} to stderr.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "dreamlane/config.hpp"
#include "dreamlane/pipeline.hpp"

namespace {

void print_error(const std::string& command, const std::string& message) {
  dreamlane::Json j;
  j["error"] = message;
  j["command"] = command;
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace dreamlane;
  CLI::App app{"dreamlane: world-model planning pipeline"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<std::string> sampler, out;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-data", "generate scenes, anchors and vocabularies"},
      {"train-wm", "train the observation autoencoder and latent dynamics"},
      {"label", "label every vocabulary entry with the reward oracle"},
      {"train-rm", "train and evaluate the reward model"},
      {"train-rl", "behaviour cloning then policy optimization in imagination"},
      {"eval", "closed-loop evaluation and imagination latency"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "INI configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override run.seed");
    sub->add_option("--steps", steps, "world-model sampling steps")->check(CLI::IsMember({1, 4, 16}));
    sub->add_option("--sampler", sampler, "candidate sampler")->check(CLI::IsMember({"vocab", "random"}));
    sub->add_option("--out", out, "override run.out");
  }

  std::string command = argc > 1 ? argv[1] : "";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(command, e.what());
    return 2;
  }
  command = app.get_subcommands().front()->get_name();

  try {
    RunConfig cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (out) cfg.out = *out;
    if (steps) cfg.rl.rl.wm_steps = *steps;
    if (sampler) cfg.rl.rl.sampler = parse_sampler(*sampler);
    validate(cfg);
    const RunPaths paths(cfg.out);
    Json summary;
    summary["command"] = command;
    summary["out"] = cfg.out;
    if (command == "gen-data") {
      const auto s = run_gen_data(cfg, paths);
      summary["scenes"] = s.scenes;
      summary["regenerations"] = s.regenerations;
    } else if (command == "train-wm") {
      const auto s = run_train_wm(cfg, paths);
      summary["heldout_flow_loss"] = s.eval_flow_loss;
    } else if (command == "label") {
      summary["records"] = run_label(cfg, paths);
    } else if (command == "train-rm") {
      const auto s = run_train_rm(cfg, paths);
      summary["heldout"] = reward_eval_json(s.heldout);
    } else if (command == "train-rl") {
      const auto s = run_train_rl(cfg, paths);
      summary["bc"] = policy_eval_json(s.bc);
      summary["rl"] = policy_eval_json(s.rl);
    } else {
      const auto s = run_eval(cfg, paths);
      summary["bc"] = policy_eval_json(s.bc);
      summary["rl"] = policy_eval_json(s.rl);
    }
    std::cout << summary.dump() << std::endl;
    return 0;
  } catch (const std::exception& e) {
    print_error(command, e.what());
    return 1;
  }
}
