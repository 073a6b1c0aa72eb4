#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "vtbench/config.hpp"
#include "vtbench/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"visual-tactile peg insertion testbed"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "run_out";
  std::string checkpoint;
  int seed = -1;
  int steps = 12;

  auto add_common = [&](CLI::App* cmd, bool needs_checkpoint) {
    cmd->add_option("--config", config_path, "TOML config file");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "seed override");
    if (needs_checkpoint)
      cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  };

  CLI::App* train =
      app.add_subcommand("train", "train one policy per configured seed");
  add_common(train, false);
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "evaluate a checkpoint over the hole grid");
  add_common(eval_cmd, true);
  CLI::App* shapley =
      app.add_subcommand("shapley", "attribute policy actions over inputs");
  add_common(shapley, true);
  CLI::App* render =
      app.add_subcommand("render", "dump observation frames as PPM");
  add_common(render, false);
  render->add_option("--steps", steps, "number of random-action steps");
  CLI::App* compare = app.add_subcommand(
      "compare", "train and evaluate both modalities on the configured hole");
  add_common(compare, false);

  CLI11_PARSE(app, argc, argv);

  try {
    vtb::ExperimentConfig cfg = config_path.empty()
                                    ? vtb::ExperimentConfig{}
                                    : vtb::ExperimentConfig::load(config_path);
    if (seed >= 0) cfg.train.seeds = {seed};
    if (train->parsed()) {
      run_train(cfg, out_dir);
    } else if (eval_cmd->parsed()) {
      run_eval(checkpoint, cfg, out_dir);
    } else if (shapley->parsed()) {
      run_shapley_report(checkpoint, cfg, out_dir);
    } else if (render->parsed()) {
      run_render(cfg, out_dir, seed >= 0 ? static_cast<uint64_t>(seed) : 1u,
                 steps);
    } else if (compare->parsed()) {
      run_compare(cfg, out_dir);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
