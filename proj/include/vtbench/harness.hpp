#pragma once

#include <string>
#include <vector>

#include "vtbench/agent.hpp"
#include "vtbench/config.hpp"
#include "vtbench/shapley.hpp"

namespace vtb {

// Job parallelism cap from VT_BENCH_THREADS (>= 1; default 1). Runs are
// sequential on a single core; the cap exists so callers can fan out seeds
// when more cores are available.
int thread_budget();

// Trains one seed of one modality. Writes to out_dir: resolved config
// snapshot, seed list, metrics CSV, periodic + final checkpoints, loss and
// return curve plots. Returns the final checkpoint path.
std::string run_train_single(const ExperimentConfig& cfg,
                             const std::string& out_dir, int seed);

// Trains every seed in cfg.train.seeds into <out_dir>/seed<k>/.
// Returns the final checkpoint paths in seed order.
std::vector<std::string> run_train(const ExperimentConfig& cfg,
                                   const std::string& out_dir);

struct EvalCell {
  double tol_mm = 0, alpha_deg = 0;
  int successes = 0, n_trials = 0;
  double success_rate = 0;
  // Over successful episodes only; 0 when there are none.
  double mean_success_len_steps = 0;
  double mean_success_len_seconds = 0;
};

struct EvalReport {
  std::vector<EvalCell> cells;
};

// Evaluates a checkpoint over cfg.eval.grid with cfg.eval.n_trials greedy
// episodes per cell. Writes eval.csv and a summary table to out_dir (pass ""
// to skip writing). Never updates parameters.
EvalReport run_eval(const std::string& checkpoint_path,
                    const ExperimentConfig& cfg, const std::string& out_dir);

// Rolls one greedy episode on the attribution hole (cfg.shapley) and writes
// shapley.csv plus one stacked-contribution plot per action axis.
std::vector<ShapleyRow> run_shapley_report(const std::string& checkpoint_path,
                                           const ExperimentConfig& cfg,
                                           const std::string& out_dir);

// Rolls a seeded random-action episode and dumps vis/tac frames as PPM.
void run_render(const ExperimentConfig& cfg, const std::string& out_dir,
                uint64_t seed, int n_steps);

// The v-vs-vt comparison pipeline: trains seeds x {vision_tactile,
// vision_only} on the configured hole, evaluates each policy on that hole,
// and writes compare.csv. Rows come back in training order.
struct CompareRow {
  std::string modality;
  int seed = 0;
  double success_rate = 0;
  double mean_success_len_steps = 0;
};
std::vector<CompareRow> run_compare(const ExperimentConfig& cfg,
                                    const std::string& out_dir);

}  // namespace vtb
