#include "vtbench/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <stdexcept>
#include <thread>

#include "vtbench/io_util.hpp"
#include "vtbench/svg_plot.hpp"

namespace vtb {

namespace {

// Fixed palette for the four policy inputs and the curve plots.
const char* kColHidden = "#8c8c8c";
const char* kColVis = "#1f77b4";
const char* kColTac = "#d62728";
const char* kColPrev = "#2ca02c";

std::vector<double> downsample(const std::vector<double>& v, size_t stride) {
  std::vector<double> out;
  for (size_t i = 0; i < v.size(); i += stride) out.push_back(v[i]);
  return out;
}

uint64_t eval_episode_seed(int cell, int trial) {
  return (static_cast<uint64_t>(cell + 1) << 32) | static_cast<uint64_t>(trial + 1);
}

// Runs jobs with at most thread_budget() workers; rethrows the first failure.
void run_jobs(const std::vector<std::function<void()>>& jobs) {
  int workers = std::min<int>(thread_budget(), static_cast<int>(jobs.size()));
  if (workers <= 1) {
    for (const auto& j : jobs) j();
    return;
  }
  std::vector<std::exception_ptr> errors(jobs.size());
  for (size_t base = 0; base < jobs.size(); base += workers) {
    std::vector<std::thread> pool;
    for (size_t i = base; i < std::min(jobs.size(), base + workers); ++i)
      pool.emplace_back([&jobs, &errors, i] {
        try {
          jobs[i]();
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

int thread_budget() {
  const char* v = std::getenv("VT_BENCH_THREADS");
  if (!v) return 1;
  int n = std::atoi(v);
  return n >= 1 ? n : 1;
}

std::string run_train_single(const ExperimentConfig& cfg,
                             const std::string& out_dir, int seed) {
  ExperimentConfig run_cfg = cfg;
  run_cfg.train.seeds = {seed};
  run_cfg.validate();
  ensure_dir(out_dir);
  write_text_file(out_dir + "/config.toml", run_cfg.serialize());
  write_text_file(out_dir + "/seeds.txt", std::to_string(seed) + "\n");

  Trainer tr(run_cfg, static_cast<uint64_t>(seed));
  tr.save_checkpoint(out_dir + "/checkpoint_init.ckpt");

  const std::vector<std::string> cols = Trainer::metric_columns();
  CsvWriter metrics(out_dir + "/metrics.csv", cols);

  std::vector<double> xs, wm_loss, actor_loss, critic_loss, ep_ret;
  const TrainConfig& tc = run_cfg.train;
  const int budget = tc.budget_env_steps;
  const int per = std::max(1, tc.env_steps_per_train_step);
  int64_t next_ckpt = tc.checkpoint_every > 0 ? tc.checkpoint_every : 0;
  bool checked_names = false;

  while (tr.env_steps() < budget) {
    tr.collect(std::min(per, budget - tr.env_steps()));
    if (tr.env_steps() >= tc.seed_steps && tr.replay().can_sample(tc.seq_len)) {
      StepMetrics m = tr.train_step();
      if (!checked_names) {
        for (size_t i = 0; i < cols.size(); ++i)
          if (m.items.size() != cols.size() || m.items[i].first != cols[i])
            throw std::logic_error("metric columns out of sync with train_step");
        checked_names = true;
      }
      std::vector<double> vals;
      vals.reserve(m.items.size());
      for (const auto& kv : m.items) vals.push_back(kv.second);
      metrics.row(vals);
      xs.push_back(tr.env_steps());
      wm_loss.push_back(m.items[2].second);
      actor_loss.push_back(m.items[9].second);
      critic_loss.push_back(m.items[12].second);
      ep_ret.push_back(m.items[17].second);
    }
    while (next_ckpt > 0 && tr.env_steps() >= next_ckpt && next_ckpt <= budget) {
      tr.save_checkpoint(out_dir + "/checkpoint_" + std::to_string(next_ckpt) +
                         ".ckpt");
      next_ckpt += tc.checkpoint_every;
    }
  }
  metrics.flush();
  std::string final_path = out_dir + "/checkpoint_final.ckpt";
  tr.save_checkpoint(final_path);

  if (!xs.empty()) {
    size_t stride = std::max<size_t>(1, xs.size() / 800);
    std::vector<double> x = downsample(xs, stride);
    SvgPlot losses(760, 420, "training losses", "env step", "loss");
    losses.add_line("world model", kColVis, x, downsample(wm_loss, stride));
    losses.add_line("actor", kColTac, x, downsample(actor_loss, stride));
    losses.add_line("critic", kColPrev, x, downsample(critic_loss, stride));
    losses.save(out_dir + "/losses.svg");
    SvgPlot returns(760, 420, "episode return", "env step", "return");
    returns.add_line("episode return", kColVis, x, downsample(ep_ret, stride));
    returns.save(out_dir + "/returns.svg");
  }
  return final_path;
}

std::vector<std::string> run_train(const ExperimentConfig& cfg,
                                   const std::string& out_dir) {
  if (cfg.train.seeds.empty()) throw std::invalid_argument("no seeds configured");
  ensure_dir(out_dir);
  std::vector<std::string> finals(cfg.train.seeds.size());
  std::vector<std::function<void()>> jobs;
  for (size_t i = 0; i < cfg.train.seeds.size(); ++i)
    jobs.push_back([&cfg, &out_dir, &finals, i] {
      int seed = cfg.train.seeds[i];
      finals[i] =
          run_train_single(cfg, out_dir + "/seed" + std::to_string(seed), seed);
    });
  run_jobs(jobs);
  return finals;
}

EvalReport run_eval(const std::string& checkpoint_path,
                    const ExperimentConfig& cfg, const std::string& out_dir) {
  Trainer agent(cfg, 0);
  agent.load_checkpoint(checkpoint_path);
  uint64_t checksum = agent.param_checksum();

  EvalReport report;
  for (size_t cell = 0; cell < cfg.eval.grid.size(); ++cell) {
    EvalCell c;
    c.tol_mm = cfg.eval.grid[cell].first;
    c.alpha_deg = cfg.eval.grid[cell].second;
    c.n_trials = cfg.eval.n_trials;
    EnvConfig ec = cfg.env;
    ec.tol_mm = c.tol_mm;
    ec.alpha_deg = c.alpha_deg;
    PegEnv env = ec.make_env();
    double len_sum = 0;
    for (int trial = 0; trial < c.n_trials; ++trial) {
      Trainer::EvalResult r = agent.eval_episode(
          env, eval_episode_seed(static_cast<int>(cell), trial));
      if (r.success) {
        c.successes += 1;
        len_sum += r.steps;
      }
    }
    c.success_rate = static_cast<double>(c.successes) / c.n_trials;
    if (c.successes > 0) {
      c.mean_success_len_steps = len_sum / c.successes;
      c.mean_success_len_seconds =
          c.mean_success_len_steps * geo::kControlDtSeconds;
    }
    report.cells.push_back(c);
  }

  if (agent.param_checksum() != checksum)
    throw std::logic_error("evaluation modified parameters");

  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    CsvWriter csv(out_dir + "/eval.csv",
                  {"tol_mm", "alpha_deg", "n_trials", "successes",
                   "success_rate", "mean_success_len_steps",
                   "mean_success_len_seconds"});
    std::string table =
        "tol_mm  alpha_deg  success_rate  mean_success_len_steps\n";
    std::vector<double> xs, rates;
    for (size_t i = 0; i < report.cells.size(); ++i) {
      const EvalCell& c = report.cells[i];
      csv.row({c.tol_mm, c.alpha_deg, static_cast<double>(c.n_trials),
               static_cast<double>(c.successes), c.success_rate,
               c.mean_success_len_steps, c.mean_success_len_seconds});
      char line[128];
      std::snprintf(line, sizeof(line), "%-7g %-10g %-13.3f %.2f\n", c.tol_mm,
                    c.alpha_deg, c.success_rate, c.mean_success_len_steps);
      table += line;
      xs.push_back(static_cast<double>(i));
      rates.push_back(c.success_rate);
    }
    csv.flush();
    write_text_file(out_dir + "/eval_summary.txt", table);
    SvgPlot plot(560, 360, "eval success rate by hole", "grid cell", "success rate");
    plot.add_stacked_bars({"success rate"}, {kColVis}, xs, {rates});
    plot.save(out_dir + "/eval_success.svg");
  }
  return report;
}

std::vector<ShapleyRow> run_shapley_report(const std::string& checkpoint_path,
                                           const ExperimentConfig& cfg,
                                           const std::string& out_dir) {
  Trainer agent(cfg, 0);
  agent.load_checkpoint(checkpoint_path);
  uint64_t checksum = agent.param_checksum();

  EnvConfig ec = cfg.env;
  ec.tol_mm = cfg.shapley.tol_mm;
  ec.alpha_deg = cfg.shapley.alpha_deg;
  PegEnv env = ec.make_env();
  std::vector<ShapleyRow> rows = shapley_episode(
      agent, env, static_cast<uint64_t>(cfg.shapley.episode_seed));
  if (rows.empty()) throw std::runtime_error("attribution episode recorded no steps");
  if (agent.param_checksum() != checksum)
    throw std::logic_error("attribution modified parameters");

  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    CsvWriter csv(out_dir + "/shapley.csv",
                  {"t", "axis", "phi_hidden", "phi_vis", "phi_tac",
                   "phi_prev_action", "f_full", "f_empty"});
    for (const ShapleyRow& r : rows)
      csv.row({static_cast<double>(r.t), static_cast<double>(r.axis),
               r.phi_hidden, r.phi_vis, r.phi_tac, r.phi_prev_action, r.f_full,
               r.f_empty});
    csv.flush();

    const char* axis_name[3] = {"x", "y", "z"};
    for (int axis = 0; axis < 3; ++axis) {
      std::vector<double> t, ph, pv, pt, pp, full;
      for (const ShapleyRow& r : rows) {
        if (r.axis != axis) continue;
        t.push_back(r.t);
        ph.push_back(r.phi_hidden);
        pv.push_back(r.phi_vis);
        pt.push_back(r.phi_tac);
        pp.push_back(r.phi_prev_action);
        full.push_back(r.f_full);
      }
      SvgPlot plot(760, 420,
                   std::string("action attribution, axis ") + axis_name[axis],
                   "step", "contribution (m)");
      plot.add_stacked_bars({"hidden", "visual", "tactile", "prev action"},
                            {kColHidden, kColVis, kColTac, kColPrev}, t,
                            {ph, pv, pt, pp});
      plot.add_line("action", "#000000", t, full);
      plot.save(out_dir + "/shapley_" + axis_name[axis] + ".svg");
    }
  }
  return rows;
}

void run_render(const ExperimentConfig& cfg, const std::string& out_dir,
                uint64_t seed, int n_steps) {
  ensure_dir(out_dir);
  PegEnv env = cfg.env.make_env();
  const EnvState* s = &env.reset(seed);
  Rng act = Rng(seed).split(11);
  for (int t = 0; t <= n_steps; ++t) {
    Observation obs = render_observation(*s, env.spec(), cfg.sensors);
    char name[64];
    std::snprintf(name, sizeof(name), "/vis_%03d.ppm", t);
    write_ppm(out_dir + name, obs.vis);
    std::snprintf(name, sizeof(name), "/tac_%03d.ppm", t);
    write_ppm(out_dir + name, obs.tac);
    if (t == n_steps) break;
    Eigen::Vector3d a;
    for (int k = 0; k < 3; ++k)
      a[k] = act.uniform(-env.delta_max(), env.delta_max());
    s = &env.step(Action{a});
  }
}

std::vector<CompareRow> run_compare(const ExperimentConfig& cfg,
                                    const std::string& out_dir) {
  ensure_dir(out_dir);
  struct Job {
    std::string modality;
    int seed;
    bool vision_only;
  };
  std::vector<Job> plan;
  for (const char* m : {"vision_tactile", "vision_only"})
    for (int seed : cfg.train.seeds)
      plan.push_back({m, seed, std::string(m) == "vision_only"});

  std::vector<CompareRow> rows(plan.size());
  std::vector<std::function<void()>> jobs;
  for (size_t i = 0; i < plan.size(); ++i)
    jobs.push_back([&cfg, &out_dir, &plan, &rows, i] {
      const Job& job = plan[i];
      ExperimentConfig run_cfg = cfg;
      run_cfg.train.vision_only = job.vision_only;
      // Evaluate on the training hole itself.
      run_cfg.eval.grid = {{cfg.env.tol_mm, cfg.env.alpha_deg}};
      std::string dir =
          out_dir + "/" + job.modality + "_seed" + std::to_string(job.seed);
      std::string ckpt = run_train_single(run_cfg, dir, job.seed);
      EvalReport rep = run_eval(ckpt, run_cfg, dir);
      rows[i] = {job.modality, job.seed, rep.cells[0].success_rate,
                 rep.cells[0].mean_success_len_steps};
    });
  run_jobs(jobs);

  CsvWriter csv(out_dir + "/compare.csv",
                {"modality", "seed", "success_rate", "mean_success_len_steps"});
  for (const CompareRow& r : rows)
    csv.row_raw({r.modality, std::to_string(r.seed),
                 format_double(r.success_rate),
                 format_double(r.mean_success_len_steps)});
  csv.flush();
  return rows;
}

}  // namespace vtb
