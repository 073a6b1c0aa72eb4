#pragma once

#include <string>
#include <vector>

#include "vtbench/env.hpp"
#include "vtbench/sensors.hpp"
#include "vtbench/toml.hpp"

namespace vtb {

struct EnvConfig {
  double tol_mm = 2.0;
  double alpha_deg = 0.0;
  double peg_diameter_mm = geo::kPegDiameterMm;
  double hole_depth_mm = geo::kHoleDepthMm;
  double goal_depth_mm = geo::kGoalDepthMm;
  double chamfer_width_mm = geo::kChamferMm;
  double delta_max = geo::kDeltaMax;
  int max_steps = geo::kTimeoutSteps;

  HoleSpec hole() const;
  PegEnv make_env() const;
};

struct ModelConfig {
  int d_dim = 128;        // deterministic recurrent state size
  int z_dim = 16;         // stochastic latent size
  int embed_dim = 256;    // fused observation embedding size
  int base_channels = 16; // first conv layer width
  int hidden = 128;       // mlp width for heads
  float free_bits = 1.0f;
  float kl_weight = 1.0f;
  float reward_weight = 1.0f;
  float continue_weight = 1.0f;
  float kl_balance = 0.8f;  // stop-gradient mix toward training the prior
};

struct TrainConfig {
  int seq_len = 16;
  int batch_size = 16;
  float gamma = 0.99f;
  float lambda = 0.95f;
  int horizon = 15;
  float entropy_weight = 1e-3f;
  float exploration_std_start = 0.3f;  // fraction of delta_max, pre-squash
  float exploration_std_end = 0.1f;
  int env_steps_per_train_step = 5;
  int seed_steps = 1000;
  int budget_env_steps = 50000;
  float wm_lr = 3e-4f;
  float actor_lr = 1e-4f;
  float critic_lr = 1e-4f;
  float grad_clip = 100.0f;
  int replay_capacity = 100000;
  int imag_starts = 64;  // imagination start states subsampled per step
  int checkpoint_every = 10000;  // env steps
  std::vector<int> seeds = {1, 2, 3};
  bool vision_only = false;
};

struct EvalConfig {
  int n_trials = 20;
  std::vector<std::pair<double, double>> grid = {
      {2.0, 0.0}, {1.0, 4.0}, {0.5, 0.0}, {0.5, 4.0}};  // (tol mm, alpha deg)
};

struct ShapleyConfig {
  double tol_mm = 0.5;
  double alpha_deg = 4.0;
  int episode_seed = 1;
};

struct ExperimentConfig {
  EnvConfig env;
  SensorConfig sensors;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  ShapleyConfig shapley;

  void validate() const;  // throws naming the offending key
  std::string serialize() const;

  static ExperimentConfig from_toml(const std::string& text);
  static ExperimentConfig load(const std::string& path);
};

}  // namespace vtb
