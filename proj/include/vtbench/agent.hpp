#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "vtbench/adam.hpp"
#include "vtbench/checkpoint.hpp"
#include "vtbench/config.hpp"
#include "vtbench/env.hpp"
#include "vtbench/replay.hpp"
#include "vtbench/rng.hpp"
#include "vtbench/sensors.hpp"
#include "vtbench/worldmodel.hpp"

namespace vtb {

// Squashed-Gaussian actor and a value critic over latent features. The two
// parameter sets are registered separately so optimizers never touch the
// other network's moments.
template <typename T>
class Policy {
 public:
  Policy(int feat_dim, int hidden, T delta_max, uint64_t init_seed);

  struct Dist {
    dc::Var<T> mean;  // pre-squash
    dc::Var<T> std;
  };

  Dist actor(TapeCtx<T>& ctx, dc::Var<T> feat) const;
  // tanh-squash a pre-squash value and scale to the action box.
  dc::Var<T> squash(dc::Tape<T>& tape, dc::Var<T> pre) const;
  dc::Var<T> value(TapeCtx<T>& ctx, dc::Var<T> feat) const;

  ParamRegistry<T>& actor_params() { return actor_params_; }
  ParamRegistry<T>& critic_params() { return critic_params_; }
  const ParamRegistry<T>& actor_params() const { return actor_params_; }
  const ParamRegistry<T>& critic_params() const { return critic_params_; }
  T delta_max() const { return delta_max_; }

 private:
  ParamRegistry<T> actor_params_;
  ParamRegistry<T> critic_params_;
  DenseLayer<T> a0_, a1_, a_out_;
  DenseLayer<T> c0_, c1_, c_out_;
  T delta_max_;
};

// R_t = r_t + gamma * c_t * ((1 - lambda) * v_{t+1} + lambda * R_{t+1}),
// anchored at R_T = v_T. r and c have length T, v has length T + 1.
std::vector<double> lambda_returns(const std::vector<double>& r,
                                   const std::vector<double>& v,
                                   const std::vector<double>& c, double gamma,
                                   double lambda);

// Same recursion over [S,1] column tensors on tape; element t of the result
// is R_t, length T.
template <typename T>
std::vector<dc::Var<T>> lambda_returns_graph(dc::Tape<T>& tape,
                                             const std::vector<dc::Var<T>>& r,
                                             const std::vector<dc::Var<T>>& v,
                                             const std::vector<dc::Var<T>>& c,
                                             double gamma, double lambda);

// Recurrent filtering state carried across an episode. `d` and `z` are the
// latents after absorbing the previous observation; `a_prev` is the last
// action taken.
struct RolloutState {
  dc::Tensor<float> d, z;  // [1, D_d], [1, D_z]
  Eigen::Vector3d a_prev = Eigen::Vector3d::Zero();
};

enum class ActMode { kExplore, kEval };

struct StepMetrics {
  std::vector<std::pair<std::string, double>> items;
  void add(const std::string& k, double v) { items.emplace_back(k, v); }
};

// Owns the world model, policy, optimizers and replay buffer, and runs the
// model-based training loop: filter real steps into the buffer, fit the
// world model on sampled windows, then train actor and critic on imagined
// rollouts from posterior features.
class Trainer {
 public:
  Trainer(const ExperimentConfig& cfg, uint64_t seed);

  // Policy evaluation from (previous latent, previous action, current
  // observation) only; advances the filtering state.
  Eigen::Vector3d predict_action(RolloutState& state, const Observation& obs,
                                 ActMode mode, Rng* noise_rng);
  RolloutState initial_state() const;

  // Interact with the environment for n steps (random during seeding, then
  // exploring policy), storing rows in the replay buffer.
  void collect(int n);
  // One gradient step on each of world model, actor and critic.
  StepMetrics train_step();
  // Column names of train_step metrics, in emission order.
  static std::vector<std::string> metric_columns();

  // Deterministic greedy episode on a caller-supplied environment; returns
  // {success, steps, return}.
  struct EvalResult {
    bool success = false;
    int steps = 0;
    double episode_return = 0.0;
  };
  EvalResult eval_episode(PegEnv& env, uint64_t episode_seed);

  Observation observe(const EnvState& s, Rng& noise_rng) const;

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);
  // Order-stable FNV-1a hash over all parameter bytes.
  uint64_t param_checksum() const;

  int env_steps() const { return env_steps_; }
  int train_steps() const { return train_steps_; }
  const ReplayBuffer& replay() const { return replay_; }
  WorldModel<float>& world_model() { return *wm_; }
  Policy<float>& policy() { return *policy_; }
  const ExperimentConfig& config() const { return cfg_; }
  double explore_sigma() const;

 private:
  void env_reset_episode();
  void env_one_step();
  NamedArrays named_params() const;

  ExperimentConfig cfg_;
  std::unique_ptr<WorldModel<float>> wm_;
  std::unique_ptr<Policy<float>> policy_;
  dc::Adam opt_wm_, opt_actor_, opt_critic_;
  ReplayBuffer replay_;
  PegEnv env_;

  Rng rng_env_;     // environment resets
  Rng rng_act_;     // exploration + seed-phase actions
  Rng rng_obs_;     // sensor noise
  Rng rng_train_;   // batch sampling, latent sampling, imagination
  int env_steps_ = 0;
  int train_steps_ = 0;

  // live episode bookkeeping
  bool episode_open_ = false;
  EnvState live_state_;
  Observation live_obs_;
  RolloutState live_latent_;
  double ep_return_ = 0.0;
  double last_ep_return_ = 0.0;
  double last_ep_len_ = 0.0;
  double last_ep_success_ = 0.0;
  int episodes_done_ = 0;
};

}  // namespace vtb
