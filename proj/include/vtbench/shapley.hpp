#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vtbench/agent.hpp"
#include "vtbench/rng.hpp"

namespace vtb {

// Coalition evaluation: bit i of the mask set means player i participates.
using CoalitionFn = std::function<std::vector<double>(uint32_t mask)>;

struct ShapleyResult {
  std::vector<std::vector<double>> phi;  // [n_players][out_dim]
  std::vector<double> f_full, f_empty;
  int evals = 0;  // distinct coalition evaluations performed
};

// Exact Shapley values: every coalition is evaluated exactly once (2^n
// calls), combination weights |S|! (n-1-|S|)! / n! accumulated in double.
ShapleyResult shapley_exact(int n_players, const CoalitionFn& f);

// Permutation-sampling estimator of the same values. Coalition evaluations
// are memoized, so `evals` stays bounded by 2^n.
ShapleyResult shapley_sampled(int n_players, const CoalitionFn& f,
                              int n_permutations, Rng& rng);

// Policy-input players, in CSV column order.
enum PolicyPlayer : uint32_t {
  kPlayerHidden = 1u << 0,      // recurrent latent carried from the past
  kPlayerVis = 1u << 1,         // current visual frame
  kPlayerTac = 1u << 2,         // current tactile frame
  kPlayerPrevAction = 1u << 3,  // previous action fed to the transition
};

struct ShapleyRow {
  int t = 0;
  int axis = 0;  // action component 0..2
  double phi_hidden = 0, phi_vis = 0, phi_tac = 0, phi_prev_action = 0;
  double f_full = 0, f_empty = 0;
};

// Absent players are replaced by neutral baselines: the learned episode-start
// latent for HIDDEN, black frames for VIS/TAC, a zero vector for PREV_ACTION.
std::vector<double> evaluate_policy_coalition(Trainer& agent,
                                              const RolloutState& latent,
                                              const Observation& obs,
                                              uint32_t mask);

// Runs one deterministic greedy episode and attributes every action
// component over the four policy inputs; 3 rows per environment step.
std::vector<ShapleyRow> shapley_episode(Trainer& agent, PegEnv& env,
                                        uint64_t episode_seed);

}  // namespace vtb
