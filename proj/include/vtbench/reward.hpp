#pragma once

#include "vtbench/env.hpp"

namespace vtb {

struct RewardBreakdown {
  double r_d = 0.0;    // proximity shaping
  double r_g = 0.0;    // terminal goal bonus
  double r_r = 0.0;    // rotation penalty
  double r_a = 0.0;    // action magnitude penalty
  double total = 0.0;  // r_d + r_g + r_r + r_a, summed in this order
};

RewardBreakdown compute_reward(const EnvState& state, const Action& a,
                               const GoalSpec& goal);

// success iff the goal box is reached; done on success or timeout.
struct Terminal {
  bool done = false;
  bool success = false;
};
Terminal is_terminal(const EnvState& state, const GoalSpec& goal, int max_steps);

}  // namespace vtb
