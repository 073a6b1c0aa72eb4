#include "vtbench/reward.hpp"

namespace vtb {

RewardBreakdown compute_reward(const EnvState& state, const Action& a,
                               const GoalSpec& goal) {
  RewardBreakdown r;
  r.r_d = 5.0 * (0.1 - (goal.p_g - state.p_e).norm());
  r.r_g = in_goal(state.p_e, goal) ? 500.0 : 0.0;
  r.r_r = state.theta.cwiseAbs().maxCoeff() > 10.0 ? -50.0 : 0.0;
  r.r_a = -1e-3 * a.delta.norm();
  r.total = r.r_d + r.r_g + r.r_r + r.r_a;
  return r;
}

Terminal is_terminal(const EnvState& state, const GoalSpec& goal, int max_steps) {
  Terminal t;
  t.success = in_goal(state.p_e, goal);
  t.done = t.success || state.step >= max_steps;
  return t;
}

}  // namespace vtb
