#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "vtbench/reward.hpp"
#include "vtbench/rng.hpp"

using namespace vtb;

namespace {

GoalSpec goal_at(const Eigen::Vector3d& p) {
  GoalSpec g;
  g.p_g = p;
  return g;
}

}  // namespace

TEST_CASE("at the goal with no tilt and no action the reward is 500.5") {
  GoalSpec goal = goal_at({0.4, 0.0, 0.1});
  EnvState s;
  s.p_e = goal.p_g;
  RewardBreakdown r = compute_reward(s, Action{}, goal);
  CHECK(std::abs(r.r_d - 0.5) < 1e-9);
  CHECK(r.r_g == 500.0);
  CHECK(r.r_r == 0.0);
  CHECK(r.r_a == 0.0);
  CHECK(std::abs(r.total - 500.5) < 1e-9);
}

TEST_CASE("proximity shaping crosses zero at 0.1 m distance") {
  GoalSpec goal = goal_at({0.0, 0.0, 0.0});
  EnvState s;
  s.p_e = Eigen::Vector3d(0.1, 0.0, 0.0);
  RewardBreakdown r = compute_reward(s, Action{}, goal);
  CHECK(std::abs(r.total) < 1e-9);
}

TEST_CASE("tilt and action penalties combine to -49.750005") {
  GoalSpec goal = goal_at({0.0, 0.0, 0.0});
  EnvState s;
  s.p_e = Eigen::Vector3d(0.05, 0.0, 0.0);
  s.theta = Eigen::Vector2d(15.0, 0.0);
  Action a;
  a.delta = Eigen::Vector3d(0.005, 0.0, 0.0);
  RewardBreakdown r = compute_reward(s, a, goal);
  CHECK(std::abs(r.r_d - 0.25) < 1e-9);
  CHECK(r.r_g == 0.0);
  CHECK(r.r_r == -50.0);
  CHECK(std::abs(r.r_a - (-5e-6)) < 1e-15);
  CHECK(std::abs(r.total - (-49.750005)) < 1e-9);
}

TEST_CASE("total is exactly the ordered sum of the four terms") {
  Rng rng(41);
  for (int i = 0; i < 1000; ++i) {
    GoalSpec goal = goal_at({rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                             rng.uniform(-0.5, 0.5)});
    EnvState s;
    s.p_e = Eigen::Vector3d(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                            rng.uniform(-0.5, 0.5));
    s.theta = Eigen::Vector2d(rng.uniform(-20, 20), rng.uniform(-20, 20));
    Action a;
    a.delta = Eigen::Vector3d(rng.uniform(-0.005, 0.005),
                              rng.uniform(-0.005, 0.005),
                              rng.uniform(-0.005, 0.005));
    RewardBreakdown r = compute_reward(s, a, goal);
    double expect = r.r_d + r.r_g;
    expect = expect + r.r_r;
    expect = expect + r.r_a;
    CHECK(r.total == expect);  // bit-exact associativity contract
  }
}

TEST_CASE("proximity term strictly decreases with distance and is 0.5 at zero") {
  GoalSpec goal = goal_at({0.0, 0.0, 0.0});
  EnvState s;
  s.p_e = goal.p_g;
  CHECK(compute_reward(s, Action{}, goal).r_d == doctest::Approx(0.5));
  double prev = compute_reward(s, Action{}, goal).r_d;
  for (double dist = 0.01; dist < 0.2; dist += 0.01) {
    s.p_e = Eigen::Vector3d(dist, 0.0, 0.0);
    double rd = compute_reward(s, Action{}, goal).r_d;
    CHECK(rd < prev);
    prev = rd;
  }
}

TEST_CASE("action penalty is nonpositive and scales with magnitude") {
  GoalSpec goal = goal_at({0.0, 0.0, 0.0});
  EnvState s;
  s.p_e = Eigen::Vector3d(0.05, 0.0, 0.0);
  Action small, big;
  small.delta = Eigen::Vector3d(0.001, 0.0, 0.0);
  big.delta = Eigen::Vector3d(0.005, 0.0, 0.0);
  RewardBreakdown rs = compute_reward(s, small, goal);
  RewardBreakdown rb = compute_reward(s, big, goal);
  CHECK(rs.r_a < 0.0);
  CHECK(rb.r_a < rs.r_a);
}

TEST_CASE("rotation penalty triggers strictly above 10 degrees on either axis") {
  GoalSpec goal = goal_at({0.0, 0.0, 0.0});
  EnvState s;
  s.p_e = Eigen::Vector3d(0.05, 0.0, 0.0);
  s.theta = Eigen::Vector2d(10.0, 0.0);
  CHECK(compute_reward(s, Action{}, goal).r_r == 0.0);
  s.theta = Eigen::Vector2d(10.0 + 1e-9, 0.0);
  CHECK(compute_reward(s, Action{}, goal).r_r == -50.0);
  s.theta = Eigen::Vector2d(0.0, -10.5);
  CHECK(compute_reward(s, Action{}, goal).r_r == -50.0);
}

TEST_CASE("goal membership is strict per axis") {
  GoalSpec goal = goal_at({0.0, 0.0, 0.0});
  CHECK(in_goal(goal.p_g, goal));
  CHECK_FALSE(in_goal(goal.p_g + Eigen::Vector3d(0.006, 0, 0), goal));
  CHECK_FALSE(in_goal(goal.p_g + Eigen::Vector3d(0.005, 0, 0), goal));
  CHECK(in_goal(goal.p_g + Eigen::Vector3d(0.0049, 0.0049, -0.0049), goal));
}

TEST_CASE("terminal flags") {
  GoalSpec goal = goal_at({0.0, 0.0, 0.0});
  EnvState s;
  s.p_e = goal.p_g;
  s.step = 3;
  Terminal t = is_terminal(s, goal, 150);
  CHECK(t.done);
  CHECK(t.success);

  s.p_e = Eigen::Vector3d(0.1, 0.0, 0.0);
  s.step = 150;
  t = is_terminal(s, goal, 150);
  CHECK(t.done);
  CHECK_FALSE(t.success);

  s.step = 149;
  t = is_terminal(s, goal, 150);
  CHECK_FALSE(t.done);
  CHECK_FALSE(t.success);
}

TEST_CASE("reward is a pure function") {
  GoalSpec goal = goal_at({0.1, -0.2, 0.3});
  EnvState s;
  s.p_e = Eigen::Vector3d(0.12, -0.18, 0.33);
  s.theta = Eigen::Vector2d(11.0, -2.0);
  Action a;
  a.delta = Eigen::Vector3d(0.001, -0.002, 0.003);
  RewardBreakdown r1 = compute_reward(s, a, goal);
  RewardBreakdown r2 = compute_reward(s, a, goal);
  CHECK(r1.total == r2.total);
  CHECK(r1.r_d == r2.r_d);
  CHECK(r1.r_g == r2.r_g);
  CHECK(r1.r_r == r2.r_r);
  CHECK(r1.r_a == r2.r_a);
}
