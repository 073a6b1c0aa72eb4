#include "vtbench/shapley.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "vtbench/reward.hpp"

namespace vtb {

namespace {

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

int popcount(uint32_t m) { return __builtin_popcount(m); }

struct Memo {
  explicit Memo(int n, const CoalitionFn& f)
      : fn(f), cache(size_t(1) << n) {}
  const std::vector<double>& operator()(uint32_t mask) {
    auto& slot = cache[mask];
    if (!slot.second) {
      slot.first = fn(mask);
      slot.second = true;
      evals += 1;
    }
    return slot.first;
  }
  const CoalitionFn& fn;
  std::vector<std::pair<std::vector<double>, bool>> cache;
  int evals = 0;
};

ShapleyResult shapleyresult_init(int n, size_t out_dim) {
  ShapleyResult r;
  r.phi.assign(n, std::vector<double>(out_dim, 0.0));
  return r;
}

}  // namespace

ShapleyResult shapley_exact(int n_players, const CoalitionFn& f) {
  if (n_players < 1 || n_players > 20)
    throw std::invalid_argument("shapley_exact: unsupported player count");
  Memo memo(n_players, f);
  uint32_t full = (1u << n_players) - 1;
  const std::vector<double>& f_empty = memo(0);
  size_t dim = f_empty.size();
  ShapleyResult out = shapleyresult_init(n_players, dim);

  double n_fact = factorial(n_players);
  for (uint32_t s = 0; s <= full; ++s) {
    const std::vector<double>& base = memo(s);
    int sz = popcount(s);
    double w = factorial(sz) * factorial(n_players - 1 - sz) / n_fact;
    for (int i = 0; i < n_players; ++i) {
      uint32_t bit = 1u << i;
      if (s & bit) continue;
      const std::vector<double>& with = memo(s | bit);
      if (with.size() != dim) throw std::logic_error("coalition output dim changed");
      for (size_t k = 0; k < dim; ++k) out.phi[i][k] += w * (with[k] - base[k]);
    }
  }
  out.f_full = memo(full);
  out.f_empty = f_empty;
  out.evals = memo.evals;
  return out;
}

ShapleyResult shapley_sampled(int n_players, const CoalitionFn& f,
                              int n_permutations, Rng& rng) {
  if (n_players < 1 || n_players > 20)
    throw std::invalid_argument("shapley_sampled: unsupported player count");
  if (n_permutations < 1)
    throw std::invalid_argument("shapley_sampled: need at least one permutation");
  Memo memo(n_players, f);
  uint32_t full = (1u << n_players) - 1;
  size_t dim = memo(0).size();
  ShapleyResult out = shapleyresult_init(n_players, dim);

  std::vector<int> perm(n_players);
  std::iota(perm.begin(), perm.end(), 0);
  for (int p = 0; p < n_permutations; ++p) {
    for (int i = n_players - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    uint32_t mask = 0;
    for (int i : perm) {
      const std::vector<double>& before = memo(mask);
      mask |= 1u << i;
      const std::vector<double>& after = memo(mask);
      for (size_t k = 0; k < dim; ++k)
        out.phi[i][k] += (after[k] - before[k]) / n_permutations;
    }
  }
  out.f_full = memo(full);
  out.f_empty = memo(0);
  out.evals = memo.evals;
  return out;
}

std::vector<double> evaluate_policy_coalition(Trainer& agent,
                                              const RolloutState& latent,
                                              const Observation& obs,
                                              uint32_t mask) {
  int res = agent.config().sensors.resolution;
  RolloutState st = agent.initial_state();
  if (mask & kPlayerHidden) {
    st.d = latent.d.clone();
    st.z = latent.z.clone();
  }
  st.a_prev = (mask & kPlayerPrevAction) ? latent.a_prev : Eigen::Vector3d::Zero();
  Observation masked;
  masked.vis = (mask & kPlayerVis) ? obs.vis : Image({res, res, 3}, 0.f);
  masked.tac = (mask & kPlayerTac) ? obs.tac : Image({res, res, 3}, 0.f);
  Eigen::Vector3d a = agent.predict_action(st, masked, ActMode::kEval, nullptr);
  return {a[0], a[1], a[2]};
}

std::vector<ShapleyRow> shapley_episode(Trainer& agent, PegEnv& env,
                                        uint64_t episode_seed) {
  std::vector<ShapleyRow> rows;
  const EnvState* s = &env.reset(episode_seed);
  RolloutState latent = agent.initial_state();
  Rng noise = Rng(episode_seed).split(7);  // matches greedy evaluation

  for (int t = 0;; ++t) {
    Observation obs = agent.observe(*s, noise);
    RolloutState before;
    before.d = latent.d.clone();
    before.z = latent.z.clone();
    before.a_prev = latent.a_prev;

    CoalitionFn f = [&agent, &before, &obs](uint32_t mask) {
      return evaluate_policy_coalition(agent, before, obs, mask);
    };
    ShapleyResult sh = shapley_exact(4, f);
    for (int axis = 0; axis < 3; ++axis) {
      ShapleyRow r;
      r.t = t;
      r.axis = axis;
      r.phi_hidden = sh.phi[0][axis];
      r.phi_vis = sh.phi[1][axis];
      r.phi_tac = sh.phi[2][axis];
      r.phi_prev_action = sh.phi[3][axis];
      r.f_full = sh.f_full[axis];
      r.f_empty = sh.f_empty[axis];
      rows.push_back(r);
    }

    Eigen::Vector3d a = agent.predict_action(latent, obs, ActMode::kEval, nullptr);
    s = &env.step(Action{a});
    Terminal term = is_terminal(*s, env.goal(), env.max_steps());
    if (term.done) break;
  }
  return rows;
}

}  // namespace vtb
