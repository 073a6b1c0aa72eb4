#include "vtbench/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "vtbench/checkpoint.hpp"
#include "vtbench/reward.hpp"

namespace vtb {

using dc::Tape;
using dc::Tensor;
using dc::Var;

namespace {

template <typename T>
DenseLayer<T> make_dense(ParamRegistry<T>& reg, const std::string& name,
                         Rng& rng, int in, int out, bool zero_init = false) {
  DenseLayer<T> l;
  Tensor<T> w =
      zero_init ? Tensor<T>({in, out}) : glorot<T>(rng, {in, out}, in, out);
  l.w = reg.add(name + ".w", std::move(w));
  l.b = reg.add(name + ".b", Tensor<T>({out}));
  return l;
}

// Interleaved {H,W,3} image -> one [3,H,W] plane block at dst.
void to_planar(const Image& img, float* dst) {
  int hw = img.dim(0) * img.dim(1);
  const float* src = img.ptr();
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < hw; ++p) dst[c * hw + p] = src[p * 3 + c];
}

double tensor_mean(const Tensor<float>& t) {
  double s = 0.0;
  for (size_t i = 0; i < t.size(); ++i) s += t.ptr()[i];
  return t.size() ? s / static_cast<double>(t.size()) : 0.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Policy

template <typename T>
Policy<T>::Policy(int feat_dim, int hidden, T delta_max, uint64_t init_seed)
    : delta_max_(delta_max) {
  if (feat_dim < 1 || hidden < 1) throw std::invalid_argument("policy dims must be positive");
  Rng rng(init_seed);
  a0_ = make_dense(actor_params_, "a0", rng, feat_dim, hidden);
  a1_ = make_dense(actor_params_, "a1", rng, hidden, hidden);
  a_out_ = make_dense(actor_params_, "a_out", rng, hidden, 6, /*zero_init=*/true);
  c0_ = make_dense(critic_params_, "c0", rng, feat_dim, hidden);
  c1_ = make_dense(critic_params_, "c1", rng, hidden, hidden);
  c_out_ = make_dense(critic_params_, "c_out", rng, hidden, 1, /*zero_init=*/true);
}

template <typename T>
typename Policy<T>::Dist Policy<T>::actor(TapeCtx<T>& ctx, Var<T> feat) const {
  auto& tp = ctx.tape();
  Var<T> h = tp.silu(a0_(ctx, feat));
  h = tp.silu(a1_(ctx, h));
  Var<T> out = a_out_(ctx, h);
  Dist d;
  d.mean = tp.slice_last(out, 0, 3);
  // Shifted softplus keeps the initial std moderate; floor keeps entropy and
  // reparameterized gradients finite.
  d.std = tp.add_scalar(tp.softplus(tp.add_scalar(tp.slice_last(out, 3, 6), T(-1))),
                        T(0.1));
  return d;
}

template <typename T>
Var<T> Policy<T>::squash(Tape<T>& tape, Var<T> pre) const {
  return tape.scale(tape.tanh_(pre), delta_max_);
}

template <typename T>
Var<T> Policy<T>::value(TapeCtx<T>& ctx, Var<T> feat) const {
  auto& tp = ctx.tape();
  Var<T> h = tp.silu(c0_(ctx, feat));
  h = tp.silu(c1_(ctx, h));
  return c_out_(ctx, h);
}

template class Policy<float>;
template class Policy<double>;

// ---------------------------------------------------------------------------
// Lambda returns

std::vector<double> lambda_returns(const std::vector<double>& r,
                                   const std::vector<double>& v,
                                   const std::vector<double>& c, double gamma,
                                   double lambda) {
  size_t n = r.size();
  if (c.size() != n || v.size() != n + 1)
    throw std::invalid_argument("lambda_returns: need |r| == |c| == |v| - 1");
  std::vector<double> out(n);
  double next = v[n];
  for (size_t i = n; i-- > 0;) {
    next = r[i] + gamma * c[i] * ((1.0 - lambda) * v[i + 1] + lambda * next);
    out[i] = next;
  }
  return out;
}

template <typename T>
std::vector<Var<T>> lambda_returns_graph(Tape<T>& tape,
                                         const std::vector<Var<T>>& r,
                                         const std::vector<Var<T>>& v,
                                         const std::vector<Var<T>>& c,
                                         double gamma, double lambda) {
  size_t n = r.size();
  if (c.size() != n || v.size() != n + 1)
    throw std::invalid_argument("lambda_returns_graph: need |r| == |c| == |v| - 1");
  std::vector<Var<T>> out(n);
  Var<T> next = v[n];
  for (size_t i = n; i-- > 0;) {
    Var<T> mix = tape.add(tape.scale(v[i + 1], T(1.0 - lambda)),
                          tape.scale(next, T(lambda)));
    next = tape.add(r[i], tape.scale(tape.mul(c[i], mix), T(gamma)));
    out[i] = next;
  }
  return out;
}

template std::vector<Var<float>> lambda_returns_graph<float>(
    Tape<float>&, const std::vector<Var<float>>&, const std::vector<Var<float>>&,
    const std::vector<Var<float>>&, double, double);
template std::vector<Var<double>> lambda_returns_graph<double>(
    Tape<double>&, const std::vector<Var<double>>&,
    const std::vector<Var<double>>&, const std::vector<Var<double>>&, double,
    double);

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const ExperimentConfig& cfg, uint64_t seed)
    : cfg_(cfg),
      opt_wm_(cfg.train.wm_lr),
      opt_actor_(cfg.train.actor_lr),
      opt_critic_(cfg.train.critic_lr),
      replay_(cfg.train.replay_capacity, cfg.sensors.resolution),
      env_(cfg.env.make_env()),
      rng_env_(Rng(seed).split(1)),
      rng_act_(Rng(seed).split(2)),
      rng_obs_(Rng(seed).split(3)),
      rng_train_(Rng(seed).split(4)) {
  cfg_.validate();
  wm_ = std::make_unique<WorldModel<float>>(cfg_.model, cfg_.sensors.resolution,
                                            Rng(seed).split(5).next_u64());
  policy_ = std::make_unique<Policy<float>>(
      wm_->feat_dim(), cfg_.model.hidden,
      static_cast<float>(cfg_.env.delta_max), Rng(seed).split(6).next_u64());
}

RolloutState Trainer::initial_state() const {
  RolloutState s;
  s.d = wm_->init_d_value().clone().reshaped({1, cfg_.model.d_dim});
  s.z = wm_->init_z_value().clone().reshaped({1, cfg_.model.z_dim});
  s.a_prev.setZero();
  return s;
}

Eigen::Vector3d Trainer::predict_action(RolloutState& state, const Observation& obs,
                                        ActMode mode, Rng* noise_rng) {
  if (mode == ActMode::kExplore && noise_rng == nullptr)
    throw std::invalid_argument("exploration requires a noise rng");
  const int res = cfg_.sensors.resolution;
  const int zd = cfg_.model.z_dim;

  Tape<float> tape;
  TapeCtx<float> ctx(tape, /*freeze=*/true);  // inference: no gradients needed

  Tensor<float> vis({1, 3, res, res});
  Tensor<float> tac({1, 3, res, res});
  to_planar(obs.vis, vis.ptr());
  to_planar(obs.tac, tac.ptr());
  Tensor<float> aprev({1, 3});
  for (int k = 0; k < 3; ++k) aprev.ptr()[k] = static_cast<float>(state.a_prev[k]);

  Var<float> e = wm_->encode(ctx, tape.constant(vis), tape.constant(tac));
  Var<float> d = wm_->rssm_core(ctx, tape.constant(state.z), tape.constant(aprev),
                                tape.constant(state.d));
  WorldModel<float>::Gauss post = wm_->posterior(ctx, d, e);

  Var<float> z;
  if (mode == ActMode::kExplore) {
    Tensor<float> eps({1, zd});
    for (int k = 0; k < zd; ++k) eps.ptr()[k] = noise_rng->normal_f();
    z = tape.add(post.mean, tape.mul(post.std, tape.constant(eps)));
  } else {
    z = post.mean;
  }

  Var<float> feat = tape.concat_last(d, z);
  Policy<float>::Dist dist = policy_->actor(ctx, feat);
  Tensor<float> pre = tape.value(dist.mean).clone();
  if (mode == ActMode::kExplore) {
    float sig = static_cast<float>(explore_sigma());
    for (int k = 0; k < 3; ++k) pre.ptr()[k] += sig * noise_rng->normal_f();
  }
  Eigen::Vector3d a;
  for (int k = 0; k < 3; ++k)
    a[k] = static_cast<double>(policy_->delta_max()) * std::tanh(pre.ptr()[k]);

  state.d = tape.value(d).clone();
  state.z = tape.value(z).clone();
  state.a_prev = a;
  return a;
}

Observation Trainer::observe(const EnvState& s, Rng& noise_rng) const {
  Observation obs = render_observation(s, env_.spec(), cfg_.sensors);
  if (cfg_.sensors.vis_noise_sigma > 0.f || cfg_.sensors.tac_noise_sigma > 0.f)
    obs = add_noise(obs, cfg_.sensors, noise_rng);
  if (cfg_.train.vision_only) obs.tac.fill(0.f);
  return obs;
}

void Trainer::env_reset_episode() {
  live_state_ = env_.reset(rng_env_.next_u64());
  live_latent_ = initial_state();
  live_obs_ = observe(live_state_, rng_obs_);
  replay_.begin_episode();
  replay_.add_step(live_obs_, Eigen::Vector3d::Zero(), 0.f, 1.f);
  ep_return_ = 0.0;
  episode_open_ = true;
}

void Trainer::env_one_step() {
  if (!episode_open_) env_reset_episode();

  Eigen::Vector3d a =
      predict_action(live_latent_, live_obs_, ActMode::kExplore, &rng_act_);
  if (env_steps_ < cfg_.train.seed_steps) {
    double dm = env_.delta_max();
    for (int k = 0; k < 3; ++k) a[k] = rng_act_.uniform(-dm, dm);
    live_latent_.a_prev = a;  // the filter must track the executed action
  }

  const EnvState& s2 = env_.step(Action{a});
  RewardBreakdown rb = compute_reward(s2, Action{a}, env_.goal());
  Terminal term = is_terminal(s2, env_.goal(), env_.max_steps());
  env_steps_ += 1;
  ep_return_ += rb.total;

  live_obs_ = observe(s2, rng_obs_);
  live_state_ = s2;
  replay_.add_step(live_obs_, a, static_cast<float>(rb.total),
                   term.success ? 0.f : 1.f);

  if (term.done) {
    replay_.end_episode();
    episode_open_ = false;
    last_ep_return_ = ep_return_;
    last_ep_len_ = static_cast<double>(s2.step);
    last_ep_success_ = term.success ? 1.0 : 0.0;
    episodes_done_ += 1;
  }
}

void Trainer::collect(int n) {
  for (int i = 0; i < n; ++i) env_one_step();
}

double Trainer::explore_sigma() const {
  double frac = static_cast<double>(env_steps_) /
                std::max(1, cfg_.train.budget_env_steps);
  frac = std::min(1.0, frac);
  return cfg_.train.exploration_std_start +
         frac * (cfg_.train.exploration_std_end - cfg_.train.exploration_std_start);
}

StepMetrics Trainer::train_step() {
  const TrainConfig& tc = cfg_.train;
  const ModelConfig& mc = cfg_.model;
  SeqBatch<float> batch = replay_.sample(tc.batch_size, tc.seq_len, rng_train_);

  // --- world model update ---
  Tape<float> tw;
  TapeCtx<float> cw(tw);
  WmLossResult<float> wl = wm_->world_loss(cw, batch, rng_train_);
  if (!std::isfinite(wl.total))
    throw std::runtime_error("world model loss is not finite at train step " +
                             std::to_string(train_steps_));
  tw.backward(wl.loss);
  std::vector<Tensor<float>> gw = wm_->params().grads(cw);
  float wm_norm = dc::clip_global_norm(gw, tc.grad_clip);
  opt_wm_.step(wm_->params().tensors(), gw);

  // --- imagination starts: subsample posterior features ---
  int rows = wl.features.dim(0);
  int S = std::min(tc.imag_starts, rows);
  std::vector<int> order(rows);
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < S; ++i)
    std::swap(order[i], order[i + rng_train_.uniform_int(rows - i)]);
  int F = wm_->feat_dim();
  Tensor<float> starts({S, F});
  for (int i = 0; i < S; ++i)
    std::copy_n(wl.features.ptr() + static_cast<size_t>(order[i]) * F, F,
                starts.ptr() + static_cast<size_t>(i) * F);

  // --- actor update on imagined rollouts ---
  int H = tc.horizon;
  Tape<float> ta;
  TapeCtx<float> frozen(ta, /*freeze=*/true);  // world model + critic
  TapeCtx<float> alive(ta, /*freeze=*/false);  // actor
  Var<float> feat = ta.constant(starts);
  Var<float> d = ta.slice_last(feat, 0, mc.d_dim);
  Var<float> z = ta.slice_last(feat, mc.d_dim, F);
  std::vector<Var<float>> vals(H + 1), rews(H), conts(H);
  std::vector<Tensor<float>> feat_vals(H + 1);
  feat_vals[0] = starts;
  vals[0] = policy_->value(frozen, feat);
  Var<float> ent_sum;
  for (int h = 0; h < H; ++h) {
    Policy<float>::Dist dist = policy_->actor(alive, feat);
    Tensor<float> eps({S, 3});
    for (size_t i = 0; i < eps.size(); ++i) eps.ptr()[i] = rng_train_.normal_f();
    Var<float> pre = ta.add(dist.mean, ta.mul(dist.std, ta.constant(eps)));
    Var<float> a = policy_->squash(ta, pre);
    Var<float> ent_h = ta.sum_all(ta.log_(dist.std));
    ent_sum = ent_sum.valid() ? ta.add(ent_sum, ent_h) : ent_h;

    d = wm_->rssm_core(frozen, z, a, d);
    WorldModel<float>::Gauss pri = wm_->prior(frozen, d);
    Tensor<float> zeps({S, mc.z_dim});
    for (size_t i = 0; i < zeps.size(); ++i) zeps.ptr()[i] = rng_train_.normal_f();
    z = ta.add(pri.mean, ta.mul(pri.std, ta.constant(zeps)));
    feat = ta.concat_last(d, z);
    feat_vals[h + 1] = ta.value(feat).clone();
    rews[h] = wm_->reward_head(frozen, feat);
    conts[h] = ta.sigmoid_(wm_->cont_logit(frozen, feat));
    vals[h + 1] = policy_->value(frozen, feat);
  }
  std::vector<Var<float>> R =
      lambda_returns_graph(ta, rews, vals, conts, tc.gamma, tc.lambda);

  // Discount weights from predicted continues (treated as constants).
  std::vector<Tensor<float>> w(H);
  w[0] = Tensor<float>({S, 1}, 1.f);
  for (int h = 1; h < H; ++h) {
    w[h] = Tensor<float>({S, 1});
    const Tensor<float>& cprev = ta.value(conts[h - 1]);
    for (int i = 0; i < S; ++i)
      w[h].ptr()[i] = w[h - 1].ptr()[i] * tc.gamma * cprev.ptr()[i];
  }

  Var<float> ret_obj;
  for (int h = 0; h < H; ++h) {
    Var<float> term = ta.sum_all(ta.mul(R[h], ta.constant(w[h])));
    ret_obj = ret_obj.valid() ? ta.add(ret_obj, term) : term;
  }
  Var<float> actor_loss =
      ta.add(ta.scale(ret_obj, -1.f / static_cast<float>(S)),
             ta.scale(ent_sum, -tc.entropy_weight / static_cast<float>(S)));
  double actor_loss_v = ta.value(actor_loss).ptr()[0];
  ta.backward(actor_loss);
  std::vector<Tensor<float>> ga = policy_->actor_params().grads(alive);
  float actor_norm = dc::clip_global_norm(ga, tc.grad_clip);
  opt_actor_.step(policy_->actor_params().tensors(), ga);

  std::vector<Tensor<float>> targets(H);
  for (int h = 0; h < H; ++h) targets[h] = ta.value(R[h]).clone();
  double imag_return = tensor_mean(targets[0]);
  double value0 = tensor_mean(ta.value(vals[0]));
  double ent_mean = ta.value(ent_sum).ptr()[0] / (static_cast<double>(S) * H);

  // --- critic regression on detached imagined features ---
  Tape<float> tq;
  TapeCtx<float> cq(tq, /*freeze=*/false);
  Var<float> critic_loss;
  for (int h = 0; h < H; ++h) {
    Var<float> v = policy_->value(cq, tq.constant(feat_vals[h]));
    Var<float> diff = tq.sub(v, tq.constant(targets[h]));
    Var<float> term = tq.sum_all(tq.mul(tq.mul(diff, diff), tq.constant(w[h])));
    critic_loss = critic_loss.valid() ? tq.add(critic_loss, term) : term;
  }
  critic_loss = tq.scale(critic_loss, 1.f / static_cast<float>(S * H));
  double critic_loss_v = tq.value(critic_loss).ptr()[0];
  tq.backward(critic_loss);
  std::vector<Tensor<float>> gq = policy_->critic_params().grads(cq);
  float critic_norm = dc::clip_global_norm(gq, tc.grad_clip);
  opt_critic_.step(policy_->critic_params().tensors(), gq);

  train_steps_ += 1;

  StepMetrics m;
  m.add("env_step", env_steps_);
  m.add("train_step", train_steps_);
  m.add("wm_loss", wl.total);
  m.add("recon_vis", wl.recon_vis);
  m.add("recon_tac", wl.recon_tac);
  m.add("reward_mse", wl.reward_mse);
  m.add("cont_bce", wl.cont_bce);
  m.add("kl", wl.kl);
  m.add("wm_grad_norm", wm_norm);
  m.add("actor_loss", actor_loss_v);
  m.add("actor_grad_norm", actor_norm);
  m.add("actor_entropy", ent_mean);
  m.add("critic_loss", critic_loss_v);
  m.add("critic_grad_norm", critic_norm);
  m.add("imag_return", imag_return);
  m.add("value_mean", value0);
  m.add("explore_sigma", explore_sigma());
  m.add("episode_return", last_ep_return_);
  m.add("episode_len", last_ep_len_);
  m.add("episode_success", last_ep_success_);
  m.add("episodes", episodes_done_);
  m.add("buffer_steps", replay_.steps());
  return m;
}

std::vector<std::string> Trainer::metric_columns() {
  return {"env_step",     "train_step",      "wm_loss",
          "recon_vis",    "recon_tac",       "reward_mse",
          "cont_bce",     "kl",              "wm_grad_norm",
          "actor_loss",   "actor_grad_norm", "actor_entropy",
          "critic_loss",  "critic_grad_norm", "imag_return",
          "value_mean",   "explore_sigma",   "episode_return",
          "episode_len",  "episode_success", "episodes",
          "buffer_steps"};
}

Trainer::EvalResult Trainer::eval_episode(PegEnv& env, uint64_t episode_seed) {
  EvalResult out;
  const EnvState* s = &env.reset(episode_seed);
  RolloutState latent = initial_state();
  Rng noise = Rng(episode_seed).split(7);  // sensor noise stream
  for (;;) {
    Observation obs = observe(*s, noise);
    Eigen::Vector3d a = predict_action(latent, obs, ActMode::kEval, nullptr);
    s = &env.step(Action{a});
    RewardBreakdown rb = compute_reward(*s, Action{a}, env.goal());
    out.episode_return += rb.total;
    out.steps = s->step;
    Terminal term = is_terminal(*s, env.goal(), env.max_steps());
    if (term.done) {
      out.success = term.success;
      break;
    }
  }
  return out;
}

NamedArrays Trainer::named_params() const {
  NamedArrays arrays;
  auto push_group = [&arrays](const std::string& prefix,
                              const ParamRegistry<float>& reg) {
    for (size_t i = 0; i < reg.names().size(); ++i)
      arrays.emplace_back(prefix + reg.names()[i], reg.tensors()[i]);
  };
  push_group("wm.", wm_->params());
  push_group("actor.", policy_->actor_params());
  push_group("critic.", policy_->critic_params());
  return arrays;
}

void Trainer::save_checkpoint(const std::string& path) const {
  NamedArrays arrays = named_params();
  Tensor<float> meta({4});
  meta.ptr()[0] = static_cast<float>(env_steps_);
  meta.ptr()[1] = static_cast<float>(train_steps_);
  meta.ptr()[2] = static_cast<float>(cfg_.sensors.resolution);
  meta.ptr()[3] = cfg_.train.vision_only ? 1.f : 0.f;
  arrays.emplace_back("meta", meta);
  save_arrays(path, arrays);
}

void Trainer::load_checkpoint(const std::string& path) {
  NamedArrays arrays = load_arrays(path);
  const Tensor<float>& meta = find_array(arrays, "meta");
  if (meta.size() != 4) throw std::runtime_error(path + ": bad meta block");
  if (static_cast<int>(meta.ptr()[2]) != cfg_.sensors.resolution)
    throw std::runtime_error(path + ": checkpoint resolution " +
                             std::to_string(static_cast<int>(meta.ptr()[2])) +
                             " does not match configured resolution " +
                             std::to_string(cfg_.sensors.resolution));
  env_steps_ = static_cast<int>(meta.ptr()[0]);
  train_steps_ = static_cast<int>(meta.ptr()[1]);

  auto load_group = [&arrays, &path](const std::string& prefix,
                                     ParamRegistry<float>& reg) {
    for (size_t i = 0; i < reg.names().size(); ++i) {
      const Tensor<float>& src = find_array(arrays, prefix + reg.names()[i]);
      Tensor<float>& dst = reg.tensors()[i];
      if (!src.same_shape(dst))
        throw std::runtime_error(path + ": shape mismatch for " + prefix +
                                 reg.names()[i] + " (" + dc::shape_str(src.shape()) +
                                 " vs " + dc::shape_str(dst.shape()) + ")");
      std::copy_n(src.ptr(), src.size(), dst.ptr());
    }
  };
  load_group("wm.", wm_->params());
  load_group("actor.", policy_->actor_params());
  load_group("critic.", policy_->critic_params());
}

uint64_t Trainer::param_checksum() const {
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const ParamRegistry<float>& reg) {
    for (const Tensor<float>& t : reg.tensors()) {
      const unsigned char* bytes = reinterpret_cast<const unsigned char*>(t.ptr());
      for (size_t i = 0; i < t.size() * sizeof(float); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
      }
    }
  };
  mix(wm_->params());
  mix(policy_->actor_params());
  mix(policy_->critic_params());
  return h;
}

}  // namespace vtb
