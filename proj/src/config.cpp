#include "vtbench/config.hpp"

#include <set>
#include <stdexcept>

#include "vtbench/io_util.hpp"

namespace vtb {

namespace {

class SectionReader {
 public:
  SectionReader(const TomlTable& table, const std::string& name) : name_(name) {
    auto it = table.find(name);
    if (it != table.end()) sec_ = &it->second;
  }

  double num(const std::string& key, double dflt) {
    const TomlValue* v = get(key);
    return v ? v->as_number() : dflt;
  }
  int integer(const std::string& key, int dflt) {
    const TomlValue* v = get(key);
    if (!v) return dflt;
    if (v->kind != TomlValue::Kind::Int) bad(key, "expected an integer");
    return static_cast<int>(v->i);
  }
  bool boolean(const std::string& key, bool dflt) {
    const TomlValue* v = get(key);
    if (!v) return dflt;
    if (v->kind != TomlValue::Kind::Bool) bad(key, "expected a boolean");
    return v->b;
  }
  std::string str(const std::string& key, const std::string& dflt) {
    const TomlValue* v = get(key);
    if (!v) return dflt;
    if (v->kind != TomlValue::Kind::String) bad(key, "expected a string");
    return v->s;
  }
  const TomlValue* array(const std::string& key) {
    const TomlValue* v = get(key);
    if (v && v->kind != TomlValue::Kind::Array) bad(key, "expected an array");
    return v;
  }

  void finish() {
    if (!sec_) return;
    for (const auto& [k, v] : *sec_)
      if (!used_.count(k))
        throw std::runtime_error("unknown config key '" + qual(k) + "'");
  }

  [[noreturn]] void bad(const std::string& key, const std::string& msg) {
    throw std::runtime_error("config key '" + qual(key) + "': " + msg);
  }

 private:
  const TomlValue* get(const std::string& key) {
    used_.insert(key);
    if (!sec_) return nullptr;
    auto it = sec_->find(key);
    return it == sec_->end() ? nullptr : &it->second;
  }
  std::string qual(const std::string& key) const {
    return name_.empty() ? key : name_ + "." + key;
  }

  const TomlSection* sec_ = nullptr;
  std::string name_;
  std::set<std::string> used_;
};

[[noreturn]] void bad_key(const std::string& key, const std::string& msg) {
  throw std::runtime_error("config key '" + key + "': " + msg);
}

}  // namespace

HoleSpec EnvConfig::hole() const {
  HoleSpec spec;
  spec.tol_mm = tol_mm;
  spec.alpha_deg = alpha_deg;
  spec.peg_diameter_mm = peg_diameter_mm;
  spec.hole_depth_mm = hole_depth_mm;
  spec.chamfer_width_mm = chamfer_width_mm;
  return spec;
}

PegEnv EnvConfig::make_env() const {
  PegEnv env(hole(), max_steps, delta_max);
  return env;
}

void ExperimentConfig::validate() const {
  if (env.tol_mm <= 0.0) bad_key("env.tol_mm", "must be > 0");
  if (env.alpha_deg < 0.0 || env.alpha_deg > 10.0)
    bad_key("env.alpha_deg", "must be within [0, 10]");
  if (env.peg_diameter_mm <= 0.0) bad_key("env.peg_diameter_mm", "must be > 0");
  if (env.hole_depth_mm <= 0.0) bad_key("env.hole_depth_mm", "must be > 0");
  if (env.goal_depth_mm <= 0.0 || env.goal_depth_mm > env.hole_depth_mm)
    bad_key("env.goal_depth_mm", "must be in (0, hole_depth_mm]");
  if (env.chamfer_width_mm < 0.0) bad_key("env.chamfer_width_mm", "must be >= 0");
  if (env.delta_max <= 0.0) bad_key("env.delta_max", "must be > 0");
  if (env.max_steps < 1) bad_key("env.max_steps", "must be >= 1");
  try {
    sensors.validate();
  } catch (const std::exception& e) {
    bad_key("sensors.resolution", e.what());
  }
  if (model.d_dim < 1 || model.z_dim < 1 || model.embed_dim < 1 ||
      model.base_channels < 1 || model.hidden < 1)
    bad_key("model", "dimensions must be >= 1");
  if (model.free_bits < 0.0f) bad_key("model.free_bits", "must be >= 0");
  if (model.kl_balance < 0.0f || model.kl_balance > 1.0f)
    bad_key("model.kl_balance", "must be in [0, 1]");
  if (train.seq_len < 2) bad_key("train.seq_len", "must be >= 2");
  if (train.batch_size < 1) bad_key("train.batch_size", "must be >= 1");
  if (train.gamma < 0.0f || train.gamma > 1.0f)
    bad_key("train.gamma", "must be in [0, 1]");
  if (train.lambda < 0.0f || train.lambda > 1.0f)
    bad_key("train.lambda", "must be in [0, 1]");
  if (train.horizon < 1) bad_key("train.horizon", "must be >= 1");
  if (train.env_steps_per_train_step < 1)
    bad_key("train.env_steps_per_train_step", "must be >= 1");
  if (train.seed_steps < 0) bad_key("train.seed_steps", "must be >= 0");
  if (train.budget_env_steps < 0) bad_key("train.budget_env_steps", "must be >= 0");
  if (train.replay_capacity < train.seq_len)
    bad_key("train.replay_capacity", "must hold at least one sequence");
  if (train.imag_starts < 1) bad_key("train.imag_starts", "must be >= 1");
  if (train.seeds.empty()) bad_key("train.seeds", "must not be empty");
  if (eval.n_trials < 1) bad_key("eval.n_trials", "must be >= 1");
  if (eval.grid.empty()) bad_key("eval.grid", "must not be empty");
  for (const auto& [tol, alpha] : eval.grid) {
    if (tol <= 0.0) bad_key("eval.grid", "tol entries must be > 0");
    if (alpha < 0.0 || alpha > 10.0)
      bad_key("eval.grid", "alpha entries must be within [0, 10]");
  }
  if (shapley.tol_mm <= 0.0) bad_key("shapley.tol_mm", "must be > 0");
  if (shapley.alpha_deg < 0.0 || shapley.alpha_deg > 10.0)
    bad_key("shapley.alpha_deg", "must be within [0, 10]");
}

ExperimentConfig ExperimentConfig::from_toml(const std::string& text) {
  const TomlTable table = toml_parse(text);
  const std::set<std::string> known = {"",       "env",  "sensors", "model",
                                       "train",  "eval", "shapley"};
  for (const auto& [name, sec] : table) {
    if (!known.count(name))
      throw std::runtime_error("unknown config section '" + name + "'");
    if (name.empty() && !sec.empty())
      throw std::runtime_error("unknown config key '" + sec.begin()->first +
                               "' (top level)");
  }

  ExperimentConfig c;

  SectionReader env(table, "env");
  c.env.tol_mm = env.num("tol_mm", c.env.tol_mm);
  c.env.alpha_deg = env.num("alpha_deg", c.env.alpha_deg);
  c.env.peg_diameter_mm = env.num("peg_diameter_mm", c.env.peg_diameter_mm);
  c.env.hole_depth_mm = env.num("hole_depth_mm", c.env.hole_depth_mm);
  c.env.goal_depth_mm = env.num("goal_depth_mm", c.env.goal_depth_mm);
  c.env.chamfer_width_mm = env.num("chamfer_width_mm", c.env.chamfer_width_mm);
  c.env.delta_max = env.num("delta_max", c.env.delta_max);
  c.env.max_steps = env.integer("max_steps", c.env.max_steps);
  env.finish();

  SectionReader sen(table, "sensors");
  c.sensors.resolution = sen.integer("resolution", c.sensors.resolution);
  c.sensors.vis_noise_sigma = static_cast<float>(
      sen.num("vis_noise_sigma", c.sensors.vis_noise_sigma));
  c.sensors.tac_noise_sigma = static_cast<float>(
      sen.num("tac_noise_sigma", c.sensors.tac_noise_sigma));
  sen.finish();

  SectionReader mod(table, "model");
  c.model.d_dim = mod.integer("d_dim", c.model.d_dim);
  c.model.z_dim = mod.integer("z_dim", c.model.z_dim);
  c.model.embed_dim = mod.integer("embed_dim", c.model.embed_dim);
  c.model.base_channels = mod.integer("base_channels", c.model.base_channels);
  c.model.hidden = mod.integer("hidden", c.model.hidden);
  c.model.free_bits = static_cast<float>(mod.num("free_bits", c.model.free_bits));
  c.model.kl_weight = static_cast<float>(mod.num("kl_weight", c.model.kl_weight));
  c.model.reward_weight =
      static_cast<float>(mod.num("reward_weight", c.model.reward_weight));
  c.model.continue_weight =
      static_cast<float>(mod.num("continue_weight", c.model.continue_weight));
  c.model.kl_balance = static_cast<float>(mod.num("kl_balance", c.model.kl_balance));
  mod.finish();

  SectionReader tr(table, "train");
  c.train.seq_len = tr.integer("seq_len", c.train.seq_len);
  c.train.batch_size = tr.integer("batch_size", c.train.batch_size);
  c.train.gamma = static_cast<float>(tr.num("gamma", c.train.gamma));
  c.train.lambda = static_cast<float>(tr.num("lambda", c.train.lambda));
  c.train.horizon = tr.integer("horizon", c.train.horizon);
  c.train.entropy_weight =
      static_cast<float>(tr.num("entropy_weight", c.train.entropy_weight));
  c.train.exploration_std_start = static_cast<float>(
      tr.num("exploration_std_start", c.train.exploration_std_start));
  c.train.exploration_std_end = static_cast<float>(
      tr.num("exploration_std_end", c.train.exploration_std_end));
  c.train.env_steps_per_train_step = tr.integer(
      "env_steps_per_train_step", c.train.env_steps_per_train_step);
  c.train.seed_steps = tr.integer("seed_steps", c.train.seed_steps);
  c.train.budget_env_steps =
      tr.integer("budget_env_steps", c.train.budget_env_steps);
  c.train.wm_lr = static_cast<float>(tr.num("wm_lr", c.train.wm_lr));
  c.train.actor_lr = static_cast<float>(tr.num("actor_lr", c.train.actor_lr));
  c.train.critic_lr = static_cast<float>(tr.num("critic_lr", c.train.critic_lr));
  c.train.grad_clip = static_cast<float>(tr.num("grad_clip", c.train.grad_clip));
  c.train.replay_capacity =
      tr.integer("replay_capacity", c.train.replay_capacity);
  c.train.imag_starts = tr.integer("imag_starts", c.train.imag_starts);
  c.train.checkpoint_every =
      tr.integer("checkpoint_every", c.train.checkpoint_every);
  if (const TomlValue* seeds = tr.array("seeds")) {
    c.train.seeds.clear();
    for (const TomlValue& v : seeds->arr) {
      if (v.kind != TomlValue::Kind::Int)
        tr.bad("seeds", "entries must be integers");
      c.train.seeds.push_back(static_cast<int>(v.i));
    }
  }
  {
    const std::string m = tr.str("modality", c.train.vision_only
                                                 ? "vision_only"
                                                 : "vision_tactile");
    if (m == "vision_only")
      c.train.vision_only = true;
    else if (m == "vision_tactile")
      c.train.vision_only = false;
    else
      tr.bad("modality", "must be \"vision_only\" or \"vision_tactile\"");
  }
  tr.finish();

  SectionReader ev(table, "eval");
  c.eval.n_trials = ev.integer("n_trials", c.eval.n_trials);
  if (const TomlValue* grid = ev.array("grid")) {
    c.eval.grid.clear();
    for (const TomlValue& cell : grid->arr) {
      if (cell.kind != TomlValue::Kind::Array || cell.arr.size() != 2)
        ev.bad("grid", "entries must be [tol_mm, alpha_deg] pairs");
      c.eval.grid.emplace_back(cell.arr[0].as_number(), cell.arr[1].as_number());
    }
  }
  ev.finish();

  SectionReader sh(table, "shapley");
  c.shapley.tol_mm = sh.num("tol_mm", c.shapley.tol_mm);
  c.shapley.alpha_deg = sh.num("alpha_deg", c.shapley.alpha_deg);
  c.shapley.episode_seed = sh.integer("episode_seed", c.shapley.episode_seed);
  sh.finish();

  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return from_toml(read_text_file(path));
}

std::string ExperimentConfig::serialize() const {
  TomlTable t;
  TomlSection& env = t["env"];
  env["tol_mm"] = TomlValue::of_float(this->env.tol_mm);
  env["alpha_deg"] = TomlValue::of_float(this->env.alpha_deg);
  env["peg_diameter_mm"] = TomlValue::of_float(this->env.peg_diameter_mm);
  env["hole_depth_mm"] = TomlValue::of_float(this->env.hole_depth_mm);
  env["goal_depth_mm"] = TomlValue::of_float(this->env.goal_depth_mm);
  env["chamfer_width_mm"] = TomlValue::of_float(this->env.chamfer_width_mm);
  env["delta_max"] = TomlValue::of_float(this->env.delta_max);
  env["max_steps"] = TomlValue::of_int(this->env.max_steps);

  TomlSection& sen = t["sensors"];
  sen["resolution"] = TomlValue::of_int(sensors.resolution);
  sen["vis_noise_sigma"] = TomlValue::of_float(sensors.vis_noise_sigma);
  sen["tac_noise_sigma"] = TomlValue::of_float(sensors.tac_noise_sigma);

  TomlSection& mod = t["model"];
  mod["d_dim"] = TomlValue::of_int(model.d_dim);
  mod["z_dim"] = TomlValue::of_int(model.z_dim);
  mod["embed_dim"] = TomlValue::of_int(model.embed_dim);
  mod["base_channels"] = TomlValue::of_int(model.base_channels);
  mod["hidden"] = TomlValue::of_int(model.hidden);
  mod["free_bits"] = TomlValue::of_float(model.free_bits);
  mod["kl_weight"] = TomlValue::of_float(model.kl_weight);
  mod["reward_weight"] = TomlValue::of_float(model.reward_weight);
  mod["continue_weight"] = TomlValue::of_float(model.continue_weight);
  mod["kl_balance"] = TomlValue::of_float(model.kl_balance);

  TomlSection& tr = t["train"];
  tr["seq_len"] = TomlValue::of_int(train.seq_len);
  tr["batch_size"] = TomlValue::of_int(train.batch_size);
  tr["gamma"] = TomlValue::of_float(train.gamma);
  tr["lambda"] = TomlValue::of_float(train.lambda);
  tr["horizon"] = TomlValue::of_int(train.horizon);
  tr["entropy_weight"] = TomlValue::of_float(train.entropy_weight);
  tr["exploration_std_start"] = TomlValue::of_float(train.exploration_std_start);
  tr["exploration_std_end"] = TomlValue::of_float(train.exploration_std_end);
  tr["env_steps_per_train_step"] = TomlValue::of_int(train.env_steps_per_train_step);
  tr["seed_steps"] = TomlValue::of_int(train.seed_steps);
  tr["budget_env_steps"] = TomlValue::of_int(train.budget_env_steps);
  tr["wm_lr"] = TomlValue::of_float(train.wm_lr);
  tr["actor_lr"] = TomlValue::of_float(train.actor_lr);
  tr["critic_lr"] = TomlValue::of_float(train.critic_lr);
  tr["grad_clip"] = TomlValue::of_float(train.grad_clip);
  tr["replay_capacity"] = TomlValue::of_int(train.replay_capacity);
  tr["imag_starts"] = TomlValue::of_int(train.imag_starts);
  tr["checkpoint_every"] = TomlValue::of_int(train.checkpoint_every);
  {
    std::vector<TomlValue> seeds;
    for (int s : train.seeds) seeds.push_back(TomlValue::of_int(s));
    tr["seeds"] = TomlValue::of_array(std::move(seeds));
  }
  tr["modality"] = TomlValue::of_string(train.vision_only ? "vision_only"
                                                          : "vision_tactile");

  TomlSection& ev = t["eval"];
  ev["n_trials"] = TomlValue::of_int(eval.n_trials);
  {
    std::vector<TomlValue> grid;
    for (const auto& [tol, alpha] : eval.grid)
      grid.push_back(TomlValue::of_array(
          {TomlValue::of_float(tol), TomlValue::of_float(alpha)}));
    ev["grid"] = TomlValue::of_array(std::move(grid));
  }

  TomlSection& sh = t["shapley"];
  sh["tol_mm"] = TomlValue::of_float(shapley.tol_mm);
  sh["alpha_deg"] = TomlValue::of_float(shapley.alpha_deg);
  sh["episode_seed"] = TomlValue::of_int(shapley.episode_seed);

  return toml_serialize(t);
}

}  // namespace vtb
