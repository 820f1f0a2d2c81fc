#include "berth/harness/config.hpp"

#include <fstream>
#include <sstream>

namespace berth::harness {
namespace {

const json& section(const json& root, const std::string& name) {
  if (!root.contains(name) || !root.at(name).is_object()) {
    throw ConfigError("missing required section '" + name + "'");
  }
  return root.at(name);
}

double required(const json& sec, const std::string& sec_name, const std::string& key) {
  if (!sec.contains(key)) {
    throw ConfigError("missing required key '" + sec_name + "." + key + "'");
  }
  const auto& v = sec.at(key);
  if (!v.is_number()) {
    throw ConfigError("key '" + sec_name + "." + key + "' must be a number");
  }
  return v.get<double>();
}

template <typename T>
T optional(const json& sec, const std::string& key, T fallback) {
  if (!sec.contains(key) || sec.at(key).is_null()) {
    return fallback;
  }
  try {
    return sec.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("key '" + key + "' has the wrong type: " + e.what());
  }
}

env::Range parse_range(const json& sec, const std::string& key, env::Range fallback) {
  if (!sec.contains(key)) {
    return fallback;
  }
  const auto& v = sec.at(key);
  if (!v.is_array() || v.size() != 2) {
    throw ConfigError("key 'env." + key + "' must be a two-element array");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

dynamics::ShipModel parse_ship_model(const json& root) {
  dynamics::ShipModel m;
  const json& g = section(root, "geometry");
  auto& geo = m.geometry;
  geo.length_pp = required(g, "geometry", "length_pp");
  geo.length_oa = required(g, "geometry", "length_oa");
  geo.breadth = required(g, "geometry", "breadth");
  geo.draft = required(g, "geometry", "draft");
  geo.block_coeff = required(g, "geometry", "block_coeff");
  geo.rudder_height = required(g, "geometry", "rudder_height");
  geo.rudder_area_ratio = required(g, "geometry", "rudder_area_ratio");
  geo.rudder_aspect = required(g, "geometry", "rudder_aspect");
  geo.prop_diameter = required(g, "geometry", "prop_diameter");
  geo.pitch_ratio = required(g, "geometry", "pitch_ratio");
  geo.expanded_area_ratio = required(g, "geometry", "expanded_area_ratio");

  const json& c = section(root, "coefficients");
  auto& k = m.coeffs;
  const auto req = [&](const char* key) { return required(c, "coefficients", key); };
  k.mass = req("mass");
  k.inertia_z = req("inertia_z");
  k.added_mass_x = optional(c, "added_mass_x", 0.05 * k.mass);
  k.added_mass_y = optional(c, "added_mass_y", 0.9 * k.mass);
  k.added_inertia_z = optional(c, "added_inertia_z", 0.5 * k.inertia_z);
  k.x_uu = req("x_uu");
  k.x_vr = req("x_vr");
  k.y_v = req("y_v");
  k.y_r = req("y_r");
  k.y_vvv = req("y_vvv");
  k.y_vvr = req("y_vvr");
  k.y_vrr = req("y_vrr");
  k.y_rrr = req("y_rrr");
  k.n_v = req("n_v");
  k.n_r = req("n_r");
  k.n_vvv = req("n_vvv");
  k.n_vvr = req("n_vvr");
  k.n_vrr = req("n_vrr");
  k.n_rrr = req("n_rrr");
  k.wake_fraction = req("wake_fraction");
  k.thrust_deduction = req("thrust_deduction");
  k.kt0 = req("kt0");
  k.kt1 = req("kt1");
  k.kt2 = req("kt2");
  k.astern_efficiency = optional(c, "astern_efficiency", 0.7);
  k.t_r = req("t_r");
  k.a_h = req("a_h");
  k.x_h = req("x_h");
  k.x_r = req("x_r");
  k.epsilon = req("epsilon");
  k.kappa = req("kappa");
  k.gamma_r = optional(c, "gamma_r", 0.4);
  k.l_r = optional(c, "l_r", -0.9);
  k.water_density = optional(c, "water_density", 1025.0);

  const json empty = json::object();
  const json& a = root.contains("actuators") ? root.at("actuators") : empty;
  m.actuators.n_min = optional(a, "n_min", -1.0);
  m.actuators.n_max = optional(a, "n_max", 1.0);
  m.actuators.delta_max = optional(a, "delta_max", 35.0);
  m.actuators.delta_rate_max = optional(a, "delta_rate_max", 3.0);
  m.actuators.n_deadband = optional(a, "n_deadband", 1e-3);

  const json& in = root.contains("integrator") ? root.at("integrator") : empty;
  m.integrator.dt = optional(in, "dt", 1.0);
  m.integrator.substep = optional(in, "substep", 0.1);
  m.integrator.u_max = optional(in, "u_max", 20.0);
  m.integrator.r_max = optional(in, "r_max", 1.0);

  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return m;
}

json ship_model_to_json(const dynamics::ShipModel& m) {
  const auto& g = m.geometry;
  const auto& k = m.coeffs;
  json j;
  j["geometry"] = {{"length_pp", g.length_pp},         {"length_oa", g.length_oa},
                   {"breadth", g.breadth},             {"draft", g.draft},
                   {"block_coeff", g.block_coeff},     {"rudder_height", g.rudder_height},
                   {"rudder_area_ratio", g.rudder_area_ratio}, {"rudder_aspect", g.rudder_aspect},
                   {"prop_diameter", g.prop_diameter}, {"pitch_ratio", g.pitch_ratio},
                   {"expanded_area_ratio", g.expanded_area_ratio}};
  j["coefficients"] = {{"mass", k.mass},
                       {"added_mass_x", k.added_mass_x},
                       {"added_mass_y", k.added_mass_y},
                       {"inertia_z", k.inertia_z},
                       {"added_inertia_z", k.added_inertia_z},
                       {"x_uu", k.x_uu},
                       {"x_vr", k.x_vr},
                       {"y_v", k.y_v},
                       {"y_r", k.y_r},
                       {"y_vvv", k.y_vvv},
                       {"y_vvr", k.y_vvr},
                       {"y_vrr", k.y_vrr},
                       {"y_rrr", k.y_rrr},
                       {"n_v", k.n_v},
                       {"n_r", k.n_r},
                       {"n_vvv", k.n_vvv},
                       {"n_vvr", k.n_vvr},
                       {"n_vrr", k.n_vrr},
                       {"n_rrr", k.n_rrr},
                       {"wake_fraction", k.wake_fraction},
                       {"thrust_deduction", k.thrust_deduction},
                       {"kt0", k.kt0},
                       {"kt1", k.kt1},
                       {"kt2", k.kt2},
                       {"astern_efficiency", k.astern_efficiency},
                       {"t_r", k.t_r},
                       {"a_h", k.a_h},
                       {"x_h", k.x_h},
                       {"x_r", k.x_r},
                       {"epsilon", k.epsilon},
                       {"kappa", k.kappa},
                       {"gamma_r", k.gamma_r},
                       {"l_r", k.l_r},
                       {"water_density", k.water_density}};
  j["actuators"] = {{"n_min", m.actuators.n_min},
                    {"n_max", m.actuators.n_max},
                    {"delta_max", m.actuators.delta_max},
                    {"delta_rate_max", m.actuators.delta_rate_max},
                    {"n_deadband", m.actuators.n_deadband}};
  j["integrator"] = {{"dt", m.integrator.dt},
                     {"substep", m.integrator.substep},
                     {"u_max", m.integrator.u_max},
                     {"r_max", m.integrator.r_max}};
  return j;
}

json profile_defaults(const std::string& profile) {
  json j;
  j["env"] = {{"goal", {1.5, 1.5}},
              {"tolerance", 0.5},
              {"eta0", {7.0, 12.0}},
              {"xi0", {2.0, 9.0}},
              {"heading_perturbation_deg", 15.0},
              {"abort_box", {-2.0, 20.0}},
              {"initial_v", 0.0},
              {"initial_r", 0.0},
              {"early_stop", false}};
  j["ppo"] = {{"clip_epsilon", 0.2}, {"gamma", 0.99},         {"gae_lambda", 0.95},      {"epochs", 10},
              {"minibatch_size", 32}, {"value_coef", 0.5},    {"entropy_coef", 0.01},    {"learning_rate", 3e-4},
              {"adam_eps", 1e-5},     {"max_grad_norm", 0.5}, {"n_steps", 128},          {"bptt_len", 8}};
  j["run"] = {{"workers", 1}, {"checkpoint_every", 50}, {"eval_every", 50}, {"eval_starts", 10}, {"eval_seed", 777}};
  if (profile == "paper") {
    j["env"]["max_steps"] = 3000;
    j["env"]["dt"] = 1.0;
    j["agent"] = {{"history_len", 128}, {"hl_size", 64},        {"lstm_size", 256}, {"log_std_init", -0.5},
                  {"normalize_obs", true}, {"psi_sincos", true}, {"obs_clip", 10.0}};
    j["run"]["episodes"] = 3000;
  } else if (profile == "desk") {
    j["env"]["max_steps"] = 600;
    j["env"]["dt"] = 2.0;
    j["agent"] = {{"history_len", 8},     {"hl_size", 32},        {"lstm_size", 64}, {"log_std_init", -0.5},
                  {"normalize_obs", true}, {"psi_sincos", true}, {"obs_clip", 10.0}};
    // Tuned for short runs: the full profile's 128-step window does not learn
    // to brake within a desk budget.
    j["ppo"].update({{"n_steps", 2048},
                     {"minibatch_size", 64},
                     {"epochs", 4},
                     {"gamma", 0.995},
                     {"value_coef", 0.02},
                     {"entropy_coef", 0.0}});
    j["run"]["episodes"] = 2500;
    j["run"]["eval_every"] = 10;
  } else {
    throw ConfigError("unknown profile '" + profile + "' (expected 'desk' or 'paper')");
  }
  return j;
}

json RunConfig::to_json() const {
  json j = ship_model_to_json(ship);
  j["profile"] = profile;
  j["seed"] = seed;
  const auto& e = env;
  j["env"] = {{"goal", {e.goal.g_x, e.goal.g_y}},
              {"tolerance", e.goal.tolerance},
              {"eta0", {e.episode.eta0.lo, e.episode.eta0.hi}},
              {"xi0", {e.episode.xi0.lo, e.episode.xi0.hi}},
              {"heading_perturbation_deg", e.episode.heading_perturbation_deg},
              {"abort_box", {e.episode.abort_box.lo, e.episode.abort_box.hi}},
              {"max_steps", e.episode.max_steps},
              {"dt", ship.integrator.dt},
              {"initial_u", e.episode.initial_u ? json(*e.episode.initial_u) : json(nullptr)},
              {"initial_v", e.episode.initial_v},
              {"initial_r", e.episode.initial_r},
              {"initial_n", e.episode.initial_n ? json(*e.episode.initial_n) : json(nullptr)},
              {"early_stop", e.episode.early_stop}};
  j["agent"] = {{"history_len", agent.history_len},     {"hl_size", agent.hl_size},
                {"lstm_size", agent.lstm_size},         {"log_std_init", agent.log_std_init},
                {"normalize_obs", agent.normalize_obs}, {"psi_sincos", agent.psi_sincos},
                {"obs_clip", agent.obs_clip}};
  j["ppo"] = {{"clip_epsilon", ppo.clip_epsilon},     {"gamma", ppo.gamma},
              {"gae_lambda", ppo.gae_lambda},         {"epochs", ppo.epochs},
              {"minibatch_size", ppo.minibatch_size}, {"value_coef", ppo.value_coef},
              {"entropy_coef", ppo.entropy_coef},     {"learning_rate", ppo.learning_rate},
              {"adam_eps", ppo.adam_eps},             {"max_grad_norm", ppo.max_grad_norm},
              {"n_steps", ppo.n_steps},               {"bptt_len", ppo.bptt_len}};
  j["run"] = {{"episodes", run.episodes},       {"workers", run.workers},
              {"checkpoint_every", run.checkpoint_every}, {"eval_every", run.eval_every},
              {"eval_starts", run.eval_starts}, {"eval_seed", run.eval_seed}};
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    c.profile = optional<std::string>(j, "profile", "desk");
    c.seed = optional<std::uint64_t>(j, "seed", 0);
    c.ship = parse_ship_model(j);

    const json& e = section(j, "env");
    if (e.contains("goal")) {
      const auto& g = e.at("goal");
      if (!g.is_array() || g.size() != 2) {
        throw ConfigError("key 'env.goal' must be a two-element array");
      }
      c.env.goal.g_x = g[0].get<double>();
      c.env.goal.g_y = g[1].get<double>();
    }
    c.env.goal.tolerance = optional(e, "tolerance", 0.5);
    c.env.episode.eta0 = parse_range(e, "eta0", c.env.episode.eta0);
    c.env.episode.xi0 = parse_range(e, "xi0", c.env.episode.xi0);
    c.env.episode.heading_perturbation_deg = optional(e, "heading_perturbation_deg", 15.0);
    c.env.episode.abort_box = parse_range(e, "abort_box", c.env.episode.abort_box);
    c.env.episode.max_steps = optional(e, "max_steps", 3000);
    c.ship.integrator.dt = optional(e, "dt", c.ship.integrator.dt);
    if (e.contains("initial_u") && !e.at("initial_u").is_null()) {
      c.env.episode.initial_u = e.at("initial_u").get<double>();
    }
    c.env.episode.initial_v = optional(e, "initial_v", 0.0);
    c.env.episode.initial_r = optional(e, "initial_r", 0.0);
    if (e.contains("initial_n") && !e.at("initial_n").is_null()) {
      c.env.episode.initial_n = e.at("initial_n").get<double>();
    }
    c.env.episode.early_stop = optional(e, "early_stop", false);

    const json& a = section(j, "agent");
    c.agent.history_len = optional(a, "history_len", c.agent.history_len);
    c.agent.hl_size = optional(a, "hl_size", c.agent.hl_size);
    c.agent.lstm_size = optional(a, "lstm_size", c.agent.lstm_size);
    c.agent.log_std_init = optional(a, "log_std_init", c.agent.log_std_init);
    c.agent.normalize_obs = optional(a, "normalize_obs", c.agent.normalize_obs);
    c.agent.psi_sincos = optional(a, "psi_sincos", c.agent.psi_sincos);
    c.agent.obs_clip = optional(a, "obs_clip", c.agent.obs_clip);

    const json& p = section(j, "ppo");
    auto& t = c.ppo;
    t.clip_epsilon = optional(p, "clip_epsilon", t.clip_epsilon);
    t.gamma = optional(p, "gamma", t.gamma);
    t.gae_lambda = optional(p, "gae_lambda", t.gae_lambda);
    t.epochs = optional(p, "epochs", t.epochs);
    t.minibatch_size = optional(p, "minibatch_size", t.minibatch_size);
    t.value_coef = optional(p, "value_coef", t.value_coef);
    t.entropy_coef = optional(p, "entropy_coef", t.entropy_coef);
    t.learning_rate = optional(p, "learning_rate", t.learning_rate);
    t.adam_eps = optional(p, "adam_eps", t.adam_eps);
    t.max_grad_norm = optional(p, "max_grad_norm", t.max_grad_norm);
    t.n_steps = optional(p, "n_steps", t.n_steps);
    t.bptt_len = optional(p, "bptt_len", t.bptt_len);

    const json& r = section(j, "run");
    c.run.episodes = optional<std::int64_t>(r, "episodes", c.run.episodes);
    c.run.workers = optional(r, "workers", c.run.workers);
    c.run.checkpoint_every = optional(r, "checkpoint_every", c.run.checkpoint_every);
    c.run.eval_every = optional(r, "eval_every", c.run.eval_every);
    c.run.eval_starts = optional(r, "eval_starts", c.run.eval_starts);
    c.run.eval_seed = optional<std::uint64_t>(r, "eval_seed", c.run.eval_seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

agent::ActionBounds RunConfig::action_bounds() const {
  return {ship.actuators.delta_max, ship.actuators.n_min, ship.actuators.n_max};
}

void RunConfig::validate() const {
  try {
    ship.validate();
    env.validate();
    agent.validate();
    ppo.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (run.episodes < 1 || run.workers < 1 || run.checkpoint_every < 1 || run.eval_every < 0 ||
      run.eval_starts < 0) {
    throw ConfigError("run: episodes, workers and checkpoint_every must be >= 1");
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file '" + path.string() + "'");
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse '" + path.string() + "': " + e.what());
  }
}

RunConfig resolve_config(const json& user, const std::string& profile_override) {
  std::string profile = profile_override;
  if (profile.empty()) {
    profile = user.contains("profile") ? user.at("profile").get<std::string>() : "desk";
  }
  json merged = profile_defaults(profile);
  merged.merge_patch(user);
  merged["profile"] = profile;
  return RunConfig::from_json(merged);
}

RunConfig load_config(const std::filesystem::path& path, const std::string& profile_override) {
  return resolve_config(read_json_file(path), profile_override);
}

}  // namespace berth::harness
