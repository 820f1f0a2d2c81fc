#include "berth/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace berth::env {
namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

void EnvConfig::validate() const {
  if (!(goal.tolerance > 0.0)) {
    throw std::invalid_argument("env: tolerance must be positive");
  }
  if (episode.max_steps < 1) {
    throw std::invalid_argument("env: max_steps must be >= 1");
  }
  if (!(episode.eta0.lo <= episode.eta0.hi) || !(episode.xi0.lo <= episode.xi0.hi)) {
    throw std::invalid_argument("env: initial position ranges must be non-empty");
  }
  if (!(episode.heading_perturbation_deg >= 0.0)) {
    throw std::invalid_argument("env: heading perturbation must be non-negative");
  }
  if (!(episode.abort_box.lo < episode.abort_box.hi)) {
    throw std::invalid_argument("env: abort box must be non-empty");
  }
}

std::pair<double, double> normalize_position(double x, double y, double length) {
  if (!(length > 0.0)) {
    throw std::invalid_argument("normalize_position: length must be positive");
  }
  return {x / length, y / length};
}

double distance_to_goal(double eta, double xi, const Goal& goal) {
  return std::hypot(goal.g_x - eta, goal.g_y - xi);
}

double bearing_to_goal(double eta, double xi, const Goal& goal) {
  return std::atan2(goal.g_y - xi, goal.g_x - eta);
}

double wrap_degrees(double deg) {
  double w = std::fmod(deg, 360.0);
  if (w <= -180.0) {
    w += 360.0;
  } else if (w > 180.0) {
    w -= 360.0;
  }
  return w;
}

double wrap_radians(double rad) {
  const double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(rad, two_pi);
  if (w <= -std::numbers::pi) {
    w += two_pi;
  } else if (w > std::numbers::pi) {
    w -= two_pi;
  }
  return w;
}

double local_heading_error(const dynamics::RigidState& state, const Goal& goal, double length) {
  const auto [eta, xi] = normalize_position(state.x, state.y, length);
  if (distance_to_goal(eta, xi, goal) == 0.0) {
    throw AtGoalSingularity("local heading error undefined at the goal point");
  }
  return wrap_degrees((bearing_to_goal(eta, xi, goal) - state.psi) * kRadToDeg);
}

double reward(double d, double psi_prime_deg, double delta_deg, double u, double tolerance) {
  double r = 0.0;
  if (d <= tolerance) {
    r += 10.0;
    if (psi_prime_deg >= -15.0 && psi_prime_deg <= 15.0) {
      r += 2.0;
    }
  }
  r -= std::abs(delta_deg) / 500.0;
  if (u < 0.0) {
    r += u / 10.0;
  }
  return r / 10.0;
}

dynamics::RigidState sample_initial_state(const EnvConfig& cfg, double length, double initial_u, Rng& rng) {
  const auto& ep = cfg.episode;
  const double eta0 = rng.uniform(ep.eta0.lo, ep.eta0.hi);
  const double xi0 = rng.uniform(ep.xi0.lo, ep.xi0.hi);
  const double perturb = rng.uniform(-ep.heading_perturbation_deg, ep.heading_perturbation_deg);
  dynamics::RigidState s;
  s.x = eta0 * length;
  s.y = xi0 * length;
  s.psi = bearing_to_goal(eta0, xi0, cfg.goal) + perturb * kDegToRad;
  s.u = initial_u;
  s.v = ep.initial_v;
  s.r = ep.initial_r;
  return s;
}

Observation make_observation(const dynamics::RigidState& state, const Goal& goal, double length) {
  Observation o;
  std::tie(o.eta, o.xi) = normalize_position(state.x, state.y, length);
  o.d = distance_to_goal(o.eta, o.xi, goal);
  o.psi = wrap_radians(state.psi);
  o.u = state.u;
  o.v = state.v;
  o.r = state.r;
  return o;
}

BerthingEnv::BerthingEnv(dynamics::ShipModel model, EnvConfig config)
    : model_(std::move(model)), config_(std::move(config)) {
  model_.validate();
  config_.validate();
  initial_n_ = std::clamp(config_.episode.initial_n.value_or(model_.actuators.n_max), model_.actuators.n_min,
                          model_.actuators.n_max);
  initial_u_ = config_.episode.initial_u ? *config_.episode.initial_u
                                         : dynamics::self_propulsion_speed(model_, initial_n_);
}

Observation BerthingEnv::reset(Rng& rng) {
  return reset_to(sample_initial_state(config_, length(), initial_u_, rng));
}

Observation BerthingEnv::reset_to(const dynamics::RigidState& start) {
  dynamics::check_sanity(start, model_.integrator);
  state_ = start;
  actuators_ = {0.0, initial_n_};
  steps_ = 0;
  done_ = false;
  return make_observation(state_, config_.goal, length());
}

dynamics::RigidState BerthingEnv::start_state(double eta0, double xi0, double psi0_deg) const {
  dynamics::RigidState s;
  s.x = eta0 * length();
  s.y = xi0 * length();
  s.psi = psi0_deg * kDegToRad;
  s.u = initial_u_;
  s.v = config_.episode.initial_v;
  s.r = config_.episode.initial_r;
  return s;
}

Action BerthingEnv::clamp_action(const Action& action) const {
  if (!std::isfinite(action.delta_cmd) || !std::isfinite(action.n_cmd)) {
    throw std::invalid_argument("clamp_action: non-finite action");
  }
  const auto& lim = model_.actuators;
  return {std::clamp(action.delta_cmd, -lim.delta_max, lim.delta_max), std::clamp(action.n_cmd, lim.n_min, lim.n_max)};
}

StepResult BerthingEnv::step(const Action& action) {
  if (done_) {
    throw EpisodeFinished("step called on a finished episode; call reset first");
  }
  const Action cmd = clamp_action(action);
  StepResult out;
  try {
    std::tie(state_, actuators_) = dynamics::step_dynamics(state_, actuators_, cmd, dt(), model_);
  } catch (const dynamics::IntegratorDiverged& e) {
    out.info.diverged = true;
    out.info.cause = e.what();
  }
  ++steps_;

  out.obs = make_observation(state_, config_.goal, length());
  auto& info = out.info;
  info.d = out.obs.d;
  info.delta_actual = actuators_.delta;
  info.n_actual = actuators_.n;
  if (info.d == 0.0) {
    info.at_goal_singularity = true;
    info.psi_prime_deg = 0.0;
  } else {
    info.psi_prime_deg = local_heading_error(state_, config_.goal, length());
  }
  info.success = info.d <= config_.goal.tolerance;

  const auto& box = config_.episode.abort_box;
  info.aborted = !box.contains(out.obs.eta) || !box.contains(out.obs.xi);
  if (info.aborted && info.cause.empty()) {
    info.cause = "left abort box";
  }
  info.truncated = steps_ >= config_.episode.max_steps;

  if (!info.diverged) {
    out.reward = reward(info.d, info.psi_prime_deg, info.delta_actual, state_.u, config_.goal.tolerance);
  }
  out.done = info.truncated || info.aborted || info.diverged || (config_.episode.early_stop && info.success);
  done_ = out.done;
  return out;
}

}  // namespace berth::env
