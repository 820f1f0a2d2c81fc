#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "berth/dynamics.hpp"
#include "berth/rng.hpp"

// Berthing MDP: positions normalized by ship length, goal circle, reward
// shaping and episode control around the 3-DOF dynamics.

namespace berth::env {

class EpisodeFinished : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class AtGoalSingularity : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

using Action = dynamics::Command;

struct Observation {
  double eta = 0.0;  // x / L
  double xi = 0.0;   // y / L
  double d = 0.0;    // distance to goal, ship lengths
  double psi = 0.0;  // rad, wrapped to (-pi, pi]
  double u = 0.0;
  double v = 0.0;
  double r = 0.0;

  bool operator==(const Observation&) const = default;
};

struct Goal {
  double g_x = 1.5;
  double g_y = 1.5;
  double tolerance = 0.5;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

struct EpisodeConfig {
  int max_steps = 3000;
  Range eta0{7.0, 12.0};
  Range xi0{2.0, 9.0};
  double heading_perturbation_deg = 15.0;
  Range abort_box{-2.0, 20.0};
  std::optional<double> initial_u;  // default: self-propulsion speed at initial_n
  double initial_v = 0.0;
  double initial_r = 0.0;
  std::optional<double> initial_n;  // default: n_max
  bool early_stop = false;
};

struct EnvConfig {
  Goal goal;
  EpisodeConfig episode;

  void validate() const;
};

std::pair<double, double> normalize_position(double x, double y, double length);
double distance_to_goal(double eta, double xi, const Goal& goal);

// Bearing from (eta, xi) to the goal, radians in the heading convention.
double bearing_to_goal(double eta, double xi, const Goal& goal);

// Wraps an angle in degrees into (-180, 180]; -180 maps to +180.
double wrap_degrees(double deg);
double wrap_radians(double rad);

// Bearing-to-goal minus heading, degrees in (-180, 180]. Throws at d == 0.
double local_heading_error(const dynamics::RigidState& state, const Goal& goal, double length);

// Reward shaping for one step; delta in degrees, u in m/s.
double reward(double d, double psi_prime_deg, double delta_deg, double u, double tolerance);

dynamics::RigidState sample_initial_state(const EnvConfig& cfg, double length, double initial_u, Rng& rng);

Observation make_observation(const dynamics::RigidState& state, const Goal& goal, double length);

struct StepInfo {
  double d = 0.0;
  double psi_prime_deg = 0.0;
  double delta_actual = 0.0;
  double n_actual = 0.0;
  bool success = false;        // d <= tolerance after the step
  bool aborted = false;        // left the abort box
  bool diverged = false;       // integrator blow-up; state frozen at the last good value
  bool at_goal_singularity = false;
  bool truncated = false;      // max_steps reached
  std::string cause;
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

class BerthingEnv {
 public:
  BerthingEnv(dynamics::ShipModel model, EnvConfig config);

  Observation reset(Rng& rng);
  Observation reset_to(const dynamics::RigidState& start);
  StepResult step(const Action& action);

  Action clamp_action(const Action& action) const;

  // (eta0, xi0, psi0 in degrees) -> rigid state at the configured initial speed.
  dynamics::RigidState start_state(double eta0, double xi0, double psi0_deg) const;

  const dynamics::RigidState& state() const { return state_; }
  const dynamics::ActuatorState& actuators() const { return actuators_; }
  const dynamics::ShipModel& model() const { return model_; }
  const EnvConfig& config() const { return config_; }
  int steps() const { return steps_; }
  bool done() const { return done_; }
  double dt() const { return model_.integrator.dt; }
  double initial_speed() const { return initial_u_; }
  double length() const { return model_.geometry.length_pp; }

 private:
  dynamics::ShipModel model_;
  EnvConfig config_;
  double initial_u_ = 0.0;
  double initial_n_ = 0.0;
  dynamics::RigidState state_;
  dynamics::ActuatorState actuators_;
  int steps_ = 0;
  bool done_ = true;
};

}  // namespace berth::env
