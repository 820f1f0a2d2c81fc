#pragma once

#include <stdexcept>
#include <string>
#include <utility>

// 3-DOF (surge, sway, yaw) maneuvering model.
//
// Frames: global x/y in meters, heading psi in radians measured from +x
// toward +y (marine NED: x north, y east, clockwise seen from above).
// Body frame: u forward, v to starboard, r positive turning to starboard.
// Rudder angle delta is in degrees, propeller rate n in RPS.

namespace berth::dynamics {

class IntegratorDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ShipGeometry {
  double length_pp = 175.0;
  double length_oa = 188.0;
  double breadth = 25.4;
  double draft = 8.5;
  double block_coeff = 0.559;
  double rudder_height = 7.7;
  double rudder_area_ratio = 1.0 / 45.8;
  double rudder_aspect = 1.827;
  double prop_diameter = 6.5;
  double pitch_ratio = 1.055;
  double expanded_area_ratio = 0.73;

  void validate() const;

  double rudder_area() const { return rudder_area_ratio * length_pp * draft; }
  // Fujii's lift-gradient coefficient for the rudder normal force.
  double rudder_lift_gradient() const { return 6.13 * rudder_aspect / (rudder_aspect + 2.25); }
  double displacement_mass(double rho) const {
    return rho * length_pp * breadth * draft * block_coeff;
  }
};

// Hull derivatives are nondimensionalized MMG-style: forces by 0.5*rho*L*d*U^2,
// moments by 0.5*rho*L^2*d*U^2, with v' = v/U and r' = r*L/U. Longitudinal
// positions x_h, x_r, l_r are fractions of L (negative aft).
struct HydroCoeffs {
  double mass = 0.0;
  double added_mass_x = 0.0;
  double added_mass_y = 0.0;
  double inertia_z = 0.0;
  double added_inertia_z = 0.0;

  double x_uu = 0.0, x_vr = 0.0;
  double y_v = 0.0, y_r = 0.0, y_vvv = 0.0, y_vvr = 0.0, y_vrr = 0.0, y_rrr = 0.0;
  double n_v = 0.0, n_r = 0.0, n_vvv = 0.0, n_vvr = 0.0, n_vrr = 0.0, n_rrr = 0.0;

  double wake_fraction = 0.0;
  double thrust_deduction = 0.0;
  double kt0 = 0.0, kt1 = 0.0, kt2 = 0.0;
  double astern_efficiency = 0.7;

  double t_r = 0.0;
  double a_h = 0.0;
  double x_h = 0.0;
  double x_r = -0.5;
  double epsilon = 1.0;
  double kappa = 0.5;
  double gamma_r = 0.4;
  double l_r = -0.9;

  double water_density = 1025.0;

  void validate() const;

  double thrust_coefficient(double advance_ratio) const {
    return kt0 + advance_ratio * (kt1 + advance_ratio * kt2);
  }
  // Upper end of the advance-ratio range where K_T(J) >= 0 (first positive root).
  double advance_ratio_max() const;
};

struct ActuatorLimits {
  double n_min = -1.0;
  double n_max = 1.0;
  double delta_max = 35.0;       // deg
  double delta_rate_max = 3.0;   // deg/s
  double n_deadband = 1e-3;      // RPS

  void validate() const;
};

struct IntegratorSettings {
  double dt = 1.0;       // control step, s
  double substep = 0.1;  // RK4 step, s
  double u_max = 20.0;   // sanity bound on |u| and |v|, m/s
  double r_max = 1.0;    // sanity bound on |r|, rad/s

  void validate() const;
  int substeps_per_step() const;
};

struct ShipModel {
  ShipGeometry geometry;
  HydroCoeffs coeffs;
  ActuatorLimits actuators;
  IntegratorSettings integrator;

  void validate() const;
};

struct RigidState {
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double u = 0.0;
  double v = 0.0;
  double r = 0.0;

  bool operator==(const RigidState&) const = default;
};

struct ActuatorState {
  double delta = 0.0;  // deg
  double n = 0.0;      // RPS

  bool operator==(const ActuatorState&) const = default;
};

// Commanded rudder angle (deg) and propeller rate (RPS).
struct Command {
  double delta_cmd = 0.0;
  double n_cmd = 0.0;

  bool operator==(const Command&) const = default;
};

struct Forces {
  double x = 0.0;  // N
  double y = 0.0;  // N
  double n = 0.0;  // N*m
};

double rate_limit_rudder(double delta_actual, double delta_cmd, double dt,
                         double rate_max = 3.0, double delta_max = 35.0);

// Longitudinal propeller force. Dead band |n| <= deadband gives zero; astern
// uses a J-free quadratic with the configured astern efficiency.
double propeller_surge_force(double u, double n, const ShipGeometry& geom, const HydroCoeffs& coeffs,
                             double deadband = 1e-3);

Forces hull_forces(const RigidState& state, const ShipGeometry& geom, const HydroCoeffs& coeffs);
Forces rudder_forces(const RigidState& state, const ActuatorState& act, const ShipGeometry& geom,
                     const HydroCoeffs& coeffs, double deadband = 1e-3);
Forces hull_and_rudder_forces(const RigidState& state, const ActuatorState& act,
                              const ShipGeometry& geom, const HydroCoeffs& coeffs,
                              double deadband = 1e-3);

// Time derivative of the full state (x, y, psi, u, v, r) at fixed actuators.
RigidState state_derivative(const RigidState& state, const ActuatorState& act, const ShipModel& model);

// Advance one control step of length dt (a multiple of the configured substep).
std::pair<RigidState, ActuatorState> step_dynamics(const RigidState& state, const ActuatorState& act,
                                                   const Command& cmd, double dt, const ShipModel& model);

// Straight-run speed where propeller thrust balances hull resistance at rate n.
double self_propulsion_speed(const ShipModel& model, double n);

void check_sanity(const RigidState& state, const IntegratorSettings& settings);

}  // namespace berth::dynamics
