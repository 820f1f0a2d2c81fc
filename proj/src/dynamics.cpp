#include "berth/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace berth::dynamics {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void require(bool ok, const std::string& what) {
  if (!ok) {
    throw std::invalid_argument(what);
  }
}

bool all_finite(std::initializer_list<double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

void ShipGeometry::validate() const {
  require(length_pp > 0 && length_oa > 0 && breadth > 0 && draft > 0, "geometry: hull dimensions must be positive");
  require(block_coeff > 0 && block_coeff < 1, "geometry: block_coeff must lie in (0, 1)");
  require(rudder_height > 0 && rudder_aspect > 0, "geometry: rudder dimensions must be positive");
  require(rudder_area_ratio > 0 && rudder_area_ratio < 1, "geometry: rudder_area_ratio must lie in (0, 1)");
  require(prop_diameter > 0 && pitch_ratio > 0 && expanded_area_ratio > 0,
          "geometry: propeller dimensions must be positive");
}

void HydroCoeffs::validate() const {
  require(mass > 0 && inertia_z > 0, "coefficients: mass and inertia_z must be positive");
  require(added_mass_x >= 0 && added_mass_y >= 0 && added_inertia_z >= 0,
          "coefficients: added masses must be non-negative");
  require(wake_fraction >= 0 && wake_fraction < 1, "coefficients: wake_fraction must lie in [0, 1)");
  require(thrust_deduction >= 0 && thrust_deduction < 1, "coefficients: thrust_deduction must lie in [0, 1)");
  require(t_r >= 0 && t_r < 1, "coefficients: t_r must lie in [0, 1)");
  require(kt0 > 0, "coefficients: K_T(0) must be positive");
  require(astern_efficiency >= 0, "coefficients: astern_efficiency must be non-negative");
  require(water_density > 0, "coefficients: water_density must be positive");
  require(epsilon > 0 && kappa >= 0 && gamma_r >= 0, "coefficients: rudder inflow factors out of range");
}

double HydroCoeffs::advance_ratio_max() const {
  // K_T(J) = kt0 + kt1 J + kt2 J^2 with kt0 > 0: smallest positive root, if any.
  if (kt2 == 0.0) {
    return kt1 < 0.0 ? -kt0 / kt1 : std::numeric_limits<double>::infinity();
  }
  const double disc = kt1 * kt1 - 4.0 * kt2 * kt0;
  if (disc < 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  const double s = std::sqrt(disc);
  double best = std::numeric_limits<double>::infinity();
  for (double root : {(-kt1 - s) / (2.0 * kt2), (-kt1 + s) / (2.0 * kt2)}) {
    if (root > 0.0) {
      best = std::min(best, root);
    }
  }
  return best;
}

void ActuatorLimits::validate() const {
  require(n_min <= n_max, "actuators: n_min must not exceed n_max");
  require(delta_max > 0 && delta_rate_max > 0, "actuators: rudder limits must be positive");
  require(n_deadband >= 0, "actuators: n_deadband must be non-negative");
}

void IntegratorSettings::validate() const {
  require(dt > 0 && substep > 0, "integrator: dt and substep must be positive");
  require(u_max > 0 && r_max > 0, "integrator: sanity bounds must be positive");
  (void)substeps_per_step();
}

int IntegratorSettings::substeps_per_step() const {
  const double ratio = dt / substep;
  const double k = std::round(ratio);
  require(k >= 1 && std::abs(ratio - k) <= 1e-9 * ratio, "integrator: dt must be an integer multiple of substep");
  return static_cast<int>(k);
}

void ShipModel::validate() const {
  geometry.validate();
  coeffs.validate();
  actuators.validate();
  integrator.validate();
}

double rate_limit_rudder(double delta_actual, double delta_cmd, double dt, double rate_max, double delta_max) {
  require(all_finite({delta_actual, delta_cmd, dt, rate_max, delta_max}), "rate_limit_rudder: non-finite input");
  require(dt > 0, "rate_limit_rudder: dt must be positive");
  const double step = rate_max * dt;
  const double next = delta_actual + std::clamp(delta_cmd - delta_actual, -step, step);
  return std::clamp(next, -delta_max, delta_max);
}

double propeller_surge_force(double u, double n, const ShipGeometry& geom, const HydroCoeffs& coeffs,
                             double deadband) {
  require(all_finite({u, n}), "propeller_surge_force: non-finite input");
  const double d4 = std::pow(geom.prop_diameter, 4);
  const double rho = coeffs.water_density;
  if (std::abs(n) <= deadband) {
    return 0.0;
  }
  if (n < 0.0) {
    return -coeffs.astern_efficiency * rho * n * n * d4 * coeffs.kt0;
  }
  const double j = std::clamp((1.0 - coeffs.wake_fraction) * u / (n * geom.prop_diameter), 0.0,
                              coeffs.advance_ratio_max());
  return (1.0 - coeffs.thrust_deduction) * rho * n * n * d4 * coeffs.thrust_coefficient(j);
}

Forces hull_forces(const RigidState& s, const ShipGeometry& geom, const HydroCoeffs& c) {
  const double L = geom.length_pp;
  const double q = 0.5 * c.water_density * L * geom.draft;
  const double rl = s.r * L;
  // Reference speed includes a yaw contribution so the model stays bounded at rest.
  const double speed = std::sqrt(s.u * s.u + s.v * s.v + 0.25 * rl * rl);

  double y_cubic = 0.0;
  double n_cubic = 0.0;
  if (speed > 0.0) {
    const double vvv = s.v * s.v * s.v;
    const double vvr = s.v * s.v * rl;
    const double vrr = s.v * rl * rl;
    const double rrr = rl * rl * rl;
    y_cubic = (c.y_vvv * vvv + c.y_vvr * vvr + c.y_vrr * vrr + c.y_rrr * rrr) / speed;
    n_cubic = (c.n_vvv * vvv + c.n_vvr * vvr + c.n_vrr * vrr + c.n_rrr * rrr) / speed;
  }

  Forces f;
  f.x = q * (c.x_uu * s.u * std::abs(s.u) + c.x_vr * s.v * rl);
  f.y = q * (c.y_v * s.v * speed + c.y_r * rl * speed + y_cubic);
  f.n = q * L * (c.n_v * s.v * speed + c.n_r * rl * speed + n_cubic);
  return f;
}

Forces rudder_forces(const RigidState& s, const ActuatorState& act, const ShipGeometry& geom,
                     const HydroCoeffs& c, double deadband) {
  const double L = geom.length_pp;
  const double dp = geom.prop_diameter;
  const double prop_inflow = std::max((1.0 - c.wake_fraction) * s.u, 0.0);

  // Slipstream-accelerated inflow (momentum theory), written without 1/J.
  double slip = prop_inflow;
  if (act.n > deadband) {
    const double j = std::clamp(prop_inflow / (act.n * dp), 0.0, c.advance_ratio_max());
    const double kt = c.thrust_coefficient(j);
    const double jet = std::sqrt(prop_inflow * prop_inflow + 8.0 * kt * act.n * act.n * dp * dp / std::numbers::pi);
    slip = prop_inflow + c.kappa * (jet - prop_inflow);
  }
  const double eta = std::min(dp / geom.rudder_height, 1.0);
  const double u_r = c.epsilon * std::sqrt(eta * slip * slip + (1.0 - eta) * prop_inflow * prop_inflow);
  const double v_r = -c.gamma_r * (s.v + c.l_r * L * s.r);

  const double delta = act.delta * kDegToRad;
  const double attack = delta - std::atan2(v_r, u_r);
  const double normal = 0.5 * c.water_density * geom.rudder_area() * geom.rudder_lift_gradient() *
                        (u_r * u_r + v_r * v_r) * std::sin(attack);

  Forces f;
  f.x = -(1.0 - c.t_r) * normal * std::sin(delta);
  f.y = -(1.0 + c.a_h) * normal * std::cos(delta);
  f.n = -(c.x_r + c.a_h * c.x_h) * L * normal * std::cos(delta);
  return f;
}

Forces hull_and_rudder_forces(const RigidState& state, const ActuatorState& act, const ShipGeometry& geom,
                              const HydroCoeffs& coeffs, double deadband) {
  require(all_finite({state.x, state.y, state.psi, state.u, state.v, state.r, act.delta, act.n}),
          "hull_and_rudder_forces: non-finite input");
  const Forces h = hull_forces(state, geom, coeffs);
  const Forces r = rudder_forces(state, act, geom, coeffs, deadband);
  return {h.x + r.x, h.y + r.y, h.n + r.n};
}

RigidState state_derivative(const RigidState& s, const ActuatorState& act, const ShipModel& model) {
  const auto& c = model.coeffs;
  const Forces hr = hull_and_rudder_forces(s, act, model.geometry, c, model.actuators.n_deadband);
  const double x_total = hr.x + propeller_surge_force(s.u, act.n, model.geometry, c, model.actuators.n_deadband);

  const double m_surge = c.mass + c.added_mass_x;
  const double m_sway = c.mass + c.added_mass_y;

  RigidState d;
  const double cos_psi = std::cos(s.psi);
  const double sin_psi = std::sin(s.psi);
  d.x = s.u * cos_psi - s.v * sin_psi;
  d.y = s.u * sin_psi + s.v * cos_psi;
  d.psi = s.r;
  d.u = (x_total + m_sway * s.v * s.r) / m_surge;
  d.v = (hr.y - m_surge * s.u * s.r) / m_sway;
  d.r = hr.n / (c.inertia_z + c.added_inertia_z);
  return d;
}

namespace {

RigidState axpy(const RigidState& s, double h, const RigidState& d) {
  return {s.x + h * d.x, s.y + h * d.y, s.psi + h * d.psi, s.u + h * d.u, s.v + h * d.v, s.r + h * d.r};
}

RigidState rk4(const RigidState& s, const ActuatorState& act, const ShipModel& model, double h) {
  const RigidState k1 = state_derivative(s, act, model);
  const RigidState k2 = state_derivative(axpy(s, 0.5 * h, k1), act, model);
  const RigidState k3 = state_derivative(axpy(s, 0.5 * h, k2), act, model);
  const RigidState k4 = state_derivative(axpy(s, h, k3), act, model);
  const double w = h / 6.0;
  return {s.x + w * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
          s.y + w * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
          s.psi + w * (k1.psi + 2.0 * k2.psi + 2.0 * k3.psi + k4.psi),
          s.u + w * (k1.u + 2.0 * k2.u + 2.0 * k3.u + k4.u),
          s.v + w * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
          s.r + w * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r)};
}

}  // namespace

void check_sanity(const RigidState& s, const IntegratorSettings& settings) {
  if (!all_finite({s.x, s.y, s.psi, s.u, s.v, s.r})) {
    throw IntegratorDiverged("non-finite state component");
  }
  if (std::abs(s.u) > settings.u_max || std::abs(s.v) > settings.u_max) {
    throw IntegratorDiverged("velocity exceeds sanity bound: u=" + std::to_string(s.u) +
                             " v=" + std::to_string(s.v));
  }
  if (std::abs(s.r) > settings.r_max) {
    throw IntegratorDiverged("yaw rate exceeds sanity bound: r=" + std::to_string(s.r));
  }
}

std::pair<RigidState, ActuatorState> step_dynamics(const RigidState& state, const ActuatorState& act,
                                                   const Command& cmd, double dt, const ShipModel& model) {
  require(all_finite({cmd.delta_cmd, cmd.n_cmd, dt}), "step_dynamics: non-finite command");
  require(dt > 0, "step_dynamics: dt must be positive");
  const auto& lim = model.actuators;

  IntegratorSettings settings = model.integrator;
  settings.dt = dt;
  const int substeps = settings.substeps_per_step();
  const double h = dt / substeps;

  ActuatorState next_act;
  next_act.delta = rate_limit_rudder(act.delta, std::clamp(cmd.delta_cmd, -lim.delta_max, lim.delta_max), dt,
                                     lim.delta_rate_max, lim.delta_max);
  next_act.n = std::clamp(cmd.n_cmd, lim.n_min, lim.n_max);

  RigidState s = state;
  for (int k = 0; k < substeps; ++k) {
    s = rk4(s, next_act, model, h);
    check_sanity(s, settings);
  }
  return {s, next_act};
}

double self_propulsion_speed(const ShipModel& model, double n) {
  const auto& c = model.coeffs;
  const auto balance = [&](double u) {
    return propeller_surge_force(u, n, model.geometry, c, model.actuators.n_deadband) +
           hull_forces({0, 0, 0, u, 0, 0}, model.geometry, c).x;
  };
  if (balance(0.0) <= 0.0) {
    return 0.0;
  }
  double lo = 0.0;
  double hi = model.integrator.u_max;
  if (balance(hi) > 0.0) {
    throw std::domain_error("self_propulsion_speed: no equilibrium below u_max");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    (balance(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace berth::dynamics
