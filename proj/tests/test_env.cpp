#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "berth/env.hpp"
#include "test_support.hpp"

using namespace berth;
using namespace berth::env;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

// Asymptotic Kolmogorov distribution tail, P(K > lambda).
double kolmogorov_p(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  }
  return std::clamp(p, 0.0, 1.0);
}

// Rotate the ship in small increments until the bow ray passes through the
// goal, then refine by bisection on the cross product. Returns degrees.
double rotation_search(double x, double y, double psi, double gx, double gy) {
  const auto cross = [&](double theta) {
    const double h = psi + theta * kDeg;
    return std::cos(h) * (gy - y) - std::sin(h) * (gx - x);
  };
  const auto ahead = [&](double theta) {
    const double h = psi + theta * kDeg;
    return std::cos(h) * (gx - x) + std::sin(h) * (gy - y) > 0.0;
  };
  const double step = 0.25;
  for (double theta = -180.0; theta < 180.0; theta += step) {
    const double a = cross(theta), b = cross(theta + step);
    if ((a <= 0.0 && b >= 0.0) || (a >= 0.0 && b <= 0.0)) {
      double lo = theta, hi = theta + step;
      for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        ((cross(lo) <= 0.0) == (cross(mid) <= 0.0) ? lo : hi) = mid;
      }
      const double root = 0.5 * (lo + hi);
      if (ahead(root)) {
        return root;
      }
    }
  }
  return NAN;
}

// Direct transcription of the reward algorithm, kept deliberately literal.
double reward_oracle(double d, double psi_prime, double delta, double u, double tol) {
  double r = 0;
  if (d <= tol) {
    r = r + 10;
    if (-15 <= psi_prime && psi_prime <= 15) {
      r = r + 2;
    }
  }
  r = r - std::abs(delta) / 500;
  if (u < 0) {
    r = r + u / 10;
  }
  r = r / 10;
  return r;
}

}  // namespace

TEST_CASE("normalized positions and distance") {
  CHECK(normalize_position(350, 175, 175) == std::pair{2.0, 1.0});
  CHECK(normalize_position(0, 0, 175) == std::pair{0.0, 0.0});
  const auto [eta, xi] = normalize_position(1312.5, 962.5, 175);
  CHECK(eta == doctest::Approx(7.5).epsilon(1e-15));
  CHECK(xi == doctest::Approx(5.5).epsilon(1e-15));
  CHECK_THROWS_AS(normalize_position(1, 1, 0), std::invalid_argument);

  const Goal g;
  CHECK(distance_to_goal(1.5, 1.5, g) == 0.0);
  CHECK(distance_to_goal(4.5, 5.5, g) == 5.0);
  CHECK(distance_to_goal(12, 9, g) == doctest::Approx(std::sqrt(10.5 * 10.5 + 7.5 * 7.5)).epsilon(1e-15));
  CHECK(distance_to_goal(12, 9, g) == doctest::Approx(12.903).epsilon(1e-4));
}

TEST_CASE("angle wrapping") {
  CHECK(wrap_degrees(180) == 180);
  CHECK(wrap_degrees(-180) == 180);
  CHECK(wrap_degrees(540) == 180);
  CHECK(wrap_degrees(190) == doctest::Approx(-170));
  CHECK(wrap_degrees(-190) == doctest::Approx(170));
  CHECK(wrap_degrees(0) == 0);
  CHECK(wrap_radians(-kPi) == kPi);
  CHECK(wrap_radians(3 * kPi) == doctest::Approx(kPi));
}

TEST_CASE("local heading error") {
  const Goal g;
  const double L = 175.0;
  SUBCASE("bow on the goal gives zero") {
    const double eta = 9, xi = 6;
    dynamics::RigidState s{eta * L, xi * L, bearing_to_goal(eta, xi, g), 0, 0, 0};
    CHECK(local_heading_error(s, g, L) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("rotating the ship by +90 deg gives -90") {
    const double eta = 9, xi = 6;
    dynamics::RigidState s{eta * L, xi * L, bearing_to_goal(eta, xi, g) + kPi / 2, 0, 0, 0};
    CHECK(local_heading_error(s, g, L) == doctest::Approx(-90.0).epsilon(1e-12));
  }
  SUBCASE("random poses agree with a rotation search") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> pos(-2, 20), ang(-4 * kPi, 4 * kPi);
    for (int i = 0; i < 300; ++i) {
      const double eta = pos(gen), xi = pos(gen), psi = ang(gen);
      dynamics::RigidState s{eta * L, xi * L, psi, 0, 0, 0};
      const double got = local_heading_error(s, g, L);
      const double oracle = rotation_search(eta, xi, psi, g.g_x, g.g_y);
      CHECK(got > -180.0);
      CHECK(got <= 180.0);
      CHECK(std::abs(wrap_degrees(got - oracle)) < 1e-9);
    }
  }
  SUBCASE("exactly at the goal is a flagged singularity") {
    dynamics::RigidState s{1.5 * L, 1.5 * L, 0.3, 0, 0, 0};
    CHECK_THROWS_AS(local_heading_error(s, g, L), AtGoalSingularity);
  }
}

TEST_CASE("reward matches the worked examples") {
  CHECK(reward(0.2, 10, 20, 1, 0.5) == doctest::Approx(1.196).epsilon(1e-14));
  CHECK(reward(5, 0, 0, 0.5, 0.5) == 0.0);
  CHECK(reward(5, 0, 35, -0.2, 0.5) == doctest::Approx(-0.009).epsilon(1e-12));
  CHECK(reward(0.5, 15, 0, 0, 0.5) == 1.2);
  CHECK(reward(0.5, -15, 0, 0, 0.5) == 1.2);
  CHECK(reward(0.5, 15.0001, 0, 0, 0.5) == 1.0);
}

TEST_CASE("reward properties") {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> dd(0, 3), pp(-180, 180), del(-35, 35), uu(-3, 8), tt(0.1, 1.5);
  const double u_min = -3;
  for (int i = 0; i < 100000; ++i) {
    const double d = dd(gen), psi = pp(gen), delta = del(gen), u = uu(gen), tol = tt(gen);
    const double r = reward(d, psi, delta, u, tol);
    CHECK(r == reward_oracle(d, psi, delta, u, tol));
    CHECK(r >= (-35.0 / 500 + u_min / 10) / 10 - 1e-15);
    CHECK(r <= 1.2);
    const bool best = d <= tol && std::abs(psi) <= 15 && delta == 0 && u >= 0;
    CHECK((r == 1.2) == best);
    // Strictly decreasing in |delta|.
    CHECK(reward(d, psi, std::abs(delta) + 1.0, u, tol) < reward(d, psi, std::abs(delta), u, tol));
  }
}

TEST_CASE("initial state sampling") {
  EnvConfig cfg;
  const double L = 175.0;
  SUBCASE("zero perturbation points the bow at the goal") {
    cfg.episode.heading_perturbation_deg = 0.0;
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
      const auto s = sample_initial_state(cfg, L, 5.0, rng);
      CHECK(local_heading_error(s, cfg.goal, L) == doctest::Approx(0.0).epsilon(1e-12));
      CHECK(s.u == 5.0);
      CHECK(s.v == 0.0);
      CHECK(s.r == 0.0);
    }
  }
  SUBCASE("1e5 samples stay in the box and the heading offset is uniform") {
    Rng rng(42);
    const std::size_t n = 100000;
    std::vector<double> offsets;
    offsets.reserve(n);
    double eta_min = 1e9, eta_max = -1e9, xi_min = 1e9, xi_max = -1e9;
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = sample_initial_state(cfg, L, 5.0, rng);
      eta_min = std::min(eta_min, s.x / L);
      eta_max = std::max(eta_max, s.x / L);
      xi_min = std::min(xi_min, s.y / L);
      xi_max = std::max(xi_max, s.y / L);
      const double psi_prime = local_heading_error(s, cfg.goal, L);
      REQUIRE(std::abs(psi_prime) <= 15.0 + 1e-9);
      offsets.push_back(psi_prime);
    }
    CHECK(eta_min >= 7.0);
    CHECK(eta_max <= 12.0);
    CHECK(xi_min >= 2.0);
    CHECK(xi_max <= 9.0);
    std::sort(offsets.begin(), offsets.end());
    double dmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double cdf = (offsets[i] + 15.0) / 30.0;
      dmax = std::max({dmax, std::abs(cdf - static_cast<double>(i) / n), std::abs(cdf - static_cast<double>(i + 1) / n)});
    }
    const double p = kolmogorov_p(dmax, n);
    MESSAGE("KS D = " << dmax << ", p = " << p);
    CHECK(p > 0.01);
  }
  SUBCASE("same seed gives the same sequence") {
    Rng a(17), b(17);
    for (int i = 0; i < 50; ++i) {
      CHECK(sample_initial_state(cfg, L, 5.0, a) == sample_initial_state(cfg, L, 5.0, b));
    }
  }
}

TEST_CASE("berthing environment") {
  const auto model = test::reference_model();
  EnvConfig cfg;
  cfg.episode.max_steps = 50;
  BerthingEnv env(model, cfg);
  const double L = model.geometry.length_pp;

  SUBCASE("initial speed is the self-propulsion speed at n_max") {
    CHECK(env.initial_speed() == doctest::Approx(dynamics::self_propulsion_speed(model, 1.0)));
  }
  SUBCASE("ship parked at the goal with the bow on it earns 1.2") {
    // Just short of the goal, bow on it, at rest, zero rudder and propeller.
    const double eta = 1.5 + 0.1;
    dynamics::RigidState s{eta * L, 1.5 * L, std::numbers::pi, 0, 0, 0};
    EnvConfig c = cfg;
    c.episode.initial_n = 0.0;
    BerthingEnv e(model, c);
    e.reset_to(s);
    const auto res = e.step({0, 0});
    CHECK(res.reward == 1.2);
    CHECK(res.info.success);
    CHECK_FALSE(res.done);
  }
  SUBCASE("the episode ends at max_steps and refuses further steps") {
    Rng rng(1);
    env.reset(rng);
    StepResult res;
    int steps = 0;
    while (!res.done) {
      res = env.step({0, 1});
      ++steps;
    }
    CHECK(steps <= cfg.episode.max_steps);
    CHECK(res.info.truncated);
    CHECK(env.steps() == cfg.episode.max_steps);
    CHECK_THROWS_AS(env.step({0, 1}), EpisodeFinished);
  }
  SUBCASE("straight run advances eta by u*dt/L along the heading") {
    const double u = env.initial_speed();
    const double psi = 200.0 * kDeg;
    auto obs = env.reset_to({10 * L, 8 * L, psi, u, 0, 0});
    for (int k = 0; k < 10; ++k) {
      const auto res = env.step({0, 1.0});
      CHECK(res.obs.eta - obs.eta == doctest::Approx(u * env.dt() * std::cos(psi) / L).epsilon(1e-9));
      CHECK(res.obs.xi - obs.xi == doctest::Approx(u * env.dt() * std::sin(psi) / L).epsilon(1e-9));
      obs = res.obs;
    }
  }
  SUBCASE("leaving the abort box ends the episode with no extra penalty") {
    env.reset_to({-1.9 * L, 5 * L, std::numbers::pi, 6.0, 0, 0});
    StepResult res;
    while (!res.done) {
      res = env.step({0, 1});
    }
    CHECK(res.info.aborted);
    CHECK(res.info.cause == "left abort box");
    CHECK(res.reward == reward(res.info.d, res.info.psi_prime_deg, res.info.delta_actual, env.state().u, 0.5));
  }
  SUBCASE("observation d is consistent with eta and xi") {
    Rng rng(8);
    env.reset(rng);
    for (int k = 0; k < 30; ++k) {
      const auto res = env.step({k % 2 ? 35.0 : -20.0, 0.5});
      CHECK(res.obs.d == distance_to_goal(res.obs.eta, res.obs.xi, cfg.goal));
      CHECK(res.info.d == res.obs.d);
      CHECK(res.obs.psi > -std::numbers::pi);
      CHECK(res.obs.psi <= std::numbers::pi);
      if (res.done) {
        break;
      }
    }
  }
  SUBCASE("clamping is idempotent") {
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> big(-100, 100);
    for (int i = 0; i < 1000; ++i) {
      const Action a{big(gen), big(gen)};
      const auto once = env.clamp_action(a);
      CHECK(env.clamp_action(once) == once);
      CHECK(std::abs(once.delta_cmd) <= 35.0);
      CHECK(once.n_cmd >= -1.0);
      CHECK(once.n_cmd <= 1.0);
    }
    CHECK_THROWS_AS(env.clamp_action({NAN, 0}), std::invalid_argument);
  }
  SUBCASE("rudder rate and range are respected through the env") {
    Rng rng(4);
    env.reset(rng);
    double prev = env.actuators().delta;
    for (int k = 0; k < 40; ++k) {
      const auto res = env.step({k % 3 ? 35.0 : -35.0, -1.0});
      CHECK(std::abs(res.info.delta_actual - prev) <= 3.0 * env.dt() + 1e-9);
      CHECK(std::abs(res.info.delta_actual) <= 35.0);
      prev = res.info.delta_actual;
      if (res.done) {
        break;
      }
    }
  }
  SUBCASE("integrator blow-up is reported as an aborted episode") {
    auto unstable = model;
    unstable.integrator.u_max = 5.0;  // below the start speed, so the first step diverges
    EnvConfig c = cfg;
    c.episode.initial_u = 4.9;
    c.episode.max_steps = 3000;
    BerthingEnv e(unstable, c);
    Rng rng(1);
    e.reset(rng);
    StepResult res;
    for (int k = 0; k < 3000 && !res.done; ++k) {
      res = e.step({0, 1.0});
    }
    CHECK(res.done);
    CHECK(res.info.diverged);
    CHECK_FALSE(res.info.cause.empty());
  }
  SUBCASE("seeded resets reproduce") {
    Rng a(99), b(99);
    BerthingEnv e2(model, cfg);
    for (int i = 0; i < 10; ++i) {
      CHECK(env.reset(a) == e2.reset(b));
    }
  }
}
