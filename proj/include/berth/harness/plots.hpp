#pragma once

#include <string>
#include <vector>

#include "berth/env.hpp"
#include "berth/ppo.hpp"

namespace berth::harness {

struct TrajectoryPlotOptions {
  env::Goal goal;
  double length = 175.0;       // ship length used to normalize positions
  double breadth = 25.4;       // glyph width
  double glyph_every_s = 50.0;
  env::Range training_eta{7.0, 12.0};
  env::Range training_xi{2.0, 9.0};
  std::string title;
};

// Top-down view in ship lengths: east (xi) to the right, north (eta) up. Draws
// the goal circle at the tolerance radius, the training start box, the track
// and a ship outline every glyph_every_s seconds.
std::string render_trajectory_svg(const std::vector<ppo::TrajectoryRow>& rows, const TrajectoryPlotOptions& opts);

// Four stacked panels against time: n, delta (fixed at +-delta_max), u, reward.
std::string render_timeseries_svg(const std::vector<ppo::TrajectoryRow>& rows, double delta_max = 35.0,
                                  const std::string& title = "");

// Line chart of the smoothed reward curve.
std::string render_reward_svg(const std::vector<double>& steps, const std::vector<double>& smoothed,
                              const std::string& title = "");

}  // namespace berth::harness
