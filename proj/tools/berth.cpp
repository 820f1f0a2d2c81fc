// berth: train, evaluate and replay ship-berthing policies.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <fstream>

#include "berth/harness/checkpoint.hpp"
#include "berth/harness/eval.hpp"
#include "berth/harness/io.hpp"
#include "berth/harness/logging.hpp"
#include "berth/harness/plots.hpp"
#include "berth/harness/runner.hpp"

namespace fs = std::filesystem;
using namespace berth;

namespace {

int cmd_train(const std::string& config_path, std::uint64_t seed, const std::string& out, const std::string& profile,
              int workers) {
  auto cfg = harness::load_config(config_path, profile);
  cfg.seed = seed;
  if (workers > 0) {
    cfg.run.workers = workers;
  }
  if (cfg.run.workers > 1) {
    spdlog::warn("multi-worker rollouts are not bit-reproducible across worker counts");
  }
  const auto res = harness::run_training(cfg, out);
  if (res.best) {
    spdlog::info("best validation: {}/{} at update {} -> {}", res.best->successes, cfg.run.eval_starts,
                 res.best->update_idx, res.best_checkpoint.string());
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& starts_spec, const std::string& out, bool early_stop) {
  const auto ck = harness::load_checkpoint(checkpoint);
  const auto starts = harness::parse_starts(starts_spec, ck.config.env);
  const auto result = harness::evaluate_policy(*ck.agent, ck.state.normalizer, ck.config, starts, early_stop);
  harness::write_evaluation(out, result, ck.config);
  int interp = 0, interp_ok = 0, extrap = 0, extrap_ok = 0;
  for (const auto& r : result.rows) {
    if (r.label == harness::StartLabel::Interpolated) {
      ++interp;
      interp_ok += r.success;
    } else {
      ++extrap;
      extrap_ok += r.success;
    }
  }
  spdlog::info("berthed {}/{} interpolated and {}/{} extrapolated starts; report in {}", interp_ok, interp, extrap_ok,
               extrap, (fs::path(out) / "report.csv").string());
  return 0;
}

int cmd_replay(const std::string& traj, const std::string& out, const std::string& ship_config) {
  const auto rows = harness::read_trajectory_csv(traj);
  harness::TrajectoryPlotOptions opts;
  double delta_max = 35.0;
  if (!ship_config.empty()) {
    const auto cfg = harness::load_config(ship_config);
    opts.goal = cfg.env.goal;
    opts.length = cfg.ship.geometry.length_pp;
    opts.breadth = cfg.ship.geometry.breadth;
    opts.training_eta = cfg.env.episode.eta0;
    opts.training_xi = cfg.env.episode.xi0;
    delta_max = cfg.ship.actuators.delta_max;
  }
  const std::string stem = fs::path(traj).stem().string();
  opts.title = stem;
  fs::create_directories(out);
  std::ofstream(fs::path(out) / (stem + ".svg")) << harness::render_trajectory_svg(rows, opts);
  std::ofstream(fs::path(out) / (stem + "_timeseries.svg")) << harness::render_timeseries_svg(rows, delta_max, stem);
  spdlog::info("rendered {} rows into {}", rows.size(), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  harness::init_logging();
  CLI::App app{"Ship berthing with a recurrent PPO agent"};
  app.require_subcommand(1);

  std::string config_path, out, profile, checkpoint, starts, traj, ship_config;
  std::uint64_t seed = 0;
  int workers = 0;
  bool early_stop = false;

  auto* train = app.add_subcommand("train", "Train a policy");
  train->add_option("--config", config_path, "Ship/scenario JSON config")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Run seed")->required();
  train->add_option("--out", out, "Run directory")->required();
  train->add_option("--profile", profile, "Profile overlay")->check(CLI::IsMember({"paper", "desk"}));
  train->add_option("--workers", workers, "Parallel rollout workers")->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint deterministically");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--starts", starts,
                   "CSV file (eta,xi,psi_deg) or random:N[:seed], grid:NxM, extrapolated:N[:seed]")
      ->required();
  eval->add_option("--out", out, "Output directory")->required();
  eval->add_flag("--early-stop", early_stop, "End each episode once the ship is inside the goal circle");

  auto* replay = app.add_subcommand("replay", "Render plots from a trajectory CSV");
  replay->add_option("--traj", traj, "Trajectory CSV")->required()->check(CLI::ExistingFile);
  replay->add_option("--out", out, "Output directory")->required();
  replay->add_option("--config", ship_config, "Config for goal and ship dimensions (default: reference values)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) {
      return cmd_train(config_path, seed, out, profile, workers);
    }
    if (*eval) {
      return cmd_eval(checkpoint, starts, out, early_stop);
    }
    return cmd_replay(traj, out, ship_config);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
