#include "berth/harness/eval.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "berth/harness/io.hpp"
#include "berth/harness/plots.hpp"

namespace berth::harness {
namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

// Region extrapolated starts are drawn from (ship lengths), minus the box.
constexpr env::Range kExtrapolatedEta{4.0, 15.0};
constexpr env::Range kExtrapolatedXi{0.0, 12.0};

int parse_count(const std::string& text, const std::string& spec) {
  try {
    std::size_t used = 0;
    const int n = std::stoi(text, &used);
    if (used != text.size() || n < 1) {
      throw std::invalid_argument("count");
    }
    return n;
  } catch (const std::exception&) {
    throw ConfigError("bad count '" + text + "' in start spec '" + spec + "'");
  }
}

std::uint64_t parse_seed(const std::string& text, const std::string& spec) {
  try {
    std::size_t used = 0;
    const auto s = std::stoull(text, &used);
    if (used != text.size()) {
      throw std::invalid_argument("seed");
    }
    return s;
  } catch (const std::exception&) {
    throw ConfigError("bad seed '" + text + "' in start spec '" + spec + "'");
  }
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string part;
  std::istringstream is(s);
  while (std::getline(is, part, sep)) {
    parts.push_back(part);
  }
  return parts;
}

double heading_to_goal_deg(double eta, double xi, const env::Goal& goal) {
  return env::bearing_to_goal(eta, xi, goal) * kRadToDeg;
}

std::vector<StartSpec> read_starts_file(const std::filesystem::path& path) {
  const auto table = read_numeric_csv(path);
  if (table.header != std::vector<std::string>{"eta", "xi", "psi_deg"}) {
    throw ConfigError("starts file '" + path.string() + "' must have the header eta,xi,psi_deg");
  }
  std::vector<StartSpec> starts;
  for (const auto& r : table.rows) {
    starts.push_back({r[0], r[1], r[2]});
  }
  return starts;
}

}  // namespace

std::string to_string(StartLabel label) {
  return label == StartLabel::Interpolated ? "interpolated" : "extrapolated";
}

StartLabel label_start(double eta0, double xi0, const env::EpisodeConfig& episode) {
  return episode.eta0.contains(eta0) && episode.xi0.contains(xi0) ? StartLabel::Interpolated
                                                                  : StartLabel::Extrapolated;
}

std::vector<StartSpec> random_starts(int count, std::uint64_t seed, const env::EnvConfig& env_cfg) {
  Rng rng(seed, 5);
  std::vector<StartSpec> starts;
  const auto& ep = env_cfg.episode;
  for (int i = 0; i < count; ++i) {
    const double eta = rng.uniform(ep.eta0.lo, ep.eta0.hi);
    const double xi = rng.uniform(ep.xi0.lo, ep.xi0.hi);
    const double perturb = rng.uniform(-ep.heading_perturbation_deg, ep.heading_perturbation_deg);
    starts.push_back({eta, xi, heading_to_goal_deg(eta, xi, env_cfg.goal) + perturb});
  }
  return starts;
}

std::vector<StartSpec> grid_starts(int rows, int cols, const env::EnvConfig& env_cfg) {
  const auto& ep = env_cfg.episode;
  const auto at = [](const env::Range& r, int k, int n) {
    return n == 1 ? 0.5 * (r.lo + r.hi) : r.lo + (r.hi - r.lo) * k / (n - 1);
  };
  std::vector<StartSpec> starts;
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const double eta = at(ep.eta0, i, rows);
      const double xi = at(ep.xi0, j, cols);
      starts.push_back({eta, xi, heading_to_goal_deg(eta, xi, env_cfg.goal)});
    }
  }
  return starts;
}

std::vector<StartSpec> extrapolated_starts(int count, std::uint64_t seed, const env::EnvConfig& env_cfg) {
  Rng rng(seed, 6);
  const auto& ep = env_cfg.episode;
  std::vector<StartSpec> starts;
  while (static_cast<int>(starts.size()) < count) {
    const double eta = rng.uniform(kExtrapolatedEta.lo, kExtrapolatedEta.hi);
    const double xi = rng.uniform(kExtrapolatedXi.lo, kExtrapolatedXi.hi);
    const double perturb = rng.uniform(-ep.heading_perturbation_deg, ep.heading_perturbation_deg);
    if (label_start(eta, xi, ep) == StartLabel::Interpolated ||
        env::distance_to_goal(eta, xi, env_cfg.goal) < 3.0 * env_cfg.goal.tolerance + 2.0) {
      continue;
    }
    starts.push_back({eta, xi, heading_to_goal_deg(eta, xi, env_cfg.goal) + perturb});
  }
  return starts;
}

std::vector<StartSpec> parse_starts(const std::string& spec, const env::EnvConfig& env_cfg) {
  const auto parts = split_on(spec, ':');
  if (!parts.empty() && (parts[0] == "random" || parts[0] == "extrapolated")) {
    if (parts.size() < 2 || parts.size() > 3) {
      throw ConfigError("start spec '" + spec + "' must look like " + parts[0] + ":N[:seed]");
    }
    const int n = parse_count(parts[1], spec);
    const std::uint64_t seed = parts.size() == 3 ? parse_seed(parts[2], spec) : 0;
    return parts[0] == "random" ? random_starts(n, seed, env_cfg) : extrapolated_starts(n, seed, env_cfg);
  }
  if (!parts.empty() && parts[0] == "grid") {
    const auto dims = parts.size() == 2 ? split_on(parts[1], 'x') : std::vector<std::string>{};
    if (dims.size() != 2) {
      throw ConfigError("start spec '" + spec + "' must look like grid:NxM");
    }
    return grid_starts(parse_count(dims[0], spec), parse_count(dims[1], spec), env_cfg);
  }
  if (!std::filesystem::exists(spec)) {
    throw ConfigError("start spec '" + spec + "' is neither a generator nor an existing file");
  }
  return read_starts_file(spec);
}

int EvaluationResult::successes() const {
  int n = 0;
  for (const auto& r : rows) {
    n += r.success ? 1 : 0;
  }
  return n;
}

double EvaluationResult::mean_final_d() const {
  double s = 0.0;
  for (const auto& r : rows) {
    s += r.final_d;
  }
  return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

EvaluationResult evaluate_policy(const agent::ActorCritic& agent, const agent::ObservationNormalizer& normalizer,
                                 const RunConfig& config, const std::vector<StartSpec>& starts, bool early_stop) {
  env::EnvConfig env_cfg = config.env;
  env_cfg.episode.early_stop = early_stop;
  env::BerthingEnv env(config.ship, env_cfg);
  EvaluationResult result;
  for (const auto& s : starts) {
    auto trace = ppo::deterministic_rollout(agent, normalizer, env, env.start_state(s.eta0, s.xi0, s.psi0_deg));
    EvaluationRow row;
    row.start = s;
    row.final_d = trace.final_d;
    row.min_d = trace.min_d;
    row.success = trace.success;
    row.steps = trace.steps;
    row.mean_abs_delta = trace.mean_abs_delta;
    row.label = label_start(s.eta0, s.xi0, env_cfg.episode);
    row.abort_cause = trace.abort_cause;
    result.rows.push_back(row);
    result.traces.push_back(std::move(trace));
  }
  return result;
}

void write_report_csv(const std::filesystem::path& path, const std::vector<EvaluationRow>& rows) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  out << "index,eta0,xi0,psi0_deg,final_d,min_d,success,steps,mean_abs_delta,label,abort_cause\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    out << i << ',' << format_double(r.start.eta0) << ',' << format_double(r.start.xi0) << ','
        << format_double(r.start.psi0_deg) << ',' << format_double(r.final_d) << ',' << format_double(r.min_d) << ','
        << (r.success ? 1 : 0) << ',' << r.steps << ',' << format_double(r.mean_abs_delta) << ','
        << to_string(r.label) << ',' << r.abort_cause << '\n';
  }
}

void write_evaluation(const std::filesystem::path& out_dir, const EvaluationResult& result, const RunConfig& config) {
  std::filesystem::create_directories(out_dir);
  write_report_csv(out_dir / "report.csv", result.rows);
  TrajectoryPlotOptions opts;
  opts.goal = config.env.goal;
  opts.length = config.ship.geometry.length_pp;
  opts.breadth = config.ship.geometry.breadth;
  opts.training_eta = config.env.episode.eta0;
  opts.training_xi = config.env.episode.xi0;
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "traj_%03zu", i);
    const auto& row = result.rows[i];
    write_trajectory_csv(out_dir / (std::string(stem) + ".csv"), result.traces[i].rows);
    char title[160];
    std::snprintf(title, sizeof(title), "(%.2f, %.2f, %.1f deg) %s, final d %.2f L", row.start.eta0, row.start.xi0,
                  row.start.psi0_deg, to_string(row.label).c_str(), row.final_d);
    opts.title = title;
    std::ofstream(out_dir / (std::string(stem) + ".svg")) << render_trajectory_svg(result.traces[i].rows, opts);
    std::ofstream(out_dir / (std::string(stem) + "_timeseries.svg"))
        << render_timeseries_svg(result.traces[i].rows, config.ship.actuators.delta_max, title);
  }
}

}  // namespace berth::harness
