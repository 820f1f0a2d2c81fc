#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "berth/harness/config.hpp"

namespace berth::harness {

struct StartSpec {
  double eta0 = 0.0;
  double xi0 = 0.0;
  double psi0_deg = 0.0;
};

enum class StartLabel { Interpolated, Extrapolated };

std::string to_string(StartLabel label);

// Interpolated iff (eta0, xi0) lies inside the training start box.
StartLabel label_start(double eta0, double xi0, const env::EpisodeConfig& episode);

// Start specs are either a CSV file with header `eta,xi,psi_deg` or one of the
// generators `random:N[:seed]` (inside the training box), `grid:NxM` (evenly
// spread over the box, bow on the goal) or `extrapolated:N[:seed]` (outside
// the box but inside the abort region).
std::vector<StartSpec> parse_starts(const std::string& spec, const env::EnvConfig& env_cfg);

std::vector<StartSpec> random_starts(int count, std::uint64_t seed, const env::EnvConfig& env_cfg);
std::vector<StartSpec> grid_starts(int rows, int cols, const env::EnvConfig& env_cfg);
std::vector<StartSpec> extrapolated_starts(int count, std::uint64_t seed, const env::EnvConfig& env_cfg);

struct EvaluationRow {
  StartSpec start;
  double final_d = 0.0;
  double min_d = 0.0;
  bool success = false;
  int steps = 0;
  double mean_abs_delta = 0.0;
  StartLabel label = StartLabel::Interpolated;
  std::string abort_cause;
};

struct EvaluationResult {
  std::vector<EvaluationRow> rows;
  std::vector<ppo::EpisodeTrace> traces;

  int successes() const;
  double mean_final_d() const;
};

// Deterministic (mean-action) rollouts from each start.
EvaluationResult evaluate_policy(const agent::ActorCritic& agent, const agent::ObservationNormalizer& normalizer,
                                 const RunConfig& config, const std::vector<StartSpec>& starts,
                                 bool early_stop = false);

void write_report_csv(const std::filesystem::path& path, const std::vector<EvaluationRow>& rows);

// Writes per-start trajectory CSVs and plots plus report.csv into out_dir.
void write_evaluation(const std::filesystem::path& out_dir, const EvaluationResult& result, const RunConfig& config);

}  // namespace berth::harness
