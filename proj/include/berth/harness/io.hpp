#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "berth/ppo.hpp"

namespace berth::harness {

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kTrajectoryHeader = "t,x,y,psi_deg,u,v,r,delta_deg,n,reward,d,psi_prime_deg";
inline constexpr const char* kRewardHeader = "global_step,episode,step_reward,episode_return,smoothed";
inline constexpr const char* kStatsHeader = "update_idx,policy_loss,value_loss,entropy,kl,clip_frac";

// Shortest text that parses back to the same double.
std::string format_double(double x);

void write_trajectory_csv(const std::filesystem::path& path, const std::vector<ppo::TrajectoryRow>& rows);
// Throws SchemaError naming the offending column or line.
std::vector<ppo::TrajectoryRow> read_trajectory_csv(const std::filesystem::path& path);

// Streams per-step rewards with an exponential moving average (factor 0.99).
class RewardLog {
 public:
  static constexpr double kSmoothing = 0.99;

  explicit RewardLog(const std::filesystem::path& path);
  void append(const ppo::StepRecord& rec);
  void flush() { out_.flush(); }
  double smoothed() const { return ema_; }

 private:
  std::ofstream out_;
  bool started_ = false;
  double ema_ = 0.0;
};

class StatsLog {
 public:
  explicit StatsLog(const std::filesystem::path& path);
  void append(const ppo::TrainStats& stats);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

struct RewardRow {
  std::int64_t global_step = 0;
  std::int64_t episode = 0;
  double step_reward = 0.0;
  double episode_return = 0.0;
  double smoothed = 0.0;
};

std::vector<RewardRow> read_reward_csv(const std::filesystem::path& path);

// Minimal CSV reader: header names plus rows of numeric fields.
struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

NumericTable read_numeric_csv(const std::filesystem::path& path);

}  // namespace berth::harness
