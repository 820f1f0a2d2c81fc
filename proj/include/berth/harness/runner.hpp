#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

#include "berth/harness/config.hpp"
#include "berth/harness/eval.hpp"

namespace berth::harness {

class RunLockedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exclusive ownership of a run directory through an O_EXCL lockfile.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct ValidationPoint {
  int update_idx = 0;
  int successes = 0;
  double mean_final_d = 0.0;
};

struct TrainResult {
  ppo::RunSummary summary;
  std::optional<ValidationPoint> best;  // best validation snapshot, if any ran
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;  // empty when no validation ran
};

// Optional observers of a run, called on the training thread.
struct RunHooks {
  std::function<void(const ppo::StepRecord&)> on_step;
  std::function<void(const ppo::TrainStats&)> on_update;
};

// Runs training into out_dir, writing
//   config.json, rewards.csv, stats.csv, validation.csv, reward.svg,
//   checkpoints/update_NNNNNN.ckpt (every checkpoint_every updates),
//   final.ckpt and best.ckpt (best validation score so far).
TrainResult run_training(const RunConfig& config, const std::filesystem::path& out_dir,
                         const RunHooks& hooks = {});

}  // namespace berth::harness
