#pragma once

#include <filesystem>
#include <memory>
#include <stdexcept>

#include "berth/harness/config.hpp"

namespace berth::harness {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// A checkpoint captures everything needed to resume or evaluate a run: the
// frozen config, all parameter arrays with their Adam moments, the optimizer
// step, observation statistics, RNG engine states and loop counters.
struct Checkpoint {
  RunConfig config;
  std::unique_ptr<agent::ActorCritic> agent;
  ppo::TrainerState state;
};

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const agent::ActorCritic& agent,
                     const ppo::TrainerState& state);

// Throws CheckpointError on a bad magic, a version mismatch, truncation or a
// parameter layout that does not match the embedded config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace berth::harness
