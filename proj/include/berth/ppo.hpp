#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "berth/agent.hpp"
#include "berth/env.hpp"
#include "berth/rng.hpp"

namespace berth::ppo {

struct TrainConfig {
  double clip_epsilon = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int epochs = 10;
  int minibatch_size = 32;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double learning_rate = 3e-4;
  double adam_eps = 1e-5;
  double max_grad_norm = 0.5;
  int n_steps = 128;   // rollout window between updates
  int bptt_len = 8;    // recurrent sequence length inside a window

  void validate() const;
};

struct Transition {
  agent::Vector history;      // flattened, normalized observation window
  nn::RecurrentState rec;     // recurrent state fed into this step
  bool episode_start = false; // rec was reset to zero before this step
  std::array<double, 2> raw{};
  env::Action action;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;
};

// One worker's contiguous window plus the value estimate of the state after it.
struct Segment {
  std::vector<Transition> steps;
  double bootstrap_value = 0.0;
};

struct RolloutBuffer {
  std::vector<Segment> segments;

  std::size_t size() const;
  void clear() { segments.clear(); }
};

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;
};

Advantages compute_gae(std::span<const double> rewards, std::span<const double> values,
                       std::span<const std::uint8_t> dones, double bootstrap_value, double gamma, double lambda);

// In-place (x - mean) / (std + 1e-8); no-op for fewer than two samples.
void normalize_advantages(std::vector<double>& adv);

struct PolicyLossResult {
  double loss = 0.0;
  double clip_fraction = 0.0;
  std::size_t excluded = 0;  // samples with a non-finite ratio
  std::vector<double> grad_log_prob;  // dLoss / d(new log prob), per sample
};

// loss = -mean(min(rho*A, clip(rho, 1-eps, 1+eps)*A)), rho = exp(new - old).
PolicyLossResult clipped_policy_loss(std::span<const double> log_probs_new, std::span<const double> log_probs_old,
                                     std::span<const double> advantages, double clip_epsilon);

// A contiguous run of transitions trained as one truncated-BPTT sequence. The
// first step (and any episode start) takes its stored recurrent snapshot.
struct Sequence {
  std::span<const Transition> steps;
  std::span<const double> advantages;
  std::span<const double> returns;
};

struct SurrogateResult {
  double total = 0.0;  // policy + value_coef * value - entropy_coef * entropy
  double policy = 0.0;
  double value = 0.0;  // mean squared error against the returns
  double entropy = 0.0;
  double clip_fraction = 0.0;
  std::size_t excluded = 0;
  std::vector<double> log_probs;  // current log probabilities, in batch order
};

// PPO minibatch loss. With accumulate_grad, adds dTotal/dparams to the agent's
// gradient buffers (the caller zeroes them).
SurrogateResult surrogate_loss(agent::ActorCritic& agent, std::span<const Sequence> batch, const TrainConfig& cfg,
                               bool accumulate_grad);

struct TrainStats {
  int update_idx = 0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double clip_frac = 0.0;
  double grad_norm = 0.0;
  double initial_ratio_max_dev = 0.0;  // max |rho - 1| before any gradient step
  double initial_clip_frac = 0.0;
  std::size_t alignment_mismatches = 0;  // replayed recurrent states differing from rollout
  std::size_t excluded_samples = 0;
  std::size_t rejected_arrays = 0;
};

// Multi-epoch clipped PPO update over the buffer; clears it on return.
TrainStats train_update(RolloutBuffer& buffer, agent::ActorCritic& agent, const TrainConfig& cfg, Rng& rng);

// Outcome of one deterministic (mean-action) episode.
struct TrajectoryRow {
  double t = 0.0;
  double x = 0.0, y = 0.0, psi_deg = 0.0;
  double u = 0.0, v = 0.0, r = 0.0;
  double delta_deg = 0.0, n = 0.0;
  double reward = 0.0;
  double d = 0.0, psi_prime_deg = 0.0;
};

struct EpisodeTrace {
  std::vector<TrajectoryRow> rows;
  double episode_return = 0.0;
  double final_d = 0.0;
  double min_d = 0.0;
  double mean_abs_delta = 0.0;
  int steps = 0;
  bool success = false;
  std::string abort_cause;
};

EpisodeTrace deterministic_rollout(const agent::ActorCritic& agent, const agent::ObservationNormalizer& normalizer,
                                   env::BerthingEnv& env, const dynamics::RigidState& start);

// Training loop ------------------------------------------------------------

struct StepRecord {
  std::int64_t global_step = 0;
  std::int64_t episode = 0;  // 1-based index of the episode this step belongs to
  int worker = 0;
  double reward = 0.0;
  double episode_return = 0.0;  // cumulative within the episode
  env::StepInfo info;
  double previous_delta = 0.0;  // actual rudder angle before the step
  double dt = 0.0;
};

struct EpisodeRecord {
  std::int64_t episode = 0;
  int worker = 0;
  int steps = 0;
  double episode_return = 0.0;
  double final_d = 0.0;
  double min_d = 0.0;
  bool success = false;
  std::string abort_cause;
};

class TrainingObserver {
 public:
  virtual ~TrainingObserver() = default;
  virtual void on_step(const StepRecord&) {}
  virtual void on_episode_end(const EpisodeRecord&) {}
  // Called after each update; returning false stops training.
  virtual bool on_update(const TrainStats&) { return true; }
};

struct LoopConfig {
  std::int64_t episodes = 300;
  int workers = 1;
  std::uint64_t seed = 0;
};

// Mutable trainer state that a checkpoint captures alongside the parameters.
struct TrainerState {
  agent::ObservationNormalizer normalizer;
  Rng shuffle_rng;
  std::vector<Rng> reset_rngs;
  std::vector<Rng> action_rngs;
  std::int64_t global_step = 0;
  std::int64_t episodes_done = 0;
  int updates = 0;
};

TrainerState make_trainer_state(const agent::ActorCritic& agent, const LoopConfig& loop);

struct RunSummary {
  std::int64_t global_steps = 0;
  std::int64_t episodes = 0;
  int updates = 0;
  std::size_t diverged_episodes = 0;
};

using EnvFactory = std::function<env::BerthingEnv()>;

RunSummary training_loop(const EnvFactory& make_env, agent::ActorCritic& agent, TrainerState& state,
                         const TrainConfig& cfg, const LoopConfig& loop, TrainingObserver& observer);

}  // namespace berth::ppo
