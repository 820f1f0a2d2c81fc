#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "berth/env.hpp"
#include "berth/nn.hpp"
#include "berth/rng.hpp"

namespace berth::agent {

using nn::Matrix;
using nn::RecurrentState;
using nn::Vector;

struct AgentConfig {
  int history_len = 128;
  int hl_size = 64;
  int lstm_size = 256;
  double log_std_init = -0.5;
  bool normalize_obs = true;
  bool psi_sincos = true;  // encode heading as (sin, cos) instead of raw psi
  double obs_clip = 10.0;

  void validate() const;
};

// Physical action ranges the squashed policy maps onto.
struct ActionBounds {
  double delta_max = 35.0;
  double n_min = -1.0;
  double n_max = 1.0;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

int feature_count(const AgentConfig& cfg);
Vector encode_observation(const env::Observation& obs, bool psi_sincos);

// Running mean/variance (Welford). Frozen means normalize() only.
class ObservationNormalizer {
 public:
  ObservationNormalizer() = default;
  ObservationNormalizer(int dim, double clip, bool enabled = true);

  void update(const Vector& x);
  Vector normalize(const Vector& x) const;

  bool enabled() const { return enabled_; }
  double count() const { return count_; }
  const Vector& mean() const { return mean_; }
  const Vector& m2() const { return m2_; }
  void restore(double count, Vector mean, Vector m2);

 private:
  bool enabled_ = true;
  double clip_ = 10.0;
  double count_ = 0.0;
  Vector mean_;
  Vector m2_;
};

// Ring buffer of the last `length` encoded observations, zero-padded at the
// front until filled. flatten() is oldest-first.
class StateHistory {
 public:
  StateHistory(int length, int features);

  void push(const Vector& obs);
  void reset();
  Vector flatten() const;

  int length() const { return length_; }
  int features() const { return features_; }
  int pushes() const { return pushes_; }

 private:
  int length_;
  int features_;
  int head_ = 0;  // slot the next push writes
  int pushes_ = 0;
  Matrix slots_;  // features x length
};

struct PolicyOutput {
  std::array<double, 2> mean{};     // pre-squash Gaussian mean (rudder, rps)
  std::array<double, 2> log_std{};  // clamped to [kLogStdMin, kLogStdMax]
  double value = 0.0;

  // Normalized action means in (-1, 1).
  std::array<double, 2> mu() const;
};

struct SquashedSample {
  env::Action action;
  std::array<double, 2> raw{};  // pre-squash Gaussian draw
  double log_prob = 0.0;        // density of tanh(raw) in normalized action space
};

// log density of tanh(raw) under the squashed Gaussian.
double log_prob(const PolicyOutput& out, const std::array<double, 2>& raw);
// Entropy of the underlying Gaussian (the squashed entropy has no closed form).
double entropy(const PolicyOutput& out);

env::Action to_physical(const std::array<double, 2>& squashed, const ActionBounds& bounds);
// Inverse map with the pre-image clamped to |a| <= 1 - 1e-6.
std::array<double, 2> raw_from_action(const env::Action& action, const ActionBounds& bounds);

SquashedSample sample_action(const PolicyOutput& out, Rng& rng, const ActionBounds& bounds);
SquashedSample deterministic_action(const PolicyOutput& out, const ActionBounds& bounds);

// flatten -> dense(hl, tanh) -> lstm(lstm_size) -> {policy means, value};
// log_std is a free state-independent parameter.
class ActorCritic {
 public:
  struct StepTrace {
    nn::Dense::Cache hidden;
    nn::LstmCell::Cache lstm;
    nn::Dense::Cache policy;
    nn::Dense::Cache value;
    bool recorded = false;
  };

  struct OutputGrad {
    std::array<double, 2> d_mean{};
    std::array<double, 2> d_log_std{};
    double d_value = 0.0;
  };

  ActorCritic(const AgentConfig& cfg, const ActionBounds& bounds, std::uint64_t seed);

  PolicyOutput forward(const Vector& history, const RecurrentState& rec, RecurrentState& next,
                       StepTrace* trace = nullptr) const;
  std::pair<PolicyOutput, RecurrentState> forward(const Vector& history, const RecurrentState& rec) const;

  // Accumulates parameter gradients for one recorded step. dh/dc carry the
  // gradient w.r.t. this step's new recurrent state on entry and the gradient
  // w.r.t. the incoming recurrent state on exit.
  void backward(const StepTrace& trace, const OutputGrad& grad, Vector& dh, Vector& dc);

  RecurrentState initial_state() const { return RecurrentState::zeros(cfg_.lstm_size); }

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const AgentConfig& config() const { return cfg_; }
  const ActionBounds& bounds() const { return bounds_; }
  Eigen::Index input_size() const { return hidden_.in(); }

 private:
  AgentConfig cfg_;
  ActionBounds bounds_;
  nn::ParamStore store_;
  nn::Dense hidden_;
  nn::LstmCell lstm_;
  nn::Dense policy_head_;
  nn::Dense value_head_;
  nn::ParamId log_std_ = 0;
};

// Re-scores stored pre-squash actions under the current parameters, one
// step per sample from its own recurrent snapshot.
struct ActionEvaluation {
  std::vector<double> log_probs;
  std::vector<double> values;
  std::vector<double> entropies;
};

ActionEvaluation evaluate_actions(const ActorCritic& agent, std::span<const Vector> histories,
                                  std::span<const RecurrentState> rec_states,
                                  std::span<const std::array<double, 2>> raw_actions);
ActionEvaluation evaluate_actions(const ActorCritic& agent, std::span<const Vector> histories,
                                  std::span<const RecurrentState> rec_states, std::span<const env::Action> actions);

// Per-episode agent-side state: encoder, history window and recurrent state.
class PolicyRunner {
 public:
  explicit PolicyRunner(const ActorCritic& agent);

  void reset();
  // Encodes, normalizes and pushes the observation; returns the flat history.
  const Vector& observe(const env::Observation& obs, const ObservationNormalizer& normalizer);
  // Raw (unnormalized) encoding of the last observation.
  const Vector& last_encoded() const { return encoded_; }

  RecurrentState& recurrent() { return rec_; }
  const Vector& history() const { return flat_; }

 private:
  const ActorCritic* agent_;
  StateHistory history_;
  RecurrentState rec_;
  Vector encoded_;
  Vector flat_;
};

}  // namespace berth::agent
