#include "berth/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace berth::agent {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)
constexpr double kActionEps = 1e-6;

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// log(1 - tanh(z)^2), stable for large |z|.
double log_tanh_jacobian(double z) { return 2.0 * (std::numbers::ln2 - z - softplus(-2.0 * z)); }

double clamp_log_std(double s) { return std::clamp(s, kLogStdMin, kLogStdMax); }

}  // namespace

void AgentConfig::validate() const {
  if (history_len < 1 || hl_size < 1 || lstm_size < 1) {
    throw std::invalid_argument("agent: history_len, hl_size and lstm_size must be >= 1");
  }
  if (!(obs_clip > 0.0)) {
    throw std::invalid_argument("agent: obs_clip must be positive");
  }
}

int feature_count(const AgentConfig& cfg) { return cfg.psi_sincos ? 8 : 7; }

Vector encode_observation(const env::Observation& o, bool psi_sincos) {
  if (psi_sincos) {
    Vector x(8);
    x << o.eta, o.xi, o.d, std::sin(o.psi), std::cos(o.psi), o.u, o.v, o.r;
    return x;
  }
  Vector x(7);
  x << o.eta, o.xi, o.d, o.psi, o.u, o.v, o.r;
  return x;
}

ObservationNormalizer::ObservationNormalizer(int dim, double clip, bool enabled)
    : enabled_(enabled), clip_(clip), mean_(Vector::Zero(dim)), m2_(Vector::Zero(dim)) {}

void ObservationNormalizer::update(const Vector& x) {
  if (!enabled_) {
    return;
  }
  count_ += 1.0;
  const Vector delta = x - mean_;
  mean_ += delta / count_;
  m2_ += delta.cwiseProduct(x - mean_);
}

Vector ObservationNormalizer::normalize(const Vector& x) const {
  if (!enabled_ || count_ < 2.0) {
    return x;
  }
  const Vector std = (m2_ / count_).cwiseMax(1e-8).cwiseSqrt();
  return ((x - mean_).cwiseQuotient(std)).cwiseMax(-clip_).cwiseMin(clip_);
}

void ObservationNormalizer::restore(double count, Vector mean, Vector m2) {
  if (mean.size() != mean_.size() || m2.size() != m2_.size()) {
    throw nn::ShapeMismatch("ObservationNormalizer::restore: dimension mismatch");
  }
  count_ = count;
  mean_ = std::move(mean);
  m2_ = std::move(m2);
}

StateHistory::StateHistory(int length, int features)
    : length_(length), features_(features), slots_(Matrix::Zero(features, length)) {
  if (length < 1 || features < 1) {
    throw std::invalid_argument("StateHistory: length and features must be >= 1");
  }
}

void StateHistory::push(const Vector& obs) {
  if (obs.size() != features_) {
    throw nn::ShapeMismatch("StateHistory::push: feature count mismatch");
  }
  slots_.col(head_) = obs;
  head_ = (head_ + 1) % length_;
  pushes_ = std::min(pushes_ + 1, length_);
}

void StateHistory::reset() {
  slots_.setZero();
  head_ = 0;
  pushes_ = 0;
}

Vector StateHistory::flatten() const {
  Vector flat(static_cast<Eigen::Index>(length_) * features_);
  // Slot head_ is the oldest (or a zero pad) once the ring has wrapped.
  for (int k = 0; k < length_; ++k) {
    flat.segment(static_cast<Eigen::Index>(k) * features_, features_) = slots_.col((head_ + k) % length_);
  }
  return flat;
}

std::array<double, 2> PolicyOutput::mu() const { return {std::tanh(mean[0]), std::tanh(mean[1])}; }

double log_prob(const PolicyOutput& out, const std::array<double, 2>& raw) {
  double lp = 0.0;
  for (int k = 0; k < 2; ++k) {
    const double z = (raw[k] - out.mean[k]) * std::exp(-out.log_std[k]);
    lp += -0.5 * z * z - out.log_std[k] - kHalfLog2Pi - log_tanh_jacobian(raw[k]);
  }
  return lp;
}

double entropy(const PolicyOutput& out) {
  return 2.0 * (0.5 + kHalfLog2Pi) + out.log_std[0] + out.log_std[1];
}

env::Action to_physical(const std::array<double, 2>& a, const ActionBounds& b) {
  const double mid = 0.5 * (b.n_min + b.n_max);
  const double half = 0.5 * (b.n_max - b.n_min);
  return {a[0] * b.delta_max, mid + a[1] * half};
}

std::array<double, 2> raw_from_action(const env::Action& action, const ActionBounds& b) {
  const double mid = 0.5 * (b.n_min + b.n_max);
  const double half = 0.5 * (b.n_max - b.n_min);
  std::array<double, 2> a{action.delta_cmd / b.delta_max, half > 0.0 ? (action.n_cmd - mid) / half : 0.0};
  for (double& x : a) {
    x = std::atanh(std::clamp(x, -1.0 + kActionEps, 1.0 - kActionEps));
  }
  return a;
}

SquashedSample sample_action(const PolicyOutput& out, Rng& rng, const ActionBounds& bounds) {
  SquashedSample s;
  for (int k = 0; k < 2; ++k) {
    s.raw[k] = out.mean[k] + std::exp(out.log_std[k]) * rng.normal();
  }
  s.action = to_physical({std::tanh(s.raw[0]), std::tanh(s.raw[1])}, bounds);
  s.log_prob = log_prob(out, s.raw);
  return s;
}

SquashedSample deterministic_action(const PolicyOutput& out, const ActionBounds& bounds) {
  SquashedSample s;
  s.raw = out.mean;
  s.action = to_physical(out.mu(), bounds);
  s.log_prob = log_prob(out, s.raw);
  return s;
}

ActorCritic::ActorCritic(const AgentConfig& cfg, const ActionBounds& bounds, std::uint64_t seed)
    : cfg_(cfg), bounds_(bounds) {
  cfg_.validate();
  const Eigen::Index in = static_cast<Eigen::Index>(cfg_.history_len) * feature_count(cfg_);
  hidden_ = nn::Dense(store_, "hidden", in, cfg_.hl_size, nn::Activation::Tanh);
  lstm_ = nn::LstmCell(store_, "lstm", cfg_.hl_size, cfg_.lstm_size);
  policy_head_ = nn::Dense(store_, "policy", cfg_.lstm_size, 2, nn::Activation::Linear);
  value_head_ = nn::Dense(store_, "value", cfg_.lstm_size, 1, nn::Activation::Linear);
  log_std_ = store_.add("log_std", 2, 1);

  Rng rng(seed);
  nn::init_fan_in_uniform(store_.value(hidden_.weight()), rng);
  nn::init_fan_in_uniform(store_.value(lstm_.input_weight()), rng);
  auto& w_hh = store_.value(lstm_.recurrent_weight());
  for (int gate = 0; gate < 4; ++gate) {
    Matrix block(cfg_.lstm_size, cfg_.lstm_size);
    nn::init_orthogonal(block, rng);
    w_hh.middleRows(static_cast<Eigen::Index>(gate) * cfg_.lstm_size, cfg_.lstm_size) = block;
  }
  nn::init_fan_in_uniform(store_.value(policy_head_.weight()), rng, 0.01);
  nn::init_fan_in_uniform(store_.value(value_head_.weight()), rng);
  store_.value(log_std_).setConstant(cfg_.log_std_init);
}

PolicyOutput ActorCritic::forward(const Vector& history, const RecurrentState& rec, RecurrentState& next,
                                  StepTrace* trace) const {
  const Vector feat = hidden_.forward(store_, history, trace ? &trace->hidden : nullptr);
  next = lstm_.forward(store_, feat, rec, trace ? &trace->lstm : nullptr);
  const Vector mean = policy_head_.forward(store_, next.h, trace ? &trace->policy : nullptr);
  const Vector value = value_head_.forward(store_, next.h, trace ? &trace->value : nullptr);
  if (trace) {
    trace->recorded = true;
  }
  PolicyOutput out;
  const auto& ls = store_.value(log_std_);
  for (int k = 0; k < 2; ++k) {
    out.mean[k] = mean(k);
    out.log_std[k] = clamp_log_std(ls(k, 0));
  }
  out.value = value(0);
  return out;
}

std::pair<PolicyOutput, RecurrentState> ActorCritic::forward(const Vector& history, const RecurrentState& rec) const {
  RecurrentState next;
  PolicyOutput out = forward(history, rec, next);
  return {out, std::move(next)};
}

void ActorCritic::backward(const StepTrace& trace, const OutputGrad& g, Vector& dh, Vector& dc) {
  if (!trace.recorded) {
    throw nn::NotRecorded("ActorCritic::backward called before a recorded forward pass");
  }
  auto& ls = store_.value(log_std_);
  auto& ls_grad = store_.grad(log_std_);
  for (int k = 0; k < 2; ++k) {
    if (ls(k, 0) >= kLogStdMin && ls(k, 0) <= kLogStdMax) {
      ls_grad(k, 0) += g.d_log_std[k];
    }
  }
  Vector d_mean(2);
  d_mean << g.d_mean[0], g.d_mean[1];
  Vector d_value(1);
  d_value << g.d_value;

  Vector dh_total = policy_head_.backward(store_, trace.policy, d_mean);
  dh_total += value_head_.backward(store_, trace.value, d_value);
  if (dh.size() == dh_total.size()) {
    dh_total += dh;
  }
  const Vector dc_in = dc.size() == dh_total.size() ? dc : Vector::Zero(dh_total.size());
  const auto lg = lstm_.backward(store_, trace.lstm, dh_total, dc_in);
  hidden_.backward(store_, trace.hidden, lg.dx);
  dh = lg.dh_prev;
  dc = lg.dc_prev;
}

ActionEvaluation evaluate_actions(const ActorCritic& agent, std::span<const Vector> histories,
                                  std::span<const RecurrentState> rec_states,
                                  std::span<const std::array<double, 2>> raw_actions) {
  if (histories.size() != rec_states.size() || histories.size() != raw_actions.size()) {
    throw nn::ShapeMismatch("evaluate_actions: batch sizes differ");
  }
  ActionEvaluation ev;
  ev.log_probs.reserve(histories.size());
  ev.values.reserve(histories.size());
  ev.entropies.reserve(histories.size());
  for (std::size_t i = 0; i < histories.size(); ++i) {
    const auto [out, next] = agent.forward(histories[i], rec_states[i]);
    ev.log_probs.push_back(log_prob(out, raw_actions[i]));
    ev.values.push_back(out.value);
    ev.entropies.push_back(entropy(out));
  }
  return ev;
}

ActionEvaluation evaluate_actions(const ActorCritic& agent, std::span<const Vector> histories,
                                  std::span<const RecurrentState> rec_states, std::span<const env::Action> actions) {
  std::vector<std::array<double, 2>> raw;
  raw.reserve(actions.size());
  for (const auto& a : actions) {
    raw.push_back(raw_from_action(a, agent.bounds()));
  }
  return evaluate_actions(agent, histories, rec_states, raw);
}

PolicyRunner::PolicyRunner(const ActorCritic& agent)
    : agent_(&agent),
      history_(agent.config().history_len, feature_count(agent.config())),
      rec_(agent.initial_state()) {}

void PolicyRunner::reset() {
  history_.reset();
  rec_ = agent_->initial_state();
}

const Vector& PolicyRunner::observe(const env::Observation& obs, const ObservationNormalizer& normalizer) {
  encoded_ = encode_observation(obs, agent_->config().psi_sincos);
  history_.push(normalizer.normalize(encoded_));
  flat_ = history_.flatten();
  return flat_;
}

}  // namespace berth::agent
