#include "berth/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace berth::ppo {

void TrainConfig::validate() const {
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
    throw std::invalid_argument("ppo: clip_epsilon must lie in (0, 1)");
  }
  if (!(gamma > 0.0 && gamma <= 1.0) || !(gae_lambda > 0.0 && gae_lambda <= 1.0)) {
    throw std::invalid_argument("ppo: gamma and gae_lambda must lie in (0, 1]");
  }
  if (epochs < 1 || minibatch_size < 1 || n_steps < 1 || bptt_len < 1) {
    throw std::invalid_argument("ppo: epochs, minibatch_size, n_steps and bptt_len must be >= 1");
  }
  if (value_coef < 0.0 || entropy_coef < 0.0 || learning_rate < 0.0 || !(max_grad_norm > 0.0) ||
      !(adam_eps > 0.0)) {
    throw std::invalid_argument("ppo: coefficients out of range");
  }
}

std::size_t RolloutBuffer::size() const {
  std::size_t n = 0;
  for (const auto& s : segments) {
    n += s.steps.size();
  }
  return n;
}

Advantages compute_gae(std::span<const double> rewards, std::span<const double> values,
                       std::span<const std::uint8_t> dones, double bootstrap_value, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw std::invalid_argument("compute_gae: rewards, values and dones must have equal length");
  }
  Advantages out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_value = bootstrap_value;
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double nonterminal = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * nonterminal - values[k];
    running = delta + gamma * lambda * nonterminal * running;
    out.advantages[k] = running;
    out.returns[k] = running + values[k];
    next_value = values[k];
  }
  return out;
}

void normalize_advantages(std::vector<double>& adv) {
  if (adv.size() < 2) {
    return;
  }
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) {
    var += (a - mean) * (a - mean);
  }
  const double std = std::sqrt(var / n);
  for (double& a : adv) {
    a = (a - mean) / (std + 1e-8);
  }
}

PolicyLossResult clipped_policy_loss(std::span<const double> log_probs_new, std::span<const double> log_probs_old,
                                     std::span<const double> advantages, double clip_epsilon) {
  const std::size_t n = log_probs_new.size();
  if (log_probs_old.size() != n || advantages.size() != n) {
    throw std::invalid_argument("clipped_policy_loss: inputs must have equal length");
  }
  PolicyLossResult res;
  res.grad_log_prob.assign(n, 0.0);
  std::vector<double> ratios(n);
  std::size_t valid = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ratios[i] = std::exp(log_probs_new[i] - log_probs_old[i]);
    if (std::isfinite(ratios[i])) {
      ++valid;
    } else {
      ++res.excluded;
    }
  }
  if (valid == 0) {
    return res;
  }
  const double scale = 1.0 / static_cast<double>(valid);
  double objective = 0.0;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double rho = ratios[i];
    if (!std::isfinite(rho)) {
      continue;
    }
    const double a = advantages[i];
    const double unclipped = rho * a;
    const double clipped_obj = std::clamp(rho, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * a;
    if (std::abs(rho - 1.0) > clip_epsilon) {
      ++clipped;
    }
    if (unclipped <= clipped_obj) {
      objective += unclipped;
      res.grad_log_prob[i] = -a * rho * scale;
    } else {
      objective += clipped_obj;
    }
  }
  res.loss = -objective * scale;
  res.clip_fraction = static_cast<double>(clipped) * scale;
  return res;
}

namespace {

struct Chunk {
  std::size_t segment = 0;
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t flat_offset = 0;  // index of the first step in the flattened buffer
};

}  // namespace

SurrogateResult surrogate_loss(agent::ActorCritic& agent, std::span<const Sequence> batch, const TrainConfig& cfg,
                               bool accumulate_grad) {
  std::size_t total = 0;
  for (const auto& seq : batch) {
    if (seq.advantages.size() != seq.steps.size() || seq.returns.size() != seq.steps.size()) {
      throw std::invalid_argument("surrogate_loss: advantages and returns must match the sequence length");
    }
    total += seq.steps.size();
  }
  SurrogateResult res;
  if (total == 0) {
    return res;
  }

  std::vector<agent::ActorCritic::StepTrace> traces(accumulate_grad ? total : 0);
  std::vector<agent::PolicyOutput> outputs(total);
  std::vector<double> lp_old(total), adv(total), ret(total);
  std::vector<const Transition*> steps(total);
  std::size_t idx = 0;
  for (const auto& seq : batch) {
    nn::RecurrentState rec;
    for (std::size_t k = 0; k < seq.steps.size(); ++k, ++idx) {
      const Transition& t = seq.steps[k];
      steps[idx] = &t;
      if (k == 0 || t.episode_start) {
        rec = t.rec;
      }
      nn::RecurrentState next;
      outputs[idx] = agent.forward(t.history, rec, next, accumulate_grad ? &traces[idx] : nullptr);
      rec = std::move(next);
      lp_old[idx] = t.log_prob;
      adv[idx] = seq.advantages[k];
      ret[idx] = seq.returns[k];
    }
  }

  res.log_probs.resize(total);
  const double inv_b = 1.0 / static_cast<double>(total);
  for (std::size_t i = 0; i < total; ++i) {
    res.log_probs[i] = agent::log_prob(outputs[i], steps[i]->raw);
    const double err = outputs[i].value - ret[i];
    res.value += err * err;
    res.entropy += agent::entropy(outputs[i]);
  }
  res.value *= inv_b;
  res.entropy *= inv_b;
  const auto pl = clipped_policy_loss(res.log_probs, lp_old, adv, cfg.clip_epsilon);
  res.policy = pl.loss;
  res.clip_fraction = pl.clip_fraction;
  res.excluded = pl.excluded;
  res.total = res.policy + cfg.value_coef * res.value - cfg.entropy_coef * res.entropy;
  if (!accumulate_grad) {
    return res;
  }

  idx = 0;
  for (const auto& seq : batch) {
    const std::size_t first = idx;
    idx += seq.steps.size();
    agent::Vector dh, dc;
    for (std::size_t i = idx; i-- > first;) {
      const auto& out = outputs[i];
      agent::ActorCritic::OutputGrad g;
      const double g_lp = pl.grad_log_prob[i];
      for (int k = 0; k < 2; ++k) {
        const double inv_var = std::exp(-2.0 * out.log_std[k]);
        const double diff = steps[i]->raw[k] - out.mean[k];
        g.d_mean[k] = g_lp * diff * inv_var;
        g.d_log_std[k] = g_lp * (diff * diff * inv_var - 1.0) - cfg.entropy_coef * inv_b;
      }
      g.d_value = cfg.value_coef * 2.0 * (out.value - ret[i]) * inv_b;
      agent.backward(traces[i], g, dh, dc);
      // The stored snapshot cuts the gradient at episode starts.
      if (i == first || steps[i]->episode_start) {
        dh.resize(0);
        dc.resize(0);
      }
    }
  }
  return res;
}

TrainStats train_update(RolloutBuffer& buffer, agent::ActorCritic& agent, const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t total = buffer.size();
  if (total == 0) {
    throw std::invalid_argument("train_update: empty rollout buffer");
  }

  // Flatten advantages/returns and cut each segment into recurrent chunks.
  std::vector<double> adv;
  std::vector<double> returns;
  std::vector<Chunk> chunks;
  adv.reserve(total);
  returns.reserve(total);
  for (std::size_t s = 0; s < buffer.segments.size(); ++s) {
    const auto& seg = buffer.segments[s];
    std::vector<double> r, v;
    std::vector<std::uint8_t> d;
    for (const auto& t : seg.steps) {
      r.push_back(t.reward);
      v.push_back(t.value);
      d.push_back(t.done ? 1 : 0);
    }
    const auto gae = compute_gae(r, v, d, seg.bootstrap_value, cfg.gamma, cfg.gae_lambda);
    for (std::size_t start = 0; start < seg.steps.size(); start += static_cast<std::size_t>(cfg.bptt_len)) {
      chunks.push_back({s, start, std::min<std::size_t>(cfg.bptt_len, seg.steps.size() - start), adv.size() + start});
    }
    adv.insert(adv.end(), gae.advantages.begin(), gae.advantages.end());
    returns.insert(returns.end(), gae.returns.begin(), gae.returns.end());
  }
  normalize_advantages(adv);

  const auto chunk_input = [&](const Chunk& c, std::size_t k, const nn::RecurrentState& carried) {
    const auto& t = buffer.segments[c.segment].steps[c.start + k];
    return (k == 0 || t.episode_start) ? t.rec : carried;
  };

  TrainStats stats;

  // Pre-update replay: ratios must be exactly 1 and recurrent states must match.
  for (const auto& c : chunks) {
    nn::RecurrentState rec;
    for (std::size_t k = 0; k < c.length; ++k) {
      const auto& t = buffer.segments[c.segment].steps[c.start + k];
      rec = chunk_input(c, k, rec);
      if (!(rec == t.rec)) {
        ++stats.alignment_mismatches;
      }
      nn::RecurrentState next;
      const auto out = agent.forward(t.history, rec, next);
      if (out.value != t.value) {
        ++stats.alignment_mismatches;
      }
      const double dev = std::abs(std::exp(agent::log_prob(out, t.raw) - t.log_prob) - 1.0);
      stats.initial_ratio_max_dev = std::max(stats.initial_ratio_max_dev, dev);
      if (dev > cfg.clip_epsilon) {
        stats.initial_clip_frac += 1.0;
      }
      rec = std::move(next);
    }
  }
  stats.initial_clip_frac /= static_cast<double>(total);

  nn::AdamConfig adam{cfg.learning_rate, 0.9, 0.999, cfg.adam_eps};
  std::vector<std::size_t> order(chunks.size());
  std::iota(order.begin(), order.end(), 0);

  double sum_policy = 0.0, sum_value = 0.0, sum_entropy = 0.0, sum_clip = 0.0, sum_norm = 0.0;
  double last_epoch_kl = 0.0;
  std::size_t last_epoch_samples = 0;
  int minibatches = 0;

  std::vector<Sequence> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    const bool last_epoch = epoch + 1 == cfg.epochs;
    std::size_t pos = 0;
    while (pos < order.size()) {
      batch.clear();
      std::size_t batch_samples = 0;
      while (pos < order.size() && batch_samples < static_cast<std::size_t>(cfg.minibatch_size)) {
        const Chunk& c = chunks[order[pos++]];
        batch.push_back({std::span(buffer.segments[c.segment].steps).subspan(c.start, c.length),
                         std::span(adv).subspan(c.flat_offset, c.length),
                         std::span(returns).subspan(c.flat_offset, c.length)});
        batch_samples += c.length;
      }

      agent.params().zero_grad();
      const auto res = surrogate_loss(agent, batch, cfg, true);
      stats.excluded_samples += res.excluded;

      if (last_epoch) {
        std::size_t i = 0;
        for (const auto& seq : batch) {
          for (const auto& t : seq.steps) {
            const double log_ratio = res.log_probs[i++] - t.log_prob;
            const double rho = std::exp(log_ratio);
            if (std::isfinite(rho)) {
              last_epoch_kl += (rho - 1.0) - log_ratio;
              ++last_epoch_samples;
            }
          }
        }
      }

      sum_norm += nn::clip_grad_norm(agent.params(), cfg.max_grad_norm);
      stats.rejected_arrays += nn::adam_update(agent.params(), adam).rejected_arrays;

      sum_policy += res.policy;
      sum_value += res.value;
      sum_entropy += res.entropy;
      sum_clip += res.clip_fraction;
      ++minibatches;
    }
  }

  const double inv_mb = 1.0 / std::max(minibatches, 1);
  stats.policy_loss = sum_policy * inv_mb;
  stats.value_loss = sum_value * inv_mb;
  stats.entropy = sum_entropy * inv_mb;
  stats.clip_frac = sum_clip * inv_mb;
  stats.grad_norm = sum_norm * inv_mb;
  stats.kl = last_epoch_samples ? last_epoch_kl / static_cast<double>(last_epoch_samples) : 0.0;
  buffer.clear();
  return stats;
}

EpisodeTrace deterministic_rollout(const agent::ActorCritic& agent, const agent::ObservationNormalizer& normalizer,
                                   env::BerthingEnv& env, const dynamics::RigidState& start) {
  constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;
  agent::PolicyRunner runner(agent);
  EpisodeTrace trace;
  env::Observation obs = env.reset_to(start);
  trace.min_d = obs.d;
  trace.final_d = obs.d;
  double abs_delta = 0.0;
  bool done = false;
  while (!done) {
    const auto& flat = runner.observe(obs, normalizer);
    nn::RecurrentState next;
    const auto out = agent.forward(flat, runner.recurrent(), next);
    runner.recurrent() = std::move(next);
    const auto act = agent::deterministic_action(out, agent.bounds());
    const auto res = env.step(act.action);
    const auto& s = env.state();
    TrajectoryRow row;
    row.t = env.steps() * env.dt();
    row.x = s.x;
    row.y = s.y;
    row.psi_deg = env::wrap_degrees(s.psi * kRadToDeg);
    row.u = s.u;
    row.v = s.v;
    row.r = s.r;
    row.delta_deg = res.info.delta_actual;
    row.n = res.info.n_actual;
    row.reward = res.reward;
    row.d = res.info.d;
    row.psi_prime_deg = res.info.psi_prime_deg;
    trace.rows.push_back(row);
    trace.episode_return += res.reward;
    trace.min_d = std::min(trace.min_d, res.info.d);
    trace.final_d = res.info.d;
    abs_delta += std::abs(res.info.delta_actual);
    if (res.done && (res.info.aborted || res.info.diverged)) {
      trace.abort_cause = res.info.cause;
    }
    obs = res.obs;
    done = res.done;
  }
  trace.steps = env.steps();
  trace.mean_abs_delta = trace.steps ? abs_delta / trace.steps : 0.0;
  trace.success = trace.final_d <= env.config().goal.tolerance;
  return trace;
}

TrainerState make_trainer_state(const agent::ActorCritic& agent, const LoopConfig& loop) {
  const auto& cfg = agent.config();
  TrainerState st{agent::ObservationNormalizer(agent::feature_count(cfg), cfg.obs_clip, cfg.normalize_obs),
                  Rng(loop.seed, 3), {}, {}, 0, 0, 0};
  for (int w = 0; w < loop.workers; ++w) {
    st.reset_rngs.emplace_back(loop.seed, 1000 + static_cast<std::uint64_t>(w));
    st.action_rngs.emplace_back(loop.seed, 2000 + static_cast<std::uint64_t>(w));
  }
  return st;
}

namespace {

struct LocalStep {
  double reward = 0.0;
  env::StepInfo info;
  double previous_delta = 0.0;
  bool episode_start = false;
  bool done = false;
};

struct Worker {
  env::BerthingEnv env;
  agent::PolicyRunner runner;
  env::Observation obs;
  bool needs_reset = true;
  bool pending_observed = false;  // history already holds obs (pushed for the bootstrap value)

  // Per-window outputs.
  Segment segment;
  std::vector<LocalStep> local;
  std::vector<agent::Vector> encoded;  // raw encodings observed this window, for the normalizer

  // Episode bookkeeping, owned by the merge phase.
  std::int64_t episode_id = 0;
  double episode_return = 0.0;
  int episode_steps = 0;
  double min_d = 0.0;
};

void collect_window(Worker& w, const agent::ActorCritic& agent, const agent::ObservationNormalizer& norm,
                    Rng& reset_rng, Rng& action_rng, int n_steps) {
  w.segment = Segment{};
  w.local.clear();
  w.encoded.clear();
  for (int k = 0; k < n_steps; ++k) {
    LocalStep ls;
    if (w.needs_reset) {
      w.obs = w.env.reset(reset_rng);
      w.runner.reset();
      w.needs_reset = false;
      w.pending_observed = false;
      ls.episode_start = true;
    }
    if (!w.pending_observed) {
      w.runner.observe(w.obs, norm);
      w.encoded.push_back(w.runner.last_encoded());
    }
    w.pending_observed = false;

    Transition t;
    t.history = w.runner.history();
    t.rec = w.runner.recurrent();
    t.episode_start = ls.episode_start;
    nn::RecurrentState next;
    const auto out = agent.forward(t.history, t.rec, next);
    w.runner.recurrent() = std::move(next);
    const auto sample = agent::sample_action(out, action_rng, agent.bounds());

    ls.previous_delta = w.env.actuators().delta;
    const auto res = w.env.step(sample.action);
    t.raw = sample.raw;
    t.action = sample.action;
    t.log_prob = sample.log_prob;
    t.value = out.value;
    t.reward = res.reward;
    t.done = res.done;
    w.segment.steps.push_back(std::move(t));

    ls.reward = res.reward;
    ls.info = res.info;
    ls.done = res.done;
    w.local.push_back(std::move(ls));

    w.obs = res.obs;
    w.needs_reset = res.done;
  }
  if (!w.needs_reset) {
    const auto& flat = w.runner.observe(w.obs, norm);
    w.encoded.push_back(w.runner.last_encoded());
    w.pending_observed = true;
    w.segment.bootstrap_value = agent.forward(flat, w.runner.recurrent()).first.value;
  }
}

}  // namespace

RunSummary training_loop(const EnvFactory& make_env, agent::ActorCritic& agent, TrainerState& state,
                         const TrainConfig& cfg, const LoopConfig& loop, TrainingObserver& observer) {
  cfg.validate();
  if (loop.workers < 1 || static_cast<std::size_t>(loop.workers) != state.reset_rngs.size() ||
      state.action_rngs.size() != state.reset_rngs.size()) {
    throw std::invalid_argument("training_loop: worker count does not match trainer state");
  }
  std::vector<Worker> workers;
  workers.reserve(static_cast<std::size_t>(loop.workers));
  for (int w = 0; w < loop.workers; ++w) {
    workers.push_back(Worker{make_env(), agent::PolicyRunner(agent), {}, true, false, {}, {}, {}, 0, 0.0, 0, 0.0});
  }

  RunSummary summary;
  std::int64_t episodes_started = state.episodes_done;
  while (state.episodes_done < loop.episodes) {
    const agent::ObservationNormalizer snapshot = state.normalizer;
    if (workers.size() == 1) {
      collect_window(workers[0], agent, snapshot, state.reset_rngs[0], state.action_rngs[0], cfg.n_steps);
    } else {
      std::vector<std::thread> threads;
      for (std::size_t w = 0; w < workers.size(); ++w) {
        threads.emplace_back([&, w] {
          collect_window(workers[w], agent, snapshot, state.reset_rngs[w], state.action_rngs[w], cfg.n_steps);
        });
      }
      for (auto& t : threads) {
        t.join();
      }
    }

    // Deterministic merge by worker index.
    RolloutBuffer buffer;
    for (std::size_t wi = 0; wi < workers.size(); ++wi) {
      auto& w = workers[wi];
      for (const auto& x : w.encoded) {
        state.normalizer.update(x);
      }
      for (const auto& ls : w.local) {
        if (ls.episode_start) {
          w.episode_id = ++episodes_started;
          w.episode_return = 0.0;
          w.episode_steps = 0;
          w.min_d = ls.info.d;
        }
        w.episode_return += ls.reward;
        ++w.episode_steps;
        w.min_d = std::min(w.min_d, ls.info.d);
        StepRecord rec;
        rec.global_step = ++state.global_step;
        rec.episode = w.episode_id;
        rec.worker = static_cast<int>(wi);
        rec.reward = ls.reward;
        rec.episode_return = w.episode_return;
        rec.info = ls.info;
        rec.previous_delta = ls.previous_delta;
        rec.dt = w.env.dt();
        observer.on_step(rec);
        if (ls.done) {
          ++state.episodes_done;
          if (ls.info.diverged) {
            ++summary.diverged_episodes;
          }
          EpisodeRecord er;
          er.episode = w.episode_id;
          er.worker = static_cast<int>(wi);
          er.steps = w.episode_steps;
          er.episode_return = w.episode_return;
          er.final_d = ls.info.d;
          er.min_d = w.min_d;
          er.success = ls.info.success;
          er.abort_cause = ls.info.cause;
          observer.on_episode_end(er);
        }
      }
      buffer.segments.push_back(std::move(w.segment));
    }

    TrainStats stats = train_update(buffer, agent, cfg, state.shuffle_rng);
    stats.update_idx = ++state.updates;
    if (!observer.on_update(stats)) {
      break;
    }
  }
  summary.global_steps = state.global_step;
  summary.episodes = state.episodes_done;
  summary.updates = state.updates;
  return summary;
}

}  // namespace berth::ppo
