#include "berth/harness/runner.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>

#include <spdlog/spdlog.h>

#include "berth/harness/checkpoint.hpp"
#include "berth/harness/io.hpp"
#include "berth/harness/plots.hpp"

namespace berth::harness {

RunLock::RunLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
  std::filesystem::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw RunLockedError("run directory '" + dir.string() + "' is locked by another writer (remove " +
                         path_.string() + " if that run is gone)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

namespace {

class RunObserver : public ppo::TrainingObserver {
 public:
  RunObserver(const RunConfig& cfg, const std::filesystem::path& dir, agent::ActorCritic& agent,
              ppo::TrainerState& state, const RunHooks& hooks)
      : cfg_(cfg),
        dir_(dir),
        agent_(agent),
        state_(state),
        hooks_(hooks),
        rewards_(dir / "rewards.csv"),
        stats_(dir / "stats.csv"),
        validation_(dir / "validation.csv"),
        val_starts_(random_starts(cfg.run.eval_starts, cfg.run.eval_seed, cfg.env)) {
    validation_ << "update_idx,successes,starts,mean_final_d\n";
  }

  void on_step(const ppo::StepRecord& rec) override {
    rewards_.append(rec);
    if (hooks_.on_step) {
      hooks_.on_step(rec);
    }
    steps_.push_back(static_cast<double>(rec.global_step));
    smoothed_.push_back(rewards_.smoothed());
  }

  void on_episode_end(const ppo::EpisodeRecord& ep) override {
    spdlog::debug("episode {} steps {} return {:.3f} final d {:.3f} {}", ep.episode, ep.steps, ep.episode_return,
                  ep.final_d, ep.success ? "success" : ep.abort_cause);
  }

  bool on_update(const ppo::TrainStats& s) override {
    stats_.append(s);
    if (hooks_.on_update) {
      hooks_.on_update(s);
    }
    if (s.alignment_mismatches != 0 || s.initial_ratio_max_dev > 1e-10) {
      spdlog::warn("update {}: pre-update replay mismatch (ratio dev {:.3g}, {} state mismatches)", s.update_idx,
                   s.initial_ratio_max_dev, s.alignment_mismatches);
    }
    spdlog::info("update {:5d}  episodes {:5d}  smoothed reward {:+.4f}  kl {:.4f}  clip {:.3f}", s.update_idx,
                 state_.episodes_done, rewards_.smoothed(), s.kl, s.clip_frac);
    if (s.update_idx % cfg_.run.checkpoint_every == 0) {
      char name[48];
      std::snprintf(name, sizeof(name), "update_%06d.ckpt", s.update_idx);
      save_checkpoint(dir_ / "checkpoints" / name, cfg_, agent_, state_);
    }
    if (cfg_.run.eval_every > 0 && cfg_.run.eval_starts > 0 && s.update_idx % cfg_.run.eval_every == 0) {
      validate(s.update_idx);
    }
    return true;
  }

  void finish() {
    rewards_.flush();
    stats_.flush();
    validation_.flush();
    std::ofstream(dir_ / "reward.svg") << render_reward_svg(steps_, smoothed_, "smoothed reward");
  }

  const std::optional<ValidationPoint>& best() const { return best_; }

 private:
  void validate(int update_idx) {
    const auto res = evaluate_policy(agent_, state_.normalizer, cfg_, val_starts_);
    const ValidationPoint p{update_idx, res.successes(), res.mean_final_d()};
    validation_ << p.update_idx << ',' << p.successes << ',' << val_starts_.size() << ','
                << format_double(p.mean_final_d) << '\n';
    spdlog::info("validation at update {}: {}/{} berthed, mean final d {:.3f}", update_idx, p.successes,
                 val_starts_.size(), p.mean_final_d);
    const bool better = !best_ || p.successes > best_->successes ||
                        (p.successes == best_->successes && p.mean_final_d < best_->mean_final_d);
    if (better) {
      best_ = p;
      save_checkpoint(dir_ / "best.ckpt", cfg_, agent_, state_);
    }
  }

  const RunConfig& cfg_;
  std::filesystem::path dir_;
  agent::ActorCritic& agent_;
  ppo::TrainerState& state_;
  const RunHooks& hooks_;
  RewardLog rewards_;
  StatsLog stats_;
  std::ofstream validation_;
  std::vector<StartSpec> val_starts_;
  std::optional<ValidationPoint> best_;
  std::vector<double> steps_;
  std::vector<double> smoothed_;
};

}  // namespace

TrainResult run_training(const RunConfig& config, const std::filesystem::path& out_dir, const RunHooks& hooks) {
  config.validate();
  RunLock lock(out_dir);
  {
    std::ofstream out(out_dir / "config.json", std::ios::trunc);
    out << config.to_json().dump(2) << '\n';
    if (!out) {
      throw std::runtime_error("cannot write config.json in '" + out_dir.string() + "'");
    }
  }

  agent::ActorCritic agent(config.agent, config.action_bounds(), config.seed);
  const ppo::LoopConfig loop{config.run.episodes, config.run.workers, config.seed};
  ppo::TrainerState state = ppo::make_trainer_state(agent, loop);
  RunObserver observer(config, out_dir, agent, state, hooks);

  spdlog::info("training profile '{}' seed {} for {} episodes ({} parameters)", config.profile, config.seed,
               config.run.episodes, agent.params().num_scalars());
  const auto make_env = [&config] { return env::BerthingEnv(config.ship, config.env); };

  TrainResult result;
  result.summary = ppo::training_loop(make_env, agent, state, config.ppo, loop, observer);
  observer.finish();

  result.final_checkpoint = out_dir / "final.ckpt";
  save_checkpoint(result.final_checkpoint, config, agent, state);
  result.best = observer.best();
  if (result.best) {
    result.best_checkpoint = out_dir / "best.ckpt";
  }
  spdlog::info("finished: {} episodes, {} steps, {} updates, {} diverged", result.summary.episodes,
               result.summary.global_steps, result.summary.updates, result.summary.diverged_episodes);
  return result;
}

}  // namespace berth::harness
