#include <doctest.h>

#include <cmath>
#include <vector>

#include "berth/ppo.hpp"
#include "test_support.hpp"

using namespace berth;
using namespace berth::ppo;

namespace {

// O(N^2) discounted sums: A_t = sum_k (gamma lambda)^k delta_{t+k}, cut at the first done.
Advantages gae_oracle(const std::vector<double>& r, const std::vector<double>& v, const std::vector<std::uint8_t>& d,
                      double boot, double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? v[t + 1] : boot;
    delta[t] = r[t] + gamma * next * (d[t] ? 0.0 : 1.0) - v[t];
  }
  Advantages out;
  for (std::size_t t = 0; t < n; ++t) {
    double a = 0.0, w = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      a += w * delta[k];
      if (d[k]) break;
      w *= gamma * lambda;
    }
    out.advantages.push_back(a);
    out.returns.push_back(a + v[t]);
  }
  return out;
}

agent::AgentConfig tiny_agent() {
  agent::AgentConfig cfg;
  cfg.history_len = 4;
  cfg.hl_size = 6;
  cfg.lstm_size = 8;
  cfg.normalize_obs = false;
  return cfg;
}

// Collects one window the same way the trainer does, with the normalizer disabled.
RolloutBuffer collect(const agent::ActorCritic& ac, env::BerthingEnv& e, int n, std::uint64_t seed) {
  Rng reset_rng(seed, 1), act_rng(seed, 2);
  const agent::ObservationNormalizer norm(agent::feature_count(ac.config()), 10.0, false);
  agent::PolicyRunner runner(ac);
  Segment seg;
  auto obs = e.reset(reset_rng);
  bool start = true;
  for (int t = 0; t < n; ++t) {
    Transition tr;
    tr.history = runner.observe(obs, norm);
    tr.rec = runner.recurrent();
    tr.episode_start = start;
    nn::RecurrentState next;
    const auto out = ac.forward(tr.history, tr.rec, next);
    const auto s = agent::sample_action(out, act_rng, ac.bounds());
    tr.raw = s.raw;
    tr.action = s.action;
    tr.log_prob = s.log_prob;
    tr.value = out.value;
    const auto res = e.step(s.action);
    tr.reward = res.reward;
    tr.done = res.done;
    runner.recurrent() = next;
    obs = res.obs;
    start = false;
    if (res.done) {
      runner.reset();
      obs = e.reset(reset_rng);
      start = true;
    }
    seg.steps.push_back(std::move(tr));
  }
  nn::RecurrentState next;
  seg.bootstrap_value = ac.forward(runner.observe(obs, norm), runner.recurrent(), next).value;
  RolloutBuffer buf;
  buf.segments.push_back(std::move(seg));
  return buf;
}

env::BerthingEnv short_env(int max_steps) {
  env::EnvConfig cfg;
  cfg.episode.max_steps = max_steps;
  auto model = test::reference_model();
  model.integrator.dt = 2.0;
  return env::BerthingEnv(model, cfg);
}

}  // namespace

TEST_CASE("generalized advantage estimation") {
  SUBCASE("single step") {
    const auto g = compute_gae(std::vector{1.0}, std::vector{0.0}, std::vector<std::uint8_t>{0}, 0.0, 1.0, 1.0);
    CHECK(g.advantages == std::vector{1.0});
    CHECK(g.returns == std::vector{1.0});
  }
  SUBCASE("perfect critic gives zero advantages") {
    const std::vector<double> v{3.0, 2.0, 1.5, 0.5};
    const double boot = 0.25, gamma = 0.5;
    std::vector<double> r;
    for (std::size_t t = 0; t < v.size(); ++t) {
      r.push_back(v[t] - gamma * (t + 1 < v.size() ? v[t + 1] : boot));
    }
    const auto g = compute_gae(r, v, std::vector<std::uint8_t>(4, 0), boot, gamma, 0.9);
    for (double a : g.advantages) CHECK(a == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(compute_gae(std::vector{1.0, 2.0}, std::vector{0.0}, std::vector<std::uint8_t>{0, 0}, 0, 1, 1),
                    std::invalid_argument);
  }
  SUBCASE("brute force on every length up to 32") {
    Rng rng(77);
    for (int trial = 0; trial < 40; ++trial) {
      for (std::size_t n = 1; n <= 32; ++n) {
        std::vector<double> r(n), v(n);
        std::vector<std::uint8_t> d(n);
        for (std::size_t t = 0; t < n; ++t) {
          r[t] = rng.uniform(-2, 2);
          v[t] = rng.uniform(-5, 5);
          d[t] = rng.uniform(0, 1) < 0.15;
        }
        const double boot = rng.uniform(-5, 5), gamma = rng.uniform(0.5, 1.0), lambda = rng.uniform(0.5, 1.0);
        const auto got = compute_gae(r, v, d, boot, gamma, lambda);
        const auto want = gae_oracle(r, v, d, boot, gamma, lambda);
        for (std::size_t t = 0; t < n; ++t) {
          REQUIRE(std::abs(got.advantages[t] - want.advantages[t]) < 1e-10);
          REQUIRE(std::abs(got.returns[t] - want.returns[t]) < 1e-10);
        }
      }
    }
  }
}

TEST_CASE("advantage normalization") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 300;
    std::vector<double> a(n);
    const double shift = rng.uniform(-100, 100), scale = rng.uniform(1e-3, 1e3);
    for (auto& x : a) x = shift + scale * rng.normal();
    normalize_advantages(a);
    double mean = 0.0, var = 0.0;
    for (double x : a) mean += x;
    mean /= n;
    for (double x : a) var += (x - mean) * (x - mean);
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(std::sqrt(var / n) - 1.0) < 1e-6);
  }
  std::vector<double> one{4.2};
  normalize_advantages(one);
  CHECK(one == std::vector{4.2});
  std::vector<double> flat(5, 0.0);
  normalize_advantages(flat);
  CHECK(flat == std::vector<double>(5, 0.0));
}

TEST_CASE("clipped surrogate") {
  SUBCASE("ratio one gives minus the mean advantage") {
    std::vector<double> lp{-1.0, -2.0, 0.5}, adv{1.0, -0.5, -0.5};
    const auto res = clipped_policy_loss(lp, lp, adv, 0.2);
    CHECK(res.loss == doctest::Approx(0.0).scale(1.0));
    CHECK(res.clip_fraction == 0.0);
  }
  SUBCASE("ratio two with a positive advantage is clipped at 1.2") {
    const auto res = clipped_policy_loss(std::vector{std::log(2.0)}, std::vector{0.0}, std::vector{1.0}, 0.2);
    CHECK(res.loss == doctest::Approx(-1.2));
    CHECK(res.clip_fraction == 1.0);
    CHECK(res.grad_log_prob[0] == 0.0);
  }
  SUBCASE("random batch matches an elementwise recomputation and its gradient") {
    Rng rng(8);
    const int n = 64;
    std::vector<double> lnew(n), lold(n), adv(n);
    for (int i = 0; i < n; ++i) {
      lold[i] = rng.uniform(-3, 1);
      lnew[i] = lold[i] + rng.uniform(-0.5, 0.5);
      adv[i] = rng.normal();
    }
    const auto res = clipped_policy_loss(lnew, lold, adv, 0.2);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double rho = std::exp(lnew[i] - lold[i]);
      const double clipped = std::min(std::max(rho, 0.8), 1.2);
      sum += std::min(rho * adv[i], clipped * adv[i]);
    }
    CHECK(res.loss == doctest::Approx(-sum / n).epsilon(1e-14));
    for (int i = 0; i < n; ++i) {
      auto lp = lnew, lm = lnew;
      lp[i] += 1e-7;
      lm[i] -= 1e-7;
      const double num =
          (clipped_policy_loss(lp, lold, adv, 0.2).loss - clipped_policy_loss(lm, lold, adv, 0.2).loss) / 2e-7;
      CHECK(res.grad_log_prob[i] == doctest::Approx(num).epsilon(1e-5).scale(1e-6));
    }
  }
  SUBCASE("non-finite ratios are excluded and counted") {
    const auto res = clipped_policy_loss(std::vector<double>{0.0, NAN}, std::vector{0.0, 0.0}, std::vector{1.0, 1.0}, 0.2);
    CHECK(res.excluded == 1);
    CHECK(std::isfinite(res.loss));
    CHECK(res.loss == doctest::Approx(-1.0));
  }
}

TEST_CASE("train_update on a collected window") {
  TrainConfig cfg;
  cfg.n_steps = 96;
  cfg.minibatch_size = 16;
  cfg.epochs = 4;
  auto e = short_env(40);

  SUBCASE("pre-update ratios are one and the KL stays small") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      agent::ActorCritic ac(tiny_agent(), agent::ActionBounds{}, seed);
      auto buf = collect(ac, e, cfg.n_steps, seed);
      Rng rng(seed, 3);
      const auto stats = train_update(buf, ac, cfg, rng);
      CHECK(stats.initial_ratio_max_dev < 1e-10);
      CHECK(stats.initial_clip_frac == 0.0);
      CHECK(stats.alignment_mismatches == 0);
      CHECK(std::isfinite(stats.kl));
      CHECK(stats.kl < 0.1);
      CHECK(buf.size() == 0);
    }
  }
  SUBCASE("identical inputs give identical stats and parameters") {
    const auto run = [&] {
      agent::ActorCritic ac(tiny_agent(), agent::ActionBounds{}, 3);
      std::vector<TrainStats> out;
      Rng rng(3, 3);
      for (int k = 0; k < 3; ++k) {
        auto buf = collect(ac, e, cfg.n_steps, 10 + k);
        out.push_back(train_update(buf, ac, cfg, rng));
      }
      return std::pair{out, ac.params().flat_values()};
    };
    const auto [a, pa] = run();
    const auto [b, pb] = run();
    CHECK(pa == pb);
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(a[k].policy_loss == b[k].policy_loss);
      CHECK(a[k].value_loss == b[k].value_loss);
      CHECK(a[k].kl == b[k].kl);
      CHECK(a[k].grad_norm == b[k].grad_norm);
    }
  }
  SUBCASE("zero advantages and value errors leave the parameters untouched") {
    agent::ActorCritic ac(tiny_agent(), agent::ActionBounds{}, 4);
    // Zero rewards and a zero value head make every advantage and value error exactly zero.
    auto& store = ac.params();
    store.value(*store.find("value.weight")).setZero();
    store.value(*store.find("value.bias")).setZero();
    auto replay = collect(ac, e, cfg.n_steps, 4);
    for (auto& t : replay.segments[0].steps) {
      t.reward = 0.0;
    }
    replay.segments[0].bootstrap_value = 0.0;
    const auto before = store;
    cfg.entropy_coef = 0.0;
    Rng rng(4, 3);
    const auto stats = train_update(replay, ac, cfg, rng);
    CHECK(stats.policy_loss == 0.0);
    for (const auto& name : {"policy.weight", "policy.bias", "log_std", "value.weight", "value.bias"}) {
      const auto id = *store.find(name);
      CHECK(store.value(id) == before.value(id));
    }
  }
}

TEST_CASE("training loop smoke") {
  auto cfg = test::desk_config(0);
  cfg.env.episode.max_steps = 60;
  cfg.agent = tiny_agent();
  cfg.ppo.n_steps = 50;
  cfg.ppo.minibatch_size = 25;
  cfg.ppo.epochs = 2;
  struct Counter : TrainingObserver {
    int steps = 0, episodes = 0, updates = 0;
    bool ratio_ok = true;
    void on_step(const StepRecord&) override { ++steps; }
    void on_episode_end(const EpisodeRecord&) override { ++episodes; }
    bool on_update(const TrainStats& s) override {
      ++updates;
      ratio_ok = ratio_ok && s.initial_ratio_max_dev < 1e-10 && s.alignment_mismatches == 0;
      return true;
    }
  } obs;
  agent::ActorCritic ac(cfg.agent, cfg.action_bounds(), 0);
  const LoopConfig loop{3, 1, 0};
  auto state = make_trainer_state(ac, loop);
  const auto sum = training_loop([&] { return env::BerthingEnv(cfg.ship, cfg.env); }, ac, state, cfg.ppo, loop, obs);
  CHECK(sum.episodes == 3);
  CHECK(obs.episodes == 3);
  CHECK(sum.global_steps == obs.steps);
  CHECK(obs.updates == sum.updates);
  CHECK(obs.updates >= 1);
  CHECK(obs.ratio_ok);
}
