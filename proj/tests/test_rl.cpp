#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "capsim/rl.hpp"
#include "test_support.hpp"

using namespace capsim;
using capsim::test::frozen_params;
using capsim::test::frozen_step;

namespace {

// Policy with a fixed action logit, for the act() contract tests.
Policy constant_logit_policy(double logit, int obs_dim) {
  Policy p;
  Mlp::Layer actor_out;
  actor_out.W = Eigen::MatrixXd::Zero(1, obs_dim);
  actor_out.b = Eigen::VectorXd::Constant(1, logit);
  p.actor.layers.push_back(actor_out);
  Mlp::Layer critic_out;
  critic_out.W = Eigen::MatrixXd::Zero(1, obs_dim);
  critic_out.b = Eigen::VectorXd::Zero(1);
  p.critic.layers.push_back(critic_out);
  p.observation = EnvConfig::Observation::kOutletHistory;
  p.outlet_history_len = obs_dim;
  return p;
}

}  // namespace

TEST_CASE("switch action resets the observation to the fresh column") {
  ColumnParams p = frozen_params();
  EnvConfig cfg;
  CaptureEnv env(p, frozen_step(), ContinuousInput{}, cfg, 1);
  env.reset();
  for (int k = 0; k < 5; ++k) env.step(0);
  auto out = env.step(1);
  for (int i = 0; i < out.observation.size(); ++i) CHECK(out.observation(i) == 0.0);
  CHECK(out.reward == doctest::Approx(-cfg.W_d).epsilon(1e-12));
}

TEST_CASE("holding a dead column earns zero reward") {
  ColumnParams p = frozen_params();
  EnvConfig cfg;
  ContinuousInput feedless;
  feedless.c_F = 0.0;
  CaptureEnv env(p, frozen_step(), feedless, cfg, 1);
  env.reset();
  auto out = env.step(0);
  CHECK(out.reward == 0.0);
}

TEST_CASE("greedy always-switch return is -W_d per step") {
  ColumnParams p = frozen_params();
  EnvConfig cfg;
  cfg.W_s = 0.7;
  cfg.W_d = 0.3;
  CaptureEnv env(p, frozen_step(), ContinuousInput{}, cfg, 1);
  env.reset();
  double ret = 0.0;
  bool done = false;
  while (!done) {
    auto out = env.step(1);
    ret += out.reward;
    done = out.done;
  }
  CHECK(ret == doctest::Approx(-0.3 * 20).epsilon(1e-12));
}

TEST_CASE("stepping a finished episode is an error") {
  ColumnParams p = frozen_params();
  EnvConfig cfg;
  cfg.steps_per_episode = 2;
  CaptureEnv env(p, frozen_step(), ContinuousInput{}, cfg, 1);
  env.reset();
  env.step(1);
  auto out = env.step(1);
  CHECK(out.done);
  CHECK_THROWS_AS(env.step(1), InvalidConfig);
}

TEST_CASE("negated undiscounted return equals the metrics cost") {
  ColumnParams p = frozen_params();
  EnvConfig cfg;
  cfg.W_s = 0.7;
  cfg.W_d = 0.3;
  CaptureEnv env(p, frozen_step(), ContinuousInput{}, cfg, 1);
  env.reset();
  Rng rng(8);
  Trajectory traj;
  double ret = 0.0;
  bool done = false;
  int k = 0;
  while (!done) {
    // Switch around the breakthrough region sometimes, else hold.
    const int a = (k > 10 && rng.uniform() < 0.25) ? 1 : 0;
    auto out = env.step(a);
    ret += out.reward;
    traj.u_d.push_back(a);
    traj.x_out_true.push_back(a == 1 ? 0.0 : -out.reward / cfg.W_s);
    traj.c_F_applied.push_back(0);
    traj.Q_applied.push_back(0);
    traj.y_measured.push_back(0);
    done = out.done;
    ++k;
  }
  Metrics m = compute_metrics(traj, cfg.W_s, cfg.W_d);
  CHECK(-ret == doctest::Approx(m.TC).epsilon(1e-12));
}

TEST_CASE("act thresholds and samples correctly") {
  Policy p7 = constant_logit_policy(std::log(0.7 / 0.3), 4);
  Eigen::VectorXd obs = Eigen::VectorXd::Zero(4);
  CHECK(p7.action_probability(obs) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(act(p7, obs, true) == 1);
  Policy p2 = constant_logit_policy(std::log(0.2 / 0.8), 4);
  CHECK(act(p2, obs, true) == 0);

  Policy p5 = constant_logit_policy(0.0, 4);
  Rng rng(123);
  int ones = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ones += act(p5, obs, false, &rng);
  const double freq = static_cast<double>(ones) / draws;
  CHECK(freq >= 0.48);
  CHECK(freq <= 0.52);
}

TEST_CASE("policy round-trips through the text format") {
  ColumnParams p = frozen_params();
  EnvConfig env_cfg;
  AgentConfig agent;
  agent.episodes = 20;
  agent.batch_episodes = 5;
  PpoResult res = train_ppo(p, frozen_step(), ContinuousInput{}, env_cfg, agent, 3);
  const std::string path = "policy_roundtrip_test.txt";
  save_policy(path, res.policy);
  Policy back = load_policy(path);
  CaptureEnv env(p, frozen_step(), ContinuousInput{}, env_cfg, 1);
  Eigen::VectorXd obs = env.reset();
  CHECK(back.action_probability(obs) ==
        doctest::Approx(res.policy.action_probability(obs)).epsilon(1e-15));
  CHECK(back.value(obs) == doctest::Approx(res.policy.value(obs)).epsilon(1e-15));
  std::filesystem::remove(path);
}

TEST_CASE("smoke training completes with a full-length log") {
  ColumnParams p = frozen_params();
  EnvConfig env_cfg;
  AgentConfig agent;
  agent.episodes = 200;
  PpoResult res = train_ppo(p, frozen_step(), ContinuousInput{}, env_cfg, agent, 11);
  CHECK(res.log.size() == 20);  // episodes / batch_episodes
  for (std::size_t i = 0; i < res.log.size(); ++i) {
    CHECK(res.log[i].batch == static_cast<int>(i));
    CHECK(std::isfinite(res.log[i].mean_return));
  }
}

TEST_CASE("identical seeds train identical policies") {
  ColumnParams p = frozen_params();
  EnvConfig env_cfg;
  AgentConfig agent;
  agent.episodes = 60;
  PpoResult a = train_ppo(p, frozen_step(), ContinuousInput{}, env_cfg, agent, 21);
  PpoResult b = train_ppo(p, frozen_step(), ContinuousInput{}, env_cfg, agent, 21);
  for (std::size_t l = 0; l < a.policy.actor.layers.size(); ++l) {
    CHECK(a.policy.actor.layers[l].W == b.policy.actor.layers[l].W);
    CHECK(a.policy.actor.layers[l].b == b.policy.actor.layers[l].b);
  }
  ClosedLoopScenario sc;
  sc.params = p;
  sc.step = frozen_step();
  sc.steps = 30;
  PolicyEvaluation ea = evaluate_policy(a.policy, sc, 1.0, 0.5, {0, 1});
  PolicyEvaluation eb = evaluate_policy(b.policy, sc, 1.0, 0.5, {0, 1});
  CHECK(ea.mean.TC == eb.mean.TC);
  CHECK(ea.mean.PL == eb.mean.PL);
}

TEST_CASE("deterministic evaluation is replicate-invariant and periodic") {
  ColumnParams p = frozen_params();
  Policy never = constant_logit_policy(-5.0, 4);  // never switches
  ClosedLoopScenario sc;
  sc.params = p;
  sc.step = frozen_step();
  sc.steps = 25;
  PolicyEvaluation ev = evaluate_policy(never, sc, 1.0, 0.5, {0, 1, 2});
  for (const auto& r : ev.per_replicate) {
    CHECK(r.TC == ev.per_replicate.front().TC);
    CHECK(r.switches == 0);
  }
}

TEST_CASE("myopic agents do not switch earlier than far-sighted ones") {
  ColumnParams p = frozen_params();
  StepConfig step = frozen_step();
  EnvConfig env_cfg;
  AgentConfig agent;
  agent.episodes = 500;
  auto first_switch = [&](double gamma) {
    AgentConfig a = agent;
    a.gamma = gamma == 0.0 ? 1e-9 : gamma;  // gamma must be > 0; 1e-9 is myopic
    PpoResult res = train_ppo(p, step, ContinuousInput{}, env_cfg, a, 31);
    ClosedLoopScenario sc;
    sc.params = p;
    sc.step = step;
    sc.steps = 25;
    PolicyEvaluation ev = evaluate_policy(res.policy, sc, env_cfg.W_s, env_cfg.W_d, {0});
    return ev.per_replicate.front().switch_steps.empty()
               ? 99
               : ev.per_replicate.front().switch_steps.front();
  };
  const int myopic = first_switch(0.0);
  const int farsighted = first_switch(0.99);
  CHECK(myopic >= farsighted);
}
