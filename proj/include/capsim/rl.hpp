#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "capsim/plant.hpp"

namespace capsim {

// Episodic switching environment over the capture plant. Every episode
// starts from the fresh column; the reward is the negated stage cost
// -(W_s * x_out_k + W_d * u_d_k) so a maximizing agent minimizes the
// economic cost.
struct EnvConfig {
  int steps_per_episode = 20;
  double W_s = 1.0;
  double W_d = 0.5;
  enum class Observation : std::uint8_t { kFullState, kOutletHistory } observation =
      Observation::kFullState;
  int outlet_history_len = 4;  ///< for the outlet-history ablation mode
  NoiseConfig noise;

  void validate() const {
    if (steps_per_episode < 1) throw InvalidConfig("EnvConfig.steps_per_episode must be >= 1");
    if (W_s < 0.0 || W_d < 0.0) throw InvalidConfig("EnvConfig: weights must be >= 0");
    noise.validate();
  }
};

struct AgentConfig {
  int episodes = 2000;       ///< desk-scale default; 10000 at paper scale
  int batch_episodes = 10;
  double learning_rate = 1e-4;
  double gamma = 0.99;
  double clip_ratio = 0.2;
  double gae_lambda = 0.95;
  int update_epochs = 4;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  std::vector<int> hidden = {64, 64};
  int seeds = 5;  ///< replicate trainings; 20 at paper scale

  void validate() const {
    if (episodes < 1 || batch_episodes < 1) throw InvalidConfig("AgentConfig: counts must be >= 1");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidConfig("AgentConfig.gamma must be in (0,1]");
    if (!(clip_ratio > 0.0 && clip_ratio < 1.0)) {
      throw InvalidConfig("AgentConfig.clip_ratio must be in (0,1)");
    }
  }
};

// Small dense network with tanh hidden layers; the head is linear (the
// actor applies a logistic squash on top).
struct Mlp {
  struct Layer {
    Eigen::MatrixXd W;
    Eigen::VectorXd b;
  };
  std::vector<Layer> layers;

  double forward(const Eigen::VectorXd& obs) const;
};

// Stochastic binary-action policy: actor gives P(u_d = 1 | obs), critic the
// state value. Observation normalization constants ride along.
struct Policy {
  Mlp actor, critic;
  EnvConfig::Observation observation = EnvConfig::Observation::kFullState;
  int outlet_history_len = 4;
  double c_F_norm = 49.9219;   ///< concentration scale for observations
  double q1_norm = 1.0, q2_norm = 1.0;

  double action_probability(const Eigen::VectorXd& obs) const;
  double value(const Eigen::VectorXd& obs) const;
};

/// Deterministic mode: indicator(p >= 0.5); stochastic mode samples.
int act(const Policy& policy, const Eigen::VectorXd& obs, bool deterministic, Rng* rng = nullptr);

class CaptureEnv {
 public:
  CaptureEnv(const ColumnParams& p, const StepConfig& step, const ContinuousInput& nominal,
             const EnvConfig& cfg, std::uint64_t seed);

  struct StepOutcome {
    Eigen::VectorXd observation;
    double reward = 0.0;
    bool done = false;
  };

  Eigen::VectorXd reset();
  /// Throws InvalidConfig when stepping a finished episode.
  StepOutcome step(int action);

  Eigen::VectorXd observe() const;
  int obs_dim() const;
  const ColumnParams& params() const { return params_; }

 private:
  ColumnParams params_;
  EnvConfig cfg_;
  ContinuousInput nominal_;
  Integrator integ_;
  Rng rng_;
  ColumnState state_;
  std::vector<double> outlet_history_;
  int t_ = 0;
  bool done_ = true;
};

struct TrainLogRow {
  int batch = 0;
  double mean_return = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

struct PpoResult {
  Policy policy;
  std::vector<TrainLogRow> log;
};

/// Clipped-surrogate PPO with GAE; deterministic given the seed. Aborts with
/// a diagnostic if a loss turns non-finite.
PpoResult train_ppo(const ColumnParams& p, const StepConfig& step, const ContinuousInput& nominal,
                    const EnvConfig& env_cfg, const AgentConfig& agent_cfg, std::uint64_t seed,
                    const std::string& log_csv = {});

/// Runs the closed loop with deterministic actions for each seed and
/// averages the metrics; switch steps are taken from the first replicate.
struct PolicyEvaluation {
  Metrics mean;
  std::vector<Metrics> per_replicate;
};
PolicyEvaluation evaluate_policy(const Policy& policy, const ClosedLoopScenario& scenario,
                                 double W_s, double W_d, const std::vector<std::uint64_t>& seeds);

/// Closed-loop adapter so policies run under run_closed_loop.
class PolicyController : public Controller {
 public:
  PolicyController(const Policy& policy, const ColumnParams& params, bool deterministic = true,
                   std::uint64_t seed = 0);
  int decide(double y, const Trajectory& history, const ColumnState& state) override;

 private:
  const Policy& policy_;
  ColumnParams params_;
  bool deterministic_;
  Rng rng_;
  std::vector<double> outlet_history_;
};

/// Observation vector shared by the env and the controller adapter.
Eigen::VectorXd make_observation(const Policy& policy_like_norms, const ColumnParams& p,
                                 const ColumnState& state, const std::vector<double>& outlet_hist);

void save_policy(const std::string& path, const Policy& policy);
Policy load_policy(const std::string& path);

}  // namespace capsim
