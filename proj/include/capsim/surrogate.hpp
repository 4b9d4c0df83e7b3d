#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "capsim/empc.hpp"
#include "capsim/relu_net.hpp"

namespace capsim {

// One training row: features in the fixed order
// [x_out_t, x_out_{t-1}, c_F_t, Q_t, c_F_{t-1}, Q_{t-1}] and the next-step
// outlet as target. Rows never span a column reset.
struct Dataset {
  enum class Split : std::uint8_t { kTrain, kValidation, kTest };

  Eigen::MatrixXd features;  ///< (rows x 6)
  Eigen::VectorXd targets;
  std::vector<Split> split;

  std::size_t rows() const { return static_cast<std::size_t>(targets.size()); }
};

struct ExcitationConfig {
  double relative_range = 0.2;  ///< uniform multiplicative perturbation, +-20%
  int episode_min_steps = 22;
  int episode_max_steps = 38;
  std::uint64_t seed = 7;
};

struct DatasetConfig {
  std::size_t size = 50000;
  double train_fraction = 0.70;
  double validation_fraction = 0.15;
};

/// Runs open-loop episodes from the fresh column with the continuous inputs
/// excited around nominal (redrawn each macro step) and variable episode
/// lengths so rows cover early, mid and late loading. Split tags are
/// chronological train/validation/test.
Dataset generate_dataset(const ColumnParams& p, const StepConfig& step,
                         const ContinuousInput& nominal, const ExcitationConfig& exc,
                         const DatasetConfig& cfg);

void save_dataset_csv(const std::string& path, const Dataset& ds);
Dataset load_dataset_csv(const std::string& path);

struct TrainConfig {
  std::vector<int> hidden = {200, 160};
  double learning_rate = 0.001;
  int batch_size = 32;
  int epochs = 80;
  std::uint64_t seed = 1;
  std::string curve_csv;  ///< optional path for the per-epoch loss log
};

/// Minimizes MSE with minibatch Adam; returns the weights of the epoch with
/// the lowest validation error. Aborts with an epoch diagnostic if the
/// validation error turns non-finite.
ReluNet train_network(const Dataset& ds, const TrainConfig& cfg);

struct SurrogateHistory {
  double y = 0.0;        ///< current measured outlet
  double y_prev = 0.0;   ///< previous measured outlet
  double c_F = 49.9219;  ///< current continuous inputs
  double Q = 21.6129;
  double c_F_prev = 49.9219;
  double Q_prev = 21.6129;
};

/// Recursive surrogate prediction over a switch sequence. A switch at stage i
/// forces that stage's outlet to zero and restarts the lag window from zero;
/// the continuous-input features stay at their latest values.
std::vector<double> rollout(const ReluNet& net, const SurrogateHistory& hist,
                            const std::vector<int>& u_d, int horizon = -1);

/// Surrogate dynamics as a prediction model for the horizon solvers. The
/// rollout state is (y, y_prev); continuous inputs are frozen.
class SurrogatePredictionModel : public PredictionModel {
 public:
  SurrogatePredictionModel(const ReluNet& net, const SurrogateHistory& hist);
  State initial_state() const override;
  State reset_state() const override { return {0.0, 0.0}; }
  double advance(State& s) const override;

 private:
  const ReluNet& net_;
  SurrogateHistory hist_;
};

/// Exact minimization of the surrogate horizon cost over {0,1}^N by
/// branch-and-bound over rollouts.
ExactSolveResult solve_relu_empc(const ReluNet& net, const SurrogateHistory& hist,
                                 const EmpcWeights& w, const ExactSolverOptions& opt = {});

/// Receding-horizon controller over the surrogate; applies the first entry.
class ReluEmpcController : public Controller {
 public:
  ReluEmpcController(const ReluNet& net, ContinuousInput nominal, EmpcWeights w,
                     ExactSolverOptions opt = {});
  int decide(double y, const Trajectory& history, const ColumnState& state) override;
  std::string last_diagnostic() const override { return diag_; }

 private:
  const ReluNet& net_;
  ContinuousInput nominal_;
  EmpcWeights w_;
  ExactSolverOptions opt_;
  std::string diag_;
};

}  // namespace capsim
