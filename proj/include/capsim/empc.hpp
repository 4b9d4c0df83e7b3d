#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "capsim/plant.hpp"

namespace capsim {

struct EmpcWeights {
  double W_s = 1.0;  ///< weight on outlet concentration
  double W_d = 0.5;  ///< weight on switching
  int N = 10;        ///< prediction horizon (steps)

  void validate() const {
    if (W_s < 0.0 || W_d < 0.0) throw InvalidConfig("EmpcWeights: weights must be >= 0");
    if (N < 1) throw InvalidConfig("EmpcWeights.N must be >= 1");
  }
};

/// Stage cost W_s * x_out + W_d * u_d. The outlet value is the one produced
/// by the decision, i.e. the post-transition outlet of the stage.
inline double stage_cost(double x_out, int u_d, const EmpcWeights& w) {
  return w.W_s * x_out + w.W_d * u_d;
}

/// Logistic 1 / (1 + exp(-beta r)).
double sigmoid(double r, double beta);

// Prediction model used by the horizon solvers: an opaque rollout state plus
// one-stage transitions. Implementations must be deterministic; the zero
// (fresh-column) state must be canonical so post-reset subtrees memoize.
class PredictionModel {
 public:
  virtual ~PredictionModel() = default;
  /// Rollout state handle; value-semantic snapshot.
  using State = std::vector<double>;

  virtual State initial_state() const = 0;
  virtual State reset_state() const = 0;
  /// Advances one stage without switching; returns the stage outlet (>= 0).
  virtual double advance(State& s) const = 0;
};

/// Full-order column model as a prediction model. Holds the current plant
/// state and the continuous inputs frozen at their latest values.
class GrmPredictionModel : public PredictionModel {
 public:
  GrmPredictionModel(const ColumnParams& p, const StepConfig& cfg, ColumnState current,
                     ContinuousInput u);
  State initial_state() const override { return current_; }
  State reset_state() const override;
  double advance(State& s) const override;

 private:
  Integrator integ_;
  ColumnState current_;
  ContinuousInput u_;
};

struct ExactSolveResult {
  std::vector<int> sequence;
  double cost = 0.0;
  std::uint64_t nodes_expanded = 0;
};

struct ExactSolverOptions {
  std::uint64_t node_budget = 1ull << 22;
};

/// Depth-first branch-and-bound over {0,1}^N. Prunes on the nonnegative
/// partial sum, memoizes the post-reset subtree, and explores the switch
/// branch first. Ties break toward the lexicographically smaller sequence.
/// Throws BudgetExceeded instead of returning a suboptimal sequence.
ExactSolveResult solve_exact(const PredictionModel& model, const EmpcWeights& w,
                             const ExactSolverOptions& opt = {});

struct SigmoidConfig {
  double beta = 15.0;
  double r_min = -10.0;
  double r_max = 10.0;
  double threshold = 0.5;
  int multistart = 8;       ///< 2 box corners plus Latin-hypercube interior points
  int max_iterations = 60;
  double fd_step = 1e-3;    ///< central finite-difference step on r
  double tolerance = 1e-7;  ///< projected-gradient convergence tolerance
  std::uint64_t seed = 20240501;
  int workers = 0;          ///< 0 = hardware concurrency

  void validate() const {
    if (!(beta > 0.0)) throw InvalidConfig("SigmoidConfig.beta must be > 0");
    if (!(r_min < r_max)) throw InvalidConfig("SigmoidConfig: r_min must be < r_max");
    if (!(threshold > 0.0 && threshold < 1.0)) {
      throw InvalidConfig("SigmoidConfig.threshold must be in (0,1)");
    }
    if (multistart < 1) throw InvalidConfig("SigmoidConfig.multistart must be >= 1");
    if (max_iterations < 1) throw InvalidConfig("SigmoidConfig.max_iterations must be >= 1");
  }
};

struct SigmoidSolveResult {
  std::vector<double> r;         ///< box-feasible relaxed decision variables
  std::vector<int> sequence;     ///< thresholded binary sequence
  double relaxed_cost = 0.0;
  bool converged = true;
  int starts_converged = 0;
};

/// Minimizes the sigmoid-relaxed horizon cost with multi-start projected
/// quasi-Newton descent and prefix-cached central finite differences.
SigmoidSolveResult solve_sigmoid(const PredictionModel& model, const EmpcWeights& w,
                                 const SigmoidConfig& cfg);

/// Integer objective of a given binary sequence under the model.
double sequence_cost(const PredictionModel& model, const EmpcWeights& w,
                     const std::vector<int>& seq);

// Receding-horizon controllers.

/// Exact EMPC over the full-order model (state feedback).
class ExactEmpcController : public Controller {
 public:
  ExactEmpcController(const ColumnParams& p, const StepConfig& cfg, ContinuousInput nominal,
                      EmpcWeights w, ExactSolverOptions opt = {});
  int decide(double y, const Trajectory& history, const ColumnState& state) override;
  std::string last_diagnostic() const override { return diag_; }

 private:
  ColumnParams params_;
  StepConfig step_;
  ContinuousInput nominal_;
  EmpcWeights w_;
  ExactSolverOptions opt_;
  std::string diag_;
};

/// Sigmoid-relaxed EMPC over the full-order model (state feedback); applies
/// the first thresholded entry each step.
class SigmoidEmpcController : public Controller {
 public:
  SigmoidEmpcController(const ColumnParams& p, const StepConfig& cfg, ContinuousInput nominal,
                        EmpcWeights w, SigmoidConfig cfg_sig);
  int decide(double y, const Trajectory& history, const ColumnState& state) override;
  std::string last_diagnostic() const override { return diag_; }

 private:
  ColumnParams params_;
  StepConfig step_;
  ContinuousInput nominal_;
  EmpcWeights w_;
  SigmoidConfig sig_;
  std::string diag_;
};

}  // namespace capsim
