#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "capsim/grm.hpp"
#include "capsim/rng.hpp"

namespace capsim {

// Plant input for one controller step: continuous inputs plus the binary
// switch decision. u_d = 1 routes the feed to the fresh twin column, which
// resets the state to zero; the step is consumed by the switch.
struct PlantInput {
  ContinuousInput u_c;
  int u_d = 0;

  void validate() const {
    if (u_d != 0 && u_d != 1) throw InvalidConfig("PlantInput.u_d must be 0 or 1");
  }
};

struct NoiseConfig {
  double process_std = 0.0;  ///< std applied to each continuous input
  double meas_alpha = 0.0;   ///< multiplication factor on measurement noise
  double meas_std = 0.0;     ///< std of measurement noise (mg/L)
  std::uint64_t seed = 0;
  /// Per-input overrides; negative means "use process_std".
  double process_std_c_F = -1.0;
  double process_std_Q = -1.0;

  double std_c_F() const { return process_std_c_F >= 0.0 ? process_std_c_F : process_std; }
  double std_Q() const { return process_std_Q >= 0.0 ? process_std_Q : process_std; }

  void validate() const {
    if (process_std < 0.0) throw InvalidConfig("NoiseConfig.process_std must be >= 0");
    if (meas_alpha < 0.0) throw InvalidConfig("NoiseConfig.meas_alpha must be >= 0");
    if (meas_std < 0.0) throw InvalidConfig("NoiseConfig.meas_std must be >= 0");
  }
};

// Closed-loop record. Step k (0-based internally) stores the applied
// post-noise continuous inputs, the switch decision, the true outlet
// concentration at the end of the step (0 when the step was a switch) and
// the measurement the controller acted on.
struct Trajectory {
  std::vector<double> c_F_applied;
  std::vector<double> Q_applied;
  std::vector<int> u_d;
  std::vector<double> x_out_true;
  std::vector<double> y_measured;
  std::vector<double> solve_seconds;          ///< controller decision time per step
  std::vector<ColumnState> state_checkpoints; ///< optional, one per step when enabled

  std::size_t size() const { return u_d.size(); }
};

struct Metrics {
  double PL = 0.0;  ///< product loss: sum of true outlet concentrations (mg/L)
  double TC = 0.0;  ///< total cost: W_s * PL + W_d * switches
  int switches = 0;
  std::vector<int> switch_steps;  ///< 1-based step indices with u_d = 1
};

/// One plant transition: integrates when u_d = 0, resets to the fresh twin
/// column when u_d = 1.
ColumnState plant_step(const Integrator& integ, const ColumnState& x, const PlantInput& in);

/// Adds independent zero-mean Gaussian noise to both continuous inputs and
/// clamps at zero.
ContinuousInput perturb_inputs(const ContinuousInput& u, const NoiseConfig& noise, Rng& rng);

/// Measured outlet concentration: x_out + alpha * N(0, meas_std^2), clamped
/// at zero.
double measure(double x_out, const NoiseConfig& noise, Rng& rng);

/// Economic metrics of a trajectory; TC = W_s * PL + W_d * switches exactly.
Metrics compute_metrics(const Trajectory& traj, double W_s, double W_d);

/// 1% breakthrough rule: switch as soon as the measured outlet reaches
/// threshold * c_F.
int traditional_decide(double y, double c_F, double threshold = 0.01);

// Controller interface for closed-loop runs. decide() sees the current
// measurement, the record so far and, for state-feedback controllers, the
// true plant state.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual int decide(double y, const Trajectory& history, const ColumnState& state) = 0;
  /// Optional per-solve diagnostic line for the last decision.
  virtual std::string last_diagnostic() const { return {}; }
};

class TraditionalController : public Controller {
 public:
  TraditionalController(double c_F_nominal, double threshold = 0.01)
      : c_F_(c_F_nominal), threshold_(threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
      throw InvalidConfig("TraditionalController.threshold must be in (0,1)");
    }
  }
  int decide(double y, const Trajectory&, const ColumnState&) override {
    return traditional_decide(y, c_F_, threshold_);
  }

 private:
  double c_F_;
  double threshold_;
};

struct ClosedLoopScenario {
  ColumnParams params;
  StepConfig step;
  ContinuousInput nominal;
  NoiseConfig noise;
  int steps = 50;
  bool keep_state_checkpoints = false;
};

struct RunResult {
  Trajectory traj;
  bool ok = true;
  std::string diagnostic;  ///< set when the run aborted early
};

/// Runs the measure -> decide -> apply -> record loop for scenario.steps
/// steps. Deterministic given the seed. On integration failure returns the
/// partial trajectory with ok = false and a diagnostic.
RunResult run_closed_loop(Controller& controller, const ClosedLoopScenario& scenario);

/// Writes the trajectory CSV (step, cF_applied, Q_applied, u_d, x_out_true,
/// y_measured); steps are 1-based.
void write_trajectory_csv(const std::string& path, const Trajectory& traj);

}  // namespace capsim
