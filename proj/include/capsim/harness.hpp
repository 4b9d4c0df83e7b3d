#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "capsim/empc.hpp"
#include "capsim/rl.hpp"
#include "capsim/surrogate.hpp"

namespace capsim {

// Controller selection plus its per-kind settings.
struct ControllerSpec {
  enum class Kind : std::uint8_t {
    kTraditional,
    kEmpcExact,
    kEmpcSigmoid,
    kEmpcRelu,
    kRlPolicy,
  };
  Kind kind = Kind::kTraditional;
  double threshold = 0.01;          ///< traditional
  std::string net_file;             ///< empc-relu
  std::string policy_file;          ///< rl-policy
  SigmoidConfig sigmoid;            ///< empc-sigmoid
  std::uint64_t node_budget = 1ull << 22;

  static Kind kind_from_string(const std::string& s);
  static std::string kind_to_string(Kind k);
};

struct Scenario {
  std::string params_file;  ///< resolved absolute path
  ColumnParams params;
  StepConfig step;
  ContinuousInput nominal;
  ControllerSpec controller;
  double W_s = 1.0;
  double W_d = 0.5;
  int horizon = 10;
  int steps = 50;
  NoiseConfig noise;
  std::vector<std::uint64_t> seeds = {0};
  std::string out_dir = "out";
};

/// Parses and validates a scenario file. Unknown keys are rejected; parse
/// errors carry line information; invariant violations name the field.
Scenario load_scenario(const std::string& path);

// A controller plus the model artifacts it borrows from.
struct ControllerBundle {
  std::unique_ptr<Controller> controller;
  std::shared_ptr<ReluNet> net;
  std::shared_ptr<Policy> policy;
};

/// Builds the controller for one run. Loads referenced model artifacts;
/// throws InvalidConfig when an artifact is missing.
ControllerBundle make_controller(const Scenario& sc, std::uint64_t seed);

struct CalibrationResult {
  ColumnParams params;
  StepConfig step;
  double q_scale = 1.0;          ///< applied capacity scale factor
  int breakthrough_step = 0;     ///< first step whose measurement trips 1%
  int screened_substeps = 0;     ///< largest clean dt before the safety halving
};

struct CalibrateOptions {
  int target_first_breakthrough_step = 19;
  int tolerance = 1;
  double scale_min = 0.2;
  double scale_max = 5.0;
  int probe_steps = 26;  ///< nominal steps simulated per probe
};

/// Fits the default parameter set: stability screen for the substep count
/// (largest clean dt, then halved), capacity-scale bisection until the 1%
/// breakthrough trips at the target step, and a substep-halving convergence
/// check. Throws InvalidConfig with the achievable range when the target is
/// out of reach.
CalibrationResult calibrate(const ColumnParams& seed_params, const ContinuousInput& nominal,
                            const CalibrateOptions& opt = {});

/// First step k (1-based) at which the measured outlet (the end of step
/// k-1) reaches threshold * c_F on a nominal open-loop run; 0 if never.
int first_breakthrough_step(const ColumnParams& p, const StepConfig& cfg,
                            const ContinuousInput& nominal, int max_steps,
                            double threshold = 0.01);

// One experiment cell result.
struct CellResult {
  std::string sweep_label;
  std::uint64_t seed = 0;
  double W_s = 1.0, W_d = 0.5;
  Metrics metrics;
  double solve_seconds_total = 0.0;
  double run_seconds = 0.0;
  bool ok = true;
  std::string error;
};

struct ExperimentMatrix {
  Scenario base;
  enum class Sweep : std::uint8_t { kHorizon, kWeights, kProcessNoise, kMeasurementNoise } sweep =
      Sweep::kHorizon;
  std::vector<int> horizons;
  std::vector<std::pair<double, double>> weight_pairs;
  std::vector<double> process_stds;
  std::vector<std::pair<double, double>> meas_noise;  ///< (alpha, std)
  int workers = 0;

  std::size_t sweep_size() const;
  /// Scenario of one sweep point.
  Scenario at(std::size_t idx) const;
  std::string label(std::size_t idx) const;
};

ExperimentMatrix load_experiment(const std::string& path);

/// Runs every (sweep point, seed) cell; failures are recorded and the matrix
/// continues. Results come back ordered by (sweep index, seed).
std::vector<CellResult> run_experiment(const ExperimentMatrix& matrix);

/// Writes per-cell rows plus per-sweep-point averages.
void write_experiment_csv(const std::string& rows_path, const std::string& averages_path,
                          const ExperimentMatrix& matrix, const std::vector<CellResult>& cells);

/// Text + CSV summary over result tables: per-method metrics, solve-time
/// ordering, TC identity recheck and sweep monotonicity checks. Missing
/// inputs produce an empty-section marker instead of an error.
void compare_report(const std::vector<std::string>& result_csvs, const std::string& out_text,
                    const std::string& out_csv);

/// Reads an experiment rows CSV back; used by the report and the tests.
std::vector<CellResult> read_experiment_csv(const std::string& path);

}  // namespace capsim
