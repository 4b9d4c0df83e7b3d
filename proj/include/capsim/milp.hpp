#pragma once

#include <optional>
#include <string>
#include <vector>

#include "capsim/surrogate.hpp"

namespace capsim {

// Sound pre-activation bounds per hidden neuron over a declared input box,
// from interval arithmetic through the layers (normalized feature space).
struct LayerBounds {
  std::vector<Eigen::VectorXd> lower, upper;  ///< [hidden layer](neuron)
};

struct InputBox {
  Eigen::VectorXd lo, hi;  ///< normalized feature space

  void validate() const {
    if (lo.size() != hi.size()) throw InvalidConfig("InputBox: lo/hi size mismatch");
    for (int i = 0; i < lo.size(); ++i) {
      if (!(lo(i) <= hi(i))) throw InvalidConfig("InputBox: lo must be <= hi");
    }
  }
};

/// Physical-unit default box for the surrogate features: outlet in
/// [0, y_max], continuous inputs within +-range of nominal; normalized with
/// the net's constants.
InputBox default_input_box(const ReluNet& net, double y_max, const ContinuousInput& nominal,
                           double input_range = 0.3);

/// Interval propagation, splitting weights by sign; sound by construction.
LayerBounds propagate_bounds(const ReluNet& net, const InputBox& box);

/// Sparse linear row: sum_j coef[j] * x[var[j]] (sense) rhs.
struct LinearConstraint {
  std::vector<int> var;
  std::vector<double> coef;
  char sense = 'L';  ///< 'L' <=, 'G' >=, 'E' ==
  double rhs = 0.0;
  std::string name;
};

// Integer-linear encoding of the surrogate EMPC horizon: per hidden neuron
// the four big-M inequalities with that neuron's own bounds as constants,
// chained across stages with the multiplicative reset coupling, plus the
// linear objective over stage outlets and switch binaries.
struct MilpEncoding {
  struct Variable {
    std::string name;
    double lo = 0.0, hi = 0.0;
    bool binary = false;
  };

  std::vector<Variable> variables;
  std::vector<LinearConstraint> constraints;
  std::vector<double> objective;  ///< one coefficient per variable
  int horizon = 0;
  int hidden_neurons_per_stage = 0;
  int relu_rows_per_stage = 0;  ///< four-inequality block rows per stage

  std::vector<int> u_var;                      ///< switch binary per stage
  std::vector<int> input_var;                  ///< [stage*6 + feature] normalized inputs
  std::vector<int> output_var;                 ///< normalized net output per stage
  std::vector<int> yhat_var;                   ///< physical net prediction per stage
  std::vector<int> y_next_var;                 ///< physical post-reset outlet per stage
  std::vector<int> lag_next_var;               ///< physical lag chain, stages 0..N-2
  std::vector<std::vector<int>> z_var, t_var;  ///< [stage][layer-offset + neuron]
  std::vector<int> relu_row_base;              ///< first relu row index per stage
};

// Fixed initial history for a receding-horizon encoding. When absent the
// stage-0 outlet features stay free inside the box (the form the soundness
// checks use).
struct MilpInitial {
  double y = 0.0;
  double y_prev = 0.0;
};

/// Builds the horizon encoding. Throws InvalidConfig if any propagated bound
/// is non-finite (the input box must be tightened).
MilpEncoding encode_milp(const ReluNet& net, const LayerBounds& bounds, const InputBox& box,
                         const EmpcWeights& w, const ContinuousInput& frozen_inputs,
                         const std::optional<MilpInitial>& initial = std::nullopt);

struct EncodingReport {
  int samples = 0;
  int feasible = 0;       ///< forward-pass assignments satisfying every row
  int pinned = 0;         ///< z pinned to the forward value with fixed binaries
  double max_violation = 0.0;
  double max_pin_error = 0.0;
};

/// For each sample (normalized feature vector of stage 0), builds the
/// all-zeros-switch assignment from forward passes and checks (a) that it is
/// feasible and (b) that fixing the binaries to the activation pattern pins
/// each z to the forward value within 1e-6. Requires an encoding built
/// without fixed initial history.
EncodingReport verify_encoding(const MilpEncoding& enc, const ReluNet& net,
                               const std::vector<Eigen::VectorXd>& samples);

/// Writes the encoding as an LP-format text file (objective, constraint
/// rows, bounds, general/binary declarations).
void write_lp(const std::string& path, const MilpEncoding& enc);

}  // namespace capsim
