#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "capsim/common.hpp"

namespace capsim {

// Dense layered network with ReLU hidden activations and a linear output,
// plus the per-feature affine normalization it was trained with.
//
// Input feature order is fixed:
//   [x_out_t, x_out_{t-1}, c_F_t, Q_t, c_F_{t-1}, Q_{t-1}]
struct ReluNet {
  struct Layer {
    Eigen::MatrixXd W;  ///< (out x in)
    Eigen::VectorXd b;
  };

  std::vector<Layer> layers;       ///< hidden layers then the output layer
  Eigen::VectorXd input_mean, input_std;
  double output_mean = 0.0, output_std = 1.0;

  int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().W.cols()); }
  int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().W.rows()); }
  int hidden_layer_count() const { return static_cast<int>(layers.size()) - 1; }

  /// Checks that layer dimensions chain and normalization constants are
  /// finite; throws InvalidConfig otherwise.
  void validate() const;
};

/// Normalized forward pass, denormalized output, clamped at zero (a
/// concentration). Throws on dimension mismatch.
double predict(const ReluNet& net, const Eigen::VectorXd& features);

/// Forward pass in normalized space returning every pre-activation; used by
/// the encoding soundness checks.
struct ForwardTrace {
  std::vector<Eigen::VectorXd> pre_activations;  ///< one per hidden layer
  std::vector<Eigen::VectorXd> post_activations;
  double output = 0.0;  ///< normalized output
};
ForwardTrace forward_trace(const ReluNet& net, const Eigen::VectorXd& normalized_input);

Eigen::VectorXd normalize_input(const ReluNet& net, const Eigen::VectorXd& features);

/// Versioned text serialization (architecture, normalization constants,
/// row-major matrices).
void save_net(const std::string& path, const ReluNet& net);
ReluNet load_net(const std::string& path);

}  // namespace capsim
