#pragma once

#include "capsim/relu_net.hpp"
#include "capsim/rng.hpp"

namespace capsim::test {

// Unit normalization so toy nets compute in raw units.
inline void unit_norms(ReluNet& net) {
  net.input_mean = Eigen::VectorXd::Zero(net.input_dim());
  net.input_std = Eigen::VectorXd::Ones(net.input_dim());
  net.output_mean = 0.0;
  net.output_std = 1.0;
}

/// Output-only linear net: y = w * x0 + b over 6 features.
inline ReluNet linear_net6(double w, double b) {
  ReluNet net;
  ReluNet::Layer out;
  out.W = Eigen::MatrixXd::Zero(1, 6);
  out.W(0, 0) = w;
  out.b = Eigen::VectorXd::Constant(1, b);
  net.layers.push_back(out);
  unit_norms(net);
  return net;
}

/// One hidden neuron on feature 0: hidden = relu(w x0 + b), output = hidden.
inline ReluNet one_neuron_net6(double w, double b) {
  ReluNet net;
  ReluNet::Layer hid;
  hid.W = Eigen::MatrixXd::Zero(1, 6);
  hid.W(0, 0) = w;
  hid.b = Eigen::VectorXd::Constant(1, b);
  ReluNet::Layer out;
  out.W = Eigen::MatrixXd::Constant(1, 1, 1.0);
  out.b = Eigen::VectorXd::Zero(1);
  net.layers.push_back(hid);
  net.layers.push_back(out);
  unit_norms(net);
  return net;
}

/// Random 6 -> h1 -> h2 -> 1 net with small weights.
inline ReluNet random_net6(int h1, int h2, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  ReluNet net;
  auto layer = [&](int rows, int cols) {
    ReluNet::Layer l;
    l.W.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) l.W(r, c) = scale * rng.normal();
    l.b.resize(rows);
    for (int r = 0; r < rows; ++r) l.b(r) = 0.1 * rng.normal();
    return l;
  };
  net.layers.push_back(layer(h1, 6));
  net.layers.push_back(layer(h2, h1));
  net.layers.push_back(layer(1, h2));
  unit_norms(net);
  return net;
}

}  // namespace capsim::test
