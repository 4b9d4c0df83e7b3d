#include "capsim/relu_net.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace capsim {

void ReluNet::validate() const {
  if (layers.empty()) throw InvalidConfig("ReluNet: no layers");
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    if (layers[l + 1].W.cols() != layers[l].W.rows()) {
      std::ostringstream os;
      os << "ReluNet: layer " << l + 1 << " input dim " << layers[l + 1].W.cols()
         << " does not match layer " << l << " output dim " << layers[l].W.rows();
      throw InvalidConfig(os.str());
    }
  }
  for (const auto& l : layers) {
    if (l.b.size() != l.W.rows()) throw InvalidConfig("ReluNet: bias size mismatch");
    if (!l.W.allFinite() || !l.b.allFinite()) throw InvalidConfig("ReluNet: non-finite weights");
  }
  if (input_mean.size() != input_dim() || input_std.size() != input_dim()) {
    throw InvalidConfig("ReluNet: normalization constants do not match the input dim");
  }
  if (!input_mean.allFinite() || !input_std.allFinite() || !std::isfinite(output_mean) ||
      !std::isfinite(output_std)) {
    throw InvalidConfig("ReluNet: non-finite normalization constants");
  }
}

Eigen::VectorXd normalize_input(const ReluNet& net, const Eigen::VectorXd& features) {
  if (features.size() != net.input_dim()) {
    std::ostringstream os;
    os << "predict: got " << features.size() << " features, expected " << net.input_dim();
    throw InvalidConfig(os.str());
  }
  return (features - net.input_mean).cwiseQuotient(net.input_std);
}

ForwardTrace forward_trace(const ReluNet& net, const Eigen::VectorXd& z0) {
  ForwardTrace t;
  Eigen::VectorXd z = z0;
  const int hidden = net.hidden_layer_count();
  for (int l = 0; l < hidden; ++l) {
    Eigen::VectorXd pre = net.layers[l].W * z + net.layers[l].b;
    t.pre_activations.push_back(pre);
    z = pre.cwiseMax(0.0);
    t.post_activations.push_back(z);
  }
  t.output = (net.layers.back().W * z + net.layers.back().b)(0);
  return t;
}

double predict(const ReluNet& net, const Eigen::VectorXd& features) {
  Eigen::VectorXd z = normalize_input(net, features);
  const int hidden = net.hidden_layer_count();
  for (int l = 0; l < hidden; ++l) {
    z = (net.layers[l].W * z + net.layers[l].b).cwiseMax(0.0);
  }
  const double y_norm = (net.layers.back().W * z + net.layers.back().b)(0);
  return std::max(0.0, y_norm * net.output_std + net.output_mean);
}

void save_net(const std::string& path, const ReluNet& net) {
  net.validate();
  std::ofstream out(path);
  if (!out) throw InvalidConfig("cannot write net file: " + path);
  out << std::setprecision(17);
  out << "capsim-net v1\n";
  out << "layers " << net.layers.size() << "\n";
  out << "arch " << net.input_dim();
  for (const auto& l : net.layers) out << " " << l.W.rows();
  out << "\n";
  out << "input_mean";
  for (int i = 0; i < net.input_mean.size(); ++i) out << " " << net.input_mean(i);
  out << "\ninput_std";
  for (int i = 0; i < net.input_std.size(); ++i) out << " " << net.input_std(i);
  out << "\noutput_norm " << net.output_mean << " " << net.output_std << "\n";
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& lay = net.layers[l];
    out << "layer " << l << " " << lay.W.rows() << " " << lay.W.cols() << "\n";
    for (int r = 0; r < lay.W.rows(); ++r) {
      for (int c = 0; c < lay.W.cols(); ++c) out << (c ? " " : "") << lay.W(r, c);
      out << "\n";
    }
    for (int r = 0; r < lay.b.size(); ++r) out << (r ? " " : "") << lay.b(r);
    out << "\n";
  }
}

ReluNet load_net(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open net file: " + path);
  std::string line;
  std::getline(in, line);
  if (line != "capsim-net v1") throw InvalidConfig(path + ": not a capsim-net v1 file");

  ReluNet net;
  std::string tag;
  std::size_t n_layers = 0;
  in >> tag >> n_layers;
  if (tag != "layers") throw InvalidConfig(path + ": expected 'layers'");
  in >> tag;
  if (tag != "arch") throw InvalidConfig(path + ": expected 'arch'");
  std::vector<int> dims(n_layers + 1);
  for (auto& d : dims) in >> d;

  in >> tag;
  if (tag != "input_mean") throw InvalidConfig(path + ": expected 'input_mean'");
  net.input_mean.resize(dims[0]);
  for (int i = 0; i < dims[0]; ++i) in >> net.input_mean(i);
  in >> tag;
  if (tag != "input_std") throw InvalidConfig(path + ": expected 'input_std'");
  net.input_std.resize(dims[0]);
  for (int i = 0; i < dims[0]; ++i) in >> net.input_std(i);
  in >> tag >> net.output_mean >> net.output_std;
  if (tag != "output_norm") throw InvalidConfig(path + ": expected 'output_norm'");

  for (std::size_t l = 0; l < n_layers; ++l) {
    std::size_t idx;
    int rows, cols;
    in >> tag >> idx >> rows >> cols;
    if (tag != "layer" || idx != l) throw InvalidConfig(path + ": malformed layer header");
    ReluNet::Layer lay;
    lay.W.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) in >> lay.W(r, c);
    lay.b.resize(rows);
    for (int r = 0; r < rows; ++r) in >> lay.b(r);
    net.layers.push_back(std::move(lay));
  }
  if (!in) throw InvalidConfig(path + ": truncated net file");
  net.validate();
  return net;
}

}  // namespace capsim
