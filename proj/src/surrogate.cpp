#include "capsim/surrogate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "capsim/rng.hpp"

namespace capsim {

Dataset generate_dataset(const ColumnParams& p, const StepConfig& step,
                         const ContinuousInput& nominal, const ExcitationConfig& exc,
                         const DatasetConfig& cfg) {
  if (exc.episode_min_steps < 3 || exc.episode_max_steps < exc.episode_min_steps) {
    throw InvalidConfig("ExcitationConfig: episode length range must allow >= 3 steps");
  }
  Integrator integ(p, step);
  Rng rng(exc.seed);

  std::vector<std::array<double, 6>> feats;
  std::vector<double> targets;
  feats.reserve(cfg.size);
  targets.reserve(cfg.size);

  while (feats.size() < cfg.size) {
    const int ep_len = exc.episode_min_steps +
                       static_cast<int>(rng.below(exc.episode_max_steps - exc.episode_min_steps + 1));
    // One open-loop episode from the fresh column.
    std::vector<double> outs;  // outs[t] = outlet after step t
    std::vector<double> cFs, Qs;
    ColumnState x = zero_state(p);
    bool failed = false;
    for (int t = 0; t < ep_len; ++t) {
      ContinuousInput u;
      u.c_F = nominal.c_F * (1.0 + exc.relative_range * (2.0 * rng.uniform() - 1.0));
      u.Q = nominal.Q * (1.0 + exc.relative_range * (2.0 * rng.uniform() - 1.0));
      try {
        x = integ.step(x, u).state;
      } catch (const SimulationError&) {
        failed = true;  // discard the whole episode
        break;
      }
      outs.push_back(outlet_concentration(p, x));
      cFs.push_back(u.c_F);
      Qs.push_back(u.Q);
    }
    if (failed) continue;
    // Rows need (t-1, t, t+1) inside the episode.
    for (int t = 1; t + 1 < ep_len && feats.size() < cfg.size; ++t) {
      feats.push_back({outs[t], outs[t - 1], cFs[t], Qs[t], cFs[t - 1], Qs[t - 1]});
      targets.push_back(outs[t + 1]);
    }
  }

  Dataset ds;
  const std::size_t n = feats.size();
  ds.features.resize(n, 6);
  ds.targets.resize(n);
  ds.split.resize(n);
  const auto n_train = static_cast<std::size_t>(cfg.train_fraction * n);
  const auto n_val = static_cast<std::size_t>(cfg.validation_fraction * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < 6; ++j) ds.features(i, j) = feats[i][j];
    ds.targets(i) = targets[i];
    ds.split[i] = i < n_train              ? Dataset::Split::kTrain
                  : i < n_train + n_val    ? Dataset::Split::kValidation
                                           : Dataset::Split::kTest;
  }
  return ds;
}

void save_dataset_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw InvalidConfig("cannot write dataset: " + path);
  out << "x_out_t,x_out_tm1,cF_t,Q_t,cF_tm1,Q_tm1,target,split\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (int j = 0; j < 6; ++j) out << ds.features(i, j) << ",";
    out << ds.targets(i) << ","
        << (ds.split[i] == Dataset::Split::kTrain        ? "train"
            : ds.split[i] == Dataset::Split::kValidation ? "validation"
                                                         : "test")
        << "\n";
  }
}

Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open dataset: " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::array<double, 7>> rows;
  std::vector<Dataset::Split> split;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::array<double, 7> row{};
    std::string cell;
    for (int j = 0; j < 7; ++j) {
      std::getline(ls, cell, ',');
      row[j] = std::stod(cell);
    }
    std::getline(ls, cell, ',');
    rows.push_back(row);
    split.push_back(cell == "train"        ? Dataset::Split::kTrain
                    : cell == "validation" ? Dataset::Split::kValidation
                                           : Dataset::Split::kTest);
  }
  Dataset ds;
  ds.features.resize(rows.size(), 6);
  ds.targets.resize(rows.size());
  ds.split = std::move(split);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < 6; ++j) ds.features(i, j) = rows[i][j];
    ds.targets(i) = rows[i][6];
  }
  return ds;
}

namespace {

struct AdamState {
  Eigen::MatrixXd mW, vW;
  Eigen::VectorXd mb, vb;
};

void adam_update(Eigen::MatrixXd& W, Eigen::VectorXd& b, const Eigen::MatrixXd& gW,
                 const Eigen::VectorXd& gb, AdamState& st, double lr, int t) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  st.mW = b1 * st.mW + (1 - b1) * gW;
  st.vW = b2 * st.vW + (1 - b2) * gW.cwiseProduct(gW);
  st.mb = b1 * st.mb + (1 - b1) * gb;
  st.vb = b2 * st.vb + (1 - b2) * gb.cwiseProduct(gb);
  const double c1 = 1.0 / (1.0 - std::pow(b1, t));
  const double c2 = 1.0 / (1.0 - std::pow(b2, t));
  W -= lr * (c1 * st.mW.array() / ((c2 * st.vW.array()).sqrt() + eps)).matrix();
  b -= lr * (c1 * st.mb.array() / ((c2 * st.vb.array()).sqrt() + eps)).matrix();
}

}  // namespace

ReluNet train_network(const Dataset& ds, const TrainConfig& cfg) {
  if (ds.rows() == 0) throw InvalidConfig("train_network: empty dataset");
  std::vector<int> train_idx, val_idx;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    if (ds.split[i] == Dataset::Split::kTrain) train_idx.push_back(static_cast<int>(i));
    if (ds.split[i] == Dataset::Split::kValidation) val_idx.push_back(static_cast<int>(i));
  }
  if (train_idx.empty()) throw InvalidConfig("train_network: no training split");
  if (val_idx.empty()) val_idx = train_idx;  // tiny datasets in tests

  // Normalization constants from the training split.
  ReluNet net;
  const int in_dim = 6;
  net.input_mean = Eigen::VectorXd::Zero(in_dim);
  net.input_std = Eigen::VectorXd::Ones(in_dim);
  for (int i : train_idx) net.input_mean += ds.features.row(i).transpose();
  net.input_mean /= static_cast<double>(train_idx.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(in_dim);
  for (int i : train_idx) {
    Eigen::VectorXd d = ds.features.row(i).transpose() - net.input_mean;
    var += d.cwiseProduct(d);
  }
  var /= static_cast<double>(train_idx.size());
  net.input_std = var.cwiseSqrt().cwiseMax(1e-12);
  double tmean = 0.0, tvar = 0.0;
  for (int i : train_idx) tmean += ds.targets(i);
  tmean /= static_cast<double>(train_idx.size());
  for (int i : train_idx) tvar += (ds.targets(i) - tmean) * (ds.targets(i) - tmean);
  tvar /= static_cast<double>(train_idx.size());
  net.output_mean = tmean;
  net.output_std = std::max(std::sqrt(tvar), 1e-12);

  // He initialization.
  Rng rng(cfg.seed);
  std::vector<int> dims = {in_dim};
  for (int h : cfg.hidden) dims.push_back(h);
  dims.push_back(1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    ReluNet::Layer lay;
    lay.W.resize(dims[l + 1], dims[l]);
    const double scale = std::sqrt(2.0 / dims[l]);
    for (int r = 0; r < lay.W.rows(); ++r)
      for (int c = 0; c < lay.W.cols(); ++c) lay.W(r, c) = scale * rng.normal();
    lay.b = Eigen::VectorXd::Zero(dims[l + 1]);
    net.layers.push_back(std::move(lay));
  }

  // Pre-normalized matrices for speed.
  const auto n_all = static_cast<int>(ds.rows());
  Eigen::MatrixXd Xn(n_all, in_dim);
  Eigen::VectorXd Yn(n_all);
  for (int i = 0; i < n_all; ++i) {
    Xn.row(i) = ((ds.features.row(i).transpose() - net.input_mean).cwiseQuotient(net.input_std))
                    .transpose();
    Yn(i) = (ds.targets(i) - net.output_mean) / net.output_std;
  }

  const int n_layers = static_cast<int>(net.layers.size());
  std::vector<AdamState> adam(n_layers);
  for (int l = 0; l < n_layers; ++l) {
    adam[l].mW = Eigen::MatrixXd::Zero(net.layers[l].W.rows(), net.layers[l].W.cols());
    adam[l].vW = adam[l].mW;
    adam[l].mb = Eigen::VectorXd::Zero(net.layers[l].b.size());
    adam[l].vb = adam[l].mb;
  }

  auto val_mse = [&]() {
    double se = 0.0;
    for (int i : val_idx) {
      Eigen::VectorXd z = Xn.row(i).transpose();
      for (int l = 0; l + 1 < n_layers; ++l) {
        z = (net.layers[l].W * z + net.layers[l].b).cwiseMax(0.0);
      }
      const double y = (net.layers.back().W * z + net.layers.back().b)(0);
      se += (y - Yn(i)) * (y - Yn(i));
    }
    return se / static_cast<double>(val_idx.size());
  };

  std::ofstream curve;
  if (!cfg.curve_csv.empty()) {
    curve.open(cfg.curve_csv);
    curve << "epoch,train_mse,val_mse\n";
  }

  ReluNet best = net;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<int> order = train_idx;
  int adam_t = 0;

  std::vector<Eigen::MatrixXd> act(n_layers + 1), pre(n_layers);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Seeded Fisher-Yates shuffle.
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[rng.below(i + 1)]);
    }
    double train_se = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const int bs = static_cast<int>(std::min<std::size_t>(cfg.batch_size, order.size() - start));
      Eigen::MatrixXd X(in_dim, bs);
      Eigen::VectorXd Y(bs);
      for (int b = 0; b < bs; ++b) {
        X.col(b) = Xn.row(order[start + b]).transpose();
        Y(b) = Yn(order[start + b]);
      }
      // Forward.
      act[0] = X;
      for (int l = 0; l < n_layers; ++l) {
        pre[l] = (net.layers[l].W * act[l]).colwise() + net.layers[l].b;
        if (l + 1 < n_layers) {
          act[l + 1] = pre[l].cwiseMax(0.0);
        } else {
          act[l + 1] = pre[l];
        }
      }
      Eigen::RowVectorXd err = act[n_layers].row(0) - Y.transpose();
      train_se += err.squaredNorm();
      // Backward: dL/dpre for MSE with mean over the batch.
      Eigen::MatrixXd delta = (2.0 / bs) * err;
      ++adam_t;
      for (int l = n_layers - 1; l >= 0; --l) {
        Eigen::MatrixXd gW = delta * act[l].transpose();
        Eigen::VectorXd gb = delta.rowwise().sum();
        if (l > 0) {
          Eigen::MatrixXd back = net.layers[l].W.transpose() * delta;
          delta = back.cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
        adam_update(net.layers[l].W, net.layers[l].b, gW, gb, adam[l], cfg.learning_rate, adam_t);
      }
    }
    const double v = val_mse();
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "train_network: validation error diverged (NaN/inf) at epoch " << epoch;
      throw SimulationError(os.str());
    }
    if (curve.is_open()) {
      curve << epoch << "," << train_se / static_cast<double>(order.size()) << "," << v << "\n";
    }
    if (v < best_val) {
      best_val = v;
      best = net;
    }
  }
  best.validate();
  return best;
}

std::vector<double> rollout(const ReluNet& net, const SurrogateHistory& hist,
                            const std::vector<int>& u_d, int horizon) {
  const int N = horizon >= 0 ? horizon : static_cast<int>(u_d.size());
  if (static_cast<int>(u_d.size()) < N) throw InvalidConfig("rollout: sequence shorter than horizon");
  std::vector<double> out(N);
  double y = hist.y, y_prev = hist.y_prev;
  Eigen::VectorXd f(6);
  for (int i = 0; i < N; ++i) {
    if (u_d[i] == 1) {
      y = 0.0;
      y_prev = 0.0;  // the lag window restarts from zero after a switch
      out[i] = 0.0;
      continue;
    }
    f << y, y_prev, hist.c_F, hist.Q, hist.c_F_prev, hist.Q_prev;
    const double y_next = predict(net, f);
    y_prev = y;
    y = y_next;
    out[i] = y_next;
  }
  return out;
}

SurrogatePredictionModel::SurrogatePredictionModel(const ReluNet& net,
                                                   const SurrogateHistory& hist)
    : net_(net), hist_(hist) {}

PredictionModel::State SurrogatePredictionModel::initial_state() const {
  return {hist_.y, hist_.y_prev};
}

double SurrogatePredictionModel::advance(State& s) const {
  Eigen::VectorXd f(6);
  f << s[0], s[1], hist_.c_F, hist_.Q, hist_.c_F_prev, hist_.Q_prev;
  const double y_next = predict(net_, f);
  s[1] = s[0];
  s[0] = y_next;
  return y_next;
}

ExactSolveResult solve_relu_empc(const ReluNet& net, const SurrogateHistory& hist,
                                 const EmpcWeights& w, const ExactSolverOptions& opt) {
  SurrogatePredictionModel model(net, hist);
  return solve_exact(model, w, opt);
}

ReluEmpcController::ReluEmpcController(const ReluNet& net, ContinuousInput nominal, EmpcWeights w,
                                       ExactSolverOptions opt)
    : net_(net), nominal_(nominal), w_(w), opt_(opt) {
  w_.validate();
}

int ReluEmpcController::decide(double y, const Trajectory& history, const ColumnState&) {
  SurrogateHistory h;
  h.y = y;
  h.c_F = nominal_.c_F;
  h.Q = nominal_.Q;
  h.c_F_prev = nominal_.c_F;
  h.Q_prev = nominal_.Q;
  const std::size_t k = history.size();
  if (k >= 1) {
    // Previous measurement; zero if the previous step was a switch.
    h.y_prev = history.u_d[k - 1] == 1 ? 0.0 : history.y_measured[k - 1];
    h.c_F = history.c_F_applied[k - 1];
    h.Q = history.Q_applied[k - 1];
    h.c_F_prev = k >= 2 ? history.c_F_applied[k - 2] : h.c_F;
    h.Q_prev = k >= 2 ? history.Q_applied[k - 2] : h.Q;
  }
  ExactSolveResult res = solve_relu_empc(net_, h, w_, opt_);
  std::ostringstream os;
  os << "empc-relu: nodes=" << res.nodes_expanded << " cost=" << res.cost;
  diag_ = os.str();
  return res.sequence.front();
}

}  // namespace capsim
