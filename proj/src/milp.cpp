#include "capsim/milp.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace capsim {

InputBox default_input_box(const ReluNet& net, double y_max, const ContinuousInput& nominal,
                           double input_range) {
  Eigen::VectorXd lo(6), hi(6);
  lo << 0.0, 0.0, nominal.c_F * (1.0 - input_range), nominal.Q * (1.0 - input_range),
      nominal.c_F * (1.0 - input_range), nominal.Q * (1.0 - input_range);
  hi << y_max, y_max, nominal.c_F * (1.0 + input_range), nominal.Q * (1.0 + input_range),
      nominal.c_F * (1.0 + input_range), nominal.Q * (1.0 + input_range);
  InputBox box;
  box.lo = (lo - net.input_mean).cwiseQuotient(net.input_std);
  box.hi = (hi - net.input_mean).cwiseQuotient(net.input_std);
  return box;
}

LayerBounds propagate_bounds(const ReluNet& net, const InputBox& box) {
  net.validate();
  box.validate();
  if (box.lo.size() != net.input_dim()) {
    throw InvalidConfig("propagate_bounds: box does not match the net input dim");
  }
  LayerBounds out;
  Eigen::VectorXd lo = box.lo, hi = box.hi;
  for (int l = 0; l < net.hidden_layer_count(); ++l) {
    const auto& W = net.layers[l].W;
    const Eigen::MatrixXd Wp = W.cwiseMax(0.0);
    const Eigen::MatrixXd Wn = W.cwiseMin(0.0);
    Eigen::VectorXd pre_lo = Wp * lo + Wn * hi + net.layers[l].b;
    Eigen::VectorXd pre_hi = Wp * hi + Wn * lo + net.layers[l].b;
    out.lower.push_back(pre_lo);
    out.upper.push_back(pre_hi);
    lo = pre_lo.cwiseMax(0.0);
    hi = pre_hi.cwiseMax(0.0);
  }
  return out;
}

namespace {

// Output-layer interval over post-activation bounds.
void output_interval(const ReluNet& net, const LayerBounds& b, double& lo, double& hi) {
  const auto& W = net.layers.back().W;
  const Eigen::MatrixXd Wp = W.cwiseMax(0.0);
  const Eigen::MatrixXd Wn = W.cwiseMin(0.0);
  const int last = net.hidden_layer_count() - 1;
  Eigen::VectorXd alo = b.lower[last].cwiseMax(0.0);
  Eigen::VectorXd ahi = b.upper[last].cwiseMax(0.0);
  lo = (Wp * alo + Wn * ahi + net.layers.back().b)(0);
  hi = (Wp * ahi + Wn * alo + net.layers.back().b)(0);
}

std::string tag(const std::string& base, int stage, int a = -1, int b = -1) {
  std::ostringstream os;
  os << base << "_s" << stage;
  if (a >= 0) os << "_" << a;
  if (b >= 0) os << "_" << b;
  return os.str();
}

}  // namespace

MilpEncoding encode_milp(const ReluNet& net, const LayerBounds& bounds, const InputBox& box,
                         const EmpcWeights& w, const ContinuousInput& frozen_inputs,
                         const std::optional<MilpInitial>& initial) {
  net.validate();
  w.validate();
  box.validate();
  if (net.input_dim() != 6) throw InvalidConfig("encode_milp: expects the 6-feature net");

  MilpEncoding enc;
  enc.horizon = w.N;
  int hidden_total = 0;
  for (int l = 0; l < net.hidden_layer_count(); ++l) {
    hidden_total += static_cast<int>(net.layers[l].W.rows());
  }
  enc.hidden_neurons_per_stage = hidden_total;
  enc.relu_rows_per_stage = 4 * hidden_total;
  enc.z_var.assign(w.N, {});
  enc.t_var.assign(w.N, {});
  enc.relu_row_base.assign(w.N, 0);

  auto add_var = [&](const std::string& name, double lo, double hi, bool binary = false) {
    enc.variables.push_back({name, lo, hi, binary});
    enc.objective.push_back(0.0);
    return static_cast<int>(enc.variables.size()) - 1;
  };
  auto add_row = [&](const std::string& name, char sense, double rhs) -> LinearConstraint& {
    enc.constraints.push_back({});
    auto& row = enc.constraints.back();
    row.name = name;
    row.sense = sense;
    row.rhs = rhs;
    return row;
  };

  // Normalized constants for the frozen continuous-input features.
  Eigen::VectorXd uc(4);
  uc << frozen_inputs.c_F, frozen_inputs.Q, frozen_inputs.c_F, frozen_inputs.Q;
  Eigen::VectorXd uc_norm(4);
  for (int j = 0; j < 4; ++j) {
    uc_norm(j) = (uc(j) - net.input_mean(2 + j)) / net.input_std(2 + j);
  }

  struct Link {
    int y_next, lag_next, stage;
  };
  std::vector<Link> links;

  InputBox stage_box = box;
  LayerBounds stage_bounds = bounds;

  for (int stage = 0; stage < w.N; ++stage) {
    for (int l = 0; l < net.hidden_layer_count(); ++l) {
      for (int i = 0; i < stage_bounds.lower[l].size(); ++i) {
        if (!std::isfinite(stage_bounds.lower[l](i)) || !std::isfinite(stage_bounds.upper[l](i))) {
          std::ostringstream os;
          os << "encode_milp: unbounded neuron (layer " << l << ", unit " << i << ", stage "
             << stage << "); tighten the input box";
          throw InvalidConfig(os.str());
        }
      }
    }

    // Stage input features (normalized). The frozen continuous inputs become
    // fixed variables; a supplied initial history fixes the stage-0 outlets.
    std::vector<int> in(6);
    for (int j = 0; j < 6; ++j) {
      double lo = stage_box.lo(j), hi = stage_box.hi(j);
      if (j >= 2) lo = hi = uc_norm(j - 2);
      in[j] = add_var(tag("x", stage, j), lo, hi);
    }
    if (stage == 0 && initial) {
      auto fix = [&](int v, double phys, int feat) {
        const double n = (phys - net.input_mean(feat)) / net.input_std(feat);
        enc.variables[v].lo = enc.variables[v].hi = n;
      };
      fix(in[0], initial->y, 0);
      fix(in[1], initial->y_prev, 1);
    }
    for (int j = 0; j < 6; ++j) enc.input_var.push_back(in[j]);

    // Hidden layers: the four-inequality block per neuron.
    enc.relu_row_base[stage] = static_cast<int>(enc.constraints.size());
    std::vector<int> prev_act = in;
    for (int l = 0; l < net.hidden_layer_count(); ++l) {
      const auto& W = net.layers[l].W;
      const auto& bvec = net.layers[l].b;
      const int n_out = static_cast<int>(W.rows());
      std::vector<int> zs(n_out);
      for (int i = 0; i < n_out; ++i) {
        const double mlo = stage_bounds.lower[l](i);
        const double mhi = stage_bounds.upper[l](i);
        const int z = add_var(tag("z", stage, l, i), 0.0, std::max(0.0, mhi));
        const int t = add_var(tag("t", stage, l, i), 0.0, 1.0, true);
        zs[i] = z;

        // z >= W a + b
        auto& r1 = add_row(tag("relu_a", stage, l, i), 'G', bvec(i));
        r1.var.push_back(z);
        r1.coef.push_back(1.0);
        for (std::size_t c = 0; c < prev_act.size(); ++c) {
          if (W(i, c) != 0.0) {
            r1.var.push_back(prev_act[c]);
            r1.coef.push_back(-W(i, c));
          }
        }
        // z <= W a + b - m_lo (1 - t)
        auto& r2 = add_row(tag("relu_b", stage, l, i), 'L', bvec(i) - mlo);
        r2.var = r1.var;
        r2.coef = r1.coef;
        r2.var.push_back(t);
        r2.coef.push_back(-mlo);
        // z >= 0
        auto& r3 = add_row(tag("relu_c", stage, l, i), 'G', 0.0);
        r3.var.push_back(z);
        r3.coef.push_back(1.0);
        // z <= m_hi t
        auto& r4 = add_row(tag("relu_d", stage, l, i), 'L', 0.0);
        r4.var = {z, t};
        r4.coef = {1.0, -mhi};

        enc.z_var[stage].push_back(z);
        enc.t_var[stage].push_back(t);
      }
      prev_act = zs;
    }

    // Linear output layer as an equality.
    double out_lo, out_hi;
    output_interval(net, stage_bounds, out_lo, out_hi);
    const int o = add_var(tag("o", stage), out_lo, out_hi);
    {
      auto& r = add_row(tag("out", stage), 'E', -net.layers.back().b(0));
      r.var.push_back(o);
      r.coef.push_back(-1.0);
      const auto& W = net.layers.back().W;
      for (std::size_t c = 0; c < prev_act.size(); ++c) {
        if (W(0, c) != 0.0) {
          r.var.push_back(prev_act[c]);
          r.coef.push_back(W(0, c));
        }
      }
    }
    enc.output_var.push_back(o);

    // Physical prediction yhat = o * sy + my.
    const double yhat_lo = out_lo * net.output_std + net.output_mean;
    const double yhat_hi = out_hi * net.output_std + net.output_mean;
    const int yhat = add_var(tag("yhat", stage), yhat_lo, yhat_hi);
    enc.yhat_var.push_back(yhat);
    {
      auto& r = add_row(tag("denorm", stage), 'E', net.output_mean);
      r.var = {yhat, o};
      r.coef = {1.0, -net.output_std};
    }

    const int u = add_var(tag("u", stage), 0.0, 1.0, true);
    enc.u_var.push_back(u);

    // Reset coupling y_next = yhat * (1 - u), exact for binary u.
    const double yn_lo = std::min(0.0, yhat_lo);
    const double yn_hi = std::max(0.0, yhat_hi);
    const int y_next = add_var(tag("ynext", stage), yn_lo, yn_hi);
    {
      auto& r1 = add_row(tag("reset_a", stage), 'L', 0.0);
      r1.var = {y_next, yhat, u};
      r1.coef = {1.0, -1.0, yhat_lo};
      auto& r2 = add_row(tag("reset_b", stage), 'G', 0.0);
      r2.var = {y_next, yhat, u};
      r2.coef = {1.0, -1.0, yhat_hi};
      auto& r3 = add_row(tag("reset_c", stage), 'L', yn_hi);
      r3.var = {y_next, u};
      r3.coef = {1.0, yn_hi};
      auto& r4 = add_row(tag("reset_d", stage), 'G', yn_lo);
      r4.var = {y_next, u};
      r4.coef = {1.0, yn_lo};
    }
    enc.y_next_var.push_back(y_next);
    enc.objective[y_next] += w.W_s;
    enc.objective[u] += w.W_d;

    if (stage + 1 < w.N) {
      // Lag chain lag_next = xin_phys * (1 - u), with xin_phys the physical
      // value of this stage's outlet feature.
      const double xin_lo = enc.variables[in[0]].lo * net.input_std(0) + net.input_mean(0);
      const double xin_hi = enc.variables[in[0]].hi * net.input_std(0) + net.input_mean(0);
      const double ln_lo = std::min(0.0, xin_lo);
      const double ln_hi = std::max(0.0, xin_hi);
      const int lag_next = add_var(tag("lagnext", stage), ln_lo, ln_hi);
      enc.lag_next_var.push_back(lag_next);
      {
        auto& r1 = add_row(tag("lag_a", stage), 'L', net.input_mean(0));
        r1.var = {lag_next, in[0], u};
        r1.coef = {1.0, -net.input_std(0), xin_lo};
        auto& r2 = add_row(tag("lag_b", stage), 'G', net.input_mean(0));
        r2.var = {lag_next, in[0], u};
        r2.coef = {1.0, -net.input_std(0), xin_hi};
        auto& r3 = add_row(tag("lag_c", stage), 'L', ln_hi);
        r3.var = {lag_next, u};
        r3.coef = {1.0, ln_hi};
        auto& r4 = add_row(tag("lag_d", stage), 'G', ln_lo);
        r4.var = {lag_next, u};
        r4.coef = {1.0, ln_lo};
      }
      links.push_back({y_next, lag_next, stage + 1});

      // Widen the next stage's outlet features to the reachable interval and
      // re-propagate the neuron bounds.
      stage_box.lo(0) = (yn_lo - net.input_mean(0)) / net.input_std(0);
      stage_box.hi(0) = (yn_hi - net.input_mean(0)) / net.input_std(0);
      stage_box.lo(1) = (ln_lo - net.input_mean(1)) / net.input_std(1);
      stage_box.hi(1) = (ln_hi - net.input_mean(1)) / net.input_std(1);
      stage_bounds = propagate_bounds(net, stage_box);
    }
  }

  // Affine ties between chain variables and the next stage's input features.
  for (const auto& link : links) {
    const int yf = enc.input_var[static_cast<std::size_t>(link.stage) * 6 + 0];
    const int lf = enc.input_var[static_cast<std::size_t>(link.stage) * 6 + 1];
    auto& r1 = add_row(tag("chain_y", link.stage), 'E', -net.input_mean(0));
    r1.var = {yf, link.y_next};
    r1.coef = {net.input_std(0), -1.0};
    auto& r2 = add_row(tag("chain_lag", link.stage), 'E', -net.input_mean(1));
    r2.var = {lf, link.lag_next};
    r2.coef = {net.input_std(1), -1.0};
  }
  return enc;
}

EncodingReport verify_encoding(const MilpEncoding& enc, const ReluNet& net,
                               const std::vector<Eigen::VectorXd>& samples) {
  EncodingReport rep;
  rep.samples = static_cast<int>(samples.size());
  const int n_hidden_layers = net.hidden_layer_count();

  for (const auto& sample : samples) {
    // Assemble the all-zeros-switch assignment from forward passes.
    std::vector<double> x(enc.variables.size(), 0.0);
    Eigen::VectorXd feat = sample;
    for (int stage = 0; stage < enc.horizon; ++stage) {
      for (int j = 0; j < 6; ++j) x[enc.input_var[stage * 6 + j]] = feat(j);
      ForwardTrace tr = forward_trace(net, feat);
      int zi = 0;
      for (int l = 0; l < n_hidden_layers; ++l) {
        for (int i = 0; i < tr.pre_activations[l].size(); ++i, ++zi) {
          x[enc.z_var[stage][zi]] = std::max(0.0, tr.pre_activations[l](i));
          x[enc.t_var[stage][zi]] = tr.pre_activations[l](i) > 0.0 ? 1.0 : 0.0;
        }
      }
      x[enc.output_var[stage]] = tr.output;
      const double yhat = tr.output * net.output_std + net.output_mean;
      x[enc.yhat_var[stage]] = yhat;
      x[enc.u_var[stage]] = 0.0;
      x[enc.y_next_var[stage]] = yhat;
      if (stage + 1 < enc.horizon) {
        const double xin_phys = feat(0) * net.input_std(0) + net.input_mean(0);
        x[enc.lag_next_var[stage]] = xin_phys;
        Eigen::VectorXd next = feat;
        next(0) = (yhat - net.input_mean(0)) / net.input_std(0);
        next(1) = (xin_phys - net.input_mean(1)) / net.input_std(1);
        feat = next;
      }
    }

    // (a) Feasibility of every row and variable bound.
    double viol = 0.0;
    for (std::size_t i = 0; i < enc.variables.size(); ++i) {
      viol = std::max(viol, std::max(enc.variables[i].lo - x[i], x[i] - enc.variables[i].hi));
    }
    for (const auto& row : enc.constraints) {
      double lhs = 0.0;
      for (std::size_t j = 0; j < row.var.size(); ++j) lhs += row.coef[j] * x[row.var[j]];
      if (row.sense == 'L') viol = std::max(viol, lhs - row.rhs);
      if (row.sense == 'G') viol = std::max(viol, row.rhs - lhs);
      if (row.sense == 'E') viol = std::max(viol, std::abs(lhs - row.rhs));
    }
    rep.max_violation = std::max(rep.max_violation, viol);
    if (viol <= 1e-7) ++rep.feasible;

    // (b) With binaries fixed to the activation pattern, the four rows of
    // each neuron must pin z to the forward-pass value. The implied interval
    // is evaluated from the stored rows (so corrupted constants are caught).
    double pin_err = 0.0;
    for (int stage = 0; stage < enc.horizon; ++stage) {
      for (std::size_t zi = 0; zi < enc.z_var[stage].size(); ++zi) {
        const int z = enc.z_var[stage][zi];
        const double z_forward = x[z];
        double z_lo = -std::numeric_limits<double>::infinity();
        double z_hi = std::numeric_limits<double>::infinity();
        for (int r = 0; r < 4; ++r) {
          const auto& row = enc.constraints[enc.relu_row_base[stage] + 4 * zi + r];
          double rest = 0.0;
          double zc = 0.0;
          for (std::size_t j = 0; j < row.var.size(); ++j) {
            if (row.var[j] == z) {
              zc = row.coef[j];
            } else {
              rest += row.coef[j] * x[row.var[j]];
            }
          }
          const double bound = (row.rhs - rest) / zc;  // zc is 1.0 by construction
          if (row.sense == 'L') z_hi = std::min(z_hi, bound);
          if (row.sense == 'G') z_lo = std::max(z_lo, bound);
        }
        z_lo = std::max(z_lo, enc.variables[z].lo);
        z_hi = std::min(z_hi, enc.variables[z].hi);
        pin_err = std::max(pin_err, std::abs(z_lo - z_forward));
        pin_err = std::max(pin_err, std::abs(z_hi - z_forward));
      }
    }
    rep.max_pin_error = std::max(rep.max_pin_error, pin_err);
    if (pin_err <= 1e-6) ++rep.pinned;
  }
  return rep;
}

void write_lp(const std::string& path, const MilpEncoding& enc) {
  std::ofstream out(path);
  if (!out) throw InvalidConfig("cannot write LP file: " + path);
  out << std::setprecision(12);
  out << "\\ capsim surrogate EMPC encoding, horizon " << enc.horizon << "\n";
  out << "Minimize\n obj:";
  bool first = true;
  for (std::size_t i = 0; i < enc.objective.size(); ++i) {
    if (enc.objective[i] != 0.0) {
      out << (first ? " " : " + ") << enc.objective[i] << " " << enc.variables[i].name;
      first = false;
    }
  }
  if (first) out << " 0 " << enc.variables.front().name;
  out << "\nSubject To\n";
  for (const auto& row : enc.constraints) {
    out << " " << row.name << ":";
    for (std::size_t j = 0; j < row.var.size(); ++j) {
      const double c = row.coef[j];
      if (c >= 0.0 && j > 0) {
        out << " + " << c;
      } else if (c >= 0.0) {
        out << " " << c;
      } else {
        out << " - " << -c;
      }
      out << " " << enc.variables[row.var[j]].name;
    }
    out << (row.sense == 'L' ? " <= " : row.sense == 'G' ? " >= " : " = ") << row.rhs << "\n";
  }
  out << "Bounds\n";
  for (const auto& v : enc.variables) {
    if (v.binary) continue;
    out << " " << v.lo << " <= " << v.name << " <= " << v.hi << "\n";
  }
  out << "Binaries\n";
  for (const auto& v : enc.variables) {
    if (v.binary) out << " " << v.name << "\n";
  }
  out << "End\n";
}

}  // namespace capsim
