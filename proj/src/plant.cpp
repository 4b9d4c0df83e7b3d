#include "capsim/plant.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace capsim {

ColumnState plant_step(const Integrator& integ, const ColumnState& x, const PlantInput& in) {
  in.validate();
  if (in.u_d == 1) return zero_state(integ.params());
  return integ.step(x, in.u_c).state;
}

ContinuousInput perturb_inputs(const ContinuousInput& u, const NoiseConfig& noise, Rng& rng) {
  ContinuousInput out = u;
  out.c_F = std::max(0.0, u.c_F + rng.normal(0.0, noise.std_c_F()));
  out.Q = std::max(0.0, u.Q + rng.normal(0.0, noise.std_Q()));
  return out;
}

double measure(double x_out, const NoiseConfig& noise, Rng& rng) {
  return std::max(0.0, x_out + noise.meas_alpha * rng.normal(0.0, noise.meas_std));
}

Metrics compute_metrics(const Trajectory& traj, double W_s, double W_d) {
  Metrics m;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    m.PL += traj.x_out_true[k];
    if (traj.u_d[k] == 1) {
      ++m.switches;
      m.switch_steps.push_back(static_cast<int>(k) + 1);
    }
  }
  m.TC = W_s * m.PL + W_d * m.switches;
  return m;
}

int traditional_decide(double y, double c_F, double threshold) {
  return y >= threshold * c_F ? 1 : 0;
}

RunResult run_closed_loop(Controller& controller, const ClosedLoopScenario& scenario) {
  scenario.noise.validate();
  scenario.nominal.validate();
  RunResult res;
  Integrator integ(scenario.params, scenario.step);
  Rng rng(scenario.noise.seed);
  ColumnState x = zero_state(scenario.params);

  for (int k = 0; k < scenario.steps; ++k) {
    // Noise draws happen every step in a fixed order so the stream does not
    // depend on controller decisions.
    const double y = measure(outlet_concentration(scenario.params, x), scenario.noise, rng);
    const ContinuousInput applied = perturb_inputs(scenario.nominal, scenario.noise, rng);

    const auto t0 = std::chrono::steady_clock::now();
    const int u_d = controller.decide(y, res.traj, x);
    const auto t1 = std::chrono::steady_clock::now();
    if (u_d != 0 && u_d != 1) {
      throw InvalidConfig("controller returned a non-binary switch decision");
    }

    double x_out;
    if (u_d == 1) {
      x = zero_state(scenario.params);
      x_out = 0.0;  // the switch consumes the step; no loading happens
    } else {
      try {
        x = integ.step(x, applied).state;
      } catch (const SimulationError& e) {
        res.ok = false;
        res.diagnostic = std::string("step ") + std::to_string(k + 1) + ": " + e.what();
        return res;
      }
      x_out = outlet_concentration(scenario.params, x);
    }

    res.traj.c_F_applied.push_back(applied.c_F);
    res.traj.Q_applied.push_back(applied.Q);
    res.traj.u_d.push_back(u_d);
    res.traj.x_out_true.push_back(x_out);
    res.traj.y_measured.push_back(y);
    res.traj.solve_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
    if (scenario.keep_state_checkpoints) res.traj.state_checkpoints.push_back(x);
  }
  return res;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw InvalidConfig("cannot write trajectory CSV: " + path);
  out << "step,cF_applied,Q_applied,u_d,x_out_true,y_measured\n";
  out << std::setprecision(17);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    out << (k + 1) << "," << traj.c_F_applied[k] << "," << traj.Q_applied[k] << ","
        << traj.u_d[k] << "," << traj.x_out_true[k] << "," << traj.y_measured[k] << "\n";
  }
}

}  // namespace capsim
