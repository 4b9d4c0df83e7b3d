#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "capsim/common.hpp"

namespace capsim {

// Physical and numerical constants of the capture column in loading mode.
//
// Units: lengths in m, time in min, liquid concentrations in mg/L,
// adsorbed concentrations in mg/L of particle volume, flow in L/min.
// The superficial velocity is derived per step as v = Q / A.
struct ColumnParams {
  double D_ax = 5.0e-5;     ///< axial dispersion coefficient (m^2/min)
  double A = 2.0;           ///< column cross-section area (m^2)
  double eps_c = 0.35;      ///< extra-particle column void (-)
  double eps_p = 0.85;      ///< particle porosity (-)
  double k_f = 6.0e-5;      ///< film mass-transfer coefficient (m/min)
  double r_p = 4.25e-5;     ///< particle radius (m)
  double D_eff = 2.4e-10;   ///< effective pore diffusivity (m^2/min)
  double k_1 = 4.0e-4;      ///< adsorption kinetic constant, site 1 (L/(mg*min))
  double k_2 = 2.0e-5;      ///< adsorption kinetic constant, site 2 (L/(mg*min))
  double q_max_1 = 5680.0;  ///< capacity of site 1 (mg/L solid)
  double q_max_2 = 2000.0;  ///< capacity of site 2 (mg/L solid)
  double K = 0.3;           ///< Langmuir equilibrium constant (L/mg)
  double L = 0.2;           ///< column length (m)
  int N_z = 75;             ///< axial nodes
  int N_r = 5;              ///< radial shells

  int states_per_node() const { return 1 + N_r + 2; }
  int state_size() const { return N_z * states_per_node(); }
  /// Column volume in liters.
  double volume_l() const { return A * L * 1000.0; }

  /// Throws InvalidConfig naming the offending field.
  void validate() const;
};

// Constant continuous inputs of the plant.
struct ContinuousInput {
  double c_F = 49.9219;  ///< feed mAb concentration (mg/L)
  double Q = 21.6129;    ///< volumetric flow rate (L/min)

  void validate() const {
    if (c_F < 0.0) throw InvalidConfig("ContinuousInput.c_F must be >= 0");
    if (Q < 0.0) throw InvalidConfig("ContinuousInput.Q must be >= 0");
  }
};

// Integrator configuration for one controller step.
struct StepConfig {
  double dt_macro = 60.0;  ///< controller step (min)
  int n_substeps = 1200;   ///< RK4 substeps per macro step
  std::string method = "rk4";

  void validate() const {
    if (dt_macro <= 0.0) throw InvalidConfig("StepConfig.dt_macro must be > 0");
    if (n_substeps < 1) throw InvalidConfig("StepConfig.n_substeps must be >= 1");
    if (method != "rk4") throw InvalidConfig("StepConfig.method: only 'rk4' is supported");
  }
};

// Flat state vector of the discretized column.
//
// Layout contract: per axial node i in {0..N_z-1}, in this order:
//   c_i, c_p_{i,0} .. c_p_{i,N_r-1}, q1_i, q2_i
// with radial shell 0 at the particle center and shell N_r-1 at the surface.
// For the reference configuration (N_z=75, N_r=5) this gives 8 states per
// node and 600 states total.
using ColumnState = std::vector<double>;

/// Fresh (all-zero) column state for the given grid.
ColumnState zero_state(const ColumnParams& p);

/// Index of c at axial node i.
inline std::size_t idx_c(const ColumnParams& p, int i) {
  return static_cast<std::size_t>(i) * p.states_per_node();
}
/// Index of c_p at axial node i, radial shell j.
inline std::size_t idx_cp(const ColumnParams& p, int i, int j) {
  return idx_c(p, i) + 1 + j;
}
/// Index of q_site (1 or 2) at axial node i.
inline std::size_t idx_q(const ColumnParams& p, int i, int site) {
  return idx_c(p, i) + 1 + p.N_r + (site - 1);
}

/// Loads column parameters from a JSON file; keys are exactly the
/// ColumnParams field names. Unknown keys are rejected.
ColumnParams load_column_params(const std::string& path);
StepConfig load_step_config(const std::string& path);

/// Writes parameters plus integrator settings to a JSON file.
void save_column_config(const std::string& path, const ColumnParams& p, const StepConfig& cfg);

/// Writes a state snapshot as CSV with columns
/// node_index, c, cp_0..cp_{N_r-1}, q1, q2.
void write_state_csv(const std::string& path, const ColumnParams& p, const ColumnState& x);

}  // namespace capsim
