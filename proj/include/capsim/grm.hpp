#pragma once

#include <span>
#include <vector>

#include "capsim/column.hpp"

namespace capsim {

// General rate model of the capture column in loading mode, discretized by
// the method of lines.
//
// Axial direction: N_z cell-centered finite volumes with central (arithmetic
// mean) face values, written in flux form so that the Danckwerts inlet
// condition enters as the exact inlet flux v/eps_c * c_F and the outlet as a
// zero-gradient convective flux. Radial direction: N_r equally spaced nodes
// from the particle center to r_p, second-order central differences with a
// symmetry ghost at r=0 and a film-flux ghost at r=r_p. Two-site Langmuir
// kinetics are driven by the surface pore concentration; the adsorption sink
// is applied at the surface shell weighted by the shell quadrature so the
// discrete particle mass balance telescopes exactly.
//
// The film boundary condition is applied in the conservative form
//   dc_p/dr|_{r_p} = k_f / (eps_p * D_eff) * (c - c_p|_{r_p})
// which makes the pore-phase uptake match the mobile-phase film loss term.

/// Langmuir equilibrium loading q_max,site * K * c / (1 + K * c).
double equilibrium_loading(double c, const ColumnParams& p, int site);

/// State with uniform concentration c everywhere and both sites at
/// equilibrium loading; the saturated column for c = c_F.
ColumnState uniform_state(const ColumnParams& p, double c);

/// Mobile-phase concentration at the outlet axial node (mg/L).
double outlet_concentration(const ColumnParams& p, const ColumnState& x);

/// Radial quadrature weight of shell j (normalized shell-volume fraction)
/// matched to the radial stencil; used by the inventory and the sink term.
double radial_weight(const ColumnParams& p, int j);

/// Discrete spherical-diffusion term at one axial node, written into dcp
/// (length N_r). c is the local mobile-phase concentration driving the film
/// ghost. Exposed for the grid-symmetry tests.
void particle_diffusion_term(const ColumnParams& p, std::span<const double> cp, double c,
                             std::span<double> dcp);

/// Time derivative of the full state (units 1/min). Throws on dimension
/// mismatch or non-finite entries.
void rhs(const ColumnParams& p, const ColumnState& x, const ContinuousInput& u,
         ColumnState& dxdt);
ColumnState rhs(const ColumnParams& p, const ColumnState& x, const ContinuousInput& u);

/// Total mAb held in the column (mg): eps_c-weighted mobile phase plus
/// (1-eps_c)-weighted pore liquid (eps_p, shell-volume averaged) and
/// adsorbed phase, integrated over the axial grid.
double total_mab_inventory(const ColumnParams& p, const ColumnState& x);

/// Result of one macro step. inflow/outflow are the boundary mass integrals
/// Q*c_F*dt and Q*c_out*dt accumulated with the RK4 stage weights.
struct StepResult {
  ColumnState state;
  double inflow_mg = 0.0;
  double outflow_mg = 0.0;
};

// Fixed-step RK4 integrator over one controller step. Holds scratch buffers;
// create one per thread. Entries in [-tol, 0) with tol = 1e-10 * max(c_F, 1)
// are clamped to zero after every substep; entries below -tol or non-finite
// abort with a diagnostic naming the offending node.
class Integrator {
 public:
  Integrator(const ColumnParams& p, const StepConfig& cfg);

  const ColumnParams& params() const { return params_; }
  const StepConfig& config() const { return config_; }

  /// Advances the state by dt_macro. Deterministic for identical inputs.
  StepResult step(const ColumnState& x, const ContinuousInput& u) const;

 private:
  void check_and_clamp(ColumnState& x, double c_scale, int substep) const;

  ColumnParams params_;
  StepConfig config_;
  mutable ColumnState k1_, k2_, k3_, k4_, tmp_;
};

}  // namespace capsim
