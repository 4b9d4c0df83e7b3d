#include "capsim/grm.hpp"

#include <cmath>
#include <sstream>

namespace capsim {

void ColumnParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw InvalidConfig(std::string("ColumnParams.") + name + " must be strictly positive");
    }
  };
  positive(D_ax, "D_ax");
  positive(A, "A");
  positive(k_f, "k_f");
  positive(r_p, "r_p");
  positive(D_eff, "D_eff");
  positive(k_1, "k_1");
  positive(k_2, "k_2");
  positive(q_max_1, "q_max_1");
  positive(q_max_2, "q_max_2");
  positive(K, "K");
  positive(L, "L");
  if (!(eps_c > 0.0 && eps_c < 1.0)) throw InvalidConfig("ColumnParams.eps_c must be in (0,1)");
  if (!(eps_p > 0.0 && eps_p < 1.0)) throw InvalidConfig("ColumnParams.eps_p must be in (0,1)");
  if (N_z < 2) throw InvalidConfig("ColumnParams.N_z must be >= 2");
  if (N_r < 3) throw InvalidConfig("ColumnParams.N_r must be >= 3");
}

ColumnState zero_state(const ColumnParams& p) {
  return ColumnState(static_cast<std::size_t>(p.state_size()), 0.0);
}

double equilibrium_loading(double c, const ColumnParams& p, int site) {
  if (c < 0.0) throw InvalidConfig("equilibrium_loading: c must be >= 0");
  const double q_max = (site == 1) ? p.q_max_1 : p.q_max_2;
  return q_max * p.K * c / (1.0 + p.K * c);
}

ColumnState uniform_state(const ColumnParams& p, double c) {
  ColumnState x = zero_state(p);
  const double q1 = equilibrium_loading(c, p, 1);
  const double q2 = equilibrium_loading(c, p, 2);
  for (int i = 0; i < p.N_z; ++i) {
    x[idx_c(p, i)] = c;
    for (int j = 0; j < p.N_r; ++j) x[idx_cp(p, i, j)] = c;
    x[idx_q(p, i, 1)] = q1;
    x[idx_q(p, i, 2)] = q2;
  }
  return x;
}

double outlet_concentration(const ColumnParams& p, const ColumnState& x) {
  return x[idx_c(p, p.N_z - 1)];
}

double radial_weight(const ColumnParams& p, int j) {
  // Shell weights matched to the radial stencil: j^2 for interior nodes and
  // m(m-1)/2 at the surface node make the discrete volume average of the
  // diffusion operator telescope exactly to the film flux.
  const int m = p.N_r - 1;
  double w = (j == m) ? 0.5 * m * (m - 1) : static_cast<double>(j) * j;
  const double total = static_cast<double>(m) * (m - 1) * (m + 1) / 3.0;
  return w / total;
}

void particle_diffusion_term(const ColumnParams& p, std::span<const double> cp, double c,
                             std::span<double> dcp) {
  const int m = p.N_r - 1;
  const double dr = p.r_p / m;
  const double a = p.D_eff / (dr * dr);
  // Symmetry limit at the center: 3 * d2cp/dr2 with a ghost mirror node.
  dcp[0] = 6.0 * a * (cp[1] - cp[0]);
  for (int j = 1; j < m; ++j) {
    dcp[j] = a * (cp[j + 1] - 2.0 * cp[j] + cp[j - 1]) +
             p.D_eff * (cp[j + 1] - cp[j - 1]) / (static_cast<double>(j) * dr * dr);
  }
  // Film ghost at the surface, conservative form with eps_p.
  const double flux = (p.k_f / p.eps_p) * (c - cp[m]);  // D_eff * dcp/dr at r_p
  dcp[m] = 2.0 * a * (cp[m - 1] - cp[m]) + 2.0 * flux * (1.0 / dr + 1.0 / p.r_p);
}

void rhs(const ColumnParams& p, const ColumnState& x, const ContinuousInput& u,
         ColumnState& dxdt) {
  const std::size_t n = static_cast<std::size_t>(p.state_size());
  if (x.size() != n) {
    std::ostringstream os;
    os << "rhs: state has " << x.size() << " entries, expected " << n;
    throw InvalidConfig(os.str());
  }
  dxdt.assign(n, 0.0);

  for (std::size_t s = 0; s < n; ++s) {
    if (!std::isfinite(x[s])) {
      std::ostringstream os;
      os << "rhs: non-finite state entry at index " << s << " (node " << s / p.states_per_node()
         << ")";
      throw SimulationError(os.str());
    }
  }

  const int spn = p.states_per_node();
  const int m = p.N_r - 1;
  const double v = u.Q * 1e-3 / p.A;  // superficial velocity (m/min)
  const double ui = v / p.eps_c;      // interstitial velocity
  const double dz = p.L / p.N_z;
  const double film = (1.0 - p.eps_c) / p.eps_c * 3.0 / p.r_p * p.k_f;
  const double dr = p.r_p / m;
  const double a_r = p.D_eff / (dr * dr);
  const double surf_flux_coef = (p.k_f / p.eps_p) * 2.0 * (1.0 / dr + 1.0 / p.r_p);
  // Sink weighting: the node-level q couples into the surface shell scaled by
  // the inverse of that shell's volume fraction, so the particle-average
  // balance eps_p*d<cp>/dt + dq/dt = (3/r_p) k_f (c - cp_surf) holds exactly.
  const double sink_scale = 1.0 / (p.eps_p * radial_weight(p, m));

  // Axial face fluxes (interstitial), F_i = flux at the left face of cell i.
  // F_0 is the Danckwerts inlet flux; F_{N_z} the zero-gradient outlet flux.
  double flux_left = ui * u.c_F;
  for (int i = 0; i < p.N_z; ++i) {
    const double* xi = x.data() + static_cast<std::size_t>(i) * spn;
    double* di = dxdt.data() + static_cast<std::size_t>(i) * spn;
    const double c = xi[0];

    double flux_right;
    if (i + 1 < p.N_z) {
      const double cr = x[static_cast<std::size_t>(i + 1) * spn];
      flux_right = ui * 0.5 * (c + cr) - p.D_ax * (cr - c) / dz;
    } else {
      flux_right = ui * c;
    }

    const double cp_surf = xi[1 + m];
    const double film_i = film * (c - cp_surf);
    di[0] = (flux_left - flux_right) / dz - film_i;
    flux_left = flux_right;

    // Particle shells.
    const double q1 = xi[1 + p.N_r];
    const double q2 = xi[2 + p.N_r];
    const double dq1 = p.k_1 * ((p.q_max_1 - q1) * cp_surf - q1 / p.K);
    const double dq2 = p.k_2 * ((p.q_max_2 - q2) * cp_surf - q2 / p.K);

    const double* cp = xi + 1;
    double* dcp = di + 1;
    dcp[0] = 6.0 * a_r * (cp[1] - cp[0]);
    for (int j = 1; j < m; ++j) {
      dcp[j] = a_r * (cp[j + 1] - 2.0 * cp[j] + cp[j - 1]) +
               p.D_eff * (cp[j + 1] - cp[j - 1]) / (static_cast<double>(j) * dr * dr);
    }
    dcp[m] = 2.0 * a_r * (cp[m - 1] - cp[m]) + surf_flux_coef * (c - cp[m]) -
             (dq1 + dq2) * sink_scale;

    di[1 + p.N_r] = dq1;
    di[2 + p.N_r] = dq2;
  }
}

ColumnState rhs(const ColumnParams& p, const ColumnState& x, const ContinuousInput& u) {
  ColumnState d;
  rhs(p, x, u, d);
  return d;
}

double total_mab_inventory(const ColumnParams& p, const ColumnState& x) {
  const int spn = p.states_per_node();
  const int m = p.N_r - 1;
  double mobile = 0.0, pore = 0.0, adsorbed = 0.0;
  for (int i = 0; i < p.N_z; ++i) {
    const double* xi = x.data() + static_cast<std::size_t>(i) * spn;
    mobile += xi[0];
    double cp_avg = 0.0;
    for (int j = 0; j <= m; ++j) cp_avg += radial_weight(p, j) * xi[1 + j];
    pore += cp_avg;
    adsorbed += xi[1 + p.N_r] + xi[2 + p.N_r];
  }
  const double cell_vol = p.volume_l() / p.N_z;  // liters per axial cell
  return cell_vol * (p.eps_c * mobile + (1.0 - p.eps_c) * (p.eps_p * pore + adsorbed));
}

Integrator::Integrator(const ColumnParams& p, const StepConfig& cfg) : params_(p), config_(cfg) {
  params_.validate();
  config_.validate();
  const std::size_t n = static_cast<std::size_t>(p.state_size());
  k1_.resize(n);
  k2_.resize(n);
  k3_.resize(n);
  k4_.resize(n);
  tmp_.resize(n);
}

void Integrator::check_and_clamp(ColumnState& x, double c_scale, int substep) const {
  const double tol = 1e-10 * std::max(c_scale, 1.0);
  for (std::size_t s = 0; s < x.size(); ++s) {
    const double v = x[s];
    if (!std::isfinite(v) || v < -tol) {
      std::ostringstream os;
      os << "integrate_step: unstable state at substep " << substep << ", node "
         << s / params_.states_per_node() << ", component offset " << s % params_.states_per_node()
         << ", value " << v << " (tol " << -tol << "); reduce dt or check parameters";
      throw SimulationError(os.str());
    }
    if (v < 0.0) x[s] = 0.0;
  }
}

StepResult Integrator::step(const ColumnState& x0, const ContinuousInput& u) const {
  StepResult res;
  res.state = x0;
  const double h = config_.dt_macro / config_.n_substeps;
  const std::size_t n = res.state.size();
  const int last = params_.N_z - 1;
  const std::size_t out_idx = idx_c(params_, last);

  for (int s = 0; s < config_.n_substeps; ++s) {
    ColumnState& x = res.state;
    rhs(params_, x, u, k1_);
    for (std::size_t j = 0; j < n; ++j) tmp_[j] = x[j] + 0.5 * h * k1_[j];
    const double out1 = x[out_idx];
    rhs(params_, tmp_, u, k2_);
    const double out2 = tmp_[out_idx];
    for (std::size_t j = 0; j < n; ++j) tmp_[j] = x[j] + 0.5 * h * k2_[j];
    rhs(params_, tmp_, u, k3_);
    const double out3 = tmp_[out_idx];
    for (std::size_t j = 0; j < n; ++j) tmp_[j] = x[j] + h * k3_[j];
    rhs(params_, tmp_, u, k4_);
    const double out4 = tmp_[out_idx];
    for (std::size_t j = 0; j < n; ++j) {
      x[j] += h / 6.0 * (k1_[j] + 2.0 * k2_[j] + 2.0 * k3_[j] + k4_[j]);
    }
    check_and_clamp(x, u.c_F, s);
    // Boundary mass integrals with the same RK4 stage weights.
    const double out_avg = (out1 + 2.0 * out2 + 2.0 * out3 + out4) / 6.0;
    res.inflow_mg += u.Q * u.c_F * h;
    res.outflow_mg += u.Q * out_avg * h;
  }
  return res;
}

}  // namespace capsim
