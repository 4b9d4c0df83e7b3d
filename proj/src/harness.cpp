#include "capsim/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "capsim/config_json.hpp"

namespace capsim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int line_of_byte_in(const std::string& path, std::size_t byte) {
  std::ifstream in(path, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  int line = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    std::ostringstream os;
    os << path << ":" << line_of_byte_in(path, e.byte) << ": " << e.what();
    throw InvalidConfig(os.str());
  }
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key())) throw InvalidConfig(where + ": unknown key '" + it.key() + "'");
  }
}

NoiseConfig noise_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"process_std", "meas_alpha", "meas_std", "seed", "process_std_c_F",
                       "process_std_Q"},
                      "noise");
  NoiseConfig n;
  n.process_std = j.value("process_std", 0.0);
  n.meas_alpha = j.value("meas_alpha", 0.0);
  n.meas_std = j.value("meas_std", 0.0);
  n.seed = j.value("seed", 0ull);
  n.process_std_c_F = j.value("process_std_c_F", -1.0);
  n.process_std_Q = j.value("process_std_Q", -1.0);
  n.validate();
  return n;
}

SigmoidConfig sigmoid_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"beta", "r_min", "r_max", "threshold", "multistart", "max_iterations",
                       "fd_step", "tolerance", "seed", "workers"},
                      "controller.sigmoid");
  SigmoidConfig s;
  s.beta = j.value("beta", s.beta);
  s.r_min = j.value("r_min", s.r_min);
  s.r_max = j.value("r_max", s.r_max);
  s.threshold = j.value("threshold", s.threshold);
  s.multistart = j.value("multistart", s.multistart);
  s.max_iterations = j.value("max_iterations", s.max_iterations);
  s.fd_step = j.value("fd_step", s.fd_step);
  s.tolerance = j.value("tolerance", s.tolerance);
  s.seed = j.value("seed", s.seed);
  s.workers = j.value("workers", s.workers);
  s.validate();
  return s;
}

std::string resolve_relative(const std::string& base_file, const std::string& ref) {
  fs::path p(ref);
  if (p.is_absolute()) return ref;
  return (fs::path(base_file).parent_path() / p).string();
}

}  // namespace

ControllerSpec::Kind ControllerSpec::kind_from_string(const std::string& s) {
  if (s == "traditional") return Kind::kTraditional;
  if (s == "empc-exact") return Kind::kEmpcExact;
  if (s == "empc-sigmoid") return Kind::kEmpcSigmoid;
  if (s == "empc-relu") return Kind::kEmpcRelu;
  if (s == "rl-policy") return Kind::kRlPolicy;
  throw InvalidConfig("controller.type: unknown controller '" + s + "'");
}

std::string ControllerSpec::kind_to_string(Kind k) {
  switch (k) {
    case Kind::kTraditional: return "traditional";
    case Kind::kEmpcExact: return "empc-exact";
    case Kind::kEmpcSigmoid: return "empc-sigmoid";
    case Kind::kEmpcRelu: return "empc-relu";
    case Kind::kRlPolicy: return "rl-policy";
  }
  return "?";
}

Scenario load_scenario(const std::string& path) {
  const json j = parse_json_file(path);
  reject_unknown_keys(j,
                      {"params_file", "steps", "weights", "horizon", "controller", "noise",
                       "seeds", "out_dir", "nominal"},
                      "scenario");
  Scenario sc;
  sc.params_file = resolve_relative(path, j.at("params_file").get<std::string>());
  sc.params = load_column_params(sc.params_file);
  sc.step = load_step_config(sc.params_file);

  if (j.contains("nominal")) {
    reject_unknown_keys(j.at("nominal"), {"c_F", "Q"}, "nominal");
    sc.nominal.c_F = j.at("nominal").value("c_F", sc.nominal.c_F);
    sc.nominal.Q = j.at("nominal").value("Q", sc.nominal.Q);
    sc.nominal.validate();
  }

  sc.steps = j.value("steps", 50);
  if (sc.steps < 1) throw InvalidConfig("scenario.steps must be >= 1");
  if (j.contains("weights")) {
    reject_unknown_keys(j.at("weights"), {"W_s", "W_d"}, "weights");
    sc.W_s = j.at("weights").value("W_s", 1.0);
    sc.W_d = j.at("weights").value("W_d", 0.5);
    if (sc.W_s < 0.0 || sc.W_d < 0.0) throw InvalidConfig("scenario.weights must be >= 0");
  }
  sc.horizon = j.value("horizon", 10);
  if (sc.horizon < 1) throw InvalidConfig("scenario.horizon must be >= 1");
  if (j.contains("noise")) sc.noise = noise_from_json(j.at("noise"));
  if (j.contains("seeds")) {
    sc.seeds.clear();
    for (const auto& s : j.at("seeds")) sc.seeds.push_back(s.get<std::uint64_t>());
    if (sc.seeds.empty()) throw InvalidConfig("scenario.seeds must not be empty");
  }
  sc.out_dir = j.value("out_dir", std::string("out"));

  const json& c = j.at("controller");
  reject_unknown_keys(
      c, {"type", "threshold", "net_file", "policy_file", "sigmoid", "node_budget"}, "controller");
  sc.controller.kind = ControllerSpec::kind_from_string(c.at("type").get<std::string>());
  sc.controller.threshold = c.value("threshold", 0.01);
  if (!(sc.controller.threshold > 0.0 && sc.controller.threshold < 1.0)) {
    throw InvalidConfig("controller.threshold must be in (0,1)");
  }
  if (c.contains("net_file")) {
    sc.controller.net_file = resolve_relative(path, c.at("net_file").get<std::string>());
  }
  if (c.contains("policy_file")) {
    sc.controller.policy_file = resolve_relative(path, c.at("policy_file").get<std::string>());
  }
  if (c.contains("sigmoid")) sc.controller.sigmoid = sigmoid_from_json(c.at("sigmoid"));
  sc.controller.node_budget = c.value("node_budget", sc.controller.node_budget);

  // Per-kind completeness.
  if (sc.controller.kind == ControllerSpec::Kind::kEmpcRelu && sc.controller.net_file.empty()) {
    throw InvalidConfig("controller.net_file is required for empc-relu");
  }
  if (sc.controller.kind == ControllerSpec::Kind::kRlPolicy && sc.controller.policy_file.empty()) {
    throw InvalidConfig("controller.policy_file is required for rl-policy");
  }
  return sc;
}

ControllerBundle make_controller(const Scenario& sc, std::uint64_t seed) {
  ControllerBundle b;
  EmpcWeights w{sc.W_s, sc.W_d, sc.horizon};
  switch (sc.controller.kind) {
    case ControllerSpec::Kind::kTraditional:
      b.controller =
          std::make_unique<TraditionalController>(sc.nominal.c_F, sc.controller.threshold);
      break;
    case ControllerSpec::Kind::kEmpcExact: {
      ExactSolverOptions opt;
      opt.node_budget = sc.controller.node_budget;
      b.controller =
          std::make_unique<ExactEmpcController>(sc.params, sc.step, sc.nominal, w, opt);
      break;
    }
    case ControllerSpec::Kind::kEmpcSigmoid:
      b.controller = std::make_unique<SigmoidEmpcController>(sc.params, sc.step, sc.nominal, w,
                                                             sc.controller.sigmoid);
      break;
    case ControllerSpec::Kind::kEmpcRelu: {
      if (!fs::exists(sc.controller.net_file)) {
        throw InvalidConfig("missing model artifact: " + sc.controller.net_file);
      }
      b.net = std::make_shared<ReluNet>(load_net(sc.controller.net_file));
      ExactSolverOptions opt;
      opt.node_budget = sc.controller.node_budget;
      b.controller = std::make_unique<ReluEmpcController>(*b.net, sc.nominal, w, opt);
      break;
    }
    case ControllerSpec::Kind::kRlPolicy: {
      if (!fs::exists(sc.controller.policy_file)) {
        throw InvalidConfig("missing model artifact: " + sc.controller.policy_file);
      }
      b.policy = std::make_shared<Policy>(load_policy(sc.controller.policy_file));
      b.controller = std::make_unique<PolicyController>(*b.policy, sc.params, true,
                                                        derive_seed(seed, 1234));
      break;
    }
  }
  return b;
}

int first_breakthrough_step(const ColumnParams& p, const StepConfig& cfg,
                            const ContinuousInput& nominal, int max_steps, double threshold) {
  Integrator integ(p, cfg);
  ColumnState x = zero_state(p);
  // Step k measures the outlet left by step k-1.
  for (int k = 1; k <= max_steps; ++k) {
    if (outlet_concentration(p, x) >= threshold * nominal.c_F) return k;
    x = integ.step(x, nominal).state;
  }
  return 0;
}

namespace {

// True when a nominal run stays nonnegative and bounded at this substep
// count.
bool screen_clean(const ColumnParams& p, int n_substeps, const ContinuousInput& nominal,
                  int steps) {
  StepConfig cfg;
  cfg.n_substeps = n_substeps;
  Integrator integ(p, cfg);
  ColumnState x = zero_state(p);
  const double c_cap = nominal.c_F * (1.0 + 1e-6);
  try {
    for (int k = 0; k < steps; ++k) {
      x = integ.step(x, nominal).state;
      for (int i = 0; i < p.N_z; ++i) {
        if (x[idx_c(p, i)] > c_cap) return false;
        for (int j = 0; j < p.N_r; ++j) {
          if (x[idx_cp(p, i, j)] > c_cap) return false;
        }
        if (x[idx_q(p, i, 1)] > p.q_max_1 || x[idx_q(p, i, 2)] > p.q_max_2) return false;
      }
    }
  } catch (const SimulationError&) {
    return false;
  }
  return true;
}

double max_outlet_reldiff(const ColumnParams& p, int n_substeps, const ContinuousInput& nominal,
                          int steps) {
  StepConfig a, b;
  a.n_substeps = n_substeps;
  b.n_substeps = 2 * n_substeps;
  Integrator ia(p, a), ib(p, b);
  ColumnState xa = zero_state(p), xb = zero_state(p);
  double worst = 0.0;
  const double floor = 1e-9 * nominal.c_F;
  for (int k = 0; k < steps; ++k) {
    xa = ia.step(xa, nominal).state;
    xb = ib.step(xb, nominal).state;
    const double oa = outlet_concentration(p, xa);
    const double ob = outlet_concentration(p, xb);
    worst = std::max(worst, std::abs(oa - ob) / std::max({std::abs(oa), std::abs(ob), floor}));
  }
  return worst;
}

}  // namespace

CalibrationResult calibrate(const ColumnParams& seed_params, const ContinuousInput& nominal,
                            const CalibrateOptions& opt) {
  seed_params.validate();
  if (opt.target_first_breakthrough_step < 2) {
    throw InvalidConfig("calibrate: target step must be >= 2 (a fresh column cannot trip at 1)");
  }

  CalibrationResult res;
  res.params = seed_params;

  // Stability screen: find the largest clean dt (coarse doubling, then
  // bisection to ~10%), then halve it.
  auto screen = [&](const ColumnParams& p) {
    int lo = 64;
    while (!screen_clean(p, lo, nominal, opt.probe_steps)) {
      lo *= 2;
      if (lo > (1 << 20)) throw InvalidConfig("calibrate: no stable substep count found");
    }
    int dirty = lo / 2;
    // Bisect between dirty and clean to sharpen the boundary.
    while (lo - dirty > std::max(8, dirty / 10)) {
      const int mid = (lo + dirty) / 2;
      if (screen_clean(p, mid, nominal, opt.probe_steps)) {
        lo = mid;
      } else {
        dirty = mid;
      }
    }
    return lo;
  };

  const int clean = screen(res.params);
  res.screened_substeps = clean;
  res.step.n_substeps = 2 * clean;

  // Capacity-scale bisection. The breakthrough step is non-decreasing in the
  // scale factor.
  auto probe = [&](double s) {
    ColumnParams p = res.params;
    p.q_max_1 = seed_params.q_max_1 * s;
    p.q_max_2 = seed_params.q_max_2 * s;
    return first_breakthrough_step(p, res.step, nominal, opt.probe_steps + 20);
  };

  const int target = opt.target_first_breakthrough_step;
  double s_lo = 1.0, s_hi = 1.0;
  int b_now = probe(1.0);
  if (b_now != target) {
    const int b_min = probe(opt.scale_min);
    const int b_max = probe(opt.scale_max);
    auto in_range = [&](int b) { return b != 0 && std::abs(b - target) <= opt.tolerance; };
    if (!in_range(b_min) && !in_range(b_max) &&
        ((b_min == 0 || b_min > target) || (b_max != 0 && b_max < target))) {
      std::ostringstream os;
      os << "calibrate: target step " << target << " unreachable within scale bounds ["
         << opt.scale_min << ", " << opt.scale_max << "]; achievable range is ["
         << (b_min == 0 ? opt.probe_steps + 20 : b_min) << ", "
         << (b_max == 0 ? opt.probe_steps + 20 : b_max) << "]";
      throw InvalidConfig(os.str());
    }
    s_lo = opt.scale_min;
    s_hi = opt.scale_max;
    if (b_now < target) {
      s_lo = 1.0;
    } else {
      s_hi = 1.0;
    }
    for (int it = 0; it < 60 && s_hi - s_lo > 1e-10; ++it) {
      const double mid = 0.5 * (s_lo + s_hi);
      const int b = probe(mid);
      if (b == target) {
        s_lo = s_hi = mid;
        break;
      }
      if (b != 0 && b > target) {
        s_hi = mid;
      } else {
        s_lo = mid;
      }
    }
    const double s = 0.5 * (s_lo + s_hi);
    res.q_scale = s;
    res.params.q_max_1 = seed_params.q_max_1 * s;
    res.params.q_max_2 = seed_params.q_max_2 * s;
  }

  res.breakthrough_step = first_breakthrough_step(res.params, res.step, nominal,
                                                  opt.probe_steps + 20);
  if (res.breakthrough_step == 0 ||
      std::abs(res.breakthrough_step - target) > opt.tolerance) {
    std::ostringstream os;
    os << "calibrate: landed at breakthrough step " << res.breakthrough_step << ", target "
       << target << " +- " << opt.tolerance;
    throw InvalidConfig(os.str());
  }

  // The capacity scale changes the kinetic stiffness; re-screen and keep the
  // stricter substep count.
  const int clean2 = screen(res.params);
  res.screened_substeps = std::max(res.screened_substeps, clean2);
  res.step.n_substeps = 2 * res.screened_substeps;

  // Self-convergence tightening: outlet must move < 1e-6 relative under
  // substep halving.
  while (max_outlet_reldiff(res.params, res.step.n_substeps, nominal, opt.probe_steps) > 1e-6) {
    res.step.n_substeps *= 2;
    if (res.step.n_substeps > (1 << 20)) {
      throw InvalidConfig("calibrate: self-convergence not reached at 2^20 substeps");
    }
  }
  return res;
}

std::size_t ExperimentMatrix::sweep_size() const {
  switch (sweep) {
    case Sweep::kHorizon: return horizons.size();
    case Sweep::kWeights: return weight_pairs.size();
    case Sweep::kProcessNoise: return process_stds.size();
    case Sweep::kMeasurementNoise: return meas_noise.size();
  }
  return 0;
}

Scenario ExperimentMatrix::at(std::size_t idx) const {
  Scenario sc = base;
  switch (sweep) {
    case Sweep::kHorizon:
      sc.horizon = horizons[idx];
      break;
    case Sweep::kWeights:
      sc.W_s = weight_pairs[idx].first;
      sc.W_d = weight_pairs[idx].second;
      break;
    case Sweep::kProcessNoise:
      sc.noise.process_std = process_stds[idx];
      break;
    case Sweep::kMeasurementNoise:
      sc.noise.meas_alpha = meas_noise[idx].first;
      sc.noise.meas_std = meas_noise[idx].second;
      break;
  }
  return sc;
}

std::string ExperimentMatrix::label(std::size_t idx) const {
  std::ostringstream os;
  switch (sweep) {
    case Sweep::kHorizon:
      os << "N=" << horizons[idx];
      break;
    case Sweep::kWeights:
      os << "Ws=" << weight_pairs[idx].first << ";Wd=" << weight_pairs[idx].second;
      break;
    case Sweep::kProcessNoise:
      os << "proc_std=" << process_stds[idx];
      break;
    case Sweep::kMeasurementNoise:
      os << "alpha=" << meas_noise[idx].first << ";meas_std=" << meas_noise[idx].second;
      break;
  }
  return os.str();
}

ExperimentMatrix load_experiment(const std::string& path) {
  const json j = parse_json_file(path);
  reject_unknown_keys(j, {"scenario_file", "sweep", "workers"}, "experiment");
  ExperimentMatrix m;
  m.base = load_scenario(resolve_relative(path, j.at("scenario_file").get<std::string>()));
  m.workers = j.value("workers", 0);
  const json& sw = j.at("sweep");
  reject_unknown_keys(sw, {"type", "values"}, "sweep");
  const std::string type = sw.at("type").get<std::string>();
  const json& vals = sw.at("values");
  if (vals.empty()) throw InvalidConfig("sweep.values must not be empty");
  if (type == "horizon") {
    m.sweep = ExperimentMatrix::Sweep::kHorizon;
    for (const auto& v : vals) m.horizons.push_back(v.get<int>());
  } else if (type == "weights") {
    m.sweep = ExperimentMatrix::Sweep::kWeights;
    for (const auto& v : vals) m.weight_pairs.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
  } else if (type == "process-noise") {
    m.sweep = ExperimentMatrix::Sweep::kProcessNoise;
    for (const auto& v : vals) m.process_stds.push_back(v.get<double>());
  } else if (type == "measurement-noise") {
    m.sweep = ExperimentMatrix::Sweep::kMeasurementNoise;
    for (const auto& v : vals) m.meas_noise.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
  } else {
    throw InvalidConfig("sweep.type: unknown sweep '" + type + "'");
  }
  return m;
}

namespace {

CellResult run_cell(const ExperimentMatrix& matrix, std::size_t sweep_idx, std::uint64_t seed) {
  CellResult cell;
  cell.sweep_label = matrix.label(sweep_idx);
  cell.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    Scenario sc = matrix.at(sweep_idx);
    cell.W_s = sc.W_s;
    cell.W_d = sc.W_d;
    ControllerBundle bundle = make_controller(sc, seed);
    ClosedLoopScenario loop;
    loop.params = sc.params;
    loop.step = sc.step;
    loop.nominal = sc.nominal;
    loop.noise = sc.noise;
    loop.noise.seed = seed;
    loop.steps = sc.steps;
    RunResult run = run_closed_loop(*bundle.controller, loop);
    if (!run.ok) {
      cell.ok = false;
      cell.error = run.diagnostic;
    }
    cell.metrics = compute_metrics(run.traj, sc.W_s, sc.W_d);
    for (double s : run.traj.solve_seconds) cell.solve_seconds_total += s;
  } catch (const std::exception& e) {
    cell.ok = false;
    cell.error = e.what();
  }
  cell.run_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return cell;
}

}  // namespace

std::vector<CellResult> run_experiment(const ExperimentMatrix& matrix) {
  struct Job {
    std::size_t sweep_idx;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < matrix.sweep_size(); ++i) {
    for (std::uint64_t seed : matrix.base.seeds) jobs.push_back({i, seed});
  }
  std::vector<CellResult> cells(jobs.size());
  const unsigned workers =
      matrix.workers > 0 ? matrix.workers : std::max(1u, std::thread::hardware_concurrency());
  std::size_t next = 0;
  while (next < jobs.size()) {
    const std::size_t batch = std::min<std::size_t>(workers, jobs.size() - next);
    std::vector<std::future<CellResult>> futs;
    for (std::size_t b = 0; b < batch; ++b) {
      futs.push_back(std::async(std::launch::async, [&, idx = next + b] {
        return run_cell(matrix, jobs[idx].sweep_idx, jobs[idx].seed);
      }));
    }
    for (std::size_t b = 0; b < batch; ++b) cells[next + b] = futs[b].get();
    next += batch;
  }
  return cells;
}

namespace {

std::string join_steps(const std::vector<int>& steps) {
  std::ostringstream os;
  for (std::size_t i = 0; i < steps.size(); ++i) os << (i ? ";" : "") << steps[i];
  return os.str();
}

}  // namespace

void write_experiment_csv(const std::string& rows_path, const std::string& averages_path,
                          const ExperimentMatrix& matrix, const std::vector<CellResult>& cells) {
  std::ofstream rows(rows_path);
  if (!rows) throw InvalidConfig("cannot write experiment CSV: " + rows_path);
  rows << "scenario_id,seed,W_s,W_d,PL,TC,switches,switch_steps,solve_seconds,run_seconds,ok,"
          "error\n";
  rows << std::setprecision(17);
  for (const auto& c : cells) {
    rows << c.sweep_label << "," << c.seed << "," << c.W_s << "," << c.W_d << "," << c.metrics.PL
         << "," << c.metrics.TC << "," << c.metrics.switches << ","
         << join_steps(c.metrics.switch_steps) << "," << c.solve_seconds_total << ","
         << c.run_seconds << "," << (c.ok ? 1 : 0) << "," << c.error << "\n";
  }

  std::ofstream avg(averages_path);
  if (!avg) throw InvalidConfig("cannot write averages CSV: " + averages_path);
  avg << "scenario_id,n,PL_avg,TC_avg,switches_avg,solve_seconds_avg\n";
  avg << std::setprecision(17);
  for (std::size_t i = 0; i < matrix.sweep_size(); ++i) {
    const std::string label = matrix.label(i);
    double pl = 0, tc = 0, sw = 0, st = 0;
    int n = 0;
    for (const auto& c : cells) {
      if (c.sweep_label == label && c.ok) {
        pl += c.metrics.PL;
        tc += c.metrics.TC;
        sw += c.metrics.switches;
        st += c.solve_seconds_total;
        ++n;
      }
    }
    if (n > 0) {
      avg << label << "," << n << "," << pl / n << "," << tc / n << "," << sw / n << ","
          << st / n << "\n";
    } else {
      avg << label << ",0,,,,\n";
    }
  }
}

std::vector<CellResult> read_experiment_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open experiment CSV: " + path);
  std::vector<CellResult> cells;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    CellResult c;
    std::string cell;
    std::getline(ls, c.sweep_label, ',');
    std::getline(ls, cell, ',');
    c.seed = std::stoull(cell);
    std::getline(ls, cell, ',');
    c.W_s = std::stod(cell);
    std::getline(ls, cell, ',');
    c.W_d = std::stod(cell);
    std::getline(ls, cell, ',');
    c.metrics.PL = std::stod(cell);
    std::getline(ls, cell, ',');
    c.metrics.TC = std::stod(cell);
    std::getline(ls, cell, ',');
    c.metrics.switches = std::stoi(cell);
    std::getline(ls, cell, ',');
    if (!cell.empty()) {
      std::istringstream ss(cell);
      std::string tok;
      while (std::getline(ss, tok, ';')) c.metrics.switch_steps.push_back(std::stoi(tok));
    }
    std::getline(ls, cell, ',');
    c.solve_seconds_total = std::stod(cell);
    std::getline(ls, cell, ',');
    c.run_seconds = std::stod(cell);
    std::getline(ls, cell, ',');
    c.ok = cell == "1";
    std::getline(ls, c.error, ',');
    cells.push_back(std::move(c));
  }
  return cells;
}

void compare_report(const std::vector<std::string>& result_csvs, const std::string& out_text,
                    const std::string& out_csv) {
  std::ofstream txt(out_text);
  std::ofstream csv(out_csv);
  if (!txt || !csv) throw InvalidConfig("compare_report: cannot write outputs");
  csv << "source,scenario_id,seed,PL,TC,switches,solve_seconds,tc_identity_ok\n";
  csv << std::setprecision(12);

  txt << "capsim comparison report\n";
  txt << "========================\n\n";

  struct TableTiming {
    std::string path;
    double mean_solve = 0.0;
  };
  std::vector<TableTiming> timings;

  for (const auto& path : result_csvs) {
    txt << "## " << path << "\n";
    if (!fs::exists(path)) {
      txt << "[missing input: " << path << "]\n\n";
      continue;
    }
    const auto cells = read_experiment_csv(path);
    if (cells.empty()) {
      txt << "[empty table]\n\n";
      continue;
    }
    txt << std::left << std::setw(28) << "scenario" << std::setw(8) << "seed" << std::setw(14)
        << "PL" << std::setw(14) << "TC" << std::setw(10) << "switches" << std::setw(14)
        << "solve_s" << std::setw(12) << "TC_ident" << "steps\n";
    double solve_sum = 0.0;
    int solve_n = 0;
    for (const auto& c : cells) {
      const double tc_expected = c.W_s * c.metrics.PL + c.W_d * c.metrics.switches;
      const bool ident = std::abs(tc_expected - c.metrics.TC) <= 1e-9 * std::max(1.0, tc_expected);
      txt << std::left << std::setw(28) << c.sweep_label << std::setw(8) << c.seed
          << std::setw(14) << c.metrics.PL << std::setw(14) << c.metrics.TC << std::setw(10)
          << c.metrics.switches << std::setw(14) << c.solve_seconds_total << std::setw(12)
          << (ident ? "pass" : "FAIL") << join_steps(c.metrics.switch_steps)
          << (c.ok ? "" : "  [FAILED: " + c.error + "]") << "\n";
      csv << path << "," << c.sweep_label << "," << c.seed << "," << c.metrics.PL << ","
          << c.metrics.TC << "," << c.metrics.switches << "," << c.solve_seconds_total << ","
          << (ident ? 1 : 0) << "\n";
      solve_sum += c.solve_seconds_total;
      ++solve_n;
    }
    timings.push_back({path, solve_sum / std::max(1, solve_n)});
    txt << "\n";
  }

  if (timings.size() > 1) {
    std::sort(timings.begin(), timings.end(),
              [](const TableTiming& a, const TableTiming& b) { return a.mean_solve > b.mean_solve; });
    txt << "Solve-time ordering (slowest first):\n";
    for (const auto& t : timings) {
      txt << "  " << t.path << "  mean_solve_s=" << t.mean_solve << "\n";
    }
    txt << "Wall-clock values are hardware specific; only the ordering is meaningful.\n";
  }
}

}  // namespace capsim
