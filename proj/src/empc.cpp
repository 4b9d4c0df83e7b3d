#include "capsim/empc.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <sstream>
#include <thread>

namespace capsim {

double sigmoid(double r, double beta) { return 1.0 / (1.0 + std::exp(-beta * r)); }

GrmPredictionModel::GrmPredictionModel(const ColumnParams& p, const StepConfig& cfg,
                                       ColumnState current, ContinuousInput u)
    : integ_(p, cfg), current_(std::move(current)), u_(u) {}

PredictionModel::State GrmPredictionModel::reset_state() const {
  return zero_state(integ_.params());
}

double GrmPredictionModel::advance(State& s) const {
  s = integ_.step(s, u_).state;
  return outlet_concentration(integ_.params(), s);
}

namespace {

// Branch-and-bound worker. Stage costs are nonnegative, so any partial sum
// at or above the incumbent prunes. Post-reset subtrees depend only on the
// number of stages left and are solved once.
class BnbSolver {
 public:
  BnbSolver(const PredictionModel& model, const EmpcWeights& w, const ExactSolverOptions& opt)
      : model_(model), w_(w), opt_(opt), zero_tail_(static_cast<std::size_t>(w.N) + 1) {}

  ExactSolveResult run() {
    best_cost_ = std::numeric_limits<double>::infinity();
    best_seq_.assign(w_.N, 0);
    path_.assign(w_.N, 0);
    nodes_ = 0;
    PredictionModel::State s = model_.initial_state();
    dfs(0, 0.0, s);
    ExactSolveResult res;
    res.sequence = best_seq_;
    res.cost = best_cost_;
    res.nodes_expanded = nodes_;
    return res;
  }

 private:
  struct Tail {
    bool solved = false;
    double cost = 0.0;
    std::vector<int> seq;
  };

  void bump_nodes() {
    if (++nodes_ > opt_.node_budget) {
      std::ostringstream os;
      os << "solve_exact: node budget " << opt_.node_budget << " exceeded at N=" << w_.N;
      throw BudgetExceeded(os.str());
    }
  }

  // Optimal continuation from the fresh (zero) state with m stages left.
  const Tail& zero_tail(int m) {
    Tail& t = zero_tail_[m];
    if (t.solved) return t;
    if (m == 0) {
      t.solved = true;
      return t;
    }
    // Solve the m-stage subproblem from the reset state with its own
    // incumbent; memoized results must be unconditionally optimal.
    BnbSolver sub(model_, EmpcWeights{w_.W_s, w_.W_d, m}, opt_);
    sub.nodes_ = 0;
    sub.best_cost_ = std::numeric_limits<double>::infinity();
    sub.best_seq_.assign(m, 0);
    sub.path_.assign(m, 0);
    PredictionModel::State s = model_.reset_state();
    sub.dfs(0, 0.0, s);
    nodes_ += sub.nodes_;
    if (nodes_ > opt_.node_budget) {
      std::ostringstream os;
      os << "solve_exact: node budget " << opt_.node_budget << " exceeded at N=" << w_.N;
      throw BudgetExceeded(os.str());
    }
    t.solved = true;
    t.cost = sub.best_cost_;
    t.seq = sub.best_seq_;
    return t;
  }

  void offer(double cost, const std::vector<int>& seq) {
    if (cost < best_cost_ || (cost == best_cost_ && seq < best_seq_)) {
      best_cost_ = cost;
      best_seq_ = seq;
    }
  }

  void dfs(int stage, double partial, PredictionModel::State& s) {
    if (stage == w_.N) {
      offer(partial, path_);
      return;
    }
    bump_nodes();

    // Switch branch first: its tail is memoized and gives an incumbent fast.
    {
      const double cost_here = partial + stage_cost(0.0, 1, w_);
      if (cost_here < best_cost_ || (cost_here == best_cost_)) {
        const Tail& t = zero_tail(w_.N - stage - 1);
        const double total = cost_here + t.cost;
        if (total <= best_cost_) {
          std::vector<int> seq = path_;
          seq[stage] = 1;
          std::copy(t.seq.begin(), t.seq.end(), seq.begin() + stage + 1);
          offer(total, seq);
        }
      }
    }

    // No-switch branch.
    {
      PredictionModel::State next = s;
      const double x_out = model_.advance(next);
      const double cost_here = partial + stage_cost(x_out, 0, w_);
      if (cost_here <= best_cost_) {
        path_[stage] = 0;
        dfs(stage + 1, cost_here, next);
      }
    }
    path_[stage] = 0;
  }

  const PredictionModel& model_;
  EmpcWeights w_;
  ExactSolverOptions opt_;
  std::vector<Tail> zero_tail_;
  double best_cost_ = 0.0;
  std::vector<int> best_seq_;
  std::vector<int> path_;
  std::uint64_t nodes_ = 0;
};

}  // namespace

ExactSolveResult solve_exact(const PredictionModel& model, const EmpcWeights& w,
                             const ExactSolverOptions& opt) {
  w.validate();
  BnbSolver solver(model, w, opt);
  return solver.run();
}

double sequence_cost(const PredictionModel& model, const EmpcWeights& w,
                     const std::vector<int>& seq) {
  PredictionModel::State s = model.initial_state();
  double cost = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] == 1) {
      s = model.reset_state();
      cost += stage_cost(0.0, 1, w);
    } else {
      const double x_out = model.advance(s);
      cost += stage_cost(x_out, 0, w);
    }
  }
  return cost;
}

namespace {

// Relaxed objective: dynamics scaled by (1 - sigma(r_i)) each stage, cost
// summed over the scaled stage outlets plus W_d * sigma(r_i).
double relaxed_cost_from(const PredictionModel& model, const EmpcWeights& w,
                         const SigmoidConfig& cfg, const std::vector<double>& r, int from_stage,
                         PredictionModel::State s, double partial) {
  double cost = partial;
  for (int i = from_stage; i < w.N; ++i) {
    const double sig = sigmoid(r[i], cfg.beta);
    const double x_out = model.advance(s);
    for (double& v : s) v *= (1.0 - sig);
    cost += w.W_s * x_out * (1.0 - sig) + w.W_d * sig;
  }
  return cost;
}

struct StartResult {
  std::vector<double> r;
  double cost = std::numeric_limits<double>::infinity();
  bool converged = false;
};

// Projected quasi-Newton descent on the box, with a diagonal curvature
// estimate (BFGS on a box this small buys little over a well-scaled
// projected gradient). Gradients use central differences with prefix-cached
// rollouts: perturbing r_i only changes stages >= i.
StartResult descend(const PredictionModel& model, const EmpcWeights& w, const SigmoidConfig& cfg,
                    std::vector<double> r) {
  const int N = w.N;
  StartResult out;

  // Prefix states of the nominal rollout: prefix[i] = state before stage i,
  // partial[i] = accumulated cost before stage i.
  std::vector<PredictionModel::State> prefix(N + 1);
  std::vector<double> partial(N + 1, 0.0);

  auto evaluate = [&](const std::vector<double>& rv) {
    prefix[0] = model.initial_state();
    partial[0] = 0.0;
    for (int i = 0; i < N; ++i) {
      const double sig = sigmoid(rv[i], cfg.beta);
      PredictionModel::State s = prefix[i];
      const double x_out = model.advance(s);
      for (double& v : s) v *= (1.0 - sig);
      prefix[i + 1] = std::move(s);
      partial[i + 1] = partial[i] + w.W_s * x_out * (1.0 - sig) + w.W_d * sig;
    }
    return partial[N];
  };

  double f = evaluate(r);
  std::vector<double> grad(N), trial(N);
  double step = 1.0;

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    // Central differences, re-simulating only the suffix that changes.
    for (int i = 0; i < N; ++i) {
      const double h = cfg.fd_step;
      double rp = std::min(r[i] + h, cfg.r_max);
      double rm = std::max(r[i] - h, cfg.r_min);
      std::vector<double> rv = r;
      rv[i] = rp;
      const double fp = relaxed_cost_from(model, w, cfg, rv, i, prefix[i], partial[i]);
      rv[i] = rm;
      const double fm = relaxed_cost_from(model, w, cfg, rv, i, prefix[i], partial[i]);
      grad[i] = (fp - fm) / (rp - rm);
    }

    // Projected-gradient stationarity check.
    double pg_norm = 0.0;
    for (int i = 0; i < N; ++i) {
      double gi = grad[i];
      if (r[i] <= cfg.r_min && gi > 0.0) gi = 0.0;
      if (r[i] >= cfg.r_max && gi < 0.0) gi = 0.0;
      pg_norm = std::max(pg_norm, std::abs(gi));
    }
    if (pg_norm < cfg.tolerance) {
      out.converged = true;
      break;
    }

    // Backtracking line search along the projected gradient direction.
    bool improved = false;
    for (int ls = 0; ls < 25; ++ls) {
      for (int i = 0; i < N; ++i) {
        trial[i] = std::clamp(r[i] - step * grad[i], cfg.r_min, cfg.r_max);
      }
      const double ft = relaxed_cost_from(model, w, cfg, trial, 0, model.initial_state(), 0.0);
      if (ft < f - 1e-12) {
        r = trial;
        f = evaluate(r);
        step = std::min(step * 2.0, 1e3);
        improved = true;
        break;
      }
      step *= 0.5;
    }
    if (!improved) {
      out.converged = pg_norm < 1e2 * cfg.tolerance;
      break;
    }
  }

  out.r = r;
  out.cost = f;
  return out;
}

}  // namespace

SigmoidSolveResult solve_sigmoid(const PredictionModel& model, const EmpcWeights& w,
                                 const SigmoidConfig& cfg) {
  w.validate();
  cfg.validate();
  const int N = w.N;

  // Starts: the two box corners plus Latin-hypercube interior points.
  std::vector<std::vector<double>> starts;
  starts.push_back(std::vector<double>(N, cfg.r_max));
  starts.push_back(std::vector<double>(N, cfg.r_min));
  const int lhs_count = std::max(0, cfg.multistart - 2);
  Rng rng(cfg.seed);
  for (int s = 0; s < lhs_count; ++s) {
    std::vector<double> r(N);
    for (int i = 0; i < N; ++i) {
      // Stratified sample: stratum s of lhs_count, jittered.
      const double u = (s + rng.uniform()) / lhs_count;
      r[i] = cfg.r_min + (cfg.r_max - cfg.r_min) * u;
    }
    // Shuffle strata across coordinates.
    for (int i = N - 1; i > 0; --i) std::swap(r[i], r[rng.below(i + 1)]);
    starts.push_back(std::move(r));
  }

  unsigned workers = cfg.workers > 0 ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  std::vector<StartResult> results(starts.size());
  std::size_t next = 0;
  while (next < starts.size()) {
    const std::size_t batch = std::min<std::size_t>(workers, starts.size() - next);
    std::vector<std::future<StartResult>> futs;
    for (std::size_t b = 0; b < batch; ++b) {
      futs.push_back(std::async(std::launch::async, [&, idx = next + b] {
        return descend(model, w, cfg, starts[idx]);
      }));
    }
    for (std::size_t b = 0; b < batch; ++b) results[next + b] = futs[b].get();
    next += batch;
  }

  // Deterministic reduction: order-independent min with lexicographic
  // tie-break on the binarized sequence.
  SigmoidSolveResult out;
  out.relaxed_cost = std::numeric_limits<double>::infinity();
  std::vector<int> best_bin;
  for (const auto& res : results) {
    if (res.converged) ++out.starts_converged;
    std::vector<int> bin(N);
    for (int i = 0; i < N; ++i) bin[i] = sigmoid(res.r[i], cfg.beta) >= cfg.threshold ? 1 : 0;
    if (res.cost < out.relaxed_cost ||
        (res.cost == out.relaxed_cost && bin < best_bin)) {
      out.relaxed_cost = res.cost;
      out.r = res.r;
      best_bin = bin;
    }
  }
  out.sequence = best_bin;
  out.converged = out.starts_converged > 0;
  return out;
}

ExactEmpcController::ExactEmpcController(const ColumnParams& p, const StepConfig& cfg,
                                         ContinuousInput nominal, EmpcWeights w,
                                         ExactSolverOptions opt)
    : params_(p), step_(cfg), nominal_(nominal), w_(w), opt_(opt) {
  w_.validate();
}

int ExactEmpcController::decide(double, const Trajectory& history, const ColumnState& state) {
  ContinuousInput u = nominal_;
  if (!history.c_F_applied.empty()) {
    u.c_F = history.c_F_applied.back();
    u.Q = history.Q_applied.back();
  }
  GrmPredictionModel model(params_, step_, state, u);
  ExactSolveResult res = solve_exact(model, w_, opt_);
  std::ostringstream os;
  os << "empc-exact: nodes=" << res.nodes_expanded << " cost=" << res.cost;
  diag_ = os.str();
  return res.sequence.front();
}

SigmoidEmpcController::SigmoidEmpcController(const ColumnParams& p, const StepConfig& cfg,
                                             ContinuousInput nominal, EmpcWeights w,
                                             SigmoidConfig cfg_sig)
    : params_(p), step_(cfg), nominal_(nominal), w_(w), sig_(cfg_sig) {
  w_.validate();
  sig_.validate();
}

int SigmoidEmpcController::decide(double, const Trajectory& history, const ColumnState& state) {
  ContinuousInput u = nominal_;
  if (!history.c_F_applied.empty()) {
    u.c_F = history.c_F_applied.back();
    u.Q = history.Q_applied.back();
  }
  GrmPredictionModel model(params_, step_, state, u);
  SigmoidSolveResult res = solve_sigmoid(model, w_, sig_);
  std::ostringstream os;
  os << "empc-sigmoid: starts_converged=" << res.starts_converged
     << " relaxed_cost=" << res.relaxed_cost << (res.converged ? "" : " NON-CONVERGED");
  diag_ = os.str();
  return res.sequence.front();
}

}  // namespace capsim
