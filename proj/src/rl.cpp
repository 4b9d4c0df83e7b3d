#include "capsim/rl.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace capsim {

namespace {

// Forward pass caching every layer input for backprop.
struct MlpTrace {
  std::vector<Eigen::VectorXd> inputs;  ///< input of each layer
  double out = 0.0;
};

MlpTrace mlp_forward(const Mlp& net, const Eigen::VectorXd& obs) {
  MlpTrace tr;
  Eigen::VectorXd z = obs;
  for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
    tr.inputs.push_back(z);
    z = (net.layers[l].W * z + net.layers[l].b).array().tanh().matrix();
  }
  tr.inputs.push_back(z);
  tr.out = (net.layers.back().W * z + net.layers.back().b)(0);
  return tr;
}

struct MlpGrads {
  std::vector<Eigen::MatrixXd> gW;
  std::vector<Eigen::VectorXd> gb;

  void init_like(const Mlp& net) {
    gW.clear();
    gb.clear();
    for (const auto& l : net.layers) {
      gW.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
      gb.push_back(Eigen::VectorXd::Zero(l.b.size()));
    }
  }
};

// Accumulates dLoss/dparams for a scalar-output MLP given dLoss/dout.
void mlp_backward(const Mlp& net, const MlpTrace& tr, double dout, MlpGrads& g) {
  const int L = static_cast<int>(net.layers.size());
  Eigen::VectorXd delta(1);
  delta(0) = dout;
  for (int l = L - 1; l >= 0; --l) {
    g.gW[l] += delta * tr.inputs[l].transpose();
    g.gb[l] += delta;
    if (l > 0) {
      Eigen::VectorXd back = net.layers[l].W.transpose() * delta;
      // Input of layer l is tanh of layer l-1 pre-activation.
      delta = back.cwiseProduct(
          (1.0 - tr.inputs[l].array().square()).matrix());
    }
  }
}

struct AdamM {
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;
  int t = 0;

  void init_like(const Mlp& net) {
    mW.clear();
    vW.clear();
    mb.clear();
    vb.clear();
    for (const auto& l : net.layers) {
      mW.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
      vW.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
      mb.push_back(Eigen::VectorXd::Zero(l.b.size()));
      vb.push_back(Eigen::VectorXd::Zero(l.b.size()));
    }
  }

  void step(Mlp& net, const MlpGrads& g, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    const double c1 = 1.0 / (1.0 - std::pow(b1, t));
    const double c2 = 1.0 / (1.0 - std::pow(b2, t));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      mW[l] = b1 * mW[l] + (1 - b1) * g.gW[l];
      vW[l] = b2 * vW[l] + (1 - b2) * g.gW[l].cwiseProduct(g.gW[l]);
      mb[l] = b1 * mb[l] + (1 - b1) * g.gb[l];
      vb[l] = b2 * vb[l] + (1 - b2) * g.gb[l].cwiseProduct(g.gb[l]);
      net.layers[l].W -=
          lr * (c1 * mW[l].array() / ((c2 * vW[l].array()).sqrt() + eps)).matrix();
      net.layers[l].b -=
          lr * (c1 * mb[l].array() / ((c2 * vb[l].array()).sqrt() + eps)).matrix();
    }
  }
};

Mlp make_mlp(int in_dim, const std::vector<int>& hidden, Rng& rng) {
  Mlp net;
  std::vector<int> dims = {in_dim};
  for (int h : hidden) dims.push_back(h);
  dims.push_back(1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Mlp::Layer lay;
    lay.W.resize(dims[l + 1], dims[l]);
    const double scale = std::sqrt(1.0 / dims[l]);
    for (int r = 0; r < lay.W.rows(); ++r)
      for (int c = 0; c < lay.W.cols(); ++c) lay.W(r, c) = scale * rng.normal();
    lay.b = Eigen::VectorXd::Zero(dims[l + 1]);
    net.layers.push_back(std::move(lay));
  }
  return net;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

double Mlp::forward(const Eigen::VectorXd& obs) const { return mlp_forward(*this, obs).out; }

double Policy::action_probability(const Eigen::VectorXd& obs) const {
  return logistic(actor.forward(obs));
}

double Policy::value(const Eigen::VectorXd& obs) const { return critic.forward(obs); }

int act(const Policy& policy, const Eigen::VectorXd& obs, bool deterministic, Rng* rng) {
  const double p = policy.action_probability(obs);
  if (deterministic) return p >= 0.5 ? 1 : 0;
  if (!rng) throw InvalidConfig("act: stochastic mode needs an RNG");
  return rng->uniform() < p ? 1 : 0;
}

Eigen::VectorXd make_observation(const Policy& norms, const ColumnParams& p,
                                 const ColumnState& state, const std::vector<double>& outlet_hist) {
  if (norms.observation == EnvConfig::Observation::kOutletHistory) {
    Eigen::VectorXd obs(norms.outlet_history_len);
    obs.setZero();
    const int n = static_cast<int>(outlet_hist.size());
    for (int i = 0; i < std::min(n, norms.outlet_history_len); ++i) {
      obs(i) = outlet_hist[n - 1 - i] / norms.c_F_norm;
    }
    return obs;
  }
  Eigen::VectorXd obs(p.state_size());
  const int spn = p.states_per_node();
  for (int i = 0; i < p.N_z; ++i) {
    const double* xi = state.data() + static_cast<std::size_t>(i) * spn;
    double* oi = obs.data() + static_cast<std::size_t>(i) * spn;
    oi[0] = xi[0] / norms.c_F_norm;
    for (int j = 0; j < p.N_r; ++j) oi[1 + j] = xi[1 + j] / norms.c_F_norm;
    oi[1 + p.N_r] = xi[1 + p.N_r] / norms.q1_norm;
    oi[2 + p.N_r] = xi[2 + p.N_r] / norms.q2_norm;
  }
  return obs;
}

CaptureEnv::CaptureEnv(const ColumnParams& p, const StepConfig& step,
                       const ContinuousInput& nominal, const EnvConfig& cfg, std::uint64_t seed)
    : params_(p), cfg_(cfg), nominal_(nominal), integ_(p, step), rng_(seed) {
  cfg_.validate();
}

int CaptureEnv::obs_dim() const {
  return cfg_.observation == EnvConfig::Observation::kFullState ? params_.state_size()
                                                                : cfg_.outlet_history_len;
}

Eigen::VectorXd CaptureEnv::observe() const {
  Policy norms;
  norms.observation = cfg_.observation;
  norms.outlet_history_len = cfg_.outlet_history_len;
  norms.c_F_norm = nominal_.c_F;
  norms.q1_norm = params_.q_max_1;
  norms.q2_norm = params_.q_max_2;
  return make_observation(norms, params_, state_, outlet_history_);
}

Eigen::VectorXd CaptureEnv::reset() {
  state_ = zero_state(params_);
  outlet_history_.clear();
  t_ = 0;
  done_ = false;
  return observe();
}

CaptureEnv::StepOutcome CaptureEnv::step(int action) {
  if (done_) throw InvalidConfig("CaptureEnv::step called on a finished episode");
  if (action != 0 && action != 1) throw InvalidConfig("CaptureEnv::step: action must be 0 or 1");
  double x_out;
  if (action == 1) {
    state_ = zero_state(params_);
    x_out = 0.0;
  } else {
    const ContinuousInput u = perturb_inputs(nominal_, cfg_.noise, rng_);
    state_ = integ_.step(state_, u).state;
    x_out = outlet_concentration(params_, state_);
  }
  outlet_history_.push_back(x_out);
  ++t_;
  StepOutcome out;
  out.reward = -(cfg_.W_s * x_out + cfg_.W_d * action);
  out.done = t_ >= cfg_.steps_per_episode;
  done_ = out.done;
  out.observation = observe();
  return out;
}

PpoResult train_ppo(const ColumnParams& p, const StepConfig& step, const ContinuousInput& nominal,
                    const EnvConfig& env_cfg, const AgentConfig& agent_cfg, std::uint64_t seed,
                    const std::string& log_csv) {
  env_cfg.validate();
  agent_cfg.validate();

  CaptureEnv env(p, step, nominal, env_cfg, derive_seed(seed, 1));
  Rng rng(derive_seed(seed, 2));

  PpoResult res;
  res.policy.observation = env_cfg.observation;
  res.policy.outlet_history_len = env_cfg.outlet_history_len;
  res.policy.c_F_norm = nominal.c_F;
  res.policy.q1_norm = p.q_max_1;
  res.policy.q2_norm = p.q_max_2;
  res.policy.actor = make_mlp(env.obs_dim(), agent_cfg.hidden, rng);
  res.policy.critic = make_mlp(env.obs_dim(), agent_cfg.hidden, rng);

  AdamM actor_adam, critic_adam;
  actor_adam.init_like(res.policy.actor);
  critic_adam.init_like(res.policy.critic);

  std::ofstream log;
  if (!log_csv.empty()) {
    log.open(log_csv);
    log << "batch,mean_return,policy_loss,value_loss,entropy\n";
  }

  struct Sample {
    Eigen::VectorXd obs;
    int action = 0;
    double logp_old = 0.0;
    double advantage = 0.0;
    double target_value = 0.0;
  };

  const int n_batches = (agent_cfg.episodes + agent_cfg.batch_episodes - 1) /
                        agent_cfg.batch_episodes;
  for (int batch = 0; batch < n_batches; ++batch) {
    std::vector<Sample> samples;
    double return_sum = 0.0;
    int episodes_this_batch = std::min(agent_cfg.batch_episodes,
                                       agent_cfg.episodes - batch * agent_cfg.batch_episodes);
    for (int ep = 0; ep < episodes_this_batch; ++ep) {
      Eigen::VectorXd obs = env.reset();
      std::vector<Sample> ep_samples;
      std::vector<double> rewards, values;
      bool done = false;
      while (!done) {
        const double prob = res.policy.action_probability(obs);
        const int a = rng.uniform() < prob ? 1 : 0;
        const double logp = a == 1 ? std::log(std::max(prob, 1e-12))
                                   : std::log(std::max(1.0 - prob, 1e-12));
        values.push_back(res.policy.value(obs));
        auto out = env.step(a);
        Sample s;
        s.obs = obs;
        s.action = a;
        s.logp_old = logp;
        ep_samples.push_back(std::move(s));
        rewards.push_back(out.reward);
        return_sum += out.reward;
        obs = out.observation;
        done = out.done;
      }
      // GAE within the episode; terminal value 0 (episode truncates the task).
      const int T = static_cast<int>(rewards.size());
      double gae = 0.0;
      for (int t = T - 1; t >= 0; --t) {
        const double v_next = t + 1 < T ? values[t + 1] : 0.0;
        const double delta = rewards[t] + agent_cfg.gamma * v_next - values[t];
        gae = delta + agent_cfg.gamma * agent_cfg.gae_lambda * gae;
        ep_samples[t].advantage = gae;
        ep_samples[t].target_value = gae + values[t];
      }
      for (auto& s : ep_samples) samples.push_back(std::move(s));
    }

    // Advantage normalization over the batch.
    double mean = 0.0, var = 0.0;
    for (const auto& s : samples) mean += s.advantage;
    mean /= static_cast<double>(samples.size());
    for (const auto& s : samples) var += (s.advantage - mean) * (s.advantage - mean);
    var /= static_cast<double>(samples.size());
    const double astd = std::sqrt(std::max(var, 1e-12));
    for (auto& s : samples) s.advantage = (s.advantage - mean) / astd;

    double policy_loss = 0.0, value_loss = 0.0, entropy = 0.0;
    for (int epoch = 0; epoch < agent_cfg.update_epochs; ++epoch) {
      MlpGrads ga, gc;
      ga.init_like(res.policy.actor);
      gc.init_like(res.policy.critic);
      policy_loss = value_loss = entropy = 0.0;
      const double inv_n = 1.0 / static_cast<double>(samples.size());
      for (const auto& s : samples) {
        MlpTrace ta = mlp_forward(res.policy.actor, s.obs);
        const double prob = logistic(ta.out);
        const double logp = s.action == 1 ? std::log(std::max(prob, 1e-12))
                                          : std::log(std::max(1.0 - prob, 1e-12));
        const double ratio = std::exp(logp - s.logp_old);
        const double clipped = std::clamp(ratio, 1.0 - agent_cfg.clip_ratio,
                                          1.0 + agent_cfg.clip_ratio);
        const double obj = std::min(ratio * s.advantage, clipped * s.advantage);
        policy_loss -= obj * inv_n;
        const double ent = -(prob * std::log(std::max(prob, 1e-12)) +
                             (1 - prob) * std::log(std::max(1.0 - prob, 1e-12)));
        entropy += ent * inv_n;

        // d(-obj)/dlogit. The clipped branch has zero gradient unless the
        // unclipped term is active.
        double dlogp = 0.0;
        const bool unclipped_active = ratio * s.advantage <= clipped * s.advantage;
        if (unclipped_active) dlogp = -s.advantage * ratio;
        // dlogp/dlogit: a=1 -> (1-p); a=0 -> -p.
        const double dlogit_logp = s.action == 1 ? (1.0 - prob) : -prob;
        // dent/dlogit = -logit' ... entropy bonus: d(-c*ent)/dlogit.
        const double dent_dlogit = (std::log(std::max(1.0 - prob, 1e-12)) -
                                    std::log(std::max(prob, 1e-12))) *
                                   prob * (1.0 - prob);
        const double dloss_dlogit =
            dlogp * dlogit_logp * inv_n - agent_cfg.entropy_coef * dent_dlogit * inv_n;
        mlp_backward(res.policy.actor, ta, dloss_dlogit, ga);

        MlpTrace tc = mlp_forward(res.policy.critic, s.obs);
        const double verr = tc.out - s.target_value;
        value_loss += verr * verr * inv_n;
        mlp_backward(res.policy.critic, tc, agent_cfg.value_coef * 2.0 * verr * inv_n, gc);
      }
      if (!std::isfinite(policy_loss) || !std::isfinite(value_loss)) {
        std::ostringstream os;
        os << "train_ppo: non-finite loss at batch " << batch << " epoch " << epoch
           << " (policy=" << policy_loss << ", value=" << value_loss << ")";
        throw SimulationError(os.str());
      }
      actor_adam.step(res.policy.actor, ga, agent_cfg.learning_rate);
      critic_adam.step(res.policy.critic, gc, agent_cfg.learning_rate);
    }

    TrainLogRow row;
    row.batch = batch;
    row.mean_return = return_sum / episodes_this_batch;
    row.policy_loss = policy_loss;
    row.value_loss = value_loss;
    row.entropy = entropy;
    res.log.push_back(row);
    if (log.is_open()) {
      log << row.batch << "," << row.mean_return << "," << row.policy_loss << ","
          << row.value_loss << "," << row.entropy << "\n";
    }
  }
  return res;
}

PolicyController::PolicyController(const Policy& policy, const ColumnParams& params,
                                   bool deterministic, std::uint64_t seed)
    : policy_(policy), params_(params), deterministic_(deterministic), rng_(seed) {}

int PolicyController::decide(double y, const Trajectory&, const ColumnState& state) {
  outlet_history_.push_back(y);
  const Eigen::VectorXd obs = make_observation(policy_, params_, state, outlet_history_);
  return act(policy_, obs, deterministic_, &rng_);
}

PolicyEvaluation evaluate_policy(const Policy& policy, const ClosedLoopScenario& scenario,
                                 double W_s, double W_d, const std::vector<std::uint64_t>& seeds) {
  PolicyEvaluation ev;
  for (std::size_t r = 0; r < seeds.size(); ++r) {
    ClosedLoopScenario sc = scenario;
    sc.noise.seed = seeds[r];
    PolicyController ctrl(policy, sc.params, true, derive_seed(seeds[r], 99));
    RunResult run = run_closed_loop(ctrl, sc);
    if (!run.ok) throw SimulationError("evaluate_policy: " + run.diagnostic);
    ev.per_replicate.push_back(compute_metrics(run.traj, W_s, W_d));
  }
  Metrics& m = ev.mean;
  for (const auto& r : ev.per_replicate) {
    m.PL += r.PL;
    m.TC += r.TC;
    m.switches += r.switches;
  }
  const double n = static_cast<double>(ev.per_replicate.size());
  m.PL /= n;
  m.TC /= n;
  m.switches = static_cast<int>(std::lround(m.switches / n));
  m.switch_steps = ev.per_replicate.front().switch_steps;
  return ev;
}

namespace {

void save_mlp(std::ofstream& out, const Mlp& net, const std::string& name) {
  out << name << " layers " << net.layers.size() << "\n";
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

Mlp load_mlp(std::ifstream& in, const std::string& expect_name) {
  std::string name, tag;
  std::size_t n_layers;
  in >> name >> tag >> n_layers;
  if (name != expect_name || tag != "layers") {
    throw InvalidConfig("policy file: expected section '" + expect_name + "'");
  }
  Mlp net;
  for (std::size_t l = 0; l < n_layers; ++l) {
    std::size_t idx;
    int rows, cols;
    in >> tag >> idx >> rows >> cols;
    if (tag != "layer" || idx != l) throw InvalidConfig("policy file: malformed layer header");
    Mlp::Layer lay;
    lay.W.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) in >> lay.W(r, c);
    lay.b.resize(rows);
    for (int r = 0; r < rows; ++r) in >> lay.b(r);
    net.layers.push_back(std::move(lay));
  }
  return net;
}

}  // namespace

void save_policy(const std::string& path, const Policy& policy) {
  std::ofstream out(path);
  if (!out) throw InvalidConfig("cannot write policy file: " + path);
  out << std::setprecision(17);
  out << "capsim-policy v1\n";
  out << "observation "
      << (policy.observation == EnvConfig::Observation::kFullState ? "full-state"
                                                                   : "outlet-history")
      << " " << policy.outlet_history_len << "\n";
  out << "norms " << policy.c_F_norm << " " << policy.q1_norm << " " << policy.q2_norm << "\n";
  save_mlp(out, policy.actor, "actor");
  save_mlp(out, policy.critic, "critic");
}

Policy load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open policy file: " + path);
  std::string line;
  std::getline(in, line);
  if (line != "capsim-policy v1") throw InvalidConfig(path + ": not a capsim-policy v1 file");
  Policy p;
  std::string tag, mode;
  in >> tag >> mode >> p.outlet_history_len;
  if (tag != "observation") throw InvalidConfig(path + ": expected 'observation'");
  p.observation = mode == "full-state" ? EnvConfig::Observation::kFullState
                                       : EnvConfig::Observation::kOutletHistory;
  in >> tag >> p.c_F_norm >> p.q1_norm >> p.q2_norm;
  if (tag != "norms") throw InvalidConfig(path + ": expected 'norms'");
  p.actor = load_mlp(in, "actor");
  p.critic = load_mlp(in, "critic");
  if (!in) throw InvalidConfig(path + ": truncated policy file");
  return p;
}

}  // namespace capsim
