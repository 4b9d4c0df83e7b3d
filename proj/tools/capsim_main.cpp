// capsim: simulation and control workbench for the twin-column capture step.
//
// Subcommands:
//   calibrate        fit default column parameters and integrator settings
//   simulate         run one closed-loop scenario
//   train-surrogate  generate the dataset and train the outlet surrogate
//   train-rl         train PPO policies and keep the best seed
//   encode-milp      export the surrogate EMPC encoding as an LP file
//   experiment       run a sweep matrix
//   report           summarize result tables

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "capsim/harness.hpp"
#include "capsim/milp.hpp"

namespace fs = std::filesystem;
using namespace capsim;

int main(int argc, char** argv) {
  CLI::App app{"twin-column capture workbench"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  std::uint64_t seed = 0;
  int workers = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "configuration file");
    cmd->add_option("--seed", seed, "base RNG seed");
    cmd->add_option("--workers", workers, "parallel workers (0 = hardware)");
    cmd->add_option("--out", out_dir, "output directory");
  };

  auto* cal = app.add_subcommand("calibrate", "fit default parameters");
  int cal_target = 19;
  cal->add_option("--target-step", cal_target, "target 1% breakthrough step");
  add_common(cal);

  auto* sim = app.add_subcommand("simulate", "run one scenario");
  add_common(sim);

  auto* ts = app.add_subcommand("train-surrogate", "dataset + surrogate training");
  std::string params_path;
  std::size_t ds_size = 50000;
  int epochs = 80;
  ts->add_option("--params", params_path, "column parameter file");
  ts->add_option("--dataset-size", ds_size, "number of rows");
  ts->add_option("--epochs", epochs, "training epochs");
  add_common(ts);

  auto* trl = app.add_subcommand("train-rl", "PPO training");
  int episodes = 2000, rl_seeds = 5;
  double rl_ws = 1.0, rl_wd = 0.5;
  trl->add_option("--params", params_path, "column parameter file");
  trl->add_option("--episodes", episodes, "episodes per seed");
  trl->add_option("--seeds", rl_seeds, "number of training seeds");
  trl->add_option("--W_s", rl_ws, "outlet weight");
  trl->add_option("--W_d", rl_wd, "switch weight");
  add_common(trl);

  auto* enc = app.add_subcommand("encode-milp", "export the LP encoding");
  std::string net_path;
  int enc_horizon = 10;
  double enc_ws = 1.0, enc_wd = 0.5;
  enc->add_option("--net", net_path, "surrogate net file")->required();
  enc->add_option("--horizon", enc_horizon, "encoded horizon");
  enc->add_option("--W_s", enc_ws, "outlet weight");
  enc->add_option("--W_d", enc_wd, "switch weight");
  add_common(enc);

  auto* exp = app.add_subcommand("experiment", "run a sweep matrix");
  add_common(exp);

  auto* rep = app.add_subcommand("report", "summarize result tables");
  std::vector<std::string> tables;
  rep->add_option("--tables", tables, "experiment rows CSV files");
  add_common(rep);

  CLI11_PARSE(app, argc, argv);
  fs::create_directories(out_dir);

  try {
    if (cal->parsed()) {
      ColumnParams seed_params;
      ContinuousInput nominal;
      if (!config_path.empty()) seed_params = load_column_params(config_path);
      CalibrateOptions opt;
      opt.target_first_breakthrough_step = cal_target;
      CalibrationResult res = calibrate(seed_params, nominal, opt);
      const std::string out = (fs::path(out_dir) / "params_default.json").string();
      save_column_config(out, res.params, res.step);
      std::cout << "calibrated: breakthrough step " << res.breakthrough_step << ", q_scale "
                << res.q_scale << ", n_substeps " << res.step.n_substeps << "\n"
                << "wrote " << out << "\n";
    } else if (sim->parsed()) {
      if (config_path.empty()) throw InvalidConfig("simulate: --config <scenario.json> required");
      Scenario sc = load_scenario(config_path);
      fs::create_directories(sc.out_dir);
      for (std::uint64_t s : sc.seeds) {
        ControllerBundle bundle = make_controller(sc, s);
        ClosedLoopScenario loop{sc.params, sc.step, sc.nominal, sc.noise, sc.steps, false};
        loop.noise.seed = s;
        RunResult run = run_closed_loop(*bundle.controller, loop);
        const Metrics m = compute_metrics(run.traj, sc.W_s, sc.W_d);
        const std::string traj_path =
            (fs::path(sc.out_dir) / ("trajectory_seed" + std::to_string(s) + ".csv")).string();
        write_trajectory_csv(traj_path, run.traj);
        std::cout << "seed " << s << ": PL=" << m.PL << " TC=" << m.TC
                  << " switches=" << m.switches;
        if (!run.ok) std::cout << "  [ABORTED: " << run.diagnostic << "]";
        std::cout << "\n";
      }
    } else if (ts->parsed()) {
      if (params_path.empty()) throw InvalidConfig("train-surrogate: --params required");
      ColumnParams p = load_column_params(params_path);
      StepConfig step = load_step_config(params_path);
      ContinuousInput nominal;
      ExcitationConfig exc;
      exc.seed = derive_seed(seed, 11);
      DatasetConfig dcfg;
      dcfg.size = ds_size;
      std::cout << "generating " << dcfg.size << " rows...\n";
      Dataset ds = generate_dataset(p, step, nominal, exc, dcfg);
      save_dataset_csv((fs::path(out_dir) / "dataset.csv").string(), ds);
      TrainConfig tcfg;
      tcfg.epochs = epochs;
      tcfg.seed = derive_seed(seed, 12);
      tcfg.curve_csv = (fs::path(out_dir) / "training_curve.csv").string();
      std::cout << "training...\n";
      ReluNet net = train_network(ds, tcfg);
      save_net((fs::path(out_dir) / "surrogate_net.txt").string(), net);
      std::cout << "wrote " << (fs::path(out_dir) / "surrogate_net.txt").string() << "\n";
    } else if (trl->parsed()) {
      if (params_path.empty()) throw InvalidConfig("train-rl: --params required");
      ColumnParams p = load_column_params(params_path);
      StepConfig step = load_step_config(params_path);
      ContinuousInput nominal;
      EnvConfig env;
      env.W_s = rl_ws;
      env.W_d = rl_wd;
      AgentConfig agent;
      agent.episodes = episodes;
      agent.seeds = rl_seeds;
      double best_tc = std::numeric_limits<double>::infinity();
      ClosedLoopScenario eval{p, step, nominal, NoiseConfig{}, 50, false};
      for (int s = 0; s < rl_seeds; ++s) {
        const std::string log =
            (fs::path(out_dir) / ("ppo_log_seed" + std::to_string(s) + ".csv")).string();
        PpoResult res = train_ppo(p, step, nominal, env, agent, derive_seed(seed, s), log);
        PolicyEvaluation ev = evaluate_policy(res.policy, eval, rl_ws, rl_wd, {0});
        std::cout << "seed " << s << ": eval TC=" << ev.mean.TC << " PL=" << ev.mean.PL
                  << " switches=" << ev.mean.switches << "\n";
        if (ev.mean.TC < best_tc) {
          best_tc = ev.mean.TC;
          save_policy((fs::path(out_dir) / "policy.txt").string(), res.policy);
        }
      }
      std::cout << "best TC " << best_tc << "; wrote "
                << (fs::path(out_dir) / "policy.txt").string() << "\n";
    } else if (enc->parsed()) {
      ReluNet net = load_net(net_path);
      ContinuousInput nominal;
      InputBox box = default_input_box(net, 1.2 * nominal.c_F, nominal);
      LayerBounds bounds = propagate_bounds(net, box);
      EmpcWeights w{enc_ws, enc_wd, enc_horizon};
      MilpEncoding e = encode_milp(net, bounds, box, w, nominal, MilpInitial{0.0, 0.0});
      const std::string lp = (fs::path(out_dir) / "empc_relu.lp").string();
      write_lp(lp, e);
      std::cout << "wrote " << lp << " (" << e.variables.size() << " vars, "
                << e.constraints.size() << " rows, " << e.relu_rows_per_stage
                << " relu rows/stage)\n";
    } else if (exp->parsed()) {
      if (config_path.empty()) throw InvalidConfig("experiment: --config <matrix.json> required");
      ExperimentMatrix m = load_experiment(config_path);
      if (workers > 0) m.workers = workers;
      const auto cells = run_experiment(m);
      const std::string rows = (fs::path(out_dir) / "experiment_rows.csv").string();
      const std::string avgs = (fs::path(out_dir) / "experiment_averages.csv").string();
      write_experiment_csv(rows, avgs, m, cells);
      std::cout << "wrote " << rows << " and " << avgs << "\n";
      for (const auto& c : cells) {
        if (!c.ok) std::cout << "cell " << c.sweep_label << " seed " << c.seed << " FAILED: "
                             << c.error << "\n";
      }
    } else if (rep->parsed()) {
      const std::string t = (fs::path(out_dir) / "report.txt").string();
      const std::string c = (fs::path(out_dir) / "report.csv").string();
      compare_report(tables, t, c);
      std::cout << "wrote " << t << " and " << c << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
