#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "capsim/surrogate.hpp"
#include "test_nets.hpp"
#include "test_support.hpp"

using namespace capsim;
using capsim::test::linear_net6;
using capsim::test::one_neuron_net6;
using capsim::test::random_net6;

namespace {

// Small fast column for dataset tests.
ColumnParams small_column() {
  ColumnParams p;  // seed constants
  p.N_z = 30;
  p.N_r = 3;
  return p;
}

StepConfig small_step() {
  StepConfig cfg;
  cfg.n_substeps = 900;
  return cfg;
}

Eigen::VectorXd features(double y, double y_prev, double cF = 49.9219, double Q = 21.6129) {
  Eigen::VectorXd f(6);
  f << y, y_prev, cF, Q, cF, Q;
  return f;
}

}  // namespace

TEST_CASE("predict applies ReLU inside the forward pass") {
  ReluNet net = one_neuron_net6(1.0, 0.0);
  CHECK(predict(net, features(-3.0, 0.0)) == 0.0);
  CHECK(predict(net, features(3.0, 0.0)) == 3.0);
}

TEST_CASE("identity-weight single-layer net returns its input") {
  ReluNet net = linear_net6(1.0, 0.0);
  CHECK(predict(net, features(2.5, 0.0)) == 2.5);
}

TEST_CASE("predict validates the feature count") {
  ReluNet net = linear_net6(1.0, 0.0);
  Eigen::VectorXd bad(3);
  bad.setZero();
  CHECK_THROWS_AS(predict(net, bad), InvalidConfig);
}

TEST_CASE("net round-trips through the text format") {
  ReluNet net = random_net6(8, 5, 99);
  net.input_mean.setConstant(1.5);
  net.input_std.setConstant(2.5);
  net.output_mean = -0.25;
  net.output_std = 3.0;
  const std::string path = "net_roundtrip_test.txt";
  save_net(path, net);
  ReluNet back = load_net(path);
  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd f = features(0.1 * i, 0.05 * i);
    CHECK(predict(net, f) == doctest::Approx(predict(back, f)).epsilon(1e-15));
  }
  std::filesystem::remove(path);
}

TEST_CASE("rollout: all switches force all-zero outputs") {
  ReluNet net = linear_net6(1.7, 0.2);
  SurrogateHistory h;
  h.y = 3.0;
  h.y_prev = 2.0;
  const auto out = rollout(net, h, {1, 1, 1, 1});
  for (double v : out) CHECK(v == 0.0);
}

TEST_CASE("rollout without switches is the plain recursion") {
  ReluNet net = linear_net6(1.5, 0.1);
  SurrogateHistory h;
  h.y = 1.0;
  const auto out = rollout(net, h, {0, 0, 0});
  CHECK(out[0] == doctest::Approx(1.6).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(1.5 * 1.6 + 0.1).epsilon(1e-12));
  CHECK(out[2] == doctest::Approx(1.5 * (1.5 * 1.6 + 0.1) + 0.1).epsilon(1e-12));
}

TEST_CASE("rollout reset equivalence: a switch restarts the lag window") {
  ReluNet net = random_net6(10, 6, 4242);
  SurrogateHistory h;
  h.y = 0.8;
  h.y_prev = 0.6;
  const auto mixed = rollout(net, h, {0, 0, 1, 0, 0});
  SurrogateHistory fresh;
  fresh.y = 0.0;
  fresh.y_prev = 0.0;
  const auto ref = rollout(net, fresh, {0, 0});
  CHECK(mixed[2] == 0.0);
  CHECK(mixed[3] == ref[0]);
  CHECK(mixed[4] == ref[1]);
}

TEST_CASE("surrogate EMPC equals exhaustive enumeration") {
  ReluNet net = linear_net6(1.6, 0.05);
  for (int N : {4, 8, 12}) {
    EmpcWeights w{1.0, 0.5, N};
    Rng rng(31 + N);
    for (int rep = 0; rep < 10; ++rep) {
      SurrogateHistory h;
      h.y = rng.uniform(0.0, 15.0);
      h.y_prev = h.y * rng.uniform(0.4, 1.0);
      // Oracle: enumerate every switch pattern over the rollout.
      double best = std::numeric_limits<double>::infinity();
      std::vector<int> best_seq;
      for (std::uint64_t mask = 0; mask < (1ull << N); ++mask) {
        std::vector<int> seq(N);
        for (int i = 0; i < N; ++i) seq[i] = (mask >> i) & 1;
        const auto ys = rollout(net, h, seq);
        double cost = 0.0;
        for (int i = 0; i < N; ++i) cost += w.W_s * ys[i] + w.W_d * seq[i];
        if (cost < best || (cost == best && seq < best_seq)) {
          best = cost;
          best_seq = seq;
        }
      }
      const auto res = solve_relu_empc(net, h, w);
      CHECK(res.cost == doctest::Approx(best).epsilon(1e-12));
      CHECK(res.sequence == best_seq);
    }
  }
}

TEST_CASE("dataset generation: shape, splits and reset-free rows") {
  ColumnParams p = small_column();
  StepConfig cfg = small_step();
  ContinuousInput nominal;
  ExcitationConfig exc;
  exc.seed = 5;
  DatasetConfig dcfg;
  dcfg.size = 400;
  Dataset ds = generate_dataset(p, cfg, nominal, exc, dcfg);
  REQUIRE(ds.rows() == 400);
  int train = 0, val = 0, test = 0;
  double max_cf = 0.0;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (int j = 0; j < 6; ++j) CHECK(std::isfinite(ds.features(i, j)));
    CHECK(ds.targets(i) >= 0.0);
    max_cf = std::max(max_cf, ds.features(i, 2));
    switch (ds.split[i]) {
      case Dataset::Split::kTrain: ++train; break;
      case Dataset::Split::kValidation: ++val; break;
      case Dataset::Split::kTest: ++test; break;
    }
    CHECK(ds.targets(i) <= max_cf * (1.0 + 1e-6));
  }
  CHECK(train == 280);
  CHECK(val == 60);
  CHECK(test == 60);
  // Excitation stays inside +-20%.
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    CHECK(ds.features(i, 2) >= nominal.c_F * 0.8 - 1e-9);
    CHECK(ds.features(i, 2) <= nominal.c_F * 1.2 + 1e-9);
  }
}

TEST_CASE("zero excitation pins the input features at nominal") {
  ColumnParams p = small_column();
  StepConfig cfg = small_step();
  ContinuousInput nominal;
  ExcitationConfig exc;
  exc.relative_range = 0.0;
  DatasetConfig dcfg;
  dcfg.size = 120;
  Dataset ds = generate_dataset(p, cfg, nominal, exc, dcfg);
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    CHECK(ds.features(i, 2) == doctest::Approx(nominal.c_F).epsilon(1e-12));
    CHECK(ds.features(i, 3) == doctest::Approx(nominal.Q).epsilon(1e-12));
    // Monotone breakthrough: next outlet never drops below the current one.
    CHECK(ds.targets(i) >= ds.features(i, 0) - 1e-9);
  }
}

TEST_CASE("training fits a constant-target dataset") {
  Dataset ds;
  const int n = 600;
  ds.features.resize(n, 6);
  ds.targets.resize(n);
  ds.split.resize(n);
  Rng rng(17);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 6; ++j) ds.features(i, j) = rng.uniform(0.0, 1.0);
    ds.targets(i) = 3.25;
    ds.split[i] = i < 420 ? Dataset::Split::kTrain
                 : i < 510 ? Dataset::Split::kValidation
                           : Dataset::Split::kTest;
  }
  TrainConfig cfg;
  cfg.hidden = {8, 4};
  cfg.epochs = 40;
  ReluNet net = train_network(ds, cfg);
  // Constant targets give output_std ~ 0, so normalized error 1e-3 means the
  // prediction is essentially exact.
  for (int i = 0; i < 20; ++i) {
    Eigen::VectorXd f(6);
    for (int j = 0; j < 6; ++j) f(j) = rng.uniform(0.0, 1.0);
    CHECK(predict(net, f) == doctest::Approx(3.25).epsilon(1e-3));
  }
}

TEST_CASE("dataset CSV round-trip") {
  ColumnParams p = small_column();
  StepConfig cfg = small_step();
  ExcitationConfig exc;
  DatasetConfig dcfg;
  dcfg.size = 60;
  Dataset ds = generate_dataset(p, cfg, ContinuousInput{}, exc, dcfg);
  const std::string path = "dataset_roundtrip_test.csv";
  save_dataset_csv(path, ds);
  Dataset back = load_dataset_csv(path);
  REQUIRE(back.rows() == ds.rows());
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    CHECK(back.targets(i) == ds.targets(i));
    CHECK(back.split[i] == ds.split[i]);
    for (int j = 0; j < 6; ++j) CHECK(back.features(i, j) == ds.features(i, j));
  }
  std::filesystem::remove(path);
}
