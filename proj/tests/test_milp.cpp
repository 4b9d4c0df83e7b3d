#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "capsim/milp.hpp"
#include "test_nets.hpp"

using namespace capsim;
using capsim::test::linear_net6;
using capsim::test::one_neuron_net6;
using capsim::test::random_net6;

namespace {

InputBox unit_box(double y_hi = 1.0) {
  InputBox box;
  box.lo = Eigen::VectorXd::Zero(6);
  box.hi = Eigen::VectorXd::Ones(6);
  box.hi(0) = y_hi;
  box.hi(1) = y_hi;
  return box;
}

std::vector<Eigen::VectorXd> box_samples(const InputBox& box, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Eigen::VectorXd> out;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd f(box.lo.size());
    for (int j = 0; j < f.size(); ++j) f(j) = rng.uniform(box.lo(j), box.hi(j));
    out.push_back(f);
  }
  return out;
}

}  // namespace

TEST_CASE("bounds of a zero-width box are the exact pre-activations") {
  ReluNet net = random_net6(7, 4, 3);
  InputBox box;
  box.lo = Eigen::VectorXd::Constant(6, 0.4);
  box.hi = box.lo;
  LayerBounds b = propagate_bounds(net, box);
  ForwardTrace tr = forward_trace(net, box.lo);
  for (int l = 0; l < net.hidden_layer_count(); ++l) {
    for (int i = 0; i < tr.pre_activations[l].size(); ++i) {
      CHECK(b.lower[l](i) == doctest::Approx(tr.pre_activations[l](i)).epsilon(1e-12));
      CHECK(b.upper[l](i) == doctest::Approx(tr.pre_activations[l](i)).epsilon(1e-12));
    }
  }
}

TEST_CASE("toy one-neuron bounds: w=2, b=1 on [0,1] gives [1,3]") {
  ReluNet net = one_neuron_net6(2.0, 1.0);
  LayerBounds b = propagate_bounds(net, unit_box());
  CHECK(b.lower[0](0) == doctest::Approx(1.0));
  CHECK(b.upper[0](0) == doctest::Approx(3.0));
}

TEST_CASE("bound soundness under sampling") {
  ReluNet net = random_net6(16, 8, 77);
  InputBox box = unit_box();
  LayerBounds b = propagate_bounds(net, box);
  for (const auto& f : box_samples(box, 10000, 123)) {
    ForwardTrace tr = forward_trace(net, f);
    for (int l = 0; l < net.hidden_layer_count(); ++l) {
      for (int i = 0; i < tr.pre_activations[l].size(); ++i) {
        CHECK(tr.pre_activations[l](i) >= b.lower[l](i) - 1e-9);
        CHECK(tr.pre_activations[l](i) <= b.upper[l](i) + 1e-9);
      }
    }
  }
}

TEST_CASE("one hidden neuron gives exactly four relu rows per stage") {
  ReluNet net = one_neuron_net6(2.0, 1.0);
  InputBox box = unit_box();
  LayerBounds b = propagate_bounds(net, box);
  EmpcWeights w{1.0, 0.5, 3};
  MilpEncoding enc = encode_milp(net, b, box, w, ContinuousInput{0.5, 0.5});
  CHECK(enc.relu_rows_per_stage == 4);
  CHECK(enc.hidden_neurons_per_stage == 1);
  int relu_rows = 0;
  for (const auto& row : enc.constraints) {
    if (row.name.rfind("relu_", 0) == 0) ++relu_rows;
  }
  CHECK(relu_rows == 4 * enc.horizon);
  // Every binary variable appears in at least one constraint.
  std::vector<bool> seen(enc.variables.size(), false);
  for (const auto& row : enc.constraints) {
    for (int v : row.var) seen[static_cast<std::size_t>(v)] = true;
  }
  for (std::size_t i = 0; i < enc.variables.size(); ++i) {
    if (enc.variables[i].binary) CHECK(seen[i]);
  }
}

TEST_CASE("hand check: pre-activation 3 with t=1 satisfies the four rows") {
  ReluNet net = one_neuron_net6(2.0, 1.0);
  InputBox box = unit_box();
  LayerBounds b = propagate_bounds(net, box);
  EmpcWeights w{1.0, 0.5, 1};
  MilpEncoding enc = encode_milp(net, b, box, w, ContinuousInput{0.5, 0.5});
  // Assignment for input feature0 = 1: pre-activation 3, z = 3, t = 1.
  std::vector<Eigen::VectorXd> sample = {box.hi};
  sample[0](0) = 1.0;
  sample[0](1) = 0.0;
  for (int j = 2; j < 6; ++j) sample[0](j) = 0.5;  // match the frozen inputs
  EncodingReport rep = verify_encoding(enc, net, sample);
  CHECK(rep.feasible == 1);
  CHECK(rep.pinned == 1);
}

TEST_CASE("every forward pass is a feasible point; z is pinned") {
  ReluNet net = random_net6(12, 6, 2024);
  InputBox box = unit_box();
  LayerBounds b = propagate_bounds(net, box);
  EmpcWeights w{1.0, 0.5, 1};
  ContinuousInput frozen{0.5, 0.5};
  MilpEncoding enc = encode_milp(net, b, box, w, frozen);
  auto samples = box_samples(box, 100, 9);
  // The frozen continuous features are fixed variables; samples must match.
  for (auto& s : samples) {
    s(2) = (frozen.c_F - net.input_mean(2)) / net.input_std(2);
    s(3) = (frozen.Q - net.input_mean(3)) / net.input_std(3);
    s(4) = (frozen.c_F - net.input_mean(4)) / net.input_std(4);
    s(5) = (frozen.Q - net.input_mean(5)) / net.input_std(5);
  }
  EncodingReport rep = verify_encoding(enc, net, samples);
  CHECK(rep.feasible == 100);
  CHECK(rep.pinned == 100);
  CHECK(rep.max_pin_error <= 1e-6);
}

TEST_CASE("a corrupted upper bound is caught") {
  ReluNet net = one_neuron_net6(2.0, 1.0);
  InputBox box = unit_box();
  LayerBounds good = propagate_bounds(net, box);
  LayerBounds bad = good;
  bad.upper[0](0) = 1.5;  // below the reachable pre-activation 3
  EmpcWeights w{1.0, 0.5, 1};
  ContinuousInput frozen{0.5, 0.5};
  MilpEncoding enc = encode_milp(net, bad, box, w, frozen);
  auto samples = box_samples(box, 50, 31);
  for (auto& s : samples) {
    s(2) = frozen.c_F;
    s(3) = frozen.Q;
    s(4) = frozen.c_F;
    s(5) = frozen.Q;
  }
  samples[0](0) = 1.0;  // reach pre-activation 3 > corrupted bound
  EncodingReport rep = verify_encoding(enc, net, samples);
  CHECK(rep.feasible < rep.samples);
}

TEST_CASE("a linear net encodes vacuously") {
  ReluNet net = linear_net6(1.5, 0.2);
  InputBox box = unit_box();
  LayerBounds b = propagate_bounds(net, box);
  CHECK(b.lower.empty());
  EmpcWeights w{1.0, 0.5, 2};
  MilpEncoding enc = encode_milp(net, b, box, w, ContinuousInput{0.5, 0.5});
  CHECK(enc.relu_rows_per_stage == 0);
  auto samples = box_samples(box, 10, 4);
  for (auto& s : samples) {
    s(2) = 0.5;
    s(3) = 0.5;
    s(4) = 0.5;
    s(5) = 0.5;
  }
  EncodingReport rep = verify_encoding(enc, net, samples);
  CHECK(rep.feasible == 10);
  CHECK(rep.pinned == 10);
}

TEST_CASE("unbounded boxes are rejected with a tightening hint") {
  ReluNet net = one_neuron_net6(2.0, 1.0);
  InputBox box = unit_box();
  box.hi(0) = std::numeric_limits<double>::infinity();
  LayerBounds b = propagate_bounds(net, box);
  EmpcWeights w{1.0, 0.5, 1};
  CHECK_THROWS_WITH_AS(encode_milp(net, b, box, w, ContinuousInput{0.5, 0.5}),
                       doctest::Contains("tighten"), InvalidConfig);
}

TEST_CASE("LP export matches the golden file") {
  ReluNet net = one_neuron_net6(2.0, 1.0);
  InputBox box = unit_box();
  LayerBounds b = propagate_bounds(net, box);
  EmpcWeights w{1.0, 0.5, 2};
  MilpEncoding enc = encode_milp(net, b, box, w, ContinuousInput{0.5, 0.5}, MilpInitial{0.25, 0.1});
  const std::string path = "lp_export_test.lp";
  write_lp(path, enc);
  std::ifstream got(path);
  std::ifstream want(std::string(CAPSIM_CONFIG_DIR) + "/golden/empc_toy.lp");
  REQUIRE(want.good());
  std::string lg, lw;
  int line = 0;
  while (std::getline(want, lw)) {
    ++line;
    REQUIRE(std::getline(got, lg));
    CAPTURE(line);
    CHECK(lg == lw);
  }
  CHECK_FALSE(std::getline(got, lg));
  std::filesystem::remove(path);
}
