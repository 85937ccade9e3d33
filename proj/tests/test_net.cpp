#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sinkflow/net.hpp"
#include "sinkflow/rng.hpp"

using namespace sinkflow;

TEST_CASE("init respects the fan-in bound and is seed-deterministic") {
  FeedForwardNet net = make_net(12, {7}, 4, 42);
  REQUIRE(net.layer_count() == 2);
  CHECK(net.weights[0].rows() == 7);
  CHECK(net.weights[0].cols() == 12);
  CHECK(net.weights[1].rows() == 4);
  CHECK(net.weights[1].cols() == 7);

  double bound0 = 1.0 / std::sqrt(12.0), bound1 = 1.0 / std::sqrt(7.0);
  for (double v : net.weights[0].values()) CHECK(std::abs(v) <= bound0);
  for (double v : net.biases[0]) CHECK(std::abs(v) <= bound0);
  for (double v : net.weights[1].values()) CHECK(std::abs(v) <= bound1);
  for (double v : net.biases[1]) CHECK(std::abs(v) <= bound1);

  FeedForwardNet again = make_net(12, {7}, 4, 42);
  CHECK(net.weights[0] == again.weights[0]);
  CHECK(net.weights[1] == again.weights[1]);
  CHECK(net.biases[0] == again.biases[0]);
  FeedForwardNet other = make_net(12, {7}, 4, 43);
  CHECK_FALSE(net.weights[0] == other.weights[0]);
}

TEST_CASE("forward matches a hand-computed two-layer evaluation") {
  FeedForwardNet net = make_net(2, {2}, 1, 0);
  net.weights[0](0, 0) = 1.0;
  net.weights[0](0, 1) = -1.0;
  net.weights[0](1, 0) = 0.5;
  net.weights[0](1, 1) = 0.5;
  net.biases[0] = {0.1, -0.2};
  net.weights[1](0, 0) = 2.0;
  net.weights[1](0, 1) = -3.0;
  net.biases[1] = {0.25};

  NetActivations acts;
  net_forward(net, {0.3, 0.7}, acts);
  double h0 = std::tanh(0.3 - 0.7 + 0.1);
  double h1 = std::tanh(0.15 + 0.35 - 0.2);
  double out = 2.0 * h0 - 3.0 * h1 + 0.25;
  REQUIRE(acts.outs.size() == 3);
  CHECK(acts.outs[1][0] == doctest::Approx(h0).epsilon(1e-15));
  CHECK(acts.outs[1][1] == doctest::Approx(h1).epsilon(1e-15));
  CHECK(acts.outs[2][0] == doctest::Approx(out).epsilon(1e-15));
}

TEST_CASE("backward matches finite differences through every parameter") {
  FeedForwardNet net = make_net(5, {6, 4}, 3, 7);
  Rng rng(123);
  std::vector<double> input(5), g(3);
  for (double& v : input) v = rng.uniform(-1.0, 1.0);
  for (double& v : g) v = rng.uniform(-1.0, 1.0);

  // loss = <g, net(input)>, so dLoss/d(output) = g.
  auto loss_at = [&](const FeedForwardNet& n) {
    NetActivations a;
    net_forward(n, input, a);
    double acc = 0.0;
    for (int i = 0; i < 3; ++i) acc += g[i] * a.outs.back()[i];
    return acc;
  };

  NetActivations acts;
  net_forward(net, input, acts);
  NetGradients grads = zero_gradients_like(net);
  net_backward(net, acts, g, grads);

  const double h = 1e-6;
  for (int l = 0; l < net.layer_count(); ++l) {
    for (size_t i = 0; i < net.weights[l].size(); ++i) {
      FeedForwardNet pert = net;
      pert.weights[l].data()[i] += h;
      double up = loss_at(pert);
      pert.weights[l].data()[i] -= 2 * h;
      double down = loss_at(pert);
      double fd = (up - down) / (2 * h);
      CHECK(grads.weights[l].data()[i] == doctest::Approx(fd).epsilon(1e-6));
    }
    for (size_t i = 0; i < net.biases[l].size(); ++i) {
      FeedForwardNet pert = net;
      pert.biases[l][i] += h;
      double up = loss_at(pert);
      pert.biases[l][i] -= 2 * h;
      double down = loss_at(pert);
      double fd = (up - down) / (2 * h);
      CHECK(grads.biases[l][i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("gradient accumulators zero and scale correctly") {
  FeedForwardNet net = make_net(3, {2}, 2, 1);
  NetGradients a = zero_gradients_like(net);
  NetGradients b = zero_gradients_like(net);
  a.weights[0](0, 0) = 2.0;
  b.weights[0](0, 0) = 3.0;
  a.add_scaled(b, 0.5);
  CHECK(a.weights[0](0, 0) == doctest::Approx(3.5));
  a.zero();
  CHECK(a.weights[0](0, 0) == 0.0);
}

TEST_CASE("shape violations are rejected") {
  CHECK_THROWS_AS(make_net(0, {3}, 2, 0), DimensionError);
  CHECK_THROWS_AS(make_net(3, {0}, 2, 0), DimensionError);
  FeedForwardNet net = make_net(3, {2}, 2, 1);
  NetActivations acts;
  CHECK_THROWS_AS(net_forward(net, {1.0, 2.0}, acts), DimensionError);
  net_forward(net, {1.0, 2.0, 3.0}, acts);
  NetGradients grads = zero_gradients_like(net);
  CHECK_THROWS_AS(net_backward(net, acts, {1.0}, grads), DimensionError);
}
