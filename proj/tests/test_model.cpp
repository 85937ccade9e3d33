#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "sinkflow/jsonio.hpp"
#include "sinkflow/model.hpp"
#include "sinkflow/rng.hpp"

using namespace sinkflow;

namespace {

// A valid k=2 lag window with distinct values for layout checks.
ModelInput tiny_input() {
  ModelInput in;
  in.x_t = {0.3, 0.7};
  in.x_tm1 = {0.4, 0.6};
  in.x_tm2 = {0.5, 0.5};
  in.b_t = Matrix(2, 2);
  in.b_tm1 = Matrix(2, 2);
  double v = 0.01;
  for (double& e : in.b_t.values()) e = v += 0.01;
  for (double& e : in.b_tm1.values()) e = v += 0.01;
  return in;
}

// Dataset whose perfect fit exists: targets are generated by an actual
// doubly stochastic head, so the plan residual can reach zero.
std::vector<TrainSample> realizable_dataset(int k, int count, uint64_t seed) {
  std::vector<TrainSample> out;
  Rng rng(seed);
  for (int s = 0; s < count; ++s) {
    ModelInput in;
    auto draw_marginal = [&]() {
      std::vector<double> x(k);
      double tot = 0.0;
      for (double& v : x) tot += v = rng.uniform(0.05, 1.0);
      for (double& v : x) v /= tot;
      return x;
    };
    in.x_t = draw_marginal();
    in.x_tm1 = draw_marginal();
    in.x_tm2 = draw_marginal();
    in.b_t = rng.uniform_matrix(k, k, 0.0, 0.2);
    in.b_tm1 = rng.uniform_matrix(k, k, 0.0, 0.2);

    SinkhornConfig tight;
    tight.tol = 1e-12;
    tight.max_iters = 20000;
    Matrix m = rng.uniform_matrix(k, k, -1.0, 1.0);
    Matrix star = sinkhorn_forward(m, tight).s;
    TrainSample sample;
    sample.input = in;
    sample.target_plan = Matrix(k, k);
    sample.target_next.assign(k, 0.0);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        sample.target_plan(i, j) = in.x_t[i] * star(i, j);
        sample.target_next[j] += sample.target_plan(i, j);
      }
    out.push_back(std::move(sample));
  }
  return out;
}

FeedForwardNet net_for_k(int k, uint64_t seed, int hidden) {
  return make_net(3 * k + 2 * k * k, {hidden}, k * k, seed);
}

}  // namespace

TEST_CASE("feature vector lays out the lag window in order") {
  ModelInput in = tiny_input();
  std::vector<double> f = in.features();
  REQUIRE(f.size() == 3 * 2 + 2 * 4);
  CHECK(f[0] == 0.3);
  CHECK(f[1] == 0.7);
  CHECK(f[2] == in.b_t(0, 0));
  CHECK(f[5] == in.b_t(1, 1));
  CHECK(f[6] == 0.4);
  CHECK(f[7] == 0.6);
  CHECK(f[8] == in.b_tm1(0, 0));
  CHECK(f[12] == 0.5);
  CHECK(f[13] == 0.5);
}

TEST_CASE("input validation enforces the simplex and shapes") {
  ModelInput in = tiny_input();
  in.validate();
  ModelInput bad = in;
  bad.x_t = {0.3, 0.6};
  CHECK_THROWS_AS(bad.validate(), InvalidInputError);
  bad = in;
  bad.x_tm1 = {-0.1, 1.1};
  CHECK_THROWS_AS(bad.validate(), InvalidInputError);
  bad = in;
  bad.b_t = Matrix(3, 2, 0.0);
  CHECK_THROWS_AS(bad.validate(), DimensionError);
  bad = in;
  bad.x_tm2 = {0.2, 0.3, 0.5};
  CHECK_THROWS_AS(bad.validate(), DimensionError);
}

TEST_CASE("zero potentials spread each row uniformly") {
  // With all-zero network output the head is the uniform doubly stochastic
  // matrix, so P = diag(x)/k row by row.
  ModelInput in = tiny_input();
  FeedForwardNet net = net_for_k(2, 5, 4);
  for (Matrix& w : net.weights)
    for (double& v : w.values()) v = 0.0;
  for (auto& b : net.biases)
    for (double& v : b) v = 0.0;

  PlanPrediction pred = predict_plan(in, net);
  CHECK(pred.plan(0, 0) == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(pred.plan(0, 1) == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(pred.plan(1, 0) == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(pred.plan(1, 1) == doctest::Approx(0.35).epsilon(1e-12));
  // Row sums reproduce x_t; the predicted next marginal is S^T x.
  CHECK(pred.plan(0, 0) + pred.plan(0, 1) == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(pred.plan(1, 0) + pred.plan(1, 1) == doctest::Approx(0.7).epsilon(1e-9));
  CHECK(pred.plan(0, 0) + pred.plan(1, 0) == doctest::Approx(0.5).epsilon(1e-9));

  ModelInput zero_row = in;
  zero_row.x_t = {0.0, 1.0};
  PlanPrediction pz = predict_plan(zero_row, net);
  CHECK(pz.plan(0, 0) == 0.0);
  CHECK(pz.plan(0, 1) == 0.0);
}

TEST_CASE("predictions conserve the current marginal row-wise") {
  Rng rng(902);
  for (int trial = 0; trial < 25; ++trial) {
    int k = 2 + trial % 4;
    FeedForwardNet net = net_for_k(k, 1000 + trial, 8);
    std::vector<double> x(k);
    double tot = 0.0;
    for (double& v : x) tot += v = rng.uniform(0.0, 1.0);
    for (double& v : x) v /= tot;
    ModelInput in;
    in.x_t = x;
    in.x_tm1 = x;
    in.x_tm2 = x;
    in.b_t = Matrix(k, k, 1.0 / (k * k));
    in.b_tm1 = Matrix(k, k, 1.0 / (k * k));
    SinkhornConfig cfg;  // defaults: 100 iterations at 1e-6
    PlanPrediction pred = predict_plan(in, net, cfg);
    double worst = 0.0;
    for (int i = 0; i < k; ++i) {
      double row = 0.0;
      for (int j = 0; j < k; ++j) row += pred.plan(i, j);
      worst = std::max(worst, std::abs(row - x[i]));
    }
    CAPTURE(trial);
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("predict_plan rejects a mismatched network") {
  ModelInput in = tiny_input();
  FeedForwardNet wrong_out = make_net(3 * 2 + 2 * 4, {4}, 5, 0);
  CHECK_THROWS_AS(predict_plan(in, wrong_out), ConfigError);
  FeedForwardNet wrong_in = make_net(9, {4}, 4, 0);
  CHECK_THROWS_AS(predict_plan(in, wrong_in), ConfigError);
}

TEST_CASE("loss reproduces the worked examples") {
  Matrix p_true(2, 2, 0.0);
  p_true(0, 0) = 0.5;
  p_true(1, 1) = 0.5;
  Matrix p_hat(2, 2, 0.0);
  p_hat(0, 0) = 0.4;
  p_hat(0, 1) = 0.1;
  p_hat(1, 1) = 0.5;

  LossConfig lc;
  lc.loss_mix = 0.0;
  CHECK(loss(p_true, p_hat, {0.4, 0.6}, lc) == doctest::Approx(0.02).epsilon(1e-12));
  lc.loss_mix = 1.0;
  // Column sums of p_hat are exactly [0.4, 0.6].
  CHECK(loss(p_true, p_hat, {0.4, 0.6}, lc) == doctest::Approx(0.0).epsilon(1e-12));
  lc.loss_mix = 0.5;
  CHECK(loss(p_true, p_hat, {0.5, 0.5}, lc) ==
        doctest::Approx(0.5 * 0.02 + 0.5 * 0.02).epsilon(1e-12));
  // Perfect prediction, consistent marginal: both terms vanish.
  CHECK(loss(p_true, p_true, {0.5, 0.5}, lc) == doctest::Approx(0.0).epsilon(1e-15));

  lc.loss_mix = 1.5;
  CHECK_THROWS_AS(loss(p_true, p_hat, {0.4, 0.6}, lc), ConfigError);
  lc.loss_mix = 0.0;
  CHECK_THROWS_AS(loss(p_true, Matrix(3, 3, 0.0), {0.4, 0.6}, lc), DimensionError);
  CHECK_THROWS_AS(loss(p_true, p_hat, {0.4, 0.3, 0.3}, lc), DimensionError);
}

TEST_CASE("batch gradient agrees with finite differences end to end") {
  // This is the full chain: features -> net -> normalization layer -> diag
  // premultiply -> interpolated loss. FD sees the same truncated forward
  // pass, so agreement is limited only by difference-quotient error.
  const int k = 3;
  auto dataset = realizable_dataset(k, 2, 77);
  FeedForwardNet net = net_for_k(k, 9, 10);
  LossConfig lc;
  lc.loss_mix = 0.3;
  SinkhornConfig sc;  // paper-style truncation: 100 iterations, 1e-6

  NetGradients grads = zero_gradients_like(net);
  batch_gradient_serial(dataset, net, lc, sc, grads);

  NetGradients dummy = zero_gradients_like(net);
  auto loss_at = [&](const FeedForwardNet& n) {
    return batch_gradient_serial(dataset, n, lc, sc, dummy);
  };

  Rng probe_rng(31337);
  const double h = 1e-5;
  int checked = 0;
  for (int l = 0; l < net.layer_count(); ++l) {
    for (size_t i = 0; i < net.weights[l].size(); ++i) {
      if (probe_rng.uniform() > 0.15) continue;  // spot-check a random subset
      FeedForwardNet pert = net;
      pert.weights[l].data()[i] += h;
      double up = loss_at(pert);
      pert.weights[l].data()[i] -= 2 * h;
      double down = loss_at(pert);
      double fd = (up - down) / (2 * h);
      double got = grads.weights[l].data()[i];
      CHECK(std::abs(got - fd) <= 1e-3 * std::max(1.0, std::abs(fd)));
      ++checked;
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("parallel blocked reduction matches the serial reference") {
  const int k = 3;
  auto dataset = realizable_dataset(k, 37, 88);  // odd count: partial last block
  FeedForwardNet net = net_for_k(k, 10, 12);
  LossConfig lc;
  lc.loss_mix = 0.5;
  NetGradients g_par = zero_gradients_like(net);
  NetGradients g_ser = zero_gradients_like(net);
  double lp = batch_gradient(dataset, net, lc, {}, g_par);
  double ls = batch_gradient_serial(dataset, net, lc, {}, g_ser);
  CHECK(lp == doctest::Approx(ls).epsilon(1e-12));
  for (int l = 0; l < net.layer_count(); ++l)
    for (size_t i = 0; i < net.weights[l].size(); ++i) {
      double a = g_par.weights[l].data()[i], b = g_ser.weights[l].data()[i];
      CHECK(std::abs(a - b) <= 1e-11 * std::max(1.0, std::abs(b)));
    }
}

TEST_CASE("zero-epoch training returns the parameters unchanged") {
  auto dataset = realizable_dataset(3, 2, 5);
  FeedForwardNet net = net_for_k(3, 11, 8);
  LossConfig lc;
  lc.epochs = 0;
  lc.learning_rate = 0.1;
  TrainResult res = train(dataset, net, lc);
  CHECK(res.loss_trace.empty());
  for (int l = 0; l < net.layer_count(); ++l) {
    CHECK(res.params.weights[l] == net.weights[l]);
    CHECK(res.params.biases[l] == net.biases[l]);
  }
}

TEST_CASE("training overfits a single realizable sample") {
  auto dataset = realizable_dataset(3, 1, 21);
  FeedForwardNet net = net_for_k(3, 12, 12);
  LossConfig lc;
  lc.loss_mix = 0.25;
  lc.learning_rate = 0.05;
  lc.epochs = 3000;
  TrainResult res = train(dataset, net, lc);
  REQUIRE(res.loss_trace.size() == 3000);
  CHECK(res.loss_trace.back() < 1e-4);
}

TEST_CASE("plain gradient descent yields a monotone loss trace") {
  auto dataset = realizable_dataset(3, 4, 33);
  FeedForwardNet net = net_for_k(3, 13, 10);
  LossConfig lc;
  lc.loss_mix = 0.0;
  lc.learning_rate = 0.01;
  lc.epochs = 300;
  TrainResult res = train(dataset, net, lc);
  for (size_t i = 0; i + 1 < res.loss_trace.size(); ++i)
    CHECK(res.loss_trace[i + 1] <= res.loss_trace[i] + 1e-12);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  auto dataset = realizable_dataset(3, 6, 44);
  LossConfig lc;
  lc.loss_mix = 0.5;
  lc.learning_rate = 0.02;
  lc.epochs = 40;
  lc.momentum = 0.9;
  TrainResult a = train(dataset, net_for_k(3, 14, 10), lc);
  TrainResult b = train(dataset, net_for_k(3, 14, 10), lc);
  CHECK(a.loss_trace == b.loss_trace);
  for (int l = 0; l < a.params.layer_count(); ++l) {
    CHECK(a.params.weights[l] == b.params.weights[l]);
    CHECK(a.params.biases[l] == b.params.biases[l]);
  }
}

TEST_CASE("a diverging run aborts with a numeric diagnostic") {
  auto dataset = realizable_dataset(3, 2, 55);
  FeedForwardNet net = net_for_k(3, 15, 8);
  LossConfig lc;
  lc.learning_rate = 1e8;
  lc.epochs = 50;
  CHECK_THROWS_AS(train(dataset, net, lc), NumericError);
}

TEST_CASE("train validates the dataset and config") {
  FeedForwardNet net = net_for_k(3, 16, 8);
  LossConfig lc;
  lc.epochs = 1;
  lc.learning_rate = 0.1;
  CHECK_THROWS_AS(train({}, net, lc), InvalidInputError);
  auto dataset = realizable_dataset(3, 2, 66);
  LossConfig bad = lc;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(train(dataset, net, bad), ConfigError);
  bad = lc;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(train(dataset, net, bad), ConfigError);
  bad = lc;
  bad.loss_mix = -0.5;
  CHECK_THROWS_AS(train(dataset, net, bad), ConfigError);
  FeedForwardNet wrong = make_net(21, {8}, 10, 16);
  CHECK_THROWS_AS(train(dataset, wrong, lc), ConfigError);
}

TEST_CASE("rollout with one step equals a single prediction") {
  ModelInput in = tiny_input();
  FeedForwardNet net = net_for_k(2, 17, 6);
  auto plans = rollout(in, net, 1);
  REQUIRE(plans.size() == 1);
  CHECK(plans[0] == predict_plan(in, net).plan);
  CHECK_THROWS_AS(rollout(in, net, 0), ConfigError);
}

TEST_CASE("rollout shifts the lag window with its own predictions") {
  ModelInput in = tiny_input();
  FeedForwardNet net = net_for_k(2, 18, 6);
  auto plans = rollout(in, net, 3);
  REQUIRE(plans.size() == 3);

  // Manual second step: the window advances by one.
  Matrix p0 = predict_plan(in, net).plan;
  ModelInput shifted;
  shifted.x_tm2 = in.x_tm1;
  shifted.x_tm1 = in.x_t;
  shifted.x_t = {p0(0, 0) + p0(1, 0), p0(0, 1) + p0(1, 1)};
  shifted.b_tm1 = in.b_t;
  shifted.b_t = p0;
  Matrix p1 = predict_plan(shifted, net).plan;
  CHECK(max_abs_diff(plans[1], p1) == 0.0);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  auto dataset = realizable_dataset(3, 2, 99);
  LossConfig lc;
  lc.loss_mix = 0.25;
  lc.learning_rate = 0.05;
  lc.epochs = 10;
  TrainResult res = train(dataset, net_for_k(3, 19, 8), lc);

  ModelCheckpoint ckpt;
  ckpt.net = res.params;
  ckpt.loss_cfg = lc;
  ckpt.sink_cfg = SinkhornConfig{};
  ckpt.config = {{"note", "unit"}};
  const char* path = "model_roundtrip_test.json";
  save_model(path, ckpt);
  ModelCheckpoint back = load_model(path);
  CHECK(back.net.input_dim == ckpt.net.input_dim);
  CHECK(back.net.hidden_sizes == ckpt.net.hidden_sizes);
  for (int l = 0; l < ckpt.net.layer_count(); ++l) {
    CHECK(back.net.weights[l] == ckpt.net.weights[l]);
    CHECK(back.net.biases[l] == ckpt.net.biases[l]);
  }
  CHECK(back.loss_cfg.loss_mix == lc.loss_mix);
  CHECK(back.sink_cfg.max_iters == 100);
  CHECK(back.config.at("note") == "unit");
  std::remove(path);

  CHECK_THROWS_AS(load_model("no_such_checkpoint.json"), IoError);
}

TEST_CASE("sample assembly points at the right plans and targets") {
  // Build a tiny series with recognizable entries: marginal t is uniform,
  // plan t has t in its corner.
  std::vector<std::vector<double>> xs;
  std::vector<Matrix> ps;
  for (int t = 0; t < 6; ++t) xs.push_back({0.5, 0.5});
  for (int t = 0; t < 5; ++t) {
    Matrix p(2, 2, 0.25);
    p(0, 0) = static_cast<double>(t);
    ps.push_back(p);
  }
  ModelInput in = make_model_input(xs, ps, 3);
  CHECK(in.b_t(0, 0) == 2.0);
  CHECK(in.b_tm1(0, 0) == 1.0);
  auto samples = build_samples(xs, ps, 2, 5);
  REQUIRE(samples.size() == 3);
  CHECK(samples[0].target_plan(0, 0) == 2.0);
  CHECK(samples[2].target_plan(0, 0) == 4.0);
  CHECK(samples[2].target_next == xs[5]);
  CHECK_THROWS_AS(make_model_input(xs, ps, 1), InvalidInputError);
  CHECK_THROWS_AS(build_samples(xs, ps, 2, 6), InvalidInputError);
}
