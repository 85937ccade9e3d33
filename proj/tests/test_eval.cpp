#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sinkflow/baselines.hpp"
#include "sinkflow/eval.hpp"
#include "sinkflow/oracles.hpp"
#include "sinkflow/rng.hpp"

using namespace sinkflow;

namespace {

FactionTimeline mixing_timeline(int n, int steps, uint64_t seed) {
  SyntheticSpec spec;
  spec.k = 3;
  spec.N = n;
  spec.steps = steps;
  spec.seed = seed;
  spec.kernel = Matrix(3, 3);
  double rows[3][3] = {{0.7, 0.2, 0.1}, {0.15, 0.7, 0.15}, {0.1, 0.25, 0.65}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) spec.kernel(i, j) = rows[i][j];
  return generate_synthetic(spec);
}

const MethodResult& find_method(const EvalReport& report, const std::string& name) {
  for (const MethodResult& m : report.methods)
    if (m.method == name) return m;
  REQUIRE(false);
  return report.methods.front();
}

}  // namespace

TEST_CASE("flow cost is the Frobenius distance") {
  Matrix p(2, 2);
  p(0, 0) = 0.5;
  p(1, 1) = 0.5;
  CHECK(flow_cost(p, p) == 0.0);

  Matrix q(2, 2);
  q(0, 0) = 0.4;
  q(0, 1) = 0.1;
  q(1, 1) = 0.5;
  CHECK(flow_cost(p, q) == doctest::Approx(std::sqrt(0.02)).epsilon(1e-12));
  CHECK(flow_cost(p, q) == flow_cost(q, p));
  CHECK_THROWS_AS(flow_cost(p, Matrix(3, 3)), DimensionError);

  SUBCASE("triangle inequality on random triples") {
    Rng rng(5);
    for (int rep = 0; rep < 100; ++rep) {
      Matrix a = rng.uniform_matrix(3, 3, 0.0, 1.0);
      Matrix b = rng.uniform_matrix(3, 3, 0.0, 1.0);
      Matrix c = rng.uniform_matrix(3, 3, 0.0, 1.0);
      CHECK(flow_cost(a, c) <= flow_cost(a, b) + flow_cost(b, c) + 1e-12);
    }
  }
}

TEST_CASE("faction RMSE follows the root-mean-square definition") {
  CHECK(faction_rmse({0.3, 0.7}, {0.3, 0.7}) == 0.0);
  CHECK(faction_rmse({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(faction_rmse({0.4, 0.2, 0.2, 0.2}, {0.2, 0.4, 0.2, 0.2}) ==
        doctest::Approx(std::sqrt(0.08 / 4)).epsilon(1e-12));
  CHECK_THROWS_AS(faction_rmse({0.5, 0.5}, {1.0}), DimensionError);
  CHECK_THROWS_AS(faction_rmse({}, {}), DimensionError);
}

TEST_CASE("multi-step cost accumulates aligned step costs") {
  Matrix a(2, 2), b(2, 2);
  a(0, 0) = 1.0;
  b(0, 1) = 1.0;
  std::vector<Matrix> truth = {a, b, a};
  std::vector<Matrix> perfect = truth;
  std::vector<Matrix> wrong = {b, a, b};

  CHECK(multi_step_cost(perfect, truth, 3) == 0.0);
  CHECK(multi_step_cost(wrong, truth, 1) == doctest::Approx(flow_cost(a, b)));
  double prev = 0.0;
  for (int h = 1; h <= 3; ++h) {
    double c = multi_step_cost(wrong, truth, h);
    CHECK(c >= prev);
    prev = c;
  }
  CHECK(multi_step_cost(wrong, truth, 3) ==
        doctest::Approx(3.0 * flow_cost(a, b)).epsilon(1e-12));
  CHECK_THROWS_AS(multi_step_cost(wrong, truth, 4), InvalidInputError);
  CHECK_THROWS_AS(multi_step_cost(wrong, truth, 0), ConfigError);
}

TEST_CASE("gradient check harness passes at tight tolerances") {
  GradcheckConfig cfg;
  cfg.k = 4;
  cfg.trials = 10;
  cfg.seed = 3;
  GradcheckReport report = gradcheck(cfg);
  CHECK(report.pass);
  CHECK(report.skipped == 0);
  CHECK(report.backward_unconverged == 0);
  CHECK(report.max_rel_fd <= 1e-4);
  CHECK(report.max_rel_unrolled <= 1e-5);
  CHECK(report.max_iter_ratio <= 10.0);

  SUBCASE("the report is reproducible") {
    GradcheckReport again = gradcheck(cfg);
    CHECK(report.to_json() == again.to_json());
  }
  SUBCASE("a zero upstream gradient gives exactly zero everywhere") {
    Rng rng(9);
    Matrix m = rng.uniform_matrix(3, 3, -2.0, 2.0);
    Matrix zero(3, 3);
    DoublyStochasticMatrix fwd = sinkhorn_forward(m, cfg.sinkhorn);
    Matrix analytic = sinkhorn_backward(fwd.s, zero, cfg.sinkhorn);
    Matrix fd = finite_difference_grad(m, zero, cfg.sinkhorn);
    CHECK(max_abs_diff(analytic, zero) == 0.0);
    CHECK(max_abs_diff(fd, zero) == 0.0);
  }
}

TEST_CASE("a sloppy forward solve makes the gradient check fail") {
  // Negative control: the analytic backward assumes a converged doubly
  // stochastic point, so a barely normalized forward must blow the bounds.
  GradcheckConfig cfg;
  cfg.k = 3;
  cfg.trials = 5;
  cfg.seed = 1;
  cfg.sinkhorn.tol = 1e-1;
  cfg.sinkhorn.max_iters = 100;
  GradcheckReport report = gradcheck(cfg);
  CHECK_FALSE(report.pass);
  CHECK(report.max_rel_fd > report.fd_threshold);
}

TEST_CASE("gradcheck rejects degenerate configs") {
  GradcheckConfig cfg;
  cfg.trials = 0;
  CHECK_THROWS_AS(gradcheck(cfg), ConfigError);
  cfg.trials = 1;
  cfg.k = 1;
  CHECK_THROWS_AS(gradcheck(cfg), ConfigError);
  cfg.k = 3;
  cfg.fd_step = 0.0;
  CHECK_THROWS_AS(gradcheck(cfg), ConfigError);
}

TEST_CASE("experiments score every requested method on the test window") {
  FactionTimeline tl = mixing_timeline(400, 40, 77);
  ExperimentConfig cfg;
  cfg.split = {30, 4, 4};
  cfg.methods = {"identity", "avg", "lr", "mlp", "sinkflow"};
  cfg.loss_mix_grid = {0.5};
  cfg.seeds = {1};
  cfg.hidden = 8;
  cfg.epochs = 30;
  cfg.horizons = {1, 3};
  EvalReport report = run_experiment(tl, cfg);
  REQUIRE(report.methods.size() == 5);

  auto [marginals, plans] = build_marginals_and_plans(tl);
  SplitRanges ranges = split(plans, marginals, cfg.split);

  for (const MethodResult& m : report.methods) {
    INFO(m.method, ": ", m.error);
    CHECK(m.ok);
    CHECK(m.per_step.size() == static_cast<size_t>(ranges.test.size()));
    CHECK(m.flow_cost_mean >= 0.0);
    CHECK(m.flow_cost_sum >=
          m.flow_cost_mean * static_cast<double>(m.per_step.size()) - 1e-12);
    CHECK(m.faction_rmse_mean >= 0.0);
  }

  SUBCASE("identity entries match the closed form") {
    const MethodResult& identity = find_method(report, "identity");
    size_t idx = 0;
    double want_rmse = 0.0;
    for (int t = ranges.test.begin; t < ranges.test.end; ++t, ++idx) {
      CHECK(identity.per_step[idx] ==
            doctest::Approx(flow_cost(plans[t], identity_predict(marginals[t])))
                .epsilon(1e-12));
      want_rmse += faction_rmse(marginals[t + 1], marginals[t]);
    }
    want_rmse /= static_cast<double>(ranges.test.size());
    CHECK(identity.faction_rmse_mean == doctest::Approx(want_rmse).epsilon(1e-12));
    // Repeating the anchor's diagonal plan keeps adding positive cost on a
    // mixing kernel, so the cumulative cost grows strictly with horizon.
    CHECK(identity.multi_step.at(3) > identity.multi_step.at(1));
  }
  SUBCASE("multi-step costs are nondecreasing in the horizon") {
    for (const MethodResult& m : report.methods) {
      if (m.multi_step.empty()) continue;
      CHECK(m.multi_step.at(1) <= m.multi_step.at(3) + 1e-12);
    }
    CHECK(find_method(report, "lr").multi_step.empty());
    CHECK(find_method(report, "mlp").multi_step.empty());
  }
  SUBCASE("reports are reproducible") {
    EvalReport again = run_experiment(tl, cfg);
    CHECK(report.to_json() == again.to_json());
  }
}

TEST_CASE("a failing method is recorded without poisoning the others") {
  FactionTimeline tl = mixing_timeline(200, 40, 3);
  ExperimentConfig cfg;
  cfg.split = {30, 0, 6};  // no validation window
  cfg.methods = {"identity", "sinkflow"};
  cfg.loss_mix_grid = {0.2, 0.4};  // selection now needs validation -> fails
  cfg.seeds = {1};
  cfg.epochs = 5;
  cfg.hidden = 4;
  EvalReport report = run_experiment(tl, cfg);
  const MethodResult& identity = find_method(report, "identity");
  const MethodResult& sink = find_method(report, "sinkflow");
  CHECK(identity.ok);
  CHECK_FALSE(sink.ok);
  CHECK(sink.error.find("validation") != std::string::npos);
  nlohmann::json j = report.to_json();
  CHECK(j["methods"]["sinkflow"]["ok"] == false);
  CHECK(j["methods"]["identity"]["ok"] == true);
}

TEST_CASE("experiment configs are validated up front") {
  FactionTimeline tl = mixing_timeline(100, 20, 4);
  ExperimentConfig cfg;
  cfg.split = {10, 2, 4};
  cfg.methods = {"identity"};

  SUBCASE("unknown method") {
    cfg.methods = {"oracle"};
    CHECK_THROWS_AS(run_experiment(tl, cfg), ConfigError);
  }
  SUBCASE("no methods") {
    cfg.methods = {};
    CHECK_THROWS_AS(run_experiment(tl, cfg), ConfigError);
  }
  SUBCASE("bad horizon") {
    cfg.horizons = {0};
    CHECK_THROWS_AS(run_experiment(tl, cfg), ConfigError);
  }
  SUBCASE("horizon larger than the test window") {
    cfg.horizons = {40};
    CHECK_THROWS_AS(run_experiment(tl, cfg), ConfigError);
  }
  SUBCASE("split larger than the series") {
    cfg.split = {100, 10, 20};
    CHECK_THROWS_AS(run_experiment(tl, cfg), InvalidInputError);
  }
}
