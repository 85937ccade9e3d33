#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "sinkflow/dataio.hpp"
#include "sinkflow/sinkhorn.hpp"
#include "sinkflow/types.hpp"

#include <json.hpp>

namespace sinkflow {

// Frobenius distance between two plans of the same shape.
double flow_cost(const Matrix& p_true, const Matrix& p_hat);

// sqrt(mean squared coordinate error) between two marginals.
double faction_rmse(const std::vector<double>& x_true, const std::vector<double>& x_hat);

// Cumulative cost of a rollout against the truth aligned at the same anchor:
// sum of flow_cost over the first h steps of both sequences.
double multi_step_cost(const std::vector<Matrix>& predicted,
                       const std::vector<Matrix>& truth, int h);

// Gradient check of the normalization layer's analytic backward pass against
// two independently computed references: central finite differences of the
// converged forward map, and reverse-mode differentiation of the unrolled
// iteration. Potentials are drawn uniform [-5, 5], upstream gradients
// uniform [-1, 1], one fixed stream per trial.
struct GradcheckConfig {
  int k = 4;
  int trials = 50;
  uint64_t seed = 0;
  // Tight tolerances by default: the analytic backward assumes a converged
  // forward point, so the references must be evaluated at one.
  SinkhornConfig sinkhorn{.max_iters = 20000,
                          .tol = 1e-12,
                          .backward_max_iters = 20000,
                          .backward_tol = 1e-12};
  double fd_step = 1e-5;
  double fd_threshold = 1e-4;
  double unrolled_threshold = 1e-5;
};

struct GradcheckReport {
  int k = 0;
  int trials = 0;
  int skipped = 0;               // forward failed to converge, trial not scored
  int backward_unconverged = 0;  // analytic solve hit its sweep cap
  uint64_t seed = 0;
  double max_rel_fd = 0.0;
  double max_rel_unrolled = 0.0;
  double max_iter_ratio = 0.0;  // backward sweeps / forward sweeps, worst trial
  double fd_threshold = 0.0;
  double unrolled_threshold = 0.0;
  bool pass = false;

  nlohmann::json to_json() const;
};

GradcheckReport gradcheck(const GradcheckConfig& cfg = {});

// One experiment: split the series, train what needs training, pick the loss
// mix on validation flow cost, score everything on the test window.
struct ExperimentConfig {
  SplitSpec split{130, 10, 20};
  std::vector<std::string> methods = {"identity", "avg", "lr", "mlp", "sinkflow"};
  std::vector<double> loss_mix_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<uint64_t> seeds = {1, 2, 3};
  int hidden = 0;  // 0 picks 4*k*k
  double learning_rate = 2e-3;
  double momentum = 0.9;
  int epochs = 1200;
  SinkhornConfig sinkhorn;
  std::vector<int> horizons;  // cumulative multi-step costs to report

  nlohmann::json to_json() const;
};

struct MethodResult {
  std::string method;
  bool ok = false;
  std::string error;  // set when ok is false; other methods are unaffected
  double flow_cost_mean = 0.0;
  double flow_cost_sum = 0.0;
  double faction_rmse_mean = 0.0;
  std::vector<double> per_step;       // one-step test costs, anchor order
  std::map<int, double> multi_step;   // horizon -> cumulative cost over anchors
  std::vector<uint64_t> seeds;        // learned methods only
  std::vector<double> per_seed_flow_cost_mean;
  double selected_loss_mix = std::numeric_limits<double>::quiet_NaN();
  std::map<double, double> validation_costs;  // loss mix -> mean val cost
};

struct EvalReport {
  nlohmann::json config;
  std::vector<MethodResult> methods;

  nlohmann::json to_json() const;
};

EvalReport run_experiment(const FactionTimeline& timeline, const ExperimentConfig& cfg);

}  // namespace sinkflow
