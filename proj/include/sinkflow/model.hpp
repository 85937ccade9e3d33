#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sinkflow/net.hpp"
#include "sinkflow/sinkhorn.hpp"
#include "sinkflow/types.hpp"

namespace sinkflow {

// Lag window the predictor sees: current marginal, the two previous
// marginals, and the two most recent observed plans as exogenous features.
// b_t is the plan that ended at time t (flows t-1 -> t), b_tm1 the one
// before it.
struct ModelInput {
  std::vector<double> x_t, x_tm1, x_tm2;
  Matrix b_t, b_tm1;

  int k() const { return static_cast<int>(x_t.size()); }

  // [x_t : b_t : x_{t-1} : b_{t-1} : x_{t-2}], length 3k + 2k^2.
  std::vector<double> features() const;

  // Shape consistency, nonnegative entries, marginals on the simplex within
  // marginal_tol. Rollout feeds predicted marginals back in, which are exact
  // only up to the forward residual, hence the adjustable tolerance.
  void validate(double marginal_tol = 1e-9) const;
};

struct LossConfig {
  double loss_mix = 0.0;       // lambda: 0 = plan error only, 1 = marginal only
  double learning_rate = 1e-3;
  int epochs = 0;
  double momentum = 0.0;       // 0 = plain gradient descent
};

struct TrainSample {
  ModelInput input;
  Matrix target_plan;
  std::vector<double> target_next;
};

struct PlanPrediction {
  Matrix plan;                  // P = diag(x_t) S
  DoublyStochasticMatrix head;  // the S underneath, with its diagnostics
};

// Runs the network on the lag window, pushes the k x k output through the
// normalization layer, and scales rows by the current marginal. Row i of the
// result sums to (x_t)_i times that row's S sum, so row marginals hold up to
// the forward residual. Throws ConfigError when the network's dimensions do
// not fit the input's k.
PlanPrediction predict_plan(const ModelInput& input, const FeedForwardNet& params,
                            const SinkhornConfig& cfg = {});

// (1 - mix) * ||P_true - P_hat||_F^2 + mix * ||x_next - P_hat^T 1||_2^2.
double loss(const Matrix& p_true, const Matrix& p_hat,
            const std::vector<double>& x_next, const LossConfig& cfg);

// Summed loss over the dataset plus its parameter gradient, accumulated into
// `grads` (overwritten). The parallel version splits the dataset into fixed
// 8-sample blocks, reduces within each block in sample order, then folds the
// block partials serially in block order, so the result is bit-identical for
// any thread count. The serial reference below accumulates in plain sample
// order instead; it matches the blocked fold up to summation-order float
// noise and exists as an independent implementation for tests and benchmarks.
double batch_gradient(const std::vector<TrainSample>& dataset,
                      const FeedForwardNet& net, const LossConfig& loss_cfg,
                      const SinkhornConfig& sink_cfg, NetGradients& grads);
double batch_gradient_serial(const std::vector<TrainSample>& dataset,
                             const FeedForwardNet& net, const LossConfig& loss_cfg,
                             const SinkhornConfig& sink_cfg, NetGradients& grads);

struct TrainResult {
  FeedForwardNet params;
  std::vector<double> loss_trace;  // summed batch loss at the start of each epoch
};

// Full-batch gradient descent for loss_cfg.epochs passes, optional momentum.
// The epoch loop itself is serial; fixed seed means a bit-reproducible trace.
// Throws NumericError naming the offending sample when a loss goes NaN, or
// after an update that leaves a parameter non-finite.
TrainResult train(const std::vector<TrainSample>& dataset, const FeedForwardNet& init,
                  const LossConfig& loss_cfg, const SinkhornConfig& sink_cfg = {});

// Autoregressive prediction: the first plan comes from `history` as given;
// each further step shifts the lag window, inserting the predicted next
// marginal P^T 1 as the newest x and the predicted plan as the newest b.
std::vector<Matrix> rollout(const ModelInput& history, const FeedForwardNet& params,
                            int steps, const SinkhornConfig& cfg = {});

// Lag-window assembly from a marginal/plan series: the input at anchor t
// sees plans t-1 and t-2 and predicts plan t (so t >= 2).
ModelInput make_model_input(const std::vector<std::vector<double>>& marginals,
                            const std::vector<Matrix>& plans, int t);
std::vector<TrainSample> build_samples(const std::vector<std::vector<double>>& marginals,
                                       const std::vector<Matrix>& plans, int t_begin,
                                       int t_end);

struct ModelCheckpoint {
  FeedForwardNet net;
  LossConfig loss_cfg;
  SinkhornConfig sink_cfg;
  nlohmann::json config;  // effective run config echoed into the artifact
};

void save_model(const std::string& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_model(const std::string& path);

}  // namespace sinkflow
