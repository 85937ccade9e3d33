#include "sinkflow/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sinkflow/jsonio.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sinkflow {

namespace {

void check_loss_config(const LossConfig& cfg, bool for_training) {
  if (cfg.loss_mix < 0.0 || cfg.loss_mix > 1.0)
    throw ConfigError("loss_mix must lie in [0, 1], got " + std::to_string(cfg.loss_mix));
  if (for_training) {
    if (cfg.learning_rate <= 0.0)
      throw ConfigError("learning_rate must be > 0, got " +
                        std::to_string(cfg.learning_rate));
    if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
      throw ConfigError("momentum must lie in [0, 1), got " +
                        std::to_string(cfg.momentum));
  }
}

void check_marginal(const std::vector<double>& x, int k, double tol, const char* name) {
  if (static_cast<int>(x.size()) != k)
    throw DimensionError(std::string("ModelInput: ") + name + " has length " +
                         std::to_string(x.size()) + ", expected " + std::to_string(k));
  double sum = 0.0;
  for (double v : x) {
    if (!std::isfinite(v) || v < 0.0)
      throw InvalidInputError(std::string("ModelInput: ") + name +
                              " has a negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > tol)
    throw InvalidInputError(std::string("ModelInput: ") + name + " sums to " +
                            std::to_string(sum) + ", outside 1 +- " +
                            std::to_string(tol));
}

void check_plan_feature(const Matrix& p, int k, const char* name) {
  if (p.rows() != k || p.cols() != k)
    throw DimensionError(std::string("ModelInput: ") + name + " is " +
                         std::to_string(p.rows()) + "x" + std::to_string(p.cols()) +
                         ", expected " + std::to_string(k) + "x" + std::to_string(k));
  for (double v : p.values())
    if (!std::isfinite(v) || v < 0.0)
      throw InvalidInputError(std::string("ModelInput: ") + name +
                              " has a negative or non-finite entry");
}

// Per-sample forward + backward. Accumulates the parameter gradient into
// `grads` and returns the sample loss. All scratch comes from the caller so
// tight loops stay allocation-light.
double sample_gradient(const TrainSample& sample, const FeedForwardNet& net,
                       const LossConfig& loss_cfg, const SinkhornConfig& sink_cfg,
                       NetActivations& acts, BackwardWorkspace& bw,
                       NetGradients& grads) {
  const int k = sample.input.k();
  net_forward(net, sample.input.features(), acts);
  const std::vector<double>& out = acts.outs.back();
  Matrix m(k, k);
  std::copy(out.begin(), out.end(), m.values().begin());
  DoublyStochasticMatrix ds = sinkhorn_forward(m, sink_cfg);

  const double lam = loss_cfg.loss_mix;
  const std::vector<double>& x = sample.input.x_t;
  // P = diag(x) S; plan residual and column-sum residual feed both loss terms.
  Matrix dplan(k, k);
  std::vector<double> colsum(k, 0.0);
  double plan_err = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      double phat = x[i] * ds.s(i, j);
      double r = phat - sample.target_plan(i, j);
      dplan(i, j) = r;
      plan_err += r * r;
      colsum[j] += phat;
    }
  double marg_err = 0.0;
  for (int j = 0; j < k; ++j) {
    colsum[j] -= sample.target_next[j];
    marg_err += colsum[j] * colsum[j];
  }
  double sample_loss = (1.0 - lam) * plan_err + lam * marg_err;

  // dLoss/dS = diag(x) dLoss/dP.
  Matrix dls(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      dls(i, j) = x[i] * (2.0 * (1.0 - lam) * dplan(i, j) + 2.0 * lam * colsum[j]);
  Matrix dm = sinkhorn_backward(ds.s, dls, sink_cfg, &bw);
  net_backward(net, acts, dm.values(), grads);
  return sample_loss;
}

void check_dataset(const std::vector<TrainSample>& dataset, const FeedForwardNet& net) {
  if (dataset.empty()) throw InvalidInputError("train: dataset is empty");
  const int k = dataset.front().input.k();
  for (size_t i = 0; i < dataset.size(); ++i) {
    const TrainSample& s = dataset[i];
    if (s.input.k() != k || s.target_plan.rows() != k || s.target_plan.cols() != k ||
        static_cast<int>(s.target_next.size()) != k)
      throw DimensionError("train: sample " + std::to_string(i) +
                           " disagrees on k with the first sample");
  }
  if (net.output_dim != k * k)
    throw ConfigError("train: network emits " + std::to_string(net.output_dim) +
                      " values, need k^2 = " + std::to_string(k * k));
  if (net.input_dim != 3 * k + 2 * k * k)
    throw ConfigError("train: network takes " + std::to_string(net.input_dim) +
                      " inputs, lag window has " + std::to_string(3 * k + 2 * k * k));
}

}  // namespace

std::vector<double> ModelInput::features() const {
  const int n = k();
  std::vector<double> f;
  f.reserve(3 * n + 2 * n * n);
  f.insert(f.end(), x_t.begin(), x_t.end());
  f.insert(f.end(), b_t.values().begin(), b_t.values().end());
  f.insert(f.end(), x_tm1.begin(), x_tm1.end());
  f.insert(f.end(), b_tm1.values().begin(), b_tm1.values().end());
  f.insert(f.end(), x_tm2.begin(), x_tm2.end());
  return f;
}

void ModelInput::validate(double marginal_tol) const {
  const int n = k();
  if (n < 2) throw DimensionError("ModelInput: need k >= 2, got " + std::to_string(n));
  check_marginal(x_t, n, marginal_tol, "x_t");
  check_marginal(x_tm1, n, marginal_tol, "x_tm1");
  check_marginal(x_tm2, n, marginal_tol, "x_tm2");
  check_plan_feature(b_t, n, "b_t");
  check_plan_feature(b_tm1, n, "b_tm1");
}

PlanPrediction predict_plan(const ModelInput& input, const FeedForwardNet& params,
                            const SinkhornConfig& cfg) {
  const int k = input.k();
  // Rollout feeds P^T 1 back in as a marginal; its sum drifts from 1 by at
  // most the forward residual per step, so the simplex check gets that slack.
  input.validate(1e-9 + 10.0 * k * cfg.tol);
  if (params.output_dim != k * k)
    throw ConfigError("predict_plan: network emits " +
                      std::to_string(params.output_dim) + " values, need k^2 = " +
                      std::to_string(k * k));
  if (params.input_dim != 3 * k + 2 * k * k)
    throw ConfigError("predict_plan: network takes " + std::to_string(params.input_dim) +
                      " inputs, lag window has " + std::to_string(3 * k + 2 * k * k));

  NetActivations acts;
  net_forward(params, input.features(), acts);
  Matrix m(k, k);
  std::copy(acts.outs.back().begin(), acts.outs.back().end(), m.values().begin());

  PlanPrediction pred;
  pred.head = sinkhorn_forward(m, cfg);
  pred.plan = Matrix(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) pred.plan(i, j) = input.x_t[i] * pred.head.s(i, j);
  return pred;
}

double loss(const Matrix& p_true, const Matrix& p_hat,
            const std::vector<double>& x_next, const LossConfig& cfg) {
  check_loss_config(cfg, false);
  if (p_true.rows() != p_hat.rows() || p_true.cols() != p_hat.cols())
    throw DimensionError("loss: plan shapes differ");
  if (!p_true.is_square())
    throw DimensionError("loss: plans must be square");
  const int k = p_true.rows();
  if (static_cast<int>(x_next.size()) != k)
    throw DimensionError("loss: x_next has length " + std::to_string(x_next.size()) +
                         ", expected " + std::to_string(k));
  double plan_err = 0.0;
  std::vector<double> colsum(k, 0.0);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      double r = p_hat(i, j) - p_true(i, j);
      plan_err += r * r;
      colsum[j] += p_hat(i, j);
    }
  double marg_err = 0.0;
  for (int j = 0; j < k; ++j) {
    double r = x_next[j] - colsum[j];
    marg_err += r * r;
  }
  return (1.0 - cfg.loss_mix) * plan_err + cfg.loss_mix * marg_err;
}

double batch_gradient_serial(const std::vector<TrainSample>& dataset,
                             const FeedForwardNet& net, const LossConfig& loss_cfg,
                             const SinkhornConfig& sink_cfg, NetGradients& grads) {
  check_dataset(dataset, net);
  check_loss_config(loss_cfg, false);
  grads.zero();
  NetActivations acts;
  BackwardWorkspace bw;
  double total = 0.0;
  for (size_t i = 0; i < dataset.size(); ++i) {
    double l = sample_gradient(dataset[i], net, loss_cfg, sink_cfg, acts, bw, grads);
    if (!std::isfinite(l))
      throw NumericError("batch gradient: non-finite loss at sample index " +
                         std::to_string(i));
    total += l;
  }
  return total;
}

double batch_gradient(const std::vector<TrainSample>& dataset,
                      const FeedForwardNet& net, const LossConfig& loss_cfg,
                      const SinkhornConfig& sink_cfg, NetGradients& grads) {
  check_dataset(dataset, net);
  check_loss_config(loss_cfg, false);

  // Fixed block size; each block reduces in sample order and blocks fold in
  // block order below, so the floating-point result does not depend on the
  // thread count.
  constexpr int kBlock = 8;
  const int n = static_cast<int>(dataset.size());
  const int nblocks = (n + kBlock - 1) / kBlock;
  std::vector<NetGradients> partial(nblocks, zero_gradients_like(net));
  std::vector<double> partial_loss(nblocks, 0.0);
  std::vector<long> bad_index(nblocks, -1);
  // Exceptions may not cross the parallel region; park them per block and
  // rethrow the earliest one afterwards.
  std::vector<std::exception_ptr> errors(nblocks);

#ifdef _OPENMP
#pragma omp parallel
#endif
  {
    NetActivations acts;
    BackwardWorkspace bw;
#ifdef _OPENMP
#pragma omp for schedule(dynamic)
#endif
    for (int blk = 0; blk < nblocks; ++blk) {
      const int lo = blk * kBlock, hi = std::min(n, lo + kBlock);
      double acc = 0.0;
      for (int i = lo; i < hi; ++i) {
        try {
          double l = sample_gradient(dataset[i], net, loss_cfg, sink_cfg, acts, bw,
                                     partial[blk]);
          if (!std::isfinite(l) && bad_index[blk] < 0) bad_index[blk] = i;
          acc += l;
        } catch (...) {
          errors[blk] = std::current_exception();
          bad_index[blk] = i;
          break;
        }
      }
      partial_loss[blk] = acc;
    }
  }

  for (int blk = 0; blk < nblocks; ++blk) {
    if (errors[blk]) {
      try {
        std::rethrow_exception(errors[blk]);
      } catch (const std::exception& e) {
        throw NumericError("batch gradient: sample index " +
                           std::to_string(bad_index[blk]) + ": " + e.what());
      }
    }
    if (bad_index[blk] >= 0)
      throw NumericError("batch gradient: non-finite loss at sample index " +
                         std::to_string(bad_index[blk]));
  }

  grads.zero();
  double total = 0.0;
  for (int blk = 0; blk < nblocks; ++blk) {
    grads.add_scaled(partial[blk], 1.0);
    total += partial_loss[blk];
  }
  return total;
}

TrainResult train(const std::vector<TrainSample>& dataset, const FeedForwardNet& init,
                  const LossConfig& loss_cfg, const SinkhornConfig& sink_cfg) {
  check_dataset(dataset, init);
  check_loss_config(loss_cfg, true);

  TrainResult result;
  result.params = init;
  result.loss_trace.reserve(loss_cfg.epochs);
  NetGradients grads = zero_gradients_like(init);
  NetGradients velocity;
  const bool use_momentum = loss_cfg.momentum > 0.0;
  if (use_momentum) velocity = zero_gradients_like(init);

  for (int epoch = 0; epoch < loss_cfg.epochs; ++epoch) {
    double total;
    try {
      total = batch_gradient(dataset, result.params, loss_cfg, sink_cfg, grads);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " in epoch " + std::to_string(epoch));
    }
    result.loss_trace.push_back(total);

    FeedForwardNet& p = result.params;
    if (use_momentum) {
      // velocity <- mu * velocity - lr * grad; params += velocity
      for (size_t l = 0; l < p.weights.size(); ++l) {
        for (size_t i = 0; i < p.weights[l].size(); ++i) {
          double& v = velocity.weights[l].data()[i];
          v = loss_cfg.momentum * v - loss_cfg.learning_rate * grads.weights[l].data()[i];
          p.weights[l].data()[i] += v;
        }
        for (size_t i = 0; i < p.biases[l].size(); ++i) {
          double& v = velocity.biases[l][i];
          v = loss_cfg.momentum * v - loss_cfg.learning_rate * grads.biases[l][i];
          p.biases[l][i] += v;
        }
      }
    } else {
      for (size_t l = 0; l < p.weights.size(); ++l) {
        for (size_t i = 0; i < p.weights[l].size(); ++i)
          p.weights[l].data()[i] -= loss_cfg.learning_rate * grads.weights[l].data()[i];
        for (size_t i = 0; i < p.biases[l].size(); ++i)
          p.biases[l][i] -= loss_cfg.learning_rate * grads.biases[l][i];
      }
    }
    for (size_t l = 0; l < p.weights.size(); ++l) {
      if (!all_finite(p.weights[l]) || !all_finite(p.biases[l]))
        throw NumericError("train: non-finite parameter after epoch " +
                           std::to_string(epoch) + " (layer " + std::to_string(l) +
                           "); lower the learning rate");
    }
  }
  return result;
}

std::vector<Matrix> rollout(const ModelInput& history, const FeedForwardNet& params,
                            int steps, const SinkhornConfig& cfg) {
  if (steps < 1) throw ConfigError("rollout: steps must be >= 1");
  const int k = history.k();
  std::vector<Matrix> plans;
  plans.reserve(steps);
  ModelInput cur = history;
  for (int j = 0; j < steps; ++j) {
    PlanPrediction pred = predict_plan(cur, params, cfg);
    plans.push_back(pred.plan);
    std::vector<double> x_next(k, 0.0);
    for (int i = 0; i < k; ++i)
      for (int c = 0; c < k; ++c) x_next[c] += pred.plan(i, c);
    cur.x_tm2 = std::move(cur.x_tm1);
    cur.x_tm1 = std::move(cur.x_t);
    cur.x_t = std::move(x_next);
    cur.b_tm1 = std::move(cur.b_t);
    cur.b_t = plans.back();
  }
  return plans;
}

ModelInput make_model_input(const std::vector<std::vector<double>>& marginals,
                            const std::vector<Matrix>& plans, int t) {
  if (t < 2)
    throw InvalidInputError("make_model_input: anchor " + std::to_string(t) +
                            " lacks two plans of history (need t >= 2)");
  if (t >= static_cast<int>(plans.size()) + 1 || t >= static_cast<int>(marginals.size()))
    throw InvalidInputError("make_model_input: anchor " + std::to_string(t) +
                            " is outside the series");
  ModelInput input;
  input.x_t = marginals[t];
  input.x_tm1 = marginals[t - 1];
  input.x_tm2 = marginals[t - 2];
  input.b_t = plans[t - 1];
  input.b_tm1 = plans[t - 2];
  return input;
}

std::vector<TrainSample> build_samples(const std::vector<std::vector<double>>& marginals,
                                       const std::vector<Matrix>& plans, int t_begin,
                                       int t_end) {
  if (t_begin < 2)
    throw InvalidInputError("build_samples: anchors start at t = 2, got " +
                            std::to_string(t_begin));
  if (t_end > static_cast<int>(plans.size()))
    throw InvalidInputError("build_samples: anchor range end " + std::to_string(t_end) +
                            " exceeds plan count " + std::to_string(plans.size()));
  std::vector<TrainSample> samples;
  samples.reserve(std::max(0, t_end - t_begin));
  for (int t = t_begin; t < t_end; ++t) {
    TrainSample s;
    s.input = make_model_input(marginals, plans, t);
    s.target_plan = plans[t];
    s.target_next = marginals[t + 1];
    samples.push_back(std::move(s));
  }
  return samples;
}

void save_model(const std::string& path, const ModelCheckpoint& ckpt) {
  nlohmann::json j;
  j["format"] = "sinkflow-model/1";
  j["net"]["input_dim"] = ckpt.net.input_dim;
  j["net"]["output_dim"] = ckpt.net.output_dim;
  j["net"]["hidden_sizes"] = ckpt.net.hidden_sizes;
  j["net"]["seed"] = ckpt.net.seed;
  nlohmann::json weights = nlohmann::json::array();
  for (const Matrix& w : ckpt.net.weights) weights.push_back(w.values());
  j["net"]["weights"] = std::move(weights);
  j["net"]["biases"] = ckpt.net.biases;
  j["loss_config"] = {{"loss_mix", ckpt.loss_cfg.loss_mix},
                      {"learning_rate", ckpt.loss_cfg.learning_rate},
                      {"epochs", ckpt.loss_cfg.epochs},
                      {"momentum", ckpt.loss_cfg.momentum}};
  j["sinkhorn"] = {{"max_iters", ckpt.sink_cfg.max_iters},
                   {"tol", ckpt.sink_cfg.tol},
                   {"backward_max_iters", ckpt.sink_cfg.backward_max_iters},
                   {"backward_tol", ckpt.sink_cfg.backward_tol},
                   {"log_domain", ckpt.sink_cfg.log_domain}};
  j["config"] = ckpt.config;
  atomic_write_text(path, canonical_dump(j));
}

ModelCheckpoint load_model(const std::string& path) {
  nlohmann::json j = parse_json_file(path);
  try {
    if (j.at("format") != "sinkflow-model/1")
      throw ParseError(path + ": unknown checkpoint format");
    ModelCheckpoint ckpt;
    const nlohmann::json& n = j.at("net");
    FeedForwardNet net = make_net(n.at("input_dim").get<int>(),
                                  n.at("hidden_sizes").get<std::vector<int>>(),
                                  n.at("output_dim").get<int>(),
                                  n.at("seed").get<uint64_t>());
    const auto& weights = n.at("weights");
    const auto& biases = n.at("biases");
    if (weights.size() != net.weights.size() || biases.size() != net.biases.size())
      throw ParseError(path + ": layer count does not match the declared sizes");
    for (size_t l = 0; l < net.weights.size(); ++l) {
      auto wl = weights[l].get<std::vector<double>>();
      auto bl = biases[l].get<std::vector<double>>();
      if (wl.size() != net.weights[l].size() || bl.size() != net.biases[l].size())
        throw ParseError(path + ": layer " + std::to_string(l) +
                         " has the wrong parameter count");
      std::copy(wl.begin(), wl.end(), net.weights[l].values().begin());
      net.biases[l] = std::move(bl);
    }
    ckpt.net = std::move(net);
    const nlohmann::json& lc = j.at("loss_config");
    ckpt.loss_cfg.loss_mix = lc.at("loss_mix").get<double>();
    ckpt.loss_cfg.learning_rate = lc.at("learning_rate").get<double>();
    ckpt.loss_cfg.epochs = lc.at("epochs").get<int>();
    ckpt.loss_cfg.momentum = lc.at("momentum").get<double>();
    const nlohmann::json& sc = j.at("sinkhorn");
    ckpt.sink_cfg.max_iters = sc.at("max_iters").get<int>();
    ckpt.sink_cfg.tol = sc.at("tol").get<double>();
    ckpt.sink_cfg.backward_max_iters = sc.at("backward_max_iters").get<int>();
    ckpt.sink_cfg.backward_tol = sc.at("backward_tol").get<double>();
    ckpt.sink_cfg.log_domain = sc.at("log_domain").get<bool>();
    if (j.contains("config")) ckpt.config = j.at("config");
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": malformed checkpoint: " + e.what());
  }
}

}  // namespace sinkflow
