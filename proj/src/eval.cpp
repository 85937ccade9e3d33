#include "sinkflow/eval.hpp"

#include <algorithm>
#include <cmath>

#include "sinkflow/baselines.hpp"
#include "sinkflow/model.hpp"
#include "sinkflow/oracles.hpp"
#include "sinkflow/rng.hpp"

namespace sinkflow {

namespace {

double frobenius_norm(const Matrix& m) {
  double sum = 0.0;
  for (size_t i = 0; i < m.size(); ++i) sum += m.data()[i] * m.data()[i];
  return std::sqrt(sum);
}

double relative_error(const Matrix& got, const Matrix& want) {
  return frobenius_distance(got, want) / std::max(frobenius_norm(want), 1e-12);
}

std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) out[j] += m(i, j);
  return out;
}

double mean(const std::vector<double>& v) {
  double sum = 0.0;
  for (double x : v) sum += x;
  return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
}

}  // namespace

double flow_cost(const Matrix& p_true, const Matrix& p_hat) {
  if (p_true.rows() != p_hat.rows() || p_true.cols() != p_hat.cols())
    throw DimensionError("flow_cost: shapes " + std::to_string(p_true.rows()) + "x" +
                         std::to_string(p_true.cols()) + " vs " +
                         std::to_string(p_hat.rows()) + "x" +
                         std::to_string(p_hat.cols()));
  return frobenius_distance(p_true, p_hat);
}

double faction_rmse(const std::vector<double>& x_true, const std::vector<double>& x_hat) {
  if (x_true.size() != x_hat.size() || x_true.empty())
    throw DimensionError("faction_rmse: lengths " + std::to_string(x_true.size()) +
                         " vs " + std::to_string(x_hat.size()));
  double sum = 0.0;
  for (size_t i = 0; i < x_true.size(); ++i) {
    double d = x_true[i] - x_hat[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(x_true.size()));
}

double multi_step_cost(const std::vector<Matrix>& predicted,
                       const std::vector<Matrix>& truth, int h) {
  if (h < 1) throw ConfigError("multi_step_cost: horizon must be >= 1");
  if (static_cast<size_t>(h) > predicted.size() || static_cast<size_t>(h) > truth.size())
    throw InvalidInputError("multi_step_cost: horizon " + std::to_string(h) +
                            " exceeds the available plans (" +
                            std::to_string(predicted.size()) + " predicted, " +
                            std::to_string(truth.size()) + " truth)");
  double total = 0.0;
  for (int j = 0; j < h; ++j) total += flow_cost(truth[j], predicted[j]);
  return total;
}

nlohmann::json GradcheckReport::to_json() const {
  return {{"k", k},
          {"trials", trials},
          {"skipped", skipped},
          {"backward_unconverged", backward_unconverged},
          {"seed", seed},
          {"max_rel_fd", max_rel_fd},
          {"max_rel_unrolled", max_rel_unrolled},
          {"max_iter_ratio", max_iter_ratio},
          {"fd_threshold", fd_threshold},
          {"unrolled_threshold", unrolled_threshold},
          {"pass", pass}};
}

GradcheckReport gradcheck(const GradcheckConfig& cfg) {
  if (cfg.k < 2) throw ConfigError("gradcheck: need k >= 2");
  if (cfg.trials < 1) throw ConfigError("gradcheck: need trials >= 1");
  if (cfg.fd_step <= 0.0) throw ConfigError("gradcheck: need fd_step > 0");

  struct Trial {
    bool skipped = false;
    bool backward_converged = true;
    double rel_fd = 0.0;
    double rel_unrolled = 0.0;
    double iter_ratio = 0.0;
  };
  std::vector<Trial> trials(cfg.trials);

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < cfg.trials; ++i) {
    Rng rng = Rng::stream(cfg.seed, static_cast<uint64_t>(i));
    Matrix potentials = rng.uniform_matrix(cfg.k, cfg.k, -5.0, 5.0);
    Matrix upstream = rng.uniform_matrix(cfg.k, cfg.k, -1.0, 1.0);
    DoublyStochasticMatrix forward = sinkhorn_forward(potentials, cfg.sinkhorn);
    if (!forward.converged) {
      trials[i].skipped = true;
      continue;
    }
    BackwardWorkspace ws;
    Matrix analytic = sinkhorn_backward(forward.s, upstream, cfg.sinkhorn, &ws);
    Matrix fd = finite_difference_grad(potentials, upstream, cfg.sinkhorn, cfg.fd_step);
    UnrolledGradient unrolled = unrolled_gradient(potentials, upstream, cfg.sinkhorn);
    trials[i].backward_converged = ws.converged;
    trials[i].rel_fd = relative_error(analytic, fd);
    trials[i].rel_unrolled = relative_error(analytic, unrolled.grad);
    trials[i].iter_ratio = static_cast<double>(ws.iterations_used) /
                           std::max(1, forward.iterations_used);
  }

  GradcheckReport report;
  report.k = cfg.k;
  report.trials = cfg.trials;
  report.seed = cfg.seed;
  report.fd_threshold = cfg.fd_threshold;
  report.unrolled_threshold = cfg.unrolled_threshold;
  for (const Trial& t : trials) {
    if (t.skipped) {
      ++report.skipped;
      continue;
    }
    if (!t.backward_converged) ++report.backward_unconverged;
    report.max_rel_fd = std::max(report.max_rel_fd, t.rel_fd);
    report.max_rel_unrolled = std::max(report.max_rel_unrolled, t.rel_unrolled);
    report.max_iter_ratio = std::max(report.max_iter_ratio, t.iter_ratio);
  }
  report.pass = report.skipped < report.trials &&
                report.backward_unconverged == 0 &&
                report.max_rel_fd <= report.fd_threshold &&
                report.max_rel_unrolled <= report.unrolled_threshold;
  return report;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"split",
           {{"train_len", split.train_len},
            {"val_len", split.val_len},
            {"test_len", split.test_len}}},
          {"methods", methods},
          {"loss_mix_grid", loss_mix_grid},
          {"seeds", seeds},
          {"hidden", hidden},
          {"learning_rate", learning_rate},
          {"momentum", momentum},
          {"epochs", epochs},
          {"sinkhorn",
           {{"max_iters", sinkhorn.max_iters},
            {"tol", sinkhorn.tol},
            {"backward_max_iters", sinkhorn.backward_max_iters},
            {"backward_tol", sinkhorn.backward_tol},
            {"log_domain", sinkhorn.log_domain}}},
          {"horizons", horizons}};
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["config"] = config;
  nlohmann::json ms = nlohmann::json::object();
  for (const MethodResult& m : methods) {
    nlohmann::json entry;
    entry["ok"] = m.ok;
    if (!m.ok) {
      entry["error"] = m.error;
      ms[m.method] = std::move(entry);
      continue;
    }
    entry["flow_cost_mean"] = m.flow_cost_mean;
    entry["flow_cost_sum"] = m.flow_cost_sum;
    entry["faction_rmse"] = m.faction_rmse_mean;
    entry["per_step"] = m.per_step;
    nlohmann::json multi = nlohmann::json::object();
    for (const auto& [h, cost] : m.multi_step) multi[std::to_string(h)] = cost;
    entry["multi_step"] = std::move(multi);
    if (!m.seeds.empty()) {
      entry["seeds"] = m.seeds;
      entry["per_seed_flow_cost_mean"] = m.per_seed_flow_cost_mean;
    }
    if (!std::isnan(m.selected_loss_mix)) {
      entry["selected_loss_mix"] = m.selected_loss_mix;
      nlohmann::json val = nlohmann::json::object();
      char key[32];
      for (const auto& [mix, cost] : m.validation_costs) {
        std::snprintf(key, sizeof key, "%g", mix);
        val[key] = cost;
      }
      entry["validation_flow_cost"] = std::move(val);
    }
    ms[m.method] = std::move(entry);
  }
  j["methods"] = std::move(ms);
  return j;
}

namespace {

struct ExperimentData {
  std::vector<std::vector<double>> marginals;
  std::vector<Matrix> plans;
  SplitRanges ranges;
  std::vector<int> test_anchors;  // plan indices scored one-step
  std::vector<int> ms_anchors;    // anchors rolled out to the largest horizon
  int max_horizon = 0;
};

// Per-anchor one-step scores shared by every method.
struct StepScores {
  std::vector<double> costs;
  std::vector<double> rmses;
};

template <typename Predict>
StepScores score_one_step(const ExperimentData& data, Predict&& predict) {
  StepScores s;
  for (int t : data.test_anchors) {
    Matrix plan = predict(t);
    s.costs.push_back(flow_cost(data.plans[t], plan));
    s.rmses.push_back(faction_rmse(data.marginals[t + 1], column_sums(plan)));
  }
  return s;
}

void fill_from_scores(MethodResult& r, const StepScores& s) {
  r.per_step = s.costs;
  r.flow_cost_mean = mean(s.costs);
  r.flow_cost_sum = 0.0;
  for (double c : s.costs) r.flow_cost_sum += c;
  r.faction_rmse_mean = mean(s.rmses);
}

// Cumulative rollout cost summed over the shared anchor set.
template <typename Rollout>
void fill_multi_step(MethodResult& r, const ExperimentData& data,
                     const std::vector<int>& horizons, Rollout&& rollout_at) {
  if (horizons.empty()) return;
  std::vector<std::vector<Matrix>> rollouts;
  rollouts.reserve(data.ms_anchors.size());
  for (int t : data.ms_anchors) rollouts.push_back(rollout_at(t, data.max_horizon));
  for (int h : horizons) {
    double total = 0.0;
    for (size_t a = 0; a < data.ms_anchors.size(); ++a) {
      std::vector<Matrix> truth(data.plans.begin() + data.ms_anchors[a],
                                data.plans.begin() + data.ms_anchors[a] + h);
      total += multi_step_cost(rollouts[a], truth, h);
    }
    r.multi_step[h] = total;
  }
}

MethodResult eval_identity(const ExperimentData& data, const ExperimentConfig& cfg) {
  MethodResult r;
  r.method = "identity";
  fill_from_scores(r, score_one_step(data, [&](int t) {
                     return identity_predict(data.marginals[t]);
                   }));
  // Feeding the prediction back never moves mass, so every rollout step
  // repeats the anchor's diagonal plan.
  fill_multi_step(r, data, cfg.horizons, [&](int t, int h) {
    return std::vector<Matrix>(h, identity_predict(data.marginals[t]));
  });
  r.ok = true;
  return r;
}

MethodResult eval_avg(const ExperimentData& data, const ExperimentConfig& cfg) {
  MethodResult r;
  r.method = "avg";
  fill_from_scores(r, score_one_step(data, [&](int t) {
                     return average_history_predict(data.plans[t - 1], data.plans[t - 2],
                                                    data.marginals[t]);
                   }));
  fill_multi_step(r, data, cfg.horizons, [&](int t, int h) {
    std::vector<Matrix> out;
    Matrix b1 = data.plans[t - 1];
    Matrix b2 = data.plans[t - 2];
    std::vector<double> x = data.marginals[t];
    for (int j = 0; j < h; ++j) {
      Matrix plan = average_history_predict(b1, b2, x);
      x = column_sums(plan);
      b2 = std::move(b1);
      b1 = plan;
      out.push_back(std::move(plan));
    }
    return out;
  });
  r.ok = true;
  return r;
}

template <typename Model, typename Predict>
MethodResult eval_classifier(const char* name, const ExperimentData& data,
                             const FactionTimeline& tl, const Model& model,
                             Predict&& predict) {
  MethodResult r;
  r.method = name;
  fill_from_scores(r, score_one_step(data, [&](int t) {
                     return predict(model, histories_at(tl, t));
                   }));
  // No multi-step entry: the soft per-element aggregation has no element
  // state to roll forward.
  r.ok = true;
  return r;
}

MethodResult eval_sinkflow(const ExperimentData& data, const FactionTimeline& tl,
                           const ExperimentConfig& cfg) {
  MethodResult r;
  r.method = "sinkflow";
  const int k = tl.k;
  const int hidden = cfg.hidden > 0 ? cfg.hidden : 4 * k * k;
  if (cfg.loss_mix_grid.empty()) throw ConfigError("sinkflow: empty loss mix grid");
  if (cfg.seeds.empty()) throw ConfigError("sinkflow: empty seed list");
  if (cfg.loss_mix_grid.size() > 1 && data.ranges.val.size() == 0)
    throw ConfigError("sinkflow: loss mix selection needs a validation window");

  std::vector<TrainSample> train_set =
      build_samples(data.marginals, data.plans, 2, data.ranges.train.end);

  // One trained net per (mix, seed); selection compares mean validation flow
  // cost across seeds, ties break toward the earlier grid entry.
  const size_t n_mix = cfg.loss_mix_grid.size();
  const size_t n_seed = cfg.seeds.size();
  std::vector<FeedForwardNet> nets(n_mix * n_seed);
  std::vector<double> val_cost(n_mix, 0.0);
  for (size_t mi = 0; mi < n_mix; ++mi) {
    double mix = cfg.loss_mix_grid[mi];
    for (size_t si = 0; si < n_seed; ++si) {
      LossConfig lc;
      lc.loss_mix = mix;
      lc.learning_rate = cfg.learning_rate;
      lc.epochs = cfg.epochs;
      lc.momentum = cfg.momentum;
      FeedForwardNet init =
          make_net(3 * k + 2 * k * k, {hidden}, k * k, cfg.seeds[si]);
      TrainResult tr = train(train_set, init, lc, cfg.sinkhorn);
      double seed_val = 0.0;
      int val_steps = 0;
      for (int t = data.ranges.val.begin; t < data.ranges.val.end; ++t) {
        ModelInput input = make_model_input(data.marginals, data.plans, t);
        seed_val += flow_cost(data.plans[t],
                              predict_plan(input, tr.params, cfg.sinkhorn).plan);
        ++val_steps;
      }
      val_cost[mi] += val_steps > 0 ? seed_val / val_steps : 0.0;
      nets[mi * n_seed + si] = std::move(tr.params);
    }
    val_cost[mi] /= static_cast<double>(n_seed);
    r.validation_costs[mix] = val_cost[mi];
  }
  size_t best = 0;
  for (size_t mi = 1; mi < n_mix; ++mi)
    if (val_cost[mi] < val_cost[best]) best = mi;
  r.selected_loss_mix = cfg.loss_mix_grid[best];
  r.seeds = cfg.seeds;

  std::vector<double> step_acc(data.test_anchors.size(), 0.0);
  double rmse_acc = 0.0;
  std::map<int, double> ms_acc;
  for (size_t si = 0; si < n_seed; ++si) {
    const FeedForwardNet& net = nets[best * n_seed + si];
    StepScores s = score_one_step(data, [&](int t) {
      ModelInput input = make_model_input(data.marginals, data.plans, t);
      return predict_plan(input, net, cfg.sinkhorn).plan;
    });
    r.per_seed_flow_cost_mean.push_back(mean(s.costs));
    for (size_t i = 0; i < s.costs.size(); ++i) step_acc[i] += s.costs[i];
    rmse_acc += mean(s.rmses);
    MethodResult seed_ms;
    fill_multi_step(seed_ms, data, cfg.horizons, [&](int t, int h) {
      ModelInput input = make_model_input(data.marginals, data.plans, t);
      return rollout(input, net, h, cfg.sinkhorn);
    });
    for (const auto& [h, cost] : seed_ms.multi_step) ms_acc[h] += cost;
  }
  const double inv_seeds = 1.0 / static_cast<double>(n_seed);
  for (double& c : step_acc) c *= inv_seeds;
  r.per_step = step_acc;
  r.flow_cost_mean = mean(r.per_seed_flow_cost_mean);
  r.flow_cost_sum = 0.0;
  for (double c : step_acc) r.flow_cost_sum += c;
  r.faction_rmse_mean = rmse_acc * inv_seeds;
  for (const auto& [h, cost] : ms_acc) r.multi_step[h] = cost * inv_seeds;
  r.ok = true;
  return r;
}

}  // namespace

EvalReport run_experiment(const FactionTimeline& timeline, const ExperimentConfig& cfg) {
  timeline.validate();
  if (cfg.methods.empty()) throw ConfigError("run_experiment: no methods requested");
  static const std::vector<std::string> known = {"identity", "avg", "lr", "mlp",
                                                 "sinkflow"};
  for (const std::string& m : cfg.methods)
    if (std::find(known.begin(), known.end(), m) == known.end())
      throw ConfigError("run_experiment: unknown method '" + m +
                        "' (expected identity, avg, lr, mlp, or sinkflow)");
  for (int h : cfg.horizons)
    if (h < 1) throw ConfigError("run_experiment: horizons must be >= 1");

  ExperimentData data;
  auto built = build_marginals_and_plans(timeline);
  data.marginals = std::move(built.first);
  data.plans = std::move(built.second);
  data.ranges = split(data.plans, data.marginals, cfg.split);
  if (data.ranges.train.end < 3)
    throw ConfigError("run_experiment: train window too short for lag-3 inputs");
  for (int t = std::max(2, data.ranges.test.begin); t < data.ranges.test.end; ++t)
    data.test_anchors.push_back(t);
  if (data.test_anchors.empty())
    throw ConfigError("run_experiment: empty test window");
  if (!cfg.horizons.empty()) {
    data.max_horizon = *std::max_element(cfg.horizons.begin(), cfg.horizons.end());
    for (int t = std::max(2, data.ranges.test.begin);
         t + data.max_horizon <= data.ranges.test.end; ++t)
      data.ms_anchors.push_back(t);
    if (data.ms_anchors.empty())
      throw ConfigError("run_experiment: no test anchor can fit horizon " +
                        std::to_string(data.max_horizon));
  }

  EvalReport report;
  report.config = cfg.to_json();
  for (const std::string& name : cfg.methods) {
    MethodResult result;
    try {
      if (name == "identity") {
        result = eval_identity(data, cfg);
      } else if (name == "avg") {
        result = eval_avg(data, cfg);
      } else if (name == "lr") {
        auto samples = history_samples(timeline, 2, data.ranges.train.end);
        LogisticModel model = train_lr(samples, timeline.k);
        result = eval_classifier("lr", data, timeline, model,
                                 [](const LogisticModel& m,
                                    const std::vector<ElementHistory>& hs) {
                                   return lr_predict(m, hs);
                                 });
      } else if (name == "mlp") {
        auto samples = history_samples(timeline, 2, data.ranges.train.end);
        MlpConfig mc;
        mc.seed = cfg.seeds.empty() ? 0 : cfg.seeds.front();
        MlpClassifier model = train_mlp(samples, timeline.k, mc);
        result = eval_classifier("mlp", data, timeline, model,
                                 [](const MlpClassifier& m,
                                    const std::vector<ElementHistory>& hs) {
                                   return mlp_predict(m, hs);
                                 });
      } else {
        result = eval_sinkflow(data, timeline, cfg);
      }
    } catch (const std::exception& e) {
      result = MethodResult{};
      result.method = name;
      result.ok = false;
      result.error = e.what();
    }
    report.methods.push_back(std::move(result));
  }
  return report;
}

}  // namespace sinkflow
