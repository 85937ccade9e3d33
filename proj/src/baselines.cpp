#include "sinkflow/baselines.hpp"

#include <cmath>
#include <map>
#include <string>

namespace sinkflow {

namespace {

void check_history_labels(const ElementHistory& h, int k) {
  for (int label : {h.f_t, h.f_tm1, h.f_tm2})
    if (label < 0 || label >= k)
      throw InvalidInputError("history for element " + std::to_string(h.element_id) +
                              " has label " + std::to_string(label) +
                              " outside the trained range [0, " + std::to_string(k) + ")");
}

int triple_code(const ElementHistory& h, int k) {
  return (h.f_t * k + h.f_tm1) * k + h.f_tm2;
}

ElementHistory code_to_history(int code, int k) {
  ElementHistory h;
  h.f_tm2 = code % k;
  h.f_tm1 = (code / k) % k;
  h.f_t = code / (k * k);
  return h;
}

void softmax_inplace(std::vector<double>& z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

// Count-keyed training set: samples collapse onto distinct history triples,
// which keeps full-batch passes at O(k^3) forwards instead of O(N*T).
// The map key order makes accumulation independent of sample order.
std::map<int, std::vector<int64_t>> group_samples(
    const std::vector<HistorySample>& samples, int k) {
  if (samples.empty()) throw InvalidInputError("classifier training: no samples");
  std::map<int, std::vector<int64_t>> groups;
  for (const HistorySample& s : samples) {
    check_history_labels(s.history, k);
    if (s.next_label < 0 || s.next_label >= k)
      throw InvalidInputError("classifier training: target label " +
                              std::to_string(s.next_label) + " outside [0, " +
                              std::to_string(k) + ")");
    auto [it, fresh] = groups.try_emplace(triple_code(s.history, k));
    if (fresh) it->second.assign(k, 0);
    ++it->second[s.next_label];
  }
  return groups;
}

std::vector<double> one_hot_triple(const ElementHistory& h, int k) {
  std::vector<double> phi(3 * k, 0.0);
  phi[h.f_t] = 1.0;
  phi[k + h.f_tm1] = 1.0;
  phi[2 * k + h.f_tm2] = 1.0;
  return phi;
}

template <typename Proba>
Matrix aggregate_predictions(const std::vector<ElementHistory>& histories, int k,
                             Proba&& proba) {
  if (histories.empty()) throw InvalidInputError("predict: no element histories");
  std::map<int, int64_t> counts;
  for (const ElementHistory& h : histories) {
    check_history_labels(h, k);
    ++counts[triple_code(h, k)];
  }
  Matrix plan(k, k);
  const double n = static_cast<double>(histories.size());
  for (const auto& [code, count] : counts) {
    ElementHistory h = code_to_history(code, k);
    std::vector<double> p = proba(h);
    for (int j = 0; j < k; ++j) plan(h.f_t, j) += p[j] * (count / n);
  }
  return plan;
}

}  // namespace

Matrix identity_predict(const std::vector<double>& x_t) {
  if (x_t.empty()) throw DimensionError("identity_predict: empty marginal");
  const int k = static_cast<int>(x_t.size());
  Matrix plan(k, k);
  for (int i = 0; i < k; ++i) plan(i, i) = x_t[i];
  return plan;
}

Matrix average_history_predict(const Matrix& p_tm1, const Matrix& p_tm2,
                               const std::vector<double>& x_t) {
  const int k = static_cast<int>(x_t.size());
  if (k == 0) throw DimensionError("average_history_predict: empty marginal");
  if (!p_tm1.is_square() || p_tm1.rows() != k || !p_tm2.is_square() ||
      p_tm2.rows() != k)
    throw DimensionError("average_history_predict: plans must be " +
                         std::to_string(k) + "x" + std::to_string(k));
  Matrix plan(k, k);
  for (int i = 0; i < k; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < k; ++j) {
      plan(i, j) = 0.5 * (p_tm1(i, j) + p_tm2(i, j));
      row_sum += plan(i, j);
    }
    if (x_t[i] == 0.0) {
      for (int j = 0; j < k; ++j) plan(i, j) = 0.0;
    } else if (row_sum == 0.0) {
      plan(i, i) = x_t[i];
    } else {
      const double scale = x_t[i] / row_sum;
      for (int j = 0; j < k; ++j) plan(i, j) *= scale;
    }
  }
  return plan;
}

std::vector<ElementHistory> histories_at(const FactionTimeline& tl, int t) {
  tl.validate();
  if (t < 2 || t >= tl.T)
    throw InvalidInputError("histories_at: anchor " + std::to_string(t) +
                            " needs two predecessors within [0, " +
                            std::to_string(tl.T) + ")");
  std::vector<ElementHistory> out(tl.N);
  for (int e = 0; e < tl.N; ++e)
    out[e] = {e, tl.at(t, e), tl.at(t - 1, e), tl.at(t - 2, e)};
  return out;
}

std::vector<HistorySample> history_samples(const FactionTimeline& tl, int t_begin,
                                           int t_end) {
  tl.validate();
  if (t_begin < 2 || t_end > tl.T - 1 || t_begin >= t_end)
    throw InvalidInputError("history_samples: anchor range [" +
                            std::to_string(t_begin) + ", " + std::to_string(t_end) +
                            ") must lie within [2, " + std::to_string(tl.T - 1) + ")");
  std::vector<HistorySample> out;
  out.reserve(static_cast<size_t>(t_end - t_begin) * tl.N);
  for (int t = t_begin; t < t_end; ++t)
    for (int e = 0; e < tl.N; ++e)
      out.push_back({{e, tl.at(t, e), tl.at(t - 1, e), tl.at(t - 2, e)},
                     tl.at(t + 1, e)});
  return out;
}

std::vector<double> LogisticModel::predict_proba(const ElementHistory& h) const {
  check_history_labels(h, k);
  std::vector<double> z(k);
  for (int c = 0; c < k; ++c)
    z[c] = weights(c, h.f_t) + weights(c, k + h.f_tm1) + weights(c, 2 * k + h.f_tm2) +
           bias[c];
  softmax_inplace(z);
  return z;
}

LogisticModel train_lr(const std::vector<HistorySample>& samples, int k,
                       const LrConfig& cfg) {
  if (k < 2) throw ConfigError("train_lr: need k >= 2");
  if (cfg.learning_rate <= 0.0 || cfg.grad_tol < 0.0 || cfg.max_steps < 1)
    throw ConfigError("train_lr: need learning_rate > 0, grad_tol >= 0, max_steps >= 1");
  auto groups = group_samples(samples, k);
  const double total = static_cast<double>(samples.size());

  LogisticModel model;
  model.k = k;
  model.weights = Matrix(k, 3 * k);
  model.bias.assign(k, 0.0);
  Matrix gw(k, 3 * k);
  std::vector<double> gb(k), z(k);
  for (int step = 0; step < cfg.max_steps; ++step) {
    std::fill(gw.data(), gw.data() + gw.size(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (const auto& [code, counts] : groups) {
      ElementHistory h = code_to_history(code, k);
      double group_total = 0.0;
      for (int c = 0; c < k; ++c) group_total += static_cast<double>(counts[c]);
      for (int c = 0; c < k; ++c)
        z[c] = model.weights(c, h.f_t) + model.weights(c, k + h.f_tm1) +
               model.weights(c, 2 * k + h.f_tm2) + model.bias[c];
      softmax_inplace(z);
      for (int c = 0; c < k; ++c) {
        const double q = (z[c] * group_total - static_cast<double>(counts[c])) / total;
        gw(c, h.f_t) += q;
        gw(c, k + h.f_tm1) += q;
        gw(c, 2 * k + h.f_tm2) += q;
        gb[c] += q;
      }
    }
    double inf_norm = 0.0;
    for (size_t i = 0; i < gw.size(); ++i) inf_norm = std::max(inf_norm, std::abs(gw.data()[i]));
    for (int c = 0; c < k; ++c) inf_norm = std::max(inf_norm, std::abs(gb[c]));
    if (inf_norm <= cfg.grad_tol) break;
    for (size_t i = 0; i < gw.size(); ++i)
      model.weights.data()[i] -= cfg.learning_rate * gw.data()[i];
    for (int c = 0; c < k; ++c) model.bias[c] -= cfg.learning_rate * gb[c];
  }
  return model;
}

std::vector<double> MlpClassifier::predict_proba(const ElementHistory& h) const {
  check_history_labels(h, k);
  NetActivations acts;
  net_forward(net, one_hot_triple(h, k), acts);
  std::vector<double> p = acts.outs.back();
  softmax_inplace(p);
  return p;
}

MlpClassifier train_mlp(const std::vector<HistorySample>& samples, int k,
                        const MlpConfig& cfg) {
  if (k < 2) throw ConfigError("train_mlp: need k >= 2");
  if (cfg.hidden < 1 || cfg.learning_rate <= 0.0 || cfg.epochs < 0)
    throw ConfigError("train_mlp: need hidden >= 1, learning_rate > 0, epochs >= 0");
  auto groups = group_samples(samples, k);
  const double total = static_cast<double>(samples.size());

  MlpClassifier model;
  model.k = k;
  model.net = make_net(3 * k, {cfg.hidden}, k, cfg.seed);
  NetGradients grads = zero_gradients_like(model.net);
  std::vector<double> dout(k);
  NetActivations acts;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    grads.zero();
    for (const auto& [code, counts] : groups) {
      ElementHistory h = code_to_history(code, k);
      double group_total = 0.0;
      for (int c = 0; c < k; ++c) group_total += static_cast<double>(counts[c]);
      net_forward(model.net, one_hot_triple(h, k), acts);
      std::vector<double> p = acts.outs.back();
      softmax_inplace(p);
      for (int c = 0; c < k; ++c)
        dout[c] = (p[c] * group_total - static_cast<double>(counts[c])) / total;
      net_backward(model.net, acts, dout, grads);
    }
    for (size_t l = 0; l < model.net.weights.size(); ++l) {
      Matrix& w = model.net.weights[l];
      const Matrix& gwl = grads.weights[l];
      for (size_t i = 0; i < w.size(); ++i)
        w.data()[i] -= cfg.learning_rate * gwl.data()[i];
      for (size_t i = 0; i < model.net.biases[l].size(); ++i)
        model.net.biases[l][i] -= cfg.learning_rate * grads.biases[l][i];
    }
  }
  return model;
}

Matrix lr_predict(const LogisticModel& model,
                  const std::vector<ElementHistory>& histories) {
  return aggregate_predictions(histories, model.k,
                               [&](const ElementHistory& h) { return model.predict_proba(h); });
}

Matrix mlp_predict(const MlpClassifier& model,
                   const std::vector<ElementHistory>& histories) {
  return aggregate_predictions(histories, model.k,
                               [&](const ElementHistory& h) { return model.predict_proba(h); });
}

}  // namespace sinkflow
