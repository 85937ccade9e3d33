#pragma once

#include <cstdint>
#include <vector>

#include "sinkflow/dataio.hpp"
#include "sinkflow/net.hpp"
#include "sinkflow/types.hpp"

namespace sinkflow {

// One element's recent label history: its faction at the anchor step t and at
// the two steps before. Classifier baselines predict the label at t+1 from
// these three labels, one-hot encoded.
struct ElementHistory {
  int element_id = 0;
  int f_t = 0;
  int f_tm1 = 0;
  int f_tm2 = 0;
};

struct HistorySample {
  ElementHistory history;
  int next_label = 0;
};

// All mass stays put: diag(x_t).
Matrix identity_predict(const std::vector<double>& x_t);

// Mean of the two previous plans, rows rescaled to the current marginal.
// A row whose target mass is zero stays zero; a row with mass to place but a
// zero pre-rescale sum puts everything on the diagonal.
Matrix average_history_predict(const Matrix& p_tm1, const Matrix& p_tm2,
                               const std::vector<double>& x_t);

// Histories anchored at step t (needs t >= 2 and t <= T-1).
std::vector<ElementHistory> histories_at(const FactionTimeline& tl, int t);

// Supervised samples for every anchor t in [t_begin, t_end); each sample's
// target is the element's label at t+1, so t_end <= T-1.
std::vector<HistorySample> history_samples(const FactionTimeline& tl, int t_begin,
                                           int t_end);

// Multinomial logistic regression on the one-hot history triple.
struct LogisticModel {
  int k = 0;
  Matrix weights;  // k x 3k, class-major
  std::vector<double> bias;

  std::vector<double> predict_proba(const ElementHistory& h) const;
};

struct LrConfig {
  double learning_rate = 0.5;
  double grad_tol = 1e-6;  // stop when the mean-NLL gradient inf-norm drops below
  int max_steps = 10000;
};

LogisticModel train_lr(const std::vector<HistorySample>& samples, int k,
                       const LrConfig& cfg = {});

// Small tanh network with a softmax read-out over the k classes.
struct MlpClassifier {
  int k = 0;
  FeedForwardNet net;

  std::vector<double> predict_proba(const ElementHistory& h) const;
};

struct MlpConfig {
  int hidden = 32;
  double learning_rate = 0.2;
  int epochs = 400;
  uint64_t seed = 0;
};

MlpClassifier train_mlp(const std::vector<HistorySample>& samples, int k,
                        const MlpConfig& cfg = {});

// Aggregate per-element class probabilities into a plan: an element currently
// in faction i with predicted distribution p contributes p_j / N to row i.
Matrix lr_predict(const LogisticModel& model,
                  const std::vector<ElementHistory>& histories);
Matrix mlp_predict(const MlpClassifier& model,
                   const std::vector<ElementHistory>& histories);

}  // namespace sinkflow
