#pragma once

#include <cstdint>
#include <vector>

#include "sinkflow/types.hpp"

namespace sinkflow {

// Plain feed-forward network: tanh hidden layers, linear output. This is the
// lag-window predictor f; the transport head on top of it lives in model.hpp.
// Weights are (fan_out x fan_in), row-major.
struct FeedForwardNet {
  int input_dim = 0;
  int output_dim = 0;
  std::vector<int> hidden_sizes;
  uint64_t seed = 0;
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  int layer_count() const { return static_cast<int>(weights.size()); }
};

// Uniform[-1/sqrt(fan_in), 1/sqrt(fan_in)] init for weights and biases, all
// drawn from one seeded stream in layer order, so a (dims, seed) pair pins
// every parameter bit.
FeedForwardNet make_net(int input_dim, const std::vector<int>& hidden_sizes,
                        int output_dim, uint64_t seed);

// Post-activation record of one forward pass: outs[0] is the input, outs[l]
// the output of layer l, the last entry the linear network output. Reused
// across calls to keep per-sample work allocation-free.
struct NetActivations {
  std::vector<std::vector<double>> outs;
};

void net_forward(const FeedForwardNet& net, const std::vector<double>& input,
                 NetActivations& acts);

// Parameter-shaped accumulator, used for gradients and momentum state.
struct NetGradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;

  void zero();
  // this += scale * other
  void add_scaled(const NetGradients& other, double scale);
};

NetGradients zero_gradients_like(const FeedForwardNet& net);

// Backpropagates dLoss/d(output) through the recorded activations,
// accumulating (+=) into grads so batch sums build up in call order.
void net_backward(const FeedForwardNet& net, const NetActivations& acts,
                  const std::vector<double>& dout, NetGradients& grads);

}  // namespace sinkflow
