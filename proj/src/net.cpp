#include "sinkflow/net.hpp"

#include <cmath>
#include <string>

#include "sinkflow/rng.hpp"

namespace sinkflow {

FeedForwardNet make_net(int input_dim, const std::vector<int>& hidden_sizes,
                        int output_dim, uint64_t seed) {
  if (input_dim < 1 || output_dim < 1)
    throw DimensionError("make_net: input and output dims must be >= 1");
  for (int h : hidden_sizes)
    if (h < 1) throw DimensionError("make_net: hidden sizes must be >= 1");

  FeedForwardNet net;
  net.input_dim = input_dim;
  net.output_dim = output_dim;
  net.hidden_sizes = hidden_sizes;
  net.seed = seed;

  Rng rng(seed);
  int fan_in = input_dim;
  auto add_layer = [&](int fan_out) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix w(fan_out, fan_in);
    for (size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    std::vector<double> b(fan_out);
    for (double& v : b) v = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
    fan_in = fan_out;
  };
  for (int h : hidden_sizes) add_layer(h);
  add_layer(output_dim);
  return net;
}

void net_forward(const FeedForwardNet& net, const std::vector<double>& input,
                 NetActivations& acts) {
  if (static_cast<int>(input.size()) != net.input_dim)
    throw DimensionError("net_forward: input has length " +
                         std::to_string(input.size()) + ", net expects " +
                         std::to_string(net.input_dim));
  const int layers = net.layer_count();
  acts.outs.resize(layers + 1);
  acts.outs[0] = input;
  for (int l = 0; l < layers; ++l) {
    const Matrix& w = net.weights[l];
    const std::vector<double>& prev = acts.outs[l];
    std::vector<double>& out = acts.outs[l + 1];
    out.resize(w.rows());
    const bool last = l == layers - 1;
    for (int i = 0; i < w.rows(); ++i) {
      double acc = net.biases[l][i];
      for (int j = 0; j < w.cols(); ++j) acc += w(i, j) * prev[j];
      out[i] = last ? acc : std::tanh(acc);
    }
  }
}

void NetGradients::zero() {
  for (Matrix& w : weights)
    for (double& v : w.values()) v = 0.0;
  for (auto& b : biases)
    for (double& v : b) v = 0.0;
}

void NetGradients::add_scaled(const NetGradients& other, double scale) {
  if (other.weights.size() != weights.size())
    throw DimensionError("NetGradients::add_scaled: layer count mismatch");
  for (size_t l = 0; l < weights.size(); ++l) {
    if (other.weights[l].size() != weights[l].size())
      throw DimensionError("NetGradients::add_scaled: layer shape mismatch");
    for (size_t i = 0; i < weights[l].size(); ++i)
      weights[l].data()[i] += scale * other.weights[l].data()[i];
    for (size_t i = 0; i < biases[l].size(); ++i)
      biases[l][i] += scale * other.biases[l][i];
  }
}

NetGradients zero_gradients_like(const FeedForwardNet& net) {
  NetGradients g;
  for (const Matrix& w : net.weights) g.weights.emplace_back(w.rows(), w.cols());
  for (const auto& b : net.biases) g.biases.emplace_back(b.size(), 0.0);
  return g;
}

void net_backward(const FeedForwardNet& net, const NetActivations& acts,
                  const std::vector<double>& dout, NetGradients& grads) {
  const int layers = net.layer_count();
  if (static_cast<int>(acts.outs.size()) != layers + 1)
    throw DimensionError("net_backward: activations do not match this net");
  if (static_cast<int>(dout.size()) != net.output_dim)
    throw DimensionError("net_backward: dout has length " +
                         std::to_string(dout.size()) + ", net output is " +
                         std::to_string(net.output_dim));

  std::vector<double> delta = dout;  // dLoss/d(pre-activation) of layer l
  for (int l = layers - 1; l >= 0; --l) {
    const Matrix& w = net.weights[l];
    const std::vector<double>& prev = acts.outs[l];
    Matrix& gw = grads.weights[l];
    std::vector<double>& gb = grads.biases[l];
    for (int i = 0; i < w.rows(); ++i) {
      gb[i] += delta[i];
      for (int j = 0; j < w.cols(); ++j) gw(i, j) += delta[i] * prev[j];
    }
    if (l == 0) break;
    std::vector<double> dprev(w.cols(), 0.0);
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) dprev[j] += delta[i] * w(i, j);
    // prev is the tanh output of layer l-1, so d tanh = 1 - prev^2.
    for (int j = 0; j < w.cols(); ++j) dprev[j] *= 1.0 - prev[j] * prev[j];
    delta = std::move(dprev);
  }
}

}  // namespace sinkflow
