#pragma once

#include "sinkflow/sinkhorn.hpp"
#include "sinkflow/types.hpp"

namespace sinkflow {

// Independent gradient references for the implicit backward pass. Both treat
// the loss  l(M) = <G, S(M)>  for a fixed weight matrix G, whose dl/dS is G
// itself, so they can be compared entry-wise against sinkhorn_backward.

// Central finite differences, step h per coordinate. Each probe reruns the
// forward pass at cfg's tolerance, so cfg should be tight (1e-12-ish) or the
// truncation error will drown the difference quotient.
Matrix finite_difference_grad(const Matrix& potentials, const Matrix& weights,
                              const SinkhornConfig& cfg, double step = 1e-5);

struct UnrolledGradient {
  Matrix grad;
  Matrix s;             // final iterate of the replayed forward pass
  int iterations = 0;   // sweeps the replay performed
  size_t stored_doubles = 0;  // history kept alive for backprop
};

// Reverse-mode differentiation through the truncated normalization loop
// itself: replays the forward pass recording every intermediate iterate,
// then backpropagates. Exact for the truncated map (whatever the iteration
// count), at the price of O(iterations * k^2) memory, which is the cost the
// implicit backward exists to avoid. stored_doubles reports that history so
// benchmarks can show the gap.
UnrolledGradient unrolled_gradient(const Matrix& potentials, const Matrix& weights,
                                   const SinkhornConfig& cfg);

}  // namespace sinkflow
