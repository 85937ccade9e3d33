#pragma once

#include <cstdint>
#include <vector>

#include "sinkflow/types.hpp"

namespace sinkflow {

struct SinkhornConfig {
  int max_iters = 100;       // forward truncation
  double tol = 1e-6;         // forward stop: max |row/col sum - 1|
  int backward_max_iters = 1000;
  double backward_tol = 1e-9;  // stop on the adjoint system residual
  bool log_domain = false;     // forward in log space (slower, wider range)
};

// Output of the forward pass. s has strictly positive entries and, when
// converged, row and column sums within `residual` of 1. When the iteration
// cap is hit, the best iterate seen is returned with converged=false; callers
// decide whether that is acceptable (training tolerates it, gradcheck skips).
struct DoublyStochasticMatrix {
  Matrix s;
  int iterations_used = 0;
  double residual = 0.0;
  bool converged = false;
};

// State of the backward solve: the adjoint potentials and convergence
// diagnostics. The solve owns nothing that grows with iteration count; a
// caller can hand the same workspace to many calls and, after the first one
// at a given k, no further allocation happens at all.
struct BackwardWorkspace {
  std::vector<double> a, b;  // adjoint potentials at the stopping point
  bool converged = false;
  int iterations_used = 0;
  double residual = 0.0;
  bool record_trace = false;        // opt-in: keep per-sweep residuals
  std::vector<double> residuals;    // filled only when record_trace is set

  // internal scratch, reused across calls
  std::vector<double> a_bar, b_bar, p, q;
};

// Projects multiplier iterates onto the affine slice where the adjoint
// system's solution is unique. The system's matrix annihilates (1, -1): any
// constant can be moved between a and b, so we split the imbalance evenly:
//   c = sum(a_bar - b_bar) / (2k);  a = a_bar - c,  b = b_bar + c.
// In-place, a and b must have equal length. The rank-1 field a_i + b_j is
// unchanged by the shift.
void null_space_recenter(std::vector<double>& a_bar, std::vector<double>& b_bar);

// Alternating row/column normalization of exp(-M), truncated at
// cfg.max_iters or when max |row/col sum - 1| <= cfg.tol. M is first shifted
// by its minimum entry, which changes nothing mathematically (the shift
// cancels in every normalization) but keeps exp() in range for the matrices
// the model emits. tol = 0 is legal and simply runs to the cap. Throws
// DimensionError for non-square or k < 2 input and InvalidInputError for
// non-finite entries.
DoublyStochasticMatrix sinkhorn_forward(const Matrix& potentials,
                                        const SinkhornConfig& cfg = {});

// Gradient of a scalar loss through the forward fixed point, given S from
// the forward pass and G = dLoss/dS. Solves the adjoint system
//   a + S b = (S o G) 1
//   S^T a + b = (S o G)^T 1
// by damped fixed-point sweeps (one S and one S^T matvec per sweep), then
// assembles dLoss/dM = S o (a 1^T + 1 b^T - G).
//
// Each sweep recenters along the (1, -1) null direction (see
// null_space_recenter) and pins the (1, 1) component to its known value
// sum(S o G): summing both block equations gives 1'a + 1'b = sum(S o G)
// identically, and without the pin that component flips sign every sweep
// instead of contracting. Both shifts vanish at the solution.
//
// S must be square, strictly positive, and match G's shape. Memory use is
// O(k^2) regardless of iteration count. A zero G short-circuits to a zero
// gradient in zero sweeps. Convergence diagnostics land in `workspace` when
// one is supplied; non-convergence is reported there, never thrown.
Matrix sinkhorn_backward(const Matrix& s, const Matrix& dloss_ds,
                         const SinkhornConfig& cfg = {},
                         BackwardWorkspace* workspace = nullptr);

}  // namespace sinkflow
