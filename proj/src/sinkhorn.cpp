#include "sinkflow/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sinkflow {

void null_space_recenter(std::vector<double>& a_bar, std::vector<double>& b_bar) {
  if (a_bar.size() != b_bar.size())
    throw DimensionError("null_space_recenter: potential lengths differ");
  if (a_bar.empty()) throw DimensionError("null_space_recenter: empty potentials");
  const size_t k = a_bar.size();
  double c = 0.0;
  for (size_t i = 0; i < k; ++i) c += a_bar[i] - b_bar[i];
  c /= 2.0 * static_cast<double>(k);
  for (size_t i = 0; i < k; ++i) {
    a_bar[i] -= c;
    b_bar[i] += c;
  }
}

namespace {

void check_square_potentials(const Matrix& m, const char* who) {
  if (!m.is_square())
    throw DimensionError(std::string(who) + ": expected square matrix, got " +
                         std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  if (m.rows() < 2)
    throw DimensionError(std::string(who) + ": need k >= 2, got k = " +
                         std::to_string(m.rows()));
}

// max |row sum - 1| and |col sum - 1| in one pass.
double balance_residual(const Matrix& s) {
  const int k = s.rows();
  double worst = 0.0;
  std::vector<double> col(k, 0.0);
  for (int i = 0; i < k; ++i) {
    double row = 0.0;
    for (int j = 0; j < k; ++j) {
      row += s(i, j);
      col[j] += s(i, j);
    }
    worst = std::max(worst, std::abs(row - 1.0));
  }
  for (int j = 0; j < k; ++j) worst = std::max(worst, std::abs(col[j] - 1.0));
  return worst;
}

double logsumexp(const double* x, int n, int stride) {
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) m = std::max(m, x[static_cast<size_t>(i) * stride]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[static_cast<size_t>(i) * stride] - m);
  return m + std::log(s);
}

DoublyStochasticMatrix forward_log_domain(const Matrix& potentials,
                                          const SinkhornConfig& cfg, double shift) {
  const int k = potentials.rows();
  Matrix logs(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) logs(i, j) = -(potentials(i, j) - shift);

  Matrix best;
  double best_res = std::numeric_limits<double>::infinity();
  int it = 0;
  for (it = 1; it <= cfg.max_iters; ++it) {
    for (int i = 0; i < k; ++i) {
      double lse = logsumexp(&logs(i, 0), k, 1);
      for (int j = 0; j < k; ++j) logs(i, j) -= lse;
    }
    for (int j = 0; j < k; ++j) {
      double lse = logsumexp(&logs(0, j), k, k);
      for (int i = 0; i < k; ++i) logs(i, j) -= lse;
    }
    Matrix s(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) s(i, j) = std::exp(logs(i, j));
    double res = balance_residual(s);
    if (res < best_res) {
      best_res = res;
      best = std::move(s);
    }
    if (res <= cfg.tol) break;
  }
  DoublyStochasticMatrix out;
  out.s = std::move(best);
  out.residual = best_res;
  out.iterations_used = std::min(it, cfg.max_iters);
  out.converged = best_res <= cfg.tol;
  return out;
}

}  // namespace

DoublyStochasticMatrix sinkhorn_forward(const Matrix& potentials,
                                        const SinkhornConfig& cfg) {
  check_square_potentials(potentials, "sinkhorn_forward");
  if (!all_finite(potentials))
    throw InvalidInputError("sinkhorn_forward: potentials contain NaN/Inf");
  if (cfg.max_iters < 1) throw ConfigError("sinkhorn_forward: max_iters must be >= 1");
  if (cfg.tol < 0.0) throw ConfigError("sinkhorn_forward: tol must be >= 0");

  const int k = potentials.rows();
  // Shifting by the minimum leaves the iteration invariant and bounds the
  // exponentials in (0, 1].
  double shift = potentials(0, 0);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) shift = std::min(shift, potentials(i, j));

  if (cfg.log_domain) return forward_log_domain(potentials, cfg, shift);

  Matrix s(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) s(i, j) = std::exp(-(potentials(i, j) - shift));

  Matrix best;
  double best_res = std::numeric_limits<double>::infinity();
  std::vector<double> col(k);
  int it = 0;
  for (it = 1; it <= cfg.max_iters; ++it) {
    for (int i = 0; i < k; ++i) {
      double row = 0.0;
      for (int j = 0; j < k; ++j) row += s(i, j);
      if (row <= 0.0)
        throw NumericError(
            "sinkhorn_forward: row sum underflowed to zero; the potential "
            "range is too wide for the linear-domain kernel, use log_domain");
      for (int j = 0; j < k; ++j) s(i, j) /= row;
    }
    std::fill(col.begin(), col.end(), 0.0);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) col[j] += s(i, j);
    for (int j = 0; j < k; ++j) {
      if (col[j] <= 0.0)
        throw NumericError(
            "sinkhorn_forward: column sum underflowed to zero; the potential "
            "range is too wide for the linear-domain kernel, use log_domain");
      for (int i = 0; i < k; ++i) s(i, j) /= col[j];
    }
    double res = balance_residual(s);
    if (res < best_res) {
      best_res = res;
      best = s;
    }
    if (res <= cfg.tol) break;
  }

  DoublyStochasticMatrix out;
  out.s = std::move(best);
  out.residual = best_res;
  out.iterations_used = std::min(it, cfg.max_iters);
  out.converged = best_res <= cfg.tol;
  return out;
}

Matrix sinkhorn_backward(const Matrix& s, const Matrix& dloss_ds,
                         const SinkhornConfig& cfg, BackwardWorkspace* workspace) {
  check_square_potentials(s, "sinkhorn_backward");
  if (s.rows() != dloss_ds.rows() || s.cols() != dloss_ds.cols())
    throw DimensionError("sinkhorn_backward: S is " + std::to_string(s.rows()) + "x" +
                         std::to_string(s.cols()) + " but dLoss/dS is " +
                         std::to_string(dloss_ds.rows()) + "x" +
                         std::to_string(dloss_ds.cols()));
  if (!all_finite(dloss_ds))
    throw InvalidInputError("sinkhorn_backward: dLoss/dS contains NaN/Inf");
  if (cfg.backward_max_iters < 1)
    throw ConfigError("sinkhorn_backward: backward_max_iters must be >= 1");
  if (cfg.backward_tol < 0.0)
    throw ConfigError("sinkhorn_backward: backward_tol must be >= 0");
  const int k = s.rows();
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      if (!(s(i, j) > 0.0))
        throw InvalidInputError("sinkhorn_backward: S must be strictly positive (entry " +
                                std::to_string(i) + "," + std::to_string(j) + " is " +
                                std::to_string(s(i, j)) + ")");

  BackwardWorkspace local;
  BackwardWorkspace& ws = workspace ? *workspace : local;
  ws.a.assign(k, 0.0);
  ws.b.assign(k, 0.0);
  ws.a_bar.resize(k);
  ws.b_bar.resize(k);
  ws.p.assign(k, 0.0);
  ws.q.assign(k, 0.0);
  ws.residuals.clear();

  // Right-hand side: p = (S o G) 1, q = (S o G)^T 1, and the total mass
  // sum(S o G), which fixes 1'a + 1'b at the solution.
  double mass = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      double h = s(i, j) * dloss_ds(i, j);
      ws.p[i] += h;
      ws.q[j] += h;
      mass += h;
    }

  std::vector<double>&a = ws.a, &b = ws.b, &a_bar = ws.a_bar, &b_bar = ws.b_bar;
  const double n2 = 2.0 * static_cast<double>(k);
  double res = std::numeric_limits<double>::infinity();
  int sweeps = 0;
  for (int it = 0; it <= cfg.backward_max_iters; ++it) {
    // One S and one S^T matvec; a_bar/b_bar double as the residual probe for
    // the current (a, b) since a + S b - p = a - a_bar.
    for (int i = 0; i < k; ++i) {
      double sb = 0.0;
      for (int j = 0; j < k; ++j) sb += s(i, j) * b[j];
      a_bar[i] = ws.p[i] - sb;
    }
    for (int j = 0; j < k; ++j) {
      double sa = 0.0;
      for (int i = 0; i < k; ++i) sa += s(i, j) * a[i];
      b_bar[j] = ws.q[j] - sa;
    }
    res = 0.0;
    for (int i = 0; i < k; ++i) {
      res = std::max(res, std::abs(a[i] - a_bar[i]));
      res = std::max(res, std::abs(b[i] - b_bar[i]));
    }
    if (ws.record_trace) ws.residuals.push_back(res);
    if (res <= cfg.backward_tol || it == cfg.backward_max_iters) {
      sweeps = it;
      break;
    }
    // Project out the (1, -1) null direction of the system matrix.
    null_space_recenter(a_bar, b_bar);
    // Pin the (1, 1) component: the sweep flips its sign around `mass`
    // instead of contracting, but the solution's value is known exactly.
    double tot = 0.0;
    for (int i = 0; i < k; ++i) tot += a_bar[i] + b_bar[i];
    double d = (mass - tot) / n2;
    for (int i = 0; i < k; ++i) {
      a_bar[i] += d;
      b_bar[i] += d;
    }
    a.swap(a_bar);
    b.swap(b_bar);
  }

  ws.iterations_used = sweeps;
  ws.residual = res;
  ws.converged = res <= cfg.backward_tol;

  Matrix grad(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      grad(i, j) = s(i, j) * (a[i] + b[j] - dloss_ds(i, j));
  return grad;
}

}  // namespace sinkflow
