#include "sinkflow/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sinkflow {

namespace {

double weighted_sum(const Matrix& s, const Matrix& w) {
  double acc = 0.0;
  for (size_t i = 0; i < s.size(); ++i) acc += s.data()[i] * w.data()[i];
  return acc;
}

}  // namespace

Matrix finite_difference_grad(const Matrix& potentials, const Matrix& weights,
                              const SinkhornConfig& cfg, double step) {
  if (potentials.rows() != weights.rows() || potentials.cols() != weights.cols())
    throw DimensionError("finite_difference_grad: shape mismatch");
  if (step <= 0.0) throw ConfigError("finite_difference_grad: step must be > 0");
  const int k = potentials.rows();
  Matrix grad(k, k);
  // Probes are independent; each writes its own slot, so the parallel loop
  // is bit-deterministic for any thread count.
  const int total = k * k;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (int idx = 0; idx < total; ++idx) {
    Matrix m = potentials;
    const int i = idx / k, j = idx % k;
    m(i, j) = potentials(i, j) + step;
    double up = weighted_sum(sinkhorn_forward(m, cfg).s, weights);
    m(i, j) = potentials(i, j) - step;
    double down = weighted_sum(sinkhorn_forward(m, cfg).s, weights);
    grad(i, j) = (up - down) / (2.0 * step);
  }
  return grad;
}

UnrolledGradient unrolled_gradient(const Matrix& potentials, const Matrix& weights,
                                   const SinkhornConfig& cfg) {
  if (potentials.rows() != weights.rows() || potentials.cols() != weights.cols())
    throw DimensionError("unrolled_gradient: shape mismatch");
  if (!all_finite(potentials))
    throw InvalidInputError("unrolled_gradient: potentials contain NaN/Inf");
  const int k = potentials.rows();
  if (!potentials.is_square() || k < 2)
    throw DimensionError("unrolled_gradient: need square k >= 2 input");

  double shift = potentials(0, 0);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) shift = std::min(shift, potentials(i, j));
  Matrix kernel(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) kernel(i, j) = std::exp(-(potentials(i, j) - shift));

  // Forward replay. The arithmetic (accumulation order, in-place divides)
  // mirrors sinkhorn_forward exactly so both stop after the same sweep; here
  // every post-row iterate W, post-column iterate Z and their normalizers
  // are kept for the reverse sweep.
  std::vector<Matrix> w_hist, z_hist;
  std::vector<std::vector<double>> r_hist, c_hist;
  Matrix s = kernel;
  std::vector<double> col(k);
  for (int it = 1; it <= cfg.max_iters; ++it) {
    std::vector<double> r(k);
    for (int i = 0; i < k; ++i) {
      double row = 0.0;
      for (int j = 0; j < k; ++j) row += s(i, j);
      r[i] = row;
      for (int j = 0; j < k; ++j) s(i, j) /= row;
    }
    w_hist.push_back(s);
    r_hist.push_back(std::move(r));
    std::vector<double> c(k, 0.0);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) c[j] += s(i, j);
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < k; ++i) s(i, j) /= c[j];
    z_hist.push_back(s);
    c_hist.push_back(std::move(c));

    double worst = 0.0;
    std::fill(col.begin(), col.end(), 0.0);
    for (int i = 0; i < k; ++i) {
      double row = 0.0;
      for (int j = 0; j < k; ++j) {
        row += s(i, j);
        col[j] += s(i, j);
      }
      worst = std::max(worst, std::abs(row - 1.0));
    }
    for (int j = 0; j < k; ++j) worst = std::max(worst, std::abs(col[j] - 1.0));
    if (worst <= cfg.tol) break;
  }

  const int sweeps = static_cast<int>(w_hist.size());

  // Reverse sweep. Row normalization W = X / r with r_i = sum_j X_ij pulls
  // back as gX = (gW - sum_j gW o W) / r; column normalization likewise with
  // the roles of rows and columns swapped.
  Matrix g = weights;
  for (int it = sweeps - 1; it >= 0; --it) {
    const Matrix& z = z_hist[it];
    const Matrix& w = w_hist[it];
    const std::vector<double>& c = c_hist[it];
    const std::vector<double>& r = r_hist[it];
    Matrix gw(k, k);
    for (int j = 0; j < k; ++j) {
      double dot = 0.0;
      for (int i = 0; i < k; ++i) dot += g(i, j) * z(i, j);
      for (int i = 0; i < k; ++i) gw(i, j) = (g(i, j) - dot) / c[j];
    }
    for (int i = 0; i < k; ++i) {
      double dot = 0.0;
      for (int j = 0; j < k; ++j) dot += gw(i, j) * w(i, j);
      for (int j = 0; j < k; ++j) g(i, j) = (gw(i, j) - dot) / r[i];
    }
  }

  UnrolledGradient out;
  out.grad = Matrix(k, k);
  // d kernel / d M = -kernel; the min-shift is a per-matrix constant that the
  // first row normalization cancels, so it carries no gradient.
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) out.grad(i, j) = -kernel(i, j) * g(i, j);
  out.s = std::move(s);
  out.iterations = sweeps;
  out.stored_doubles = 0;
  for (const auto& m : w_hist) out.stored_doubles += m.size();
  for (const auto& m : z_hist) out.stored_doubles += m.size();
  for (const auto& v : r_hist) out.stored_doubles += v.size();
  for (const auto& v : c_hist) out.stored_doubles += v.size();
  return out;
}

}  // namespace sinkflow
