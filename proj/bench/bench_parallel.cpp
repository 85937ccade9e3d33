// Timing comparison between the OpenMP kernels and their serial references,
// plus the memory footprint of the analytic backward pass against the
// unrolled oracle. Build target: bench_parallel.

#include <algorithm>
#include <chrono>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "sinkflow/dataio.hpp"
#include "sinkflow/model.hpp"
#include "sinkflow/oracles.hpp"
#include "sinkflow/rng.hpp"

using namespace sinkflow;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

std::vector<TrainSample> build_dataset(int k, int anchors) {
  SyntheticSpec spec;
  spec.k = k;
  spec.N = 2000;
  spec.steps = anchors + 3;
  spec.seed = 2024;
  spec.kernel = Matrix(k, k);
  for (int i = 0; i < k; ++i) {
    spec.kernel(i, i) = 0.7;
    spec.kernel(i, (i + 1) % k) = 0.2;
    spec.kernel(i, (i + 2) % k) = 0.1;
  }
  auto [marginals, plans] = build_marginals_and_plans(generate_synthetic(spec));
  return build_samples(marginals, plans, 2, 2 + anchors);
}

}  // namespace

int main() {
  const int k = 4, anchors = 128, reps = 20;
  std::printf("hardware threads available to OpenMP: %d\n\n", max_threads());

  std::vector<TrainSample> data = build_dataset(k, anchors);
  FeedForwardNet net = make_net(3 * k + 2 * k * k, {4 * k * k}, k * k, 1);
  LossConfig lc;
  lc.loss_mix = 0.5;
  SinkhornConfig sc;
  NetGradients grads = zero_gradients_like(net);

  std::printf("batch gradient, %zu samples, k=%d, %d reps\n", data.size(), k, reps);
  auto t0 = Clock::now();
  for (int r = 0; r < reps; ++r) batch_gradient_serial(data, net, lc, sc, grads);
  double serial_ms = ms_since(t0) / reps;
  std::printf("  serial reference      %8.2f ms\n", serial_ms);
  std::vector<int> counts = {1, 2, 4};
  if (std::find(counts.begin(), counts.end(), max_threads()) == counts.end())
    counts.push_back(max_threads());
  for (int threads : counts) {
    set_threads(threads);
    t0 = Clock::now();
    for (int r = 0; r < reps; ++r) batch_gradient(data, net, lc, sc, grads);
    double par_ms = ms_since(t0) / reps;
    std::printf("  blocked, %2d thread%s  %8.2f ms  (%.2fx vs serial)\n", threads,
                threads == 1 ? " " : "s", par_ms, serial_ms / par_ms);
  }
  set_threads(max_threads());

  std::printf("\nfinite-difference probe sweep, k=8\n");
  Rng rng(7);
  Matrix m = rng.uniform_matrix(8, 8, -5.0, 5.0);
  Matrix g = rng.uniform_matrix(8, 8, -1.0, 1.0);
  SinkhornConfig tight;
  tight.max_iters = 20000;
  tight.tol = 1e-12;
  tight.backward_max_iters = 20000;
  tight.backward_tol = 1e-12;
  for (int threads : {1, max_threads()}) {
    set_threads(threads);
    t0 = Clock::now();
    finite_difference_grad(m, g, tight);
    std::printf("  %2d thread%s %10.2f ms\n", threads, threads == 1 ? " " : "s",
                ms_since(t0));
  }
  set_threads(max_threads());

  std::printf("\nbackward pass vs unrolled oracle, k=8, tight tolerances\n");
  DoublyStochasticMatrix fwd = sinkhorn_forward(m, tight);
  t0 = Clock::now();
  BackwardWorkspace ws;
  for (int r = 0; r < reps; ++r) sinkhorn_backward(fwd.s, g, tight, &ws);
  double implicit_ms = ms_since(t0) / reps;
  t0 = Clock::now();
  UnrolledGradient unrolled;
  for (int r = 0; r < reps; ++r) unrolled = unrolled_gradient(m, g, tight);
  double unrolled_ms = ms_since(t0) / reps;
  size_t implicit_doubles = ws.a.capacity() + ws.b.capacity() + ws.a_bar.capacity() +
                            ws.b_bar.capacity() + ws.p.capacity() + ws.q.capacity();
  std::printf("  implicit  %8.3f ms, workspace %zu doubles (iteration independent)\n",
              implicit_ms, implicit_doubles);
  std::printf("  unrolled  %8.3f ms, history %zu doubles over %d forward sweeps\n",
              unrolled_ms, unrolled.stored_doubles, unrolled.iterations);
  std::printf("  memory ratio unrolled/implicit: %.1fx\n",
              static_cast<double>(unrolled.stored_doubles) /
                  static_cast<double>(implicit_doubles ? implicit_doubles : 1));
  return 0;
}
