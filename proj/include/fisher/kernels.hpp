#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <vector>

#ifdef FISHER_HAVE_OPENMP
#include <omp.h>
#endif

namespace fisher {

/// Serial is the reference path; Parallel fans out over players with OpenMP.
enum class Exec { Serial, Parallel };

inline Exec default_exec() {
#ifdef FISHER_HAVE_OPENMP
  return Exec::Parallel;
#else
  return Exec::Serial;
#endif
}

inline int exec_threads(Exec exec) {
#ifdef FISHER_HAVE_OPENMP
  if (exec == Exec::Parallel) return std::max(1, omp_get_max_threads());
#endif
  (void)exec;
  return 1;
}

/// Calls f(i) for i in [0, count). Iterations must be independent.
template <class F>
void for_each_index(int count, Exec exec, F&& f) {
#ifdef FISHER_HAVE_OPENMP
  if (exec == Exec::Parallel && count > 1) {
#pragma omp parallel for schedule(dynamic, 16)
    for (int i = 0; i < count; ++i) f(i);
    return;
  }
#endif
  (void)exec;
  for (int i = 0; i < count; ++i) f(i);
}

/// Sum over i of contributions f(i, acc) into a length-n vector.
/// Players are split into one contiguous chunk per thread and the chunk
/// buffers are added in chunk order, so the result depends only on the
/// thread count. With one thread this is the plain serial loop.
template <class F>
Eigen::VectorXd reduce_players(int count, Eigen::Index n, Exec exec, F&& f) {
  const int threads = std::min(exec_threads(exec), std::max(1, count));
  if (threads == 1) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < count; ++i) f(i, acc);
    return acc;
  }
  std::vector<Eigen::VectorXd> partial(static_cast<std::size_t>(threads), Eigen::VectorXd::Zero(n));
#ifdef FISHER_HAVE_OPENMP
#pragma omp parallel for schedule(static, 1) num_threads(threads)
#endif
  for (int t = 0; t < threads; ++t) {
    const long lo = static_cast<long>(count) * t / threads;
    const long hi = static_cast<long>(count) * (t + 1) / threads;
    Eigen::VectorXd& acc = partial[static_cast<std::size_t>(t)];
    for (long i = lo; i < hi; ++i) f(static_cast<int>(i), acc);
  }
  Eigen::VectorXd total = std::move(partial[0]);
  for (int t = 1; t < threads; ++t) total += partial[static_cast<std::size_t>(t)];
  return total;
}

}  // namespace fisher
