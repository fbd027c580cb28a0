#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace xpo::kernels {

/// Blocked map/reduce over an index range, OpenMP-parallel across blocks.
///
/// Reduction order is fixed by the block structure, not the thread schedule:
/// each block is folded serially, block partials are folded serially in block
/// order.  Results are therefore bit-identical for any thread count and
/// bit-identical to the *_serial twins, which the test suite asserts.
inline constexpr std::int64_t kBlockSize = 4096;

template <class F>
double block_sum_serial(std::int64_t n, F&& f) {
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) total += f(i);
  return total;
}

template <class F>
double block_sum(std::int64_t n, F&& f) {
  if (n < 2 * kBlockSize) return block_sum_serial(n, f);
  const std::int64_t nblocks = (n + kBlockSize - 1) / kBlockSize;
  std::vector<double> partial(static_cast<std::size_t>(nblocks), 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < nblocks; ++b) {
    const std::int64_t lo = b * kBlockSize;
    const std::int64_t hi = std::min(lo + kBlockSize, n);
    double acc = 0.0;
    for (std::int64_t i = lo; i < hi; ++i) acc += f(i);
    partial[static_cast<std::size_t>(b)] = acc;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

/// Maximum of f over [0, n) together with the first attaining index.
template <class F>
std::pair<double, std::int64_t> block_max_serial(std::int64_t n, F&& f) {
  double best = -std::numeric_limits<double>::infinity();
  std::int64_t arg = -1;
  for (std::int64_t i = 0; i < n; ++i) {
    const double v = f(i);
    if (v > best) {
      best = v;
      arg = i;
    }
  }
  return {best, arg};
}

template <class F>
std::pair<double, std::int64_t> block_max(std::int64_t n, F&& f) {
  if (n < 2 * kBlockSize) return block_max_serial(n, f);
  const std::int64_t nblocks = (n + kBlockSize - 1) / kBlockSize;
  std::vector<double> pval(static_cast<std::size_t>(nblocks));
  std::vector<std::int64_t> parg(static_cast<std::size_t>(nblocks));
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < nblocks; ++b) {
    const std::int64_t lo = b * kBlockSize;
    const std::int64_t hi = std::min(lo + kBlockSize, n);
    double best = -std::numeric_limits<double>::infinity();
    std::int64_t arg = -1;
    for (std::int64_t i = lo; i < hi; ++i) {
      const double v = f(i);
      if (v > best) {
        best = v;
        arg = i;
      }
    }
    pval[static_cast<std::size_t>(b)] = best;
    parg[static_cast<std::size_t>(b)] = arg;
  }
  double best = -std::numeric_limits<double>::infinity();
  std::int64_t arg = -1;
  for (std::int64_t b = 0; b < nblocks; ++b) {
    if (pval[static_cast<std::size_t>(b)] > best) {
      best = pval[static_cast<std::size_t>(b)];
      arg = parg[static_cast<std::size_t>(b)];
    }
  }
  return {best, arg};
}

/// Parallel elementwise fill: out[i] = f(i).  Writes are independent, so the
/// result does not depend on scheduling.
template <class F>
void block_fill_serial(std::int64_t n, double* out, F&& f) {
  for (std::int64_t i = 0; i < n; ++i) out[i] = f(i);
}

template <class F>
void block_fill(std::int64_t n, double* out, F&& f) {
  if (n < 2 * kBlockSize) {
    block_fill_serial(n, out, f);
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = f(i);
}

inline int num_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace xpo::kernels
