#ifndef CTD_PARALLEL_HPP
#define CTD_PARALLEL_HPP

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ctd {

// threads == 0 means "use all hardware threads"; anything else is a cap.
inline int resolve_threads(int requested) {
#ifdef _OPENMP
  if (requested <= 0) return omp_get_max_threads();
  return requested;
#else
  (void)requested;
  return 1;
#endif
}

// Trial-level work distributor. threads <= 1 runs the plain serial loop,
// which is the reference path the consistency tests compare against.
// Bodies must write only to their own index slots; results are then
// independent of scheduling and bit-identical across thread counts.
template <class F>
void parallel_for(std::size_t n, int threads, F&& body) {
#ifdef _OPENMP
  if (threads > 1 && n > 1) {
    const long long nn = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (long long i = 0; i < nn; ++i) {
      body(static_cast<std::size_t>(i));
    }
    return;
  }
#endif
  (void)threads;
  for (std::size_t i = 0; i < n; ++i) body(i);
}

}  // namespace ctd

#endif
