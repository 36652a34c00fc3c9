#pragma once

#include <exception>
#include <mutex>

#ifdef GMMRF_HAVE_OPENMP
#include <omp.h>
#endif

namespace gmmrf {

/// Runs body(i) for i in [0, n), in parallel when OpenMP is available.
/// Each index must write only to its own output slot so that results do
/// not depend on the thread count. The first exception thrown by any
/// iteration is rethrown on the calling thread.
template <typename Body>
void parallel_for(long n, Body&& body) {
  std::exception_ptr error;
  std::mutex error_mutex;
#ifdef GMMRF_HAVE_OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

/// Applies GMMRF_THREADS from the environment, if set.
void configure_threads_from_env();

}  // namespace gmmrf
