#include "gmmrf/parallel.hpp"

#include <cstdlib>
#include <string>

namespace gmmrf {

void configure_threads_from_env() {
  const char* value = std::getenv("GMMRF_THREADS");
  if (value == nullptr || *value == '\0') return;
  const int n = std::atoi(value);
  if (n < 1) return;
#ifdef GMMRF_HAVE_OPENMP
  omp_set_num_threads(n);
#endif
}

}  // namespace gmmrf
