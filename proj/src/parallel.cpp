#include "mlod/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

#include "mlod/error.hpp"

namespace mlod {

int resolve_threads(std::optional<int> requested) {
  if (requested) {
    if (*requested < 1) throw Error(ErrorKind::ConfigError, "--threads must be >= 1");
    return *requested;
  }
  if (const char* env = std::getenv("MLOD_THREADS"); env != nullptr && *env != '\0') {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::ConfigError, std::string("MLOD_THREADS must be a positive integer, got '") + env + "'");
  }
  return omp_get_num_procs();
}

void set_threads(int threads) { omp_set_num_threads(threads); }

int max_threads() { return omp_get_max_threads(); }

}  // namespace mlod
