#include "sock/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace sock {

void set_threads(int n) {
  if (n <= 0) {
    if (const char* env = std::getenv("SOCK_THREADS")) {
      n = std::atoi(env);
    }
  }
  if (n > 0) omp_set_num_threads(n);
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace sock
