#include "stt/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace stt {

int worker_count() {
  static const int count = [] {
    int n = omp_get_max_threads();
    if (const char* env = std::getenv("STT_THREADS")) {
      try {
        const int cap = std::stoi(env);
        if (cap > 0 && cap < n) n = cap;
      } catch (...) {
      }
    }
    return n < 1 ? 1 : n;
  }();
  return count;
}

}  // namespace stt
