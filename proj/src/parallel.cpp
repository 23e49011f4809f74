#include "churn/parallel.hpp"

#include <omp.h>

#include <algorithm>

namespace churn {

namespace {
int g_threads = 1;
}

void set_num_threads(int n) {
  g_threads = std::max(1, n);
  omp_set_num_threads(g_threads);
}

int num_threads() { return g_threads; }

}  // namespace churn
