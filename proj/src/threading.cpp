#include "jdsi/nn/threading.hpp"

#include <malloc.h>
#include <omp.h>

#include <algorithm>
#include <mutex>

namespace jdsi::nn {

namespace {
int g_threads = 1;
}

void set_num_threads(int n)
{
  g_threads = std::max(1, n);
  omp_set_num_threads(g_threads);
}

int num_threads() { return g_threads; }

void keep_heap_warm()
{
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
}

} // namespace jdsi::nn
