#include "nslab/parallel.hpp"

#include <algorithm>
#include <atomic>

namespace nslab {
namespace {
std::atomic<int> g_threads{1};
}

int thread_budget() { return g_threads.load(); }

void set_thread_budget(int threads) { g_threads.store(std::max(1, threads)); }

} // namespace nslab
