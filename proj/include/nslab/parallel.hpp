#pragma once

namespace nslab {

/// Number of worker threads used by parallel loops. Results never depend on
/// it: parallel loops only write disjoint outputs and reductions run serially.
int thread_budget();
void set_thread_budget(int threads);

} // namespace nslab
