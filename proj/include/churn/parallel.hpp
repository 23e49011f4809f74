#pragma once

namespace churn {

// Kernels that have an OpenMP path also keep a plain serial loop. Serial is
// the reference the parallel path is tested against.
enum class Execution { Serial, Parallel };

// Thread count used by every Execution::Parallel kernel. Defaults to 1.
void set_num_threads(int n);
int num_threads();

}  // namespace churn
