#pragma once

namespace jdsi::nn {

/// Worker count for batch-parallel kernels. 1 (the default) is the
/// sequential mode; any count reduces in the same fixed order.
void set_num_threads(int n);
int num_threads();

/// Keeps freed activation buffers in the heap instead of returning them to
/// the OS, so repeated forward/backward passes do not page-fault on every
/// fresh tensor. Idempotent.
void keep_heap_warm();

} // namespace jdsi::nn
