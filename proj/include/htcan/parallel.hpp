#pragma once

namespace htcan {

/// Worker threads used by the data-parallel kernels. Results do not depend
/// on this value: every output element is produced by exactly one thread
/// with a fixed summation order.
void set_num_threads(int threads);
int num_threads();

}  // namespace htcan
