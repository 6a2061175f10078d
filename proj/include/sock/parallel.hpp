#pragma once

namespace sock {

/// Caps the OpenMP thread count for all parallel kernels.
/// n <= 0 restores the runtime default (or SOCK_THREADS if set).
void set_threads(int n);

int max_threads();

}  // namespace sock
