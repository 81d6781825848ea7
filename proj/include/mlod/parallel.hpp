#pragma once

#include <optional>

namespace mlod {

/// Thread count from an explicit request, else the MLOD_THREADS environment
/// variable, else the number of available cores.
int resolve_threads(std::optional<int> requested);

/// Applies the count to subsequent OpenMP regions.
void set_threads(int threads);

int max_threads();

}  // namespace mlod
