#pragma once

#include <iosfwd>

#include "mlod/error.hpp"

namespace mlod::cli {

/// 0 success, 1 runtime failure, 2 usage or configuration error.
int exit_code_for(ErrorKind kind) noexcept;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mlod::cli
