#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "glyco/error.hpp"

namespace glyco::cli {

/// 0 success, 2 config error, 4 numeric failure, 3 any other data error.
int exit_code(ErrorKind kind) noexcept;

/// One CLI invocation without the program name. Reports go to files under
/// --out; `out` gets short human summaries, `err` warnings and the one-line
/// error record on failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace glyco::cli
