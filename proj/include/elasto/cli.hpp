#pragma once

#include <string>
#include <vector>

namespace elasto::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Runs one command line. Returns 0 on success, 1 on a runtime failure and 2
/// on a usage error (in which case nothing is written).
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace elasto::cli
