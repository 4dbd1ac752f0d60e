#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

namespace bistab {

inline constexpr const char* kVersion = "0.1.0";

/// Entry point of the `bistab` command-line tool. Returns the process exit
/// code: 0 on success, 2 on input errors, 3 on numerical failures.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

// Seventeen significant digits, the fixed format of every CSV cell.
std::string format_double(double value);
std::uint64_t fnv1a_64(std::string_view bytes);

}  // namespace bistab
