#pragma once

// The `zec` command-line front end. Kept in the library so tests can drive
// it without spawning processes.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace zec::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Runs the CLI and returns the process exit code:
/// 0 ok, 2 input, 3 guard, 4 refusal, 5 oracle or decoding mismatch.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Floats rounded to 10 significant digits; object keys come out sorted.
nlohmann::json canonical(const nlohmann::json& j);
std::string canonical_dump(const nlohmann::json& j);

std::uint64_t fnv1a64(std::string_view bytes);

/// Writes through a temporary file in the same directory and renames it.
void atomic_write(const std::string& path, std::string_view contents);

}  // namespace zec::cli
