// io_util.hpp -- text formatting and file helpers shared by the file formats

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace flowcast {

/// Encodes a double as its 16-digit IEEE-754 bit pattern (lowercase hex).
/// Exact roundtrip, no decimal rounding, identical on every platform.
std::string hex_double(double v);

/// Inverse of hex_double. Throws CorruptFile on malformed input.
double parse_hex_double(std::string_view s);

/// Shortest decimal form that parses back to the same double (via to_chars).
std::string format_double(double v);

/// Strict double parse of a whole token. Returns false on any trailing junk.
bool parse_double(std::string_view s, double& out);

std::vector<std::string> split(std::string_view s, char sep);

/// Writes content to path atomically (temp file + rename).
void atomic_write_file(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

/// Runs fn(begin, end) over [0, n) split into contiguous shards. Shard
/// boundaries depend only on (n, threads), so any per-element pure work is
/// reproducible for a fixed thread count; callers that need thread-count
/// independence must make per-element work independent of the shard.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& fn);

} // namespace flowcast
