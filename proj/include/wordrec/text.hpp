#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace wordrec {

std::vector<std::string> split_ws(std::string_view s);
std::vector<std::string> split_on(std::string_view s, char sep);
std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Shortest decimal form that reads back bit-identical.
std::string format_double(double v);

/// Reads a whole file; throws ValidationError if it cannot be opened.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

std::uint64_t fnv1a64(std::string_view data);

}  // namespace wordrec
