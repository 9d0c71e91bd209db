#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace reticgen::text {

std::string_view trim(std::string_view s);
std::vector<std::string_view> split_whitespace(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char delimiter);
std::vector<std::string_view> lines(std::string_view s);  // keeps empty lines

// Whole-string parses; nullopt on trailing junk or overflow.
std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);
std::optional<bool> parse_bool(std::string_view s);

// Shortest representation that round-trips exactly.
std::string format_double(double value);

std::string lowercase(std::string_view s);
std::string read_file(const std::string& path);  // throws ValidationError
void write_file_atomic(const std::string& path, std::string_view bytes);

}  // namespace reticgen::text
