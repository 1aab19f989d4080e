#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pll::text {

/// Shortest decimal that parses back to exactly `v`.
std::string format_double(double v);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);

/// Flat `key = value` file; blank lines and `#` comments are ignored.
std::map<std::string, std::string> read_key_values(const std::string& path);
void write_key_values(const std::string& path, const std::map<std::string, std::string>& kv);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace pll::text
