// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ups::csv {

/// 17 significant digits, enough to round-trip any double.
std::string format_double(double v);
/// Empty string for nullopt.
std::string format_optional(const std::optional<double>& v);

std::vector<std::string_view> split(std::string_view line, char sep = ',');

/// Throws ParseError naming `line_no` when `cell` is not a complete number.
/// Accepts "inf"/"+inf"/"-inf".
double parse_double(std::string_view cell, std::size_t line_no);
long long parse_integer(std::string_view cell, std::size_t line_no);

/// Strips a trailing '\r'.
std::string_view trim_eol(std::string_view line);

}  // namespace ups::csv
