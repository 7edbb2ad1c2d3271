// SPDX-License-Identifier: Apache-2.0
#include "ups/csv.hpp"

#include <charconv>
#include <cmath>

#include "ups/common.hpp"

namespace ups::csv {

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string{};
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim_eol(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

double parse_double(std::string_view cell, std::size_t line_no) {
  if (cell == "inf" || cell == "+inf") return INFINITY;
  if (cell == "-inf") return -INFINITY;
  std::string_view body = cell;
  if (!body.empty() && body.front() == '+') body.remove_prefix(1);
  double value = 0.0;
  const auto res = std::from_chars(body.data(), body.data() + body.size(), value);
  if (body.empty() || res.ec != std::errc{} || res.ptr != body.data() + body.size())
    throw ParseError("line " + std::to_string(line_no) + ": '" + std::string(cell) +
                     "' is not a number");
  return value;
}

long long parse_integer(std::string_view cell, std::size_t line_no) {
  long long value = 0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || res.ec != std::errc{} || res.ptr != cell.data() + cell.size())
    throw ParseError("line " + std::to_string(line_no) + ": '" + std::string(cell) +
                     "' is not an integer");
  return value;
}

}  // namespace ups::csv
