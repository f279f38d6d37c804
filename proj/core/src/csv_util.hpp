#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include <boost/tokenizer.hpp>

#include "kinrisk/errors.hpp"

namespace kinrisk::detail {

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline bool is_missing(std::string_view cell) {
  const auto t = trim(cell);
  return t.empty() || t == "NA" || t == "na" || t == "NaN" || t == "nan" || t == ".";
}

inline double parse_number(std::string_view cell, std::size_t row, const std::string& column) {
  const auto t = trim(cell);
  double value = 0.0;
  const auto* begin = t.data();
  const auto* end = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (t.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw ParseError(row, "malformed numeric value '" + std::string(t) + "' in column '" + column + "'");
  }
  return value;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  std::vector<std::string> cells;
  Tokenizer tok(line);
  for (const auto& cell : tok) cells.emplace_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\\") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace kinrisk::detail
