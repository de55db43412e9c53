// Number formatting shared by the text file formats and CSV outputs.
#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>

namespace sphl {

/// Shortest decimal that parses back to the same double ("nan", "inf" for
/// non-finite values).
inline std::string format_shortest(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

/// Nine significant digits, for tabular outputs.
inline std::string format_g9(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  std::snprintf(buf.data(), buf.size(), "%.9g", v);
  return buf.data();
}

/// Strict full-token double parse; accepts "nan"/"inf" spellings.
inline std::optional<double> parse_double(std::string_view s) {
  if (s == "nan" || s == "NaN") return std::nan("");
  if (s == "inf") return HUGE_VAL;
  if (s == "-inf") return -HUGE_VAL;
  double v = 0.0;
  const auto* first = s.data();
  if (!s.empty() && s.front() == '+') ++first;
  const auto res = std::from_chars(first, s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || s.empty()) {
    return std::nullopt;
  }
  return v;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  Int v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || s.empty()) {
    return std::nullopt;
  }
  return v;
}

}  // namespace sphl
