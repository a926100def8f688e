#pragma once

#include <charconv>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

namespace volex::csv {

/// Shortest round-trip decimal form, so equal doubles always print equal text.
inline std::string format(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace detail {
inline void put(std::ostream& out, double x) { out << format(x); }
inline void put(std::ostream& out, std::string_view s) { out << s; }
inline void put(std::ostream& out, const char* s) { out << s; }
inline void put(std::ostream& out, const std::string& s) { out << s; }
template <class I, std::enable_if_t<std::is_integral_v<I>, int> = 0>
void put(std::ostream& out, I i) {
  out << i;
}
}  // namespace detail

template <class First, class... Rest>
void row(std::ostream& out, const First& first, const Rest&... rest) {
  detail::put(out, first);
  ((out << ',', detail::put(out, rest)), ...);
  out << '\n';
}

}  // namespace volex::csv
