#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "volex/errors.hpp"

namespace volex {

/// Right-continuous piecewise-constant function of time. values[i] applies on
/// [knots[i], knots[i+1]); the last value extends to +infinity.
class Coefficient {
public:
  Coefficient() : knots_{0.0}, values_{0.0} {}

  static Coefficient constant(double c) {
    if (!std::isfinite(c)) throw DomainError("Coefficient: non-finite constant");
    Coefficient out;
    out.values_[0] = c;
    return out;
  }

  static Coefficient piecewise(std::vector<double> knots, std::vector<double> values) {
    if (knots.empty() || knots.size() != values.size()) {
      throw StructuralError("Coefficient: knots and values must be non-empty and equal in length");
    }
    if (knots.front() != 0.0) throw DomainError("Coefficient: first knot must be t = 0");
    for (std::size_t i = 1; i < knots.size(); ++i) {
      if (!(knots[i] > knots[i - 1])) throw DomainError("Coefficient: knots must increase strictly");
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw DomainError("Coefficient: non-finite value");
    }
    Coefficient out;
    out.knots_ = std::move(knots);
    out.values_ = std::move(values);
    return out;
  }

  /// Samples a closure at the midpoints of n uniform cells on [0, horizon].
  static Coefficient tabulate(const std::function<double(double)>& f, double horizon, int n) {
    if (n < 1 || !(horizon > 0.0)) throw DomainError("Coefficient::tabulate: bad resolution");
    std::vector<double> knots(n), values(n);
    const double h = horizon / n;
    for (int i = 0; i < n; ++i) {
      knots[i] = i * h;
      values[i] = f((i + 0.5) * h);
    }
    return piecewise(std::move(knots), std::move(values));
  }

  /// Pointwise combination on the union of both knot sets.
  static Coefficient combine(const Coefficient& a, const Coefficient& b,
                             const std::function<double(double, double)>& op) {
    std::vector<double> knots = a.knots_;
    knots.insert(knots.end(), b.knots_.begin(), b.knots_.end());
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
    std::vector<double> values(knots.size());
    for (std::size_t i = 0; i < knots.size(); ++i) values[i] = op(a(knots[i]), b(knots[i]));
    return piecewise(std::move(knots), std::move(values));
  }

  [[nodiscard]] double operator()(double t) const { return values_[piece(t)]; }

  [[nodiscard]] bool is_constant() const { return values_.size() == 1; }
  [[nodiscard]] const std::vector<double>& knots() const { return knots_; }
  [[nodiscard]] const std::vector<double>& values() const { return values_; }

  /// Exact integral over [a, b] (a <= b).
  [[nodiscard]] double integral(double a, double b) const {
    if (b < a) return -integral(b, a);
    double acc = 0.0;
    for_each_piece(a, b, [&](double lo, double hi, double c) { acc += c * (hi - lo); });
    return acc;
  }

  /// Calls fn(lo, hi, value) for every constant piece intersecting [a, b].
  template <class Fn>
  void for_each_piece(double a, double b, Fn&& fn) const {
    if (!(b > a)) return;
    std::size_t i = piece(a);
    double lo = a;
    while (lo < b) {
      const double hi = (i + 1 < knots_.size()) ? std::min(b, knots_[i + 1]) : b;
      if (hi > lo) fn(lo, hi, values_[i]);
      lo = hi;
      ++i;
    }
  }

  [[nodiscard]] double min_value() const { return *std::min_element(values_.begin(), values_.end()); }

private:
  [[nodiscard]] std::size_t piece(double t) const {
    auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
    if (it == knots_.begin()) return 0;
    return static_cast<std::size_t>(it - knots_.begin()) - 1;
  }

  std::vector<double> knots_;
  std::vector<double> values_;
};

/// Reads a headed numeric CSV (e.g. `t,b,sigma` or `t,u_bar`) and returns one
/// piecewise-constant coefficient per non-`t` column.
inline std::map<std::string, Coefficient> read_coefficient_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open coefficient table '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("coefficient table '" + path + "' is empty");
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cell.erase(0, cell.find_first_not_of(" \t\r"));
      cell.erase(cell.find_last_not_of(" \t\r") + 1);
      out.push_back(cell);
    }
    return out;
  };
  const auto header = split(line);
  if (header.size() < 2 || header[0] != "t") {
    throw ConfigError("coefficient table '" + path + "' must start with a 't' column");
  }
  std::vector<std::vector<double>> cols(header.size());
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw ConfigError(path + ":" + std::to_string(row) + ": expected " +
                        std::to_string(header.size()) + " columns");
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      try {
        cols[c].push_back(std::stod(cells[c]));
      } catch (const std::exception&) {
        throw ConfigError(path + ":" + std::to_string(row) + ": '" + cells[c] + "' is not a number");
      }
    }
  }
  if (cols[0].empty()) throw ConfigError("coefficient table '" + path + "' has no rows");
  std::map<std::string, Coefficient> out;
  for (std::size_t c = 1; c < header.size(); ++c) {
    out.emplace(header[c], Coefficient::piecewise(cols[0], cols[c]));
  }
  return out;
}

/// int_a^b exp(int_a^s c(r) dr) ds, exact for piecewise-constant c.
inline double exp_integral(const Coefficient& c, double a, double b) {
  double acc = 0.0;
  double running = 0.0;
  c.for_each_piece(a, b, [&](double lo, double hi, double value) {
    const double len = hi - lo;
    const double piece = (value == 0.0) ? len : std::expm1(value * len) / value;
    acc += std::exp(running) * piece;
    running += value * len;
  });
  return acc;
}

}  // namespace volex
