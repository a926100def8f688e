#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "volex/errors.hpp"

namespace volex {

/// Linear permanent impact kappa*x, temporary impact kappa_tilde*x/v,
/// horizon T and initial inventory X0.
struct MarketParams {
  double kappa = 1e-4;
  double kappa_tilde = 0.01;
  double horizon = 1.0;
  double x0 = 10.0;

  void validate() const {
    if (!(kappa > 0.0) || !(kappa_tilde > 0.0) || !(horizon > 0.0)) {
      throw DomainError("MarketParams: kappa, kappa_tilde and horizon must be > 0");
    }
    if (!(x0 >= 0.0) || !std::isfinite(x0)) {
      throw DomainError("MarketParams: x0 must be finite and >= 0");
    }
  }

  /// kappa * X0^2 / 2, the strategy-independent part of the expected IS cost.
  [[nodiscard]] double permanent_cost() const { return 0.5 * kappa * x0 * x0; }
};

/// Uniform grid t_k = k*dt, k = 0..n_steps, on [0, horizon].
class TimeGrid {
public:
  TimeGrid(double horizon, int n_steps) : horizon_(horizon), n_steps_(n_steps) {
    if (!(horizon > 0.0)) throw DomainError("TimeGrid: horizon must be > 0");
    if (n_steps < 1) throw DomainError("TimeGrid: n_steps must be >= 1");
    dt_ = horizon / n_steps;
  }

  [[nodiscard]] double horizon() const { return horizon_; }
  [[nodiscard]] int n_steps() const { return n_steps_; }
  [[nodiscard]] std::size_t size() const { return static_cast<std::size_t>(n_steps_) + 1; }
  [[nodiscard]] double dt() const { return dt_; }
  [[nodiscard]] double t(int k) const { return k == n_steps_ ? horizon_ : k * dt_; }

private:
  double horizon_;
  int n_steps_;
  double dt_;
};

/// Execution rates x_k at the grid nodes together with the holdings
/// X_{k+1} = X_k - x_k dt (left-endpoint rule). The rate at the last node
/// is carried for plotting but never integrated.
class ExecutionSchedule {
public:
  ExecutionSchedule() = default;
  ExecutionSchedule(std::vector<double> rates, std::vector<double> holdings)
      : rates_(std::move(rates)), holdings_(std::move(holdings)) {
    if (rates_.size() != holdings_.size()) {
      throw StructuralError("ExecutionSchedule: rates and holdings differ in length");
    }
  }

  [[nodiscard]] std::span<const double> rates() const { return rates_; }
  [[nodiscard]] std::span<const double> holdings() const { return holdings_; }
  [[nodiscard]] std::size_t size() const { return rates_.size(); }
  [[nodiscard]] double terminal_holdings() const { return holdings_.back(); }
  [[nodiscard]] double min_rate() const {
    double m = rates_.front();
    for (std::size_t k = 0; k + 1 < rates_.size(); ++k) m = std::min(m, rates_[k]);
    return m;
  }

private:
  std::vector<double> rates_;
  std::vector<double> holdings_;
};

/// Explicit-Euler holdings path for a rate path defined on every grid node.
inline std::vector<double> holdings_from_rates(std::span<const double> rates, double x0,
                                               const TimeGrid& grid) {
  if (rates.size() != grid.size()) {
    throw StructuralError("holdings_from_rates: expected " + std::to_string(grid.size()) +
                          " rates, got " + std::to_string(rates.size()));
  }
  std::vector<double> holdings(grid.size());
  holdings[0] = x0;
  const double dt = grid.dt();
  for (int k = 0; k < grid.n_steps(); ++k) {
    holdings[k + 1] = holdings[k] - rates[k] * dt;
  }
  return holdings;
}

inline std::vector<double> holdings_from_rates(std::span<const double> rates,
                                               const MarketParams& params,
                                               const TimeGrid& grid) {
  params.validate();
  return holdings_from_rates(rates, params.x0, grid);
}

inline ExecutionSchedule make_schedule(std::vector<double> rates, double x0,
                                       const TimeGrid& grid) {
  auto holdings = holdings_from_rates(rates, x0, grid);
  return ExecutionSchedule(std::move(rates), std::move(holdings));
}

/// Left-endpoint quadrature of int_0^T x^2 / v dt.
inline double pathwise_cost(std::span<const double> rates, std::span<const double> volume,
                            const TimeGrid& grid) {
  if (rates.size() != grid.size() || volume.size() != grid.size()) {
    throw StructuralError("pathwise_cost: rates/volume length does not match grid");
  }
  double acc = 0.0;
  for (int k = 0; k < grid.n_steps(); ++k) {
    if (!(volume[k] > 0.0)) {
      throw DomainError("pathwise_cost: non-positive volume at node " + std::to_string(k));
    }
    acc += rates[k] * rates[k] / volume[k];
  }
  return acc * grid.dt();
}

/// Pairwise (cascade) summation. The association order depends only on the
/// length of the input, so totals are reproducible for any worker count.
inline double pairwise_sum(std::span<const double> xs) {
  constexpr std::size_t kLeaf = 16;
  if (xs.size() <= kLeaf) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

struct SampleStats {
  double mean = 0.0;
  double std_error = 0.0;
};

inline SampleStats sample_stats(std::span<const double> xs) {
  if (xs.size() < 2) throw DomainError("sample_stats: need at least two samples");
  const double n = static_cast<double>(xs.size());
  const double mean = pairwise_sum(xs) / n;
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - mean) * (xs[i] - mean);
  const double var = pairwise_sum(sq) / (n - 1.0);
  return {mean, std::sqrt(var / n)};
}

/// Monte Carlo summary of J = E[int x^2/v dt] and the IS cost
/// kappa X0^2/2 + kappa_tilde J.
struct CostReport {
  double j_estimate = 0.0;
  double is_cost = 0.0;
  double std_error = 0.0;  // of j_estimate
  std::size_t n_paths = 0;

  [[nodiscard]] double is_std_error(const MarketParams& p) const { return p.kappa_tilde * std_error; }
};

inline CostReport make_cost_report(const MarketParams& params, std::span<const double> costs) {
  const auto stats = sample_stats(costs);
  CostReport r;
  r.j_estimate = stats.mean;
  r.is_cost = params.permanent_cost() + params.kappa_tilde * stats.mean;
  r.std_error = stats.std_error;
  r.n_paths = costs.size();
  return r;
}

/// sqrt(se_a^2 + se_b^2): combined standard error of two reported estimates.
inline double joint_std_error(double se_a, double se_b) { return std::hypot(se_a, se_b); }

}  // namespace volex
