#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "volex/coefficient.hpp"
#include "volex/core.hpp"
#include "volex/volume.hpp"

namespace volex {

namespace detail {

/// x_k = x0 * w_k / (sum_{k<n} w_k dt), so the grid sell-off is exact.
inline ExecutionSchedule normalized_schedule(std::vector<double> weights, double x0,
                                             const TimeGrid& grid) {
  double total = 0.0;
  for (int k = 0; k < grid.n_steps(); ++k) total += weights[k];
  total *= grid.dt();
  if (x0 == 0.0) {
    std::fill(weights.begin(), weights.end(), 0.0);
    return make_schedule(std::move(weights), x0, grid);
  }
  if (!(std::abs(total) > 0.0) || !std::isfinite(total)) {
    throw DomainError("schedule weights integrate to zero or non-finite value");
  }
  const double scale = x0 / total;
  for (double& w : weights) w *= scale;
  return make_schedule(std::move(weights), x0, grid);
}

inline Coefficient bs_log_drift(const Coefficient& b, const Coefficient& sigma) {
  return Coefficient::combine(b, sigma, [](double bb, double s) { return bb - 0.5 * s * s; });
}

}  // namespace detail

/// Constant rate X0/T.
inline ExecutionSchedule twap(const MarketParams& params, const TimeGrid& grid) {
  params.validate();
  return make_schedule(std::vector<double>(grid.size(), params.x0 / params.horizon), params.x0, grid);
}

/// Anticipating VWAP x_k = X0 v_k / V_T with the discrete left-endpoint V_T.
inline ExecutionSchedule exact_vwap(const MarketParams& params, const VolumePath& path) {
  params.validate();
  const double total = path.total_volume();
  if (!(total > 0.0)) throw DomainError("exact_vwap: total volume must be > 0");
  std::vector<double> rates(path.v.size());
  for (std::size_t k = 0; k < rates.size(); ++k) rates[k] = params.x0 * path.v[k] / total;
  return make_schedule(std::move(rates), params.x0, path.grid);
}

/// Static VWAP proportional to the harmonic mean u_t = E[1/v_t]^{-1}.
inline ExecutionSchedule expected_vwap(const MarketParams& params, const VolumeModel& model,
                                       const TimeGrid& grid) {
  params.validate();
  std::vector<double> u(grid.size());
  for (int k = 0; k <= grid.n_steps(); ++k) u[k] = harmonic_mean_u(model, grid.t(k));
  return detail::normalized_schedule(std::move(u), params.x0, grid);
}

/// Adaptive optimum for time-dependent Black-Scholes volume:
/// x_t proportional to exp(-int_t^T (b_s - sigma_s^2/2) ds).
inline ExecutionSchedule analytic_adaptive_bs(const MarketParams& params, const Coefficient& b,
                                              const Coefficient& sigma, const TimeGrid& grid) {
  params.validate();
  const auto c = detail::bs_log_drift(b, sigma);
  std::vector<double> w(grid.size());
  for (int k = 0; k <= grid.n_steps(); ++k) w[k] = std::exp(-c.integral(grid.t(k), grid.horizon()));
  return detail::normalized_schedule(std::move(w), params.x0, grid);
}

/// Optimal value J = X0^2 / (v0 int_0^T exp(int_0^t (b - sigma^2/2)) dt).
inline double bs_adaptive_value(const MarketParams& params, double v0, const Coefficient& b,
                                const Coefficient& sigma) {
  params.validate();
  const auto c = detail::bs_log_drift(b, sigma);
  return params.x0 * params.x0 / (v0 * exp_integral(c, 0.0, params.horizon));
}

/// Power-impact generalization: x_t proportional to
/// exp(beta^2/(2 alpha) int_t^T sigma^2 ds) * u_bar_t^(beta/alpha).
inline ExecutionSchedule twisted_vwap(const MarketParams& params, const Coefficient& u_bar,
                                      const Coefficient& sigma, double alpha, double beta,
                                      const TimeGrid& grid) {
  params.validate();
  if (!(alpha > 0.0)) throw DomainError("twisted_vwap: alpha must be > 0");
  if (!(beta >= 0.0)) throw DomainError("twisted_vwap: beta must be >= 0");
  if (!(u_bar.min_value() > 0.0)) throw DomainError("twisted_vwap: u_bar must be > 0");
  const auto var = Coefficient::combine(sigma, sigma, [](double a, double b) { return a * b; });
  const double k_exp = beta * beta / (2.0 * alpha);
  const double power = beta / alpha;
  std::vector<double> w(grid.size());
  for (int k = 0; k <= grid.n_steps(); ++k) {
    const double t = grid.t(k);
    w[k] = std::exp(k_exp * var.integral(t, grid.horizon())) * std::pow(u_bar(t), power);
  }
  return detail::normalized_schedule(std::move(w), params.x0, grid);
}

// ---------------------------------------------------------------------------
// Volume-dependent permanent impact g(v, x) = kappa x / v with GBM volume
// (log-drift mu, log-vol sigma). E[1/v_t] = exp(-mu_tilde t) / v0.

struct AppendixBParams {
  double mu = 0.0;
  double sigma = 0.3;
  double v0 = 100.0;

  [[nodiscard]] double mu_tilde() const { return mu - 0.5 * sigma * sigma; }
  [[nodiscard]] double discriminant(const MarketParams& p) const {
    const double m = mu_tilde();
    return m * m - 2.0 * m * p.kappa / p.kappa_tilde;
  }
  [[nodiscard]] double gamma(const MarketParams& p) const { return std::sqrt(std::abs(discriminant(p))); }
};

enum class AppendixBCase { Oscillatory, Critical, Exponential };

inline AppendixBCase appendix_b_case(const MarketParams& params, const AppendixBParams& ab) {
  const double d = ab.discriminant(params);
  if (d < 0.0) {
    if (!(ab.gamma(params) * params.horizon < 2.0 * std::numbers::pi)) {
      throw UnsupportedRegime("appendix_b_case: D < 0 with gamma*T >= 2*pi has no closed-form optimizer");
    }
    return AppendixBCase::Oscillatory;
  }
  return d == 0.0 ? AppendixBCase::Critical : AppendixBCase::Exponential;
}

/// Closed-form rate of the requested case at time t (no regime check, so the
/// formulas can be compared across the D = 0 boundary).
inline double appendix_b_rate(const MarketParams& params, const AppendixBParams& ab, double t,
                              AppendixBCase which) {
  const double m = ab.mu_tilde();
  const double g = ab.gamma(params);
  const double T = params.horizon;
  const double x0 = params.x0;
  switch (which) {
    case AppendixBCase::Oscillatory: {
      const double h = 0.5 * g * (T - t);
      return x0 * std::exp(0.5 * m * t) / (2.0 * std::sin(0.5 * g * T)) *
             (g * std::cos(h) - m * std::sin(h));
    }
    case AppendixBCase::Critical:
      return x0 * std::exp(0.5 * m * t) * (1.0 / T - 0.5 * m * (1.0 - t / T));
    case AppendixBCase::Exponential:
      return x0 / (2.0 * std::expm1(g * T)) *
             ((m + g) * std::exp(0.5 * (m + g) * t) - (m - g) * std::exp(0.5 * (m - g) * t + g * T));
  }
  return 0.0;
}

/// Static optimizer with volume-dependent permanent impact. Rates may be
/// negative (buying); the schedule is renormalized so the grid sell-off is exact.
inline ExecutionSchedule appendix_b_strategy(const MarketParams& params, const AppendixBParams& ab,
                                             const TimeGrid& grid) {
  params.validate();
  const auto which = appendix_b_case(params, ab);
  std::vector<double> w(grid.size());
  for (int k = 0; k <= grid.n_steps(); ++k) w[k] = appendix_b_rate(params, ab, grid.t(k), which);
  return detail::normalized_schedule(std::move(w), params.x0, grid);
}

/// Deterministic cost sum_k (kappa X_k x_k + kappa_tilde x_k^2) E[1/v_{t_k}] dt.
inline double appendix_b_cost(const MarketParams& params, const AppendixBParams& ab,
                              const ExecutionSchedule& schedule, const TimeGrid& grid) {
  if (schedule.size() != grid.size()) throw StructuralError("appendix_b_cost: grid mismatch");
  const auto x = schedule.rates();
  const auto X = schedule.holdings();
  double acc = 0.0;
  for (int k = 0; k < grid.n_steps(); ++k) {
    const double inv_v = std::exp(-ab.mu_tilde() * grid.t(k)) / ab.v0;
    acc += (params.kappa * X[k] * x[k] + params.kappa_tilde * x[k] * x[k]) * inv_v;
  }
  return acc * grid.dt();
}

}  // namespace volex
