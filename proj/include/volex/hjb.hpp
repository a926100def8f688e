#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "volex/coefficient.hpp"
#include "volex/core.hpp"
#include "volex/csv.hpp"
#include "volex/errors.hpp"
#include "volex/volume.hpp"

namespace volex {

/// How the first and last state nodes are closed.
///   Natural    diffusion dropped, advection one-sided into the domain
///   ClosedForm Dirichlet data from the exact Black-Scholes solution
///   LogLinear  log W extrapolated linearly from the two inner nodes
///   Auto       ClosedForm for Black-Scholes volume, Natural otherwise
enum class BoundaryMode { Auto, Natural, ClosedForm, LogLinear };

struct PdeGrid {
  int n_t = 2000;
  int n_y = 401;
  double half_width_sd = 8.0;  // state domain half-width in standard deviations
  double min_half_width = 0.5;

  void validate() const {
    if (n_t < 1) throw DomainError("PdeGrid: n_t must be >= 1");
    if (n_y < 5) throw DomainError("PdeGrid: n_y must be >= 5");
    if (!(half_width_sd > 0.0) || !(min_half_width > 0.0)) {
      throw DomainError("PdeGrid: domain widths must be > 0");
    }
  }
};

struct SolverOptions {
  BoundaryMode boundary = BoundaryMode::Auto;
  double theta = 0.5;   // 1 = backward Euler, 0.5 = Crank-Nicolson in the linear part
  bool newton = false;  // Newton on the theta-weighted reaction instead of the linearized product
  double newton_tol = 1e-10;
  int newton_max_iter = 50;
};

struct SolverDiagnostics {
  int time_steps = 0;
  int state_nodes = 0;
  int total_iterations = 0;
  int max_iterations = 0;
  double max_residual = 0.0;
  int upwind_nodes = 0;
  double min_value = 0.0;
  std::string boundary;

  [[nodiscard]] nlohmann::json to_json() const {
    return {{"time_steps", time_steps},       {"state_nodes", state_nodes},
            {"total_iterations", total_iterations}, {"max_iterations", max_iterations},
            {"max_residual", max_residual},   {"upwind_nodes", upwind_nodes},
            {"min_value", min_value},         {"boundary", boundary}};
  }
};

namespace detail {

inline const char* boundary_name(BoundaryMode m) {
  switch (m) {
    case BoundaryMode::Auto: return "auto";
    case BoundaryMode::Natural: return "natural";
    case BoundaryMode::ClosedForm: return "closed_form";
    case BoundaryMode::LogLinear: return "log_linear";
  }
  return "?";
}

/// Thomas algorithm; lo[0] and up[n-1] are ignored. Overwrites rhs with the solution.
inline void solve_tridiagonal(const std::vector<double>& lo, std::vector<double> di,
                              const std::vector<double>& up, std::vector<double>& rhs) {
  const std::size_t n = di.size();
  for (std::size_t j = 1; j < n; ++j) {
    const double m = lo[j] / di[j - 1];
    di[j] -= m * up[j - 1];
    rhs[j] -= m * rhs[j - 1];
  }
  rhs[n - 1] /= di[n - 1];
  for (std::size_t j = n - 1; j-- > 0;) rhs[j] = (rhs[j] - up[j] * rhs[j + 1]) / di[j];
}

inline TimeDepBS as_black_scholes(const VolumeModel& model) {
  if (const auto* bs = model.get_if<TimeDepBS>()) return *bs;
  if (const auto* c = model.get_if<ConstantVolume>()) return TimeDepBS{c->v_bar, {}, {}};
  throw DomainError("expected a Black-Scholes or constant volume model");
}

}  // namespace detail

/// Exact W^lambda(t, v) = 1 / (v g(t)) for time-dependent Black-Scholes volume,
/// g(t) = int_t^T exp(int_t^s c) ds + exp(int_t^T c) / lambda, c = b - sigma^2/2.
inline double bs_closed_form_w(const TimeDepBS& bs, double horizon, double lambda, double t, double v) {
  const auto c = Coefficient::combine(bs.drift, bs.vol, [](double b, double s) { return b - 0.5 * s * s; });
  const double g = exp_integral(c, t, horizon) + std::exp(c.integral(t, horizon)) / lambda;
  return 1.0 / (v * g);
}

/// Finite-difference W^lambda on a (time x state) grid. The state is y = log v
/// for Black-Scholes volume and the OU noise z for perturbed-OU volume.
class ValueSurface {
public:
  enum class State { LogVolume, OuNoise };

  ValueSurface(State state, double lambda, double horizon, int n_t, double x_center, double dx, int center,
               int n_x)
      : state_(state), lambda_(lambda), horizon_(horizon), n_t_(n_t), x_center_(x_center), dx_(dx),
        center_(center), n_x_(n_x), w_(static_cast<std::size_t>(n_t + 1) * n_x) {}

  [[nodiscard]] State state() const { return state_; }
  [[nodiscard]] double lambda() const { return lambda_; }
  [[nodiscard]] double horizon() const { return horizon_; }
  [[nodiscard]] int n_t() const { return n_t_; }
  [[nodiscard]] int n_x() const { return n_x_; }
  [[nodiscard]] double dt() const { return horizon_ / n_t_; }
  [[nodiscard]] double t(int i) const { return i == n_t_ ? horizon_ : i * dt(); }
  [[nodiscard]] double x(int j) const { return x_center_ + (j - center_) * dx_; }
  [[nodiscard]] int center_index() const { return center_; }

  [[nodiscard]] double& at(int i, int j) { return w_[static_cast<std::size_t>(i) * n_x_ + j]; }
  [[nodiscard]] double at(int i, int j) const { return w_[static_cast<std::size_t>(i) * n_x_ + j]; }

  /// W at the initial state (log v0 or z = 0), which is a grid node.
  [[nodiscard]] double initial_value() const { return at(0, center_); }

  /// Interpolated W: log-linear in the state (linear where W <= 0), linear in t.
  /// States outside the grid are clamped to the edge.
  [[nodiscard]] double value(double t, double x) const {
    t = std::clamp(t, 0.0, horizon_);
    const double ft = t / dt();
    int i = std::min(static_cast<int>(ft), n_t_ - 1);
    const double at_ = ft - i;
    const double v0 = slice_value(i, x);
    if (at_ <= 0.0) return v0;
    return (1.0 - at_) * v0 + at_ * slice_value(i + 1, x);
  }

  /// State of `path` at node k in this surface's coordinates.
  [[nodiscard]] double state_of(const VolumePath& path, std::size_t k) const {
    return state_ == State::LogVolume ? std::log(path.v[k]) : path.z[k];
  }

  SolverDiagnostics diagnostics;

  void write_csv(std::ostream& out, int t_stride = 1) const {
    out << (state_ == State::LogVolume ? "t,y,W\n" : "t,z,W\n");
    t_stride = std::max(1, t_stride);
    for (int i = 0; i <= n_t_; ++i) {
      if (i % t_stride != 0 && i != n_t_) continue;
      for (int j = 0; j < n_x_; ++j) csv::row(out, t(i), x(j), at(i, j));
    }
  }

private:
  [[nodiscard]] double slice_value(int i, double x) const {
    const double fx = (x - x_center_) / dx_ + center_;
    if (fx <= 0.0) return at(i, 0);
    if (fx >= n_x_ - 1) return at(i, n_x_ - 1);
    const int j = static_cast<int>(fx);
    const double a = fx - j;
    const double lo = at(i, j), hi = at(i, j + 1);
    if (lo > 0.0 && hi > 0.0) return lo * std::exp(a * std::log(hi / lo));
    return (1.0 - a) * lo + a * hi;
  }

  State state_;
  double lambda_;
  double horizon_;
  int n_t_;
  double x_center_, dx_;
  int center_, n_x_;
  std::vector<double> w_;
};

/// Backward solve of W_t + a W_x + (beta^2/2) W_xx = v(t, x) W^2, W(T, x) = lambda / v(T, x).
/// Each step is implicit in the linear part with the reaction linearized at the
/// later slice, which integrates the pure Riccati ODE exactly.
inline ValueSurface solve_w_lambda(const VolumeModel& model, double lambda, const PdeGrid& grid = {},
                                   const SolverOptions& opts = {}) {
  grid.validate();
  if (!(opts.theta >= 0.5 && opts.theta <= 1.0)) throw DomainError("solve_w_lambda: theta must lie in [0.5, 1]");
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw DomainError("solve_w_lambda: lambda must be finite and > 0");
  const double T = model.horizon();
  const int n_t = grid.n_t;
  const int n_x = grid.n_y;
  const int center = (n_x - 1) / 2;
  const double dt = T / n_t;

  const auto* ou = model.get_if<PerturbedOU>();
  TimeDepBS bs;
  if (!ou) bs = detail::as_black_scholes(model);

  BoundaryMode mode = opts.boundary;
  if (mode == BoundaryMode::Auto) mode = ou ? BoundaryMode::Natural : BoundaryMode::ClosedForm;
  if (mode == BoundaryMode::ClosedForm && ou) {
    throw DomainError("solve_w_lambda: closed-form boundary needs Black-Scholes volume");
  }

  // Per-step coefficients: drift a_i(x) = adv_const + adv_slope * x, diffusion beta2_i.
  std::vector<double> adv_const(n_t, 0.0), beta2(n_t, 0.0), level(n_t + 1, 1.0);
  double adv_slope = 0.0;
  double x_center = 0.0, half = 0.0;
  if (ou) {
    adv_slope = -ou->rho;
    std::fill(beta2.begin(), beta2.end(), ou->sigma * ou->sigma);
    for (int i = 0; i < n_t; ++i) level[i] = ou->u_bar.integral(i * dt, (i + 1) * dt) / dt;
    level[n_t] = ou->u_bar(T);
    half = std::max(grid.half_width_sd * ou->sigma / std::sqrt(2.0 * ou->rho), grid.min_half_width);
  } else {
    const auto sq = Coefficient::combine(bs.vol, bs.vol, [](double a, double b) { return a * b; });
    double max_shift = 0.0;
    for (int i = 0; i < n_t; ++i) {
      adv_const[i] = bs.drift.integral(i * dt, (i + 1) * dt) / dt;
      beta2[i] = sq.integral(i * dt, (i + 1) * dt) / dt;
      max_shift = std::max(max_shift, std::abs(bs.drift.integral(0.0, (i + 1) * dt)));
    }
    x_center = std::log(bs.v0);
    half = std::max(max_shift + grid.half_width_sd * std::sqrt(sq.integral(0.0, T)), grid.min_half_width);
  }
  const double dx = half / center;

  ValueSurface surf(ou ? ValueSurface::State::OuNoise : ValueSurface::State::LogVolume, lambda, T, n_t, x_center,
                    dx, center, n_x);
  auto volume = [&](int i, double x) { return ou ? level[i] * std::exp(ou->epsilon * x) : std::exp(x); };
  auto exact = [&](int i, double x) { return bs_closed_form_w(bs, T, lambda, surf.t(i), std::exp(x)); };

  for (int j = 0; j < n_x; ++j) surf.at(n_t, j) = lambda / volume(n_t, surf.x(j));

  SolverDiagnostics diag;
  diag.time_steps = n_t;
  diag.state_nodes = n_x;
  diag.boundary = detail::boundary_name(mode);

  std::vector<double> lo(n_x), di(n_x), up(n_x), rhs(n_x), react(n_x), w(n_x), prev(n_x);
  for (int i = n_t - 1; i >= 0; --i) {
    for (int j = 0; j < n_x; ++j) prev[j] = surf.at(i + 1, j);
    const double d = 0.5 * beta2[i];
    // Linear part: implicit rows (I - theta dt L), explicit (1 - theta) dt L on the later slice.
    const double th = opts.theta;
    const double ex = (1.0 - th) * dt;
    for (int j = 1; j < n_x - 1; ++j) {
      const double a = adv_const[i] + adv_slope * surf.x(j);
      double l = d / (dx * dx), u = d / (dx * dx);
      if (std::abs(a) * dx > 2.0 * d) {
        ++diag.upwind_nodes;
        if (a > 0.0) u += a / dx;
        else l -= a / dx;
      } else {
        l -= a / (2.0 * dx);
        u += a / (2.0 * dx);
      }
      lo[j] = -th * dt * l;
      up[j] = -th * dt * u;
      di[j] = 1.0 + th * dt * (l + u);
      react[j] = dt * volume(i, surf.x(j));
      rhs[j] = prev[j] + ex * (l * prev[j - 1] - (l + u) * prev[j] + u * prev[j + 1]);
    }
    const int last = n_x - 1;
    lo[0] = up[last] = 0.0;
    switch (mode) {
      case BoundaryMode::ClosedForm:
        di[0] = di[last] = 1.0;
        up[0] = lo[last] = 0.0;
        react[0] = react[last] = 0.0;
        rhs[0] = exact(i, surf.x(0));
        rhs[last] = exact(i, surf.x(last));
        break;
      case BoundaryMode::LogLinear:
        di[0] = di[last] = 1.0;
        up[0] = -prev[1] / prev[2];
        lo[last] = -prev[last - 1] / prev[last - 2];
        react[0] = react[last] = 0.0;
        rhs[0] = rhs[last] = 0.0;
        break;
      default: {
        const double a0 = (adv_const[i] + adv_slope * surf.x(0)) / dx;
        const double an = (adv_const[i] + adv_slope * surf.x(last)) / dx;
        di[0] = 1.0 + th * dt * a0;
        up[0] = -th * dt * a0;
        di[last] = 1.0 - th * dt * an;
        lo[last] = th * dt * an;
        react[0] = dt * volume(i, surf.x(0));
        react[last] = dt * volume(i, surf.x(last));
        rhs[0] = prev[0] + ex * a0 * (prev[1] - prev[0]);
        rhs[last] = prev[last] + ex * an * (prev[last] - prev[last - 1]);
        break;
      }
    }

    // Picard step with the reaction frozen at the later slice.
    {
      std::vector<double> dd(n_x);
      for (int j = 0; j < n_x; ++j) dd[j] = di[j] + react[j] * prev[j];
      w = rhs;
      detail::solve_tridiagonal(lo, dd, up, w);
    }
    int iters = 1;
    if (opts.newton) {
      double step = std::numeric_limits<double>::infinity();
      // Reaction theta-weighted like the linear part: theta v W_i^2 + (1 - theta) v W_{i+1}^2.
      std::vector<double> dd(n_x), res(n_x);
      double res_norm = 0.0;
      for (iters = 1; iters <= opts.newton_max_iter; ++iters) {
        double scale = 0.0;
        res_norm = 0.0;
        for (int j = 0; j < n_x; ++j) {
          double r = di[j] * w[j] + react[j] * (th * w[j] * w[j] + (1.0 - th) * prev[j] * prev[j]) - rhs[j];
          if (j > 0) r += lo[j] * w[j - 1];
          if (j < last) r += up[j] * w[j + 1];
          res[j] = r;
          dd[j] = di[j] + 2.0 * th * react[j] * w[j];
          scale = std::max(scale, std::abs(w[j]));
          res_norm = std::max(res_norm, std::abs(r));
        }
        detail::solve_tridiagonal(lo, dd, up, res);
        step = 0.0;
        for (int j = 0; j < n_x; ++j) {
          w[j] -= res[j];
          step = std::max(step, std::abs(res[j]));
        }
        if (!(step <= opts.newton_tol * scale)) continue;
        break;
      }
      if (!(step <= opts.newton_tol * std::max(1e-300, *std::max_element(w.begin(), w.end())))) {
        std::ostringstream msg;
        msg << "solve_w_lambda: Newton did not converge at step " << i << " (t = " << surf.t(i)
            << "), last update " << step << ", residual " << res_norm << ", lambda " << lambda;
        throw SolverError(msg.str());
      }
      diag.max_residual = std::max(diag.max_residual, res_norm);
    }
    diag.total_iterations += iters;
    diag.max_iterations = std::max(diag.max_iterations, iters);
    for (int j = 0; j < n_x; ++j) {
      if (!std::isfinite(w[j])) {
        std::ostringstream msg;
        msg << "solve_w_lambda: non-finite value at step " << i << " (t = " << surf.t(i) << "), node " << j
            << " (x = " << surf.x(j) << "), lambda " << lambda;
        throw SolverError(msg.str());
      }
      surf.at(i, j) = w[j];
    }
  }
  double mn = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n_t; ++i)
    for (int j = 0; j < n_x; ++j) mn = std::min(mn, surf.at(i, j));
  diag.min_value = mn;
  surf.diagnostics = diag;
  return surf;
}

/// Penalized feedback x_k = X_k min(v_k W(t_k, v_k) dt, 1) / dt with explicit-Euler
/// holdings; the rate at T is lambda-scaled and not integrated.
struct PenalizedPath {
  ExecutionSchedule schedule;
  double running_cost = 0.0;   // sum_{k<n} x_k^2 / v_k dt
  double penalized_cost = 0.0; // running cost + lambda X_n^2 / v_n
};

inline PenalizedPath penalized_rate_path(const ValueSurface& surface, const VolumePath& path, double x0) {
  const TimeGrid& g = path.grid;
  if (std::abs(g.horizon() - surface.horizon()) > 1e-12 * g.horizon()) {
    throw StructuralError("penalized_rate_path: surface and path horizons differ");
  }
  const int n = g.n_steps();
  const double dt = g.dt();
  std::vector<double> rates(g.size()), holdings(g.size());
  holdings[0] = x0;
  double running = 0.0;
  for (int k = 0; k < n; ++k) {
    const double vw = path.v[k] * surface.value(g.t(k), surface.state_of(path, k));
    const double q = std::min(std::max(vw, 0.0) * dt, 1.0) / dt;
    rates[k] = holdings[k] * q;
    running += rates[k] * rates[k] / path.v[k];
    holdings[k + 1] = holdings[k] - rates[k] * dt;
  }
  rates[n] = surface.lambda() * holdings[n];
  running *= dt;
  PenalizedPath out;
  out.running_cost = running;
  out.penalized_cost = running + surface.lambda() * holdings[n] * holdings[n] / path.v[n];
  out.schedule = ExecutionSchedule(std::move(rates), std::move(holdings));
  return out;
}

struct LambdaSweepEntry {
  double lambda = 0.0;
  double j = 0.0;  // X0^2 W^lambda(0, v0)
  ValueSurface surface;
};

struct LambdaSweep {
  std::vector<LambdaSweepEntry> entries;
  double extrapolated = 0.0;  // Richardson in 1/lambda over the two largest lambdas
};

/// J(lambda_2, lambda_1) limit assuming J^lambda = J - C/lambda.
inline double richardson_inverse_lambda(double l1, double j1, double l2, double j2) {
  return (l2 * j2 - l1 * j1) / (l2 - l1);
}

inline LambdaSweep lambda_sweep(const VolumeModel& model, const std::vector<double>& lambdas, double x0,
                                const PdeGrid& grid = {}, const SolverOptions& opts = {}, int threads = 0) {
  if (lambdas.empty()) throw DomainError("lambda_sweep: empty lambda list");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!(lambdas[i] > 0.0)) throw DomainError("lambda_sweep: lambdas must be > 0");
    if (i > 0 && !(lambdas[i] > lambdas[i - 1])) throw DomainError("lambda_sweep: lambdas must increase");
  }
  const std::size_t n = lambdas.size();
  std::vector<std::optional<ValueSurface>> surfaces(n);
  std::vector<std::exception_ptr> errors(n);
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                    : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          surfaces[i].emplace(solve_w_lambda(model, lambdas[i], grid, opts));
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  LambdaSweep out;
  for (std::size_t i = 0; i < n; ++i) {
    const double j = x0 * x0 * surfaces[i]->initial_value();
    out.entries.push_back({lambdas[i], j, std::move(*surfaces[i])});
  }
  if (n == 1) {
    out.extrapolated = out.entries[0].j;
  } else {
    const auto& a = out.entries[n - 2];
    const auto& b = out.entries[n - 1];
    out.extrapolated = richardson_inverse_lambda(a.lambda, a.j, b.lambda, b.j);
  }
  return out;
}

/// 2 W_{2n}(0, x0) - W_n(0, x0): removes the first-order time-step error at the initial state.
inline double richardson_time_step(const VolumeModel& model, double lambda, PdeGrid grid,
                                   const SolverOptions& opts = {}) {
  const double coarse = solve_w_lambda(model, lambda, grid, opts).initial_value();
  grid.n_t *= 2;
  const double fine = solve_w_lambda(model, lambda, grid, opts).initial_value();
  return 2.0 * fine - coarse;
}

}  // namespace volex
