#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "volex/core.hpp"
#include "volex/csv.hpp"
#include "volex/errors.hpp"
#include "volex/expansion.hpp"
#include "volex/strategies.hpp"
#include "volex/volume.hpp"

namespace volex {

enum class StrategyKind { Twap, ExpectedVwap, ExactVwap, AnalyticBs, Adaptive };

inline const char* strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::Twap: return "twap";
    case StrategyKind::ExpectedVwap: return "static";
    case StrategyKind::ExactVwap: return "anticipating";
    case StrategyKind::AnalyticBs: return "analytic_bs";
    case StrategyKind::Adaptive: return "adaptive";
  }
  return "?";
}

inline StrategyKind parse_strategy(const std::string& s) {
  if (s == "twap") return StrategyKind::Twap;
  if (s == "static" || s == "expected_vwap") return StrategyKind::ExpectedVwap;
  if (s == "anticipating" || s == "exact_vwap") return StrategyKind::ExactVwap;
  if (s == "analytic_bs") return StrategyKind::AnalyticBs;
  if (s == "adaptive") return StrategyKind::Adaptive;
  throw ConfigError("unknown strategy '" + s + "'");
}

struct AdaptiveRun {
  ExecutionSchedule schedule;
  int floor_events = 0;
};

/// Index of the first node of the forced-liquidation window [T(1 - delta), T].
inline int liquidation_index(const TimeGrid& grid, double delta_liq) {
  const int k = static_cast<int>(std::lround(grid.n_steps() * (1.0 - delta_liq)));
  return std::clamp(k, 0, grid.n_steps() - 1);
}

/// Feedback x_k = X_k v_k W^eps(t_k, Z_k) with explicit-Euler holdings, floored at
/// zero unless `allow_negative`. From the liquidation index on, the remaining
/// inventory is sold at a constant rate so X_n = 0. Reads only path entries <= k at step k.
inline AdaptiveRun simulate_adaptive(const MarketParams& params, const ExpansionCoeffs& coeffs,
                                     const VolumePath& path, double delta_liq, bool allow_negative = false) {
  const TimeGrid& g = path.grid;
  if (g.n_steps() != coeffs.grid().n_steps() || std::abs(g.horizon() - coeffs.grid().horizon()) > 0.0) {
    throw StructuralError("simulate_adaptive: path grid differs from expansion grid");
  }
  if (!(delta_liq > 0.0 && delta_liq <= 0.2)) throw DomainError("simulate_adaptive: delta_liq must lie in (0, 0.2]");
  const int n = g.n_steps();
  const int k_liq = liquidation_index(g, delta_liq);
  const double dt = g.dt();
  std::vector<double> rates(g.size()), holdings(g.size());
  holdings[0] = params.x0;
  AdaptiveRun run;
  double liq_rate = 0.0;
  for (int k = 0; k < n; ++k) {
    double x;
    if (k < k_liq) {
      x = holdings[k] * path.v[k] * coeffs.w_eps_at(k, path.z[k]);
      if (x < 0.0 && !allow_negative) {
        x = 0.0;
        ++run.floor_events;
      }
    } else {
      if (k == k_liq) liq_rate = holdings[k] / (g.horizon() - g.t(k));
      x = liq_rate;
    }
    rates[k] = x;
    holdings[k + 1] = holdings[k] - x * dt;
  }
  rates[n] = liq_rate;
  run.schedule = ExecutionSchedule(std::move(rates), std::move(holdings));
  return run;
}

/// Strategies evaluated on common random numbers: every strategy sees the
/// same volume paths, and path i is drawn from stream path_seed(seed, i).
class CostEvaluator {
public:
  CostEvaluator(const MarketParams& params, const VolumeModel& model, const TimeGrid& grid,
                std::vector<StrategyKind> strategies, double delta_liq = 0.02, bool allow_negative = false)
      : params_(params), model_(model), grid_(grid), strategies_(std::move(strategies)),
        sampler_(model, grid), delta_liq_(delta_liq), allow_negative_(allow_negative) {
    params.validate();
    if (std::abs(params.horizon - model.horizon()) > 1e-12 * params.horizon) {
      throw StructuralError("CostEvaluator: market horizon differs from model horizon");
    }
    for (auto k : strategies_) {
      switch (k) {
        case StrategyKind::Twap: static_[k] = twap(params, grid); break;
        case StrategyKind::ExpectedVwap: static_[k] = expected_vwap(params, model, grid); break;
        case StrategyKind::AnalyticBs: {
          const auto* bs = model.get_if<TimeDepBS>();
          if (!bs) throw DomainError("analytic_bs strategy needs TimeDepBS volume");
          static_[k] = analytic_adaptive_bs(params, bs->drift, bs->vol, grid);
          break;
        }
        case StrategyKind::Adaptive:
          if (!coeffs_) coeffs_ = std::make_shared<ExpansionCoeffs>(model, grid);
          break;
        case StrategyKind::ExactVwap: break;
      }
    }
  }

  [[nodiscard]] const std::vector<StrategyKind>& strategies() const { return strategies_; }
  [[nodiscard]] const PathSampler& sampler() const { return sampler_; }
  [[nodiscard]] const ExpansionCoeffs* coeffs() const { return coeffs_.get(); }

  /// Schedule of strategy s on `path`; adds flooring events to *floors when given.
  [[nodiscard]] ExecutionSchedule schedule(StrategyKind s, const VolumePath& path, int* floors = nullptr) const {
    switch (s) {
      case StrategyKind::ExactVwap: return exact_vwap(params_, path);
      case StrategyKind::Adaptive: {
        auto run = simulate_adaptive(params_, *coeffs_, path, delta_liq_, allow_negative_);
        if (floors) *floors += run.floor_events;
        return std::move(run.schedule);
      }
      default: return static_.at(s);
    }
  }

  struct Costs {
    std::vector<std::vector<double>> per_strategy;  // [strategy][path]
    std::vector<long long> floor_events;            // per strategy
  };

  /// Pathwise costs for paths [0, n_paths). Deterministic for any thread count.
  [[nodiscard]] Costs run(std::size_t n_paths, std::uint64_t seed, int threads = 1) const {
    const std::size_t ns = strategies_.size();
    Costs out;
    out.per_strategy.assign(ns, std::vector<double>(n_paths));
    std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads)
                                      : std::max(1u, std::thread::hardware_concurrency());
    workers = std::max<std::size_t>(1, std::min(workers, n_paths));
    std::vector<std::vector<long long>> floors(workers, std::vector<long long>(ns, 0));
    std::vector<std::exception_ptr> errors(workers);
    auto work = [&](std::size_t w) {
      try {
        const std::size_t lo = n_paths * w / workers, hi = n_paths * (w + 1) / workers;
        VolumePath path(grid_);
        for (std::size_t i = lo; i < hi; ++i) {
          sampler_.sample_into(path_seed(seed, i), path);
          for (std::size_t s = 0; s < ns; ++s) {
            int f = 0;
            const auto sched = schedule(strategies_[s], path, &f);
            floors[w][s] += f;
            out.per_strategy[s][i] = pathwise_cost(sched, path);
          }
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    };
    if (workers == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
      for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    out.floor_events.assign(ns, 0);
    for (const auto& f : floors)
      for (std::size_t s = 0; s < ns; ++s) out.floor_events[s] += f[s];
    return out;
  }

private:
  MarketParams params_;
  VolumeModel model_;
  TimeGrid grid_;
  std::vector<StrategyKind> strategies_;
  PathSampler sampler_;
  double delta_liq_;
  bool allow_negative_;
  std::shared_ptr<ExpansionCoeffs> coeffs_;
  std::map<StrategyKind, ExecutionSchedule> static_;
};

inline CostReport estimate_cost(StrategyKind strategy, const MarketParams& params, const VolumeModel& model,
                                const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed, int threads = 1,
                                double delta_liq = 0.02) {
  if (n_paths < 2) throw DomainError("estimate_cost: n_paths must be >= 2");
  CostEvaluator eval(params, model, grid, {strategy}, delta_liq);
  const auto costs = eval.run(n_paths, seed, threads);
  return make_cost_report(params, costs.per_strategy[0]);
}

/// Perturbed-OU experiment over an (epsilon, rho) lattice.
struct ExperimentConfig {
  MarketParams params;
  Coefficient u_bar = Coefficient::constant(100.0);
  double sigma = 0.3;
  std::vector<double> epsilons{0.0};
  std::vector<double> rhos{0.3};
  std::vector<StrategyKind> strategies{StrategyKind::ExpectedVwap, StrategyKind::Adaptive,
                                       StrategyKind::ExactVwap};
  std::size_t n_paths = 50000;
  int n_steps = 500;
  std::uint64_t seed = 1;
  double delta_liq = 0.02;
  bool allow_negative = false;
  int threads = 1;

  void validate() const {
    params.validate();
    if (n_paths < 2) throw DomainError("ExperimentConfig: n_paths must be >= 2");
    if (!(delta_liq > 0.0 && delta_liq <= 0.2)) throw DomainError("ExperimentConfig: delta_liq must lie in (0, 0.2]");
    if (n_steps < 1) throw DomainError("ExperimentConfig: n_steps must be >= 1");
    if (epsilons.empty() || rhos.empty()) throw DomainError("ExperimentConfig: empty epsilon or rho list");
    if (strategies.empty()) throw DomainError("ExperimentConfig: empty strategy list");
  }

  [[nodiscard]] VolumeModel model(double epsilon, double rho) const {
    return VolumeModel(PerturbedOU{u_bar, epsilon, rho, sigma}, params.horizon);
  }
  [[nodiscard]] TimeGrid grid() const { return TimeGrid(params.horizon, n_steps); }
};

struct SweepRow {
  double epsilon = 0.0;
  double rho = 0.0;
  StrategyKind strategy = StrategyKind::Twap;
  CostReport report;
  long long floor_events = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;

  [[nodiscard]] const SweepRow& find(double epsilon, double rho, StrategyKind s) const {
    for (const auto& r : rows)
      if (r.epsilon == epsilon && r.rho == rho && r.strategy == s) return r;
    throw StructuralError("SweepResult: no such row");
  }

  void write_csv(std::ostream& out) const {
    out << "epsilon,rho,strategy,J,IS,stderr,n_paths\n";
    for (const auto& r : rows) {
      csv::row(out, r.epsilon, r.rho, strategy_name(r.strategy), r.report.j_estimate, r.report.is_cost,
               r.report.std_error, r.report.n_paths);
    }
  }
};

inline SweepResult epsilon_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  SweepResult out;
  const auto grid = cfg.grid();
  for (double rho : cfg.rhos) {
    for (double eps : cfg.epsilons) {
      CostEvaluator eval(cfg.params, cfg.model(eps, rho), grid, cfg.strategies, cfg.delta_liq, cfg.allow_negative);
      const auto costs = eval.run(cfg.n_paths, cfg.seed, cfg.threads);
      for (std::size_t s = 0; s < cfg.strategies.size(); ++s) {
        out.rows.push_back({eps, rho, cfg.strategies[s], make_cost_report(cfg.params, costs.per_strategy[s]),
                            costs.floor_events[s]});
      }
    }
  }
  return out;
}

/// One volume path with the static, adaptive and anticipating rates on it.
struct PathSample {
  TimeGrid grid;
  std::vector<double> v, x_stat, x_adap, x_ant;

  void write_csv(std::ostream& out) const {
    out << "t,v,x_stat,x_adap,x_ant\n";
    for (int k = 0; k <= grid.n_steps(); ++k) csv::row(out, grid.t(k), v[k], x_stat[k], x_adap[k], x_ant[k]);
  }
};

inline PathSample sample_paths(const ExperimentConfig& cfg, double epsilon, double rho, std::size_t path_index = 0) {
  cfg.validate();
  const auto grid = cfg.grid();
  CostEvaluator eval(cfg.params, cfg.model(epsilon, rho), grid,
                     {StrategyKind::ExpectedVwap, StrategyKind::Adaptive, StrategyKind::ExactVwap}, cfg.delta_liq,
                     cfg.allow_negative);
  const auto path = eval.sampler().sample(path_seed(cfg.seed, path_index));
  auto rates = [&](StrategyKind s) {
    const auto sched = eval.schedule(s, path);
    return std::vector<double>(sched.rates().begin(), sched.rates().end());
  };
  return {grid, path.v, rates(StrategyKind::ExpectedVwap), rates(StrategyKind::Adaptive),
          rates(StrategyKind::ExactVwap)};
}

}  // namespace volex
