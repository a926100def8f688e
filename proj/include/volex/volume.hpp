#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "volex/coefficient.hpp"
#include "volex/core.hpp"
#include "volex/errors.hpp"

namespace volex {

/// Log-volume Y = log v with dY = b_t dt + sigma_t dB, Y_0 = log v0.
/// Constant tables give geometric Brownian motion.
struct TimeDepBS {
  double v0 = 100.0;
  Coefficient drift = Coefficient::constant(0.0);
  Coefficient vol = Coefficient::constant(0.0);
};

/// v_t = u_bar_t * exp(epsilon * Z_t), dZ = -rho Z dt + sigma dB, Z_0 = 0.
struct PerturbedOU {
  Coefficient u_bar = Coefficient::constant(100.0);
  double epsilon = 0.0;
  double rho = 1.0;
  double sigma = 0.3;
};

struct ConstantVolume {
  double v_bar = 100.0;
};

using VolumeSpec = std::variant<TimeDepBS, PerturbedOU, ConstantVolume>;

class VolumeModel {
public:
  VolumeModel(VolumeSpec spec, double horizon) : spec_(std::move(spec)), horizon_(horizon) {
    if (!(horizon > 0.0)) throw DomainError("VolumeModel: horizon must be > 0");
    std::visit([](const auto& m) { check(m); }, spec_);
  }

  [[nodiscard]] const VolumeSpec& spec() const { return spec_; }
  [[nodiscard]] double horizon() const { return horizon_; }

  template <class M>
  [[nodiscard]] const M* get_if() const { return std::get_if<M>(&spec_); }

  /// v at t = 0.
  [[nodiscard]] double initial_volume() const {
    return std::visit(
        [](const auto& m) -> double {
          using M = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<M, TimeDepBS>) return m.v0;
          else if constexpr (std::is_same_v<M, PerturbedOU>) return m.u_bar(0.0);
          else return m.v_bar;
        },
        spec_);
  }

private:
  static void check(const TimeDepBS& m) {
    if (!(m.v0 > 0.0)) throw DomainError("TimeDepBS: v0 must be > 0");
  }
  static void check(const PerturbedOU& m) {
    if (!(m.u_bar.min_value() > 0.0)) throw DomainError("PerturbedOU: u_bar must be > 0");
    if (!(m.epsilon >= 0.0)) throw DomainError("PerturbedOU: epsilon must be >= 0");
    if (!(m.rho > 0.0) || !(m.sigma > 0.0)) throw DomainError("PerturbedOU: rho and sigma must be > 0");
  }
  static void check(const ConstantVolume& m) {
    if (!(m.v_bar > 0.0)) throw DomainError("ConstantVolume: v_bar must be > 0");
  }

  VolumeSpec spec_;
  double horizon_;
};

/// Gaussian law of log v_t.
struct LogMoments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Variance of an OU state started at 0 after time t.
inline double ou_variance(double rho, double sigma, double t) {
  return sigma * sigma * (-std::expm1(-2.0 * rho * t)) / (2.0 * rho);
}

inline LogMoments log_moments(const VolumeModel& model, double t) {
  if (!(t >= 0.0 && t <= model.horizon())) {
    throw DomainError("log_moments: t = " + std::to_string(t) + " outside [0, T]");
  }
  return std::visit(
      [t](const auto& m) -> LogMoments {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, TimeDepBS>) {
          const auto sq = Coefficient::combine(m.vol, m.vol, [](double a, double b) { return a * b; });
          return {std::log(m.v0) + m.drift.integral(0.0, t), sq.integral(0.0, t)};
        } else if constexpr (std::is_same_v<M, PerturbedOU>) {
          return {std::log(m.u_bar(t)), m.epsilon * m.epsilon * ou_variance(m.rho, m.sigma, t)};
        } else {
          return {std::log(m.v_bar), 0.0};
        }
      },
      model.spec());
}

/// u_t = E[1/v_t]^{-1} = exp(m_t - s2_t/2) for lognormal v_t.
inline double harmonic_mean_u(const VolumeModel& model, double t) {
  const auto lm = log_moments(model, t);
  return std::exp(lm.mean - 0.5 * lm.variance);
}

/// Sampled volume on a grid. `z` is the OU state for PerturbedOU and the
/// martingale part int sigma dB of log v otherwise; `v_cum[k]` is the
/// left-endpoint cumulative volume sum_{j<k} v_j dt.
struct VolumePath {
  TimeGrid grid;
  std::vector<double> v;
  std::vector<double> z;
  std::vector<double> v_cum;

  explicit VolumePath(const TimeGrid& g)
      : grid(g), v(g.size()), z(g.size()), v_cum(g.size()) {}

  [[nodiscard]] double total_volume() const { return v_cum.back(); }
};

/// Independent stream seed for path `index` of a run seeded with `seed`.
inline std::uint64_t path_seed(std::uint64_t seed, std::uint64_t index) {
  auto mix = [](std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  };
  return mix(mix(seed) ^ (index * 0xD1B54A32D192ED03ULL + 1));
}

/// Exact-in-distribution sampler. Step constants are computed once so a
/// sampler can be shared read-only between worker threads.
class PathSampler {
public:
  PathSampler(const VolumeModel& model, const TimeGrid& grid) : model_(model), grid_(grid) {
    if (std::abs(grid.horizon() - model.horizon()) > 1e-12 * model.horizon()) {
      throw StructuralError("PathSampler: grid horizon differs from model horizon");
    }
    const int n = grid.n_steps();
    if (const auto* bs = model.get_if<TimeDepBS>()) {
      const auto sq = Coefficient::combine(bs->vol, bs->vol, [](double a, double b) { return a * b; });
      step_mean_.resize(n);
      step_sd_.resize(n);
      for (int k = 0; k < n; ++k) {
        step_mean_[k] = bs->drift.integral(grid.t(k), grid.t(k + 1));
        step_sd_[k] = std::sqrt(sq.integral(grid.t(k), grid.t(k + 1)));
      }
    } else if (const auto* ou = model.get_if<PerturbedOU>()) {
      ou_decay_ = std::exp(-ou->rho * grid.dt());
      ou_sd_ = std::sqrt(ou_variance(ou->rho, ou->sigma, grid.dt()));
      level_.resize(grid.size());
      for (std::size_t k = 0; k < grid.size(); ++k) level_[k] = ou->u_bar(grid.t(static_cast<int>(k)));
    }
  }

  [[nodiscard]] const TimeGrid& grid() const { return grid_; }
  [[nodiscard]] const VolumeModel& model() const { return model_; }

  [[nodiscard]] VolumePath sample(std::uint64_t seed) const {
    VolumePath path(grid_);
    sample_into(seed, path);
    return path;
  }

  void sample_into(std::uint64_t seed, VolumePath& path) const {
    const int n = grid_.n_steps();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    if (const auto* bs = model_.get_if<TimeDepBS>()) {
      double y = std::log(bs->v0);
      double noise = 0.0;
      path.z[0] = 0.0;
      path.v[0] = bs->v0;
      for (int k = 0; k < n; ++k) {
        const double dw = step_sd_[k] * normal(rng);
        noise += dw;
        y += step_mean_[k] + dw;
        path.z[k + 1] = noise;
        path.v[k + 1] = std::exp(y);
      }
    } else if (const auto* ou = model_.get_if<PerturbedOU>()) {
      double z = 0.0;
      path.z[0] = 0.0;
      path.v[0] = level_[0];
      for (int k = 0; k < n; ++k) {
        z = z * ou_decay_ + ou_sd_ * normal(rng);
        path.z[k + 1] = z;
        path.v[k + 1] = level_[k + 1] * std::exp(ou->epsilon * z);
      }
    } else {
      const double vb = model_.get_if<ConstantVolume>()->v_bar;
      std::fill(path.v.begin(), path.v.end(), vb);
      std::fill(path.z.begin(), path.z.end(), 0.0);
    }
    path.v_cum[0] = 0.0;
    const double dt = grid_.dt();
    for (int k = 0; k < n; ++k) path.v_cum[k + 1] = path.v_cum[k] + path.v[k] * dt;
  }

private:
  VolumeModel model_;
  TimeGrid grid_;
  std::vector<double> step_mean_, step_sd_;
  double ou_decay_ = 0.0, ou_sd_ = 0.0;
  std::vector<double> level_;
};

inline VolumePath sample_path(const VolumeModel& model, const TimeGrid& grid, std::uint64_t seed) {
  return PathSampler(model, grid).sample(seed);
}

inline double pathwise_cost(const ExecutionSchedule& schedule, const VolumePath& path) {
  return pathwise_cost(schedule.rates(), path.v, path.grid);
}

}  // namespace volex
