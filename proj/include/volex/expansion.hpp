#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "volex/coefficient.hpp"
#include "volex/core.hpp"
#include "volex/csv.hpp"
#include "volex/errors.hpp"
#include "volex/quadrature.hpp"
#include "volex/volume.hpp"

namespace volex {

/// Conditional moments of the noise state Z_s^{t,z}: mean(s, t, z) = E[Z_s]
/// and second(s, t, z) = E[Z_s^2]. `mean` must be affine in z.
struct MomentFunctions {
  std::function<double(double, double, double)> mean;
  std::function<double(double, double, double)> second;
};

inline MomentFunctions ou_moments(double rho, double sigma) {
  return {
      [rho](double s, double t, double z) { return z * std::exp(-rho * (s - t)); },
      [rho, sigma](double s, double t, double z) {
        const double d = std::exp(-2.0 * rho * (s - t));
        return z * z * d + sigma * sigma * (-std::expm1(-2.0 * rho * (s - t))) / (2.0 * rho);
      },
  };
}

/// Second-order expansion W^eps(t, z) = W0(t) + eps I1(t, z) + eps^2 I2(t, z)
/// of the lambda -> infinity value function for the perturbed-OU volume model.
///
/// For OU noise I1 is linear in z and I2 quadratic, so the grid tables hold
/// I1 = a_k z and I2 = b_k z^2 + c_k at every node t_k < T.
class ExpansionCoeffs {
public:
  ExpansionCoeffs(const VolumeModel& model, const TimeGrid& grid, int quad_nodes = 512)
      : grid_(grid), quad_nodes_(quad_nodes) {
    const auto* ou = model.get_if<PerturbedOU>();
    if (!ou) throw DomainError("ExpansionCoeffs: volume model must be PerturbedOU");
    if (std::abs(grid.horizon() - model.horizon()) > 1e-12 * model.horizon()) {
      throw StructuralError("ExpansionCoeffs: grid horizon differs from model horizon");
    }
    if (quad_nodes < 2) throw DomainError("ExpansionCoeffs: quad_nodes must be >= 2");
    u_bar_ = ou->u_bar;
    epsilon_ = ou->epsilon;
    rho_ = ou->rho;
    sigma_ = ou->sigma;
    horizon_ = grid.horizon();
    total_ = u_bar_.integral(0.0, horizon_);

    const int n = grid.n_steps();
    w0_.assign(n, 0.0);
    i1_slope_.assign(n, 0.0);
    i2_quad_.assign(n, 0.0);
    i2_const_.assign(n, 0.0);
    for (int k = 0; k < n; ++k) {
      const double t = grid.t(k);
      const double d = remaining(t);
      w0_[k] = 1.0 / d;
      i1_slope_[k] = -discounted_level(t) / (d * d);
      i2_quad_[k] = i2_z2_part(t);
      i2_const_[k] = i2_const_part(t);
    }
  }

  [[nodiscard]] double epsilon() const { return epsilon_; }
  [[nodiscard]] double rho() const { return rho_; }
  [[nodiscard]] double sigma() const { return sigma_; }
  [[nodiscard]] const TimeGrid& grid() const { return grid_; }
  [[nodiscard]] const Coefficient& u_bar() const { return u_bar_; }

  /// U_bar_t = int_0^t u_bar ds.
  [[nodiscard]] double cumulative(double t) const { return u_bar_.integral(0.0, t); }
  /// U_bar_T - U_bar_t.
  [[nodiscard]] double remaining(double t) const { return u_bar_.integral(t, horizon_); }

  [[nodiscard]] double base_w0(double t) const {
    check_before_horizon(t, "base_w0");
    return 1.0 / remaining(t);
  }

  /// Deterministic penalized value (U_bar_T - U_bar_t + 1/lambda)^{-1}; equals lambda at t = T.
  [[nodiscard]] double base_w0_capped(double t, double lambda) const {
    if (!(lambda > 0.0)) throw DomainError("base_w0_capped: lambda must be > 0");
    if (t < 0.0 || t > horizon_) throw DomainError("base_w0_capped: t outside [0, T]");
    return 1.0 / (remaining(t) + 1.0 / lambda);
  }

  /// U_hat_s = 1 - (U_bar_T - U_bar_s)^{-1} int_s^T e^{-rho(r-s)} u_bar_r dr (0 at s = T).
  [[nodiscard]] double u_hat(double s) const {
    const double d = remaining(s);
    if (!(d > 0.0)) return 0.0;
    return 1.0 - discounted_level(s) / d;
  }

  [[nodiscard]] double i1_ou(double t, double z) const {
    check_before_horizon(t, "i1_ou");
    const double d = remaining(t);
    return -z * discounted_level(t) / (d * d);
  }

  [[nodiscard]] double i2_ou(double t, double z) const {
    check_before_horizon(t, "i2_ou");
    return z * z * i2_z2_part(t) + i2_const_part(t);
  }

  /// I1 from the moment formula, by quadrature.
  [[nodiscard]] double i1_generic(double t, double z, const MomentFunctions& mom) const {
    check_before_horizon(t, "i1_generic");
    const double d = remaining(t);
    const double integral = guarded("i1_generic", t, z, [&] {
      return quad::simpson_split([&](double s) { return mom.mean(s, t, z) * u_bar_(s); }, t, horizon_,
                                 u_bar_.knots(), quad_nodes_);
    });
    return -integral / (d * d);
  }

  /// I2 = -(U_bar_T - U_bar_t)^{-2} int_t^T {A1/2 + A2 - 2 A3} u_bar_s ds with the
  /// expectations inside A2, A3 expanded through the affine conditional mean.
  [[nodiscard]] double i2_generic(double t, double z, const MomentFunctions& mom) const {
    check_before_horizon(t, "i2_generic");
    const double d = remaining(t);
    auto integrand = [&](double s) {
      const double a1 = mom.second(s, t, z);
      const double mz = mom.mean(s, t, z);
      double c_ratio = 0.0;    // (U_T - U_s)^{-1} int_s^T m(r, s, 0) u_bar_r dr
      double phi_ratio = 0.0;  // same for the slope m(r, s, 1) - m(r, s, 0)
      const double ds = remaining(s);
      if (ds > 1e-13 * total_) {
        const double c_int = quad::simpson_split([&](double r) { return mom.mean(r, s, 0.0) * u_bar_(r); },
                                                 s, horizon_, u_bar_.knots(), quad_nodes_);
        const double phi_int = quad::simpson_split(
            [&](double r) { return (mom.mean(r, s, 1.0) - mom.mean(r, s, 0.0)) * u_bar_(r); }, s, horizon_,
            u_bar_.knots(), quad_nodes_);
        c_ratio = c_int / ds;
        phi_ratio = phi_int / ds;
      } else {
        c_ratio = mom.mean(s, s, 0.0);
        phi_ratio = mom.mean(s, s, 1.0) - mom.mean(s, s, 0.0);
      }
      const double a2 = c_ratio * c_ratio + 2.0 * c_ratio * phi_ratio * mz + phi_ratio * phi_ratio * a1;
      const double a3 = c_ratio * mz + phi_ratio * a1;
      return (0.5 * a1 + a2 - 2.0 * a3) * u_bar_(s);
    };
    const double integral = guarded("i2_generic", t, z, [&] {
      return quad::simpson_split(integrand, t, horizon_, u_bar_.knots(), quad_nodes_);
    });
    return -integral / (d * d);
  }

  [[nodiscard]] double w_eps(double t, double z) const {
    return base_w0(t) + epsilon_ * i1_ou(t, z) + epsilon_ * epsilon_ * i2_ou(t, z);
  }

  /// Tabulated W^eps at grid node k < n_steps.
  [[nodiscard]] double w_eps_at(int k, double z) const {
    return w0_[k] + epsilon_ * i1_slope_[k] * z + epsilon_ * epsilon_ * (i2_quad_[k] * z * z + i2_const_[k]);
  }
  [[nodiscard]] double w0_at(int k) const { return w0_[k]; }
  [[nodiscard]] double i1_at(int k, double z) const { return i1_slope_[k] * z; }
  [[nodiscard]] double i2_at(int k, double z) const { return i2_quad_[k] * z * z + i2_const_[k]; }

  /// Stationary standard deviation sigma / sqrt(2 rho) of the noise state.
  [[nodiscard]] double noise_sd() const { return sigma_ / std::sqrt(2.0 * rho_); }

  /// CSV `t,z,I1,I2` on the grid nodes t_k < T times n_z points spanning +-5 stationary SDs.
  void write_csv(std::ostream& out, int n_z = 21) const {
    out << "t,z,I1,I2\n";
    const double z_max = 5.0 * noise_sd();
    for (int k = 0; k < grid_.n_steps(); ++k) {
      for (int j = 0; j < n_z; ++j) {
        const double z = n_z == 1 ? 0.0 : -z_max + 2.0 * z_max * j / (n_z - 1);
        csv::row(out, grid_.t(k), z, i1_at(k, z), i2_at(k, z));
      }
    }
  }

private:
  void check_before_horizon(double t, const char* what) const {
    if (!(t >= 0.0) || !(t < horizon_)) {
      throw DomainError(std::string(what) + ": t = " + std::to_string(t) + " must lie in [0, T)");
    }
  }

  template <class F>
  static double guarded(const char* what, double t, double z, F&& f) {
    try {
      return f();
    } catch (const SolverError& e) {
      std::ostringstream msg;
      msg << what << "(t = " << t << ", z = " << z << "): " << e.what();
      throw SolverError(msg.str());
    }
  }

  /// int_s^T e^{-rho (r - s)} u_bar_r dr, exact for piecewise-constant u_bar.
  [[nodiscard]] double discounted_level(double s) const {
    double acc = 0.0;
    u_bar_.for_each_piece(s, horizon_, [&](double lo, double hi, double c) {
      acc += c * std::exp(-rho_ * (lo - s)) * (-std::expm1(-rho_ * (hi - lo))) / rho_;
    });
    return acc;
  }

  [[nodiscard]] double i2_z2_part(double t) const {
    const double d = remaining(t);
    const double integral = quad::simpson_split(
        [&](double s) {
          const double uh = u_hat(s);
          return std::exp(-2.0 * rho_ * (s - t)) * (uh * uh - 0.5) * u_bar_(s);
        },
        t, horizon_, u_bar_.knots(), quad_nodes_);
    return -integral / (d * d);
  }

  [[nodiscard]] double i2_const_part(double t) const {
    const double d = remaining(t);
    const double scale = sigma_ * sigma_ / (2.0 * rho_);
    const double integral = quad::simpson_split(
        [&](double s) {
          const double uh = u_hat(s);
          return scale * (-std::expm1(-2.0 * rho_ * (s - t))) * (uh * uh - 0.5) * u_bar_(s);
        },
        t, horizon_, u_bar_.knots(), quad_nodes_);
    return -integral / (d * d);
  }

  TimeGrid grid_;
  int quad_nodes_;
  Coefficient u_bar_;
  double epsilon_ = 0.0, rho_ = 1.0, sigma_ = 0.3;
  double horizon_ = 1.0;
  double total_ = 0.0;
  std::vector<double> w0_, i1_slope_, i2_quad_, i2_const_;
};

}  // namespace volex
