#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "volex/strategies.hpp"

using namespace volex;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Coefficient constant(double c) { return Coefficient::constant(c); }

double sell_off(const ExecutionSchedule& s, const TimeGrid& g) {
  double acc = 0.0;
  for (int k = 0; k < g.n_steps(); ++k) acc += s.rates()[k];
  return acc * g.dt();
}

double max_rel_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]) / std::abs(b[k]));
  return worst;
}

}  // namespace

TEST_CASE("twap") {
  MarketParams p;
  const TimeGrid g(1.0, 100);
  const auto s = twap(p, g);
  for (double x : s.rates()) CHECK(x == 10.0);
  CHECK_THAT(s.terminal_holdings(), WithinAbs(0.0, 1e-9 * p.x0));
  std::vector<double> v(g.size(), 100.0);
  CHECK_THAT(pathwise_cost(s.rates(), v, g), WithinRel(1.0, 1e-12));
  p.x0 = 0.0;
  {
    const auto sched = twap(p, g);
    for (double x : sched.rates()) CHECK(x == 0.0);
  }
}

TEST_CASE("exact VWAP") {
  MarketParams p;
  const TimeGrid g(1.0, 250);
  const VolumeModel m(PerturbedOU{constant(100), 0.8, 2.0, 0.3}, 1.0);
  const auto path = sample_path(m, g, 9);
  const auto s = exact_vwap(p, path);
  CHECK_THAT(s.terminal_holdings(), WithinAbs(0.0, 1e-9 * p.x0));
  const double ratio = s.rates()[0] / path.v[0];
  for (std::size_t k = 0; k < path.v.size(); ++k) CHECK_THAT(s.rates()[k] / path.v[k], WithinRel(ratio, 1e-13));
  CHECK_THAT(pathwise_cost(s, path), WithinRel(p.x0 * p.x0 / path.total_volume(), 1e-12));

  const VolumeModel c(ConstantVolume{100.0}, 1.0);
  {
    const auto sched = exact_vwap(p, sample_path(c, g, 1));
    for (double x : sched.rates()) CHECK_THAT(x, WithinRel(10.0, 1e-12));
  }
}

TEST_CASE("exact VWAP rejects zero volume") {
  MarketParams p;
  const TimeGrid g(1.0, 4);
  VolumePath path(g);
  REQUIRE_THROWS_AS(exact_vwap(p, path), DomainError);
}

TEST_CASE("expected VWAP") {
  MarketParams p;
  const TimeGrid g(1.0, 200);
  const VolumeModel c(ConstantVolume{100.0}, 1.0);
  {
    const auto sched = expected_vwap(p, c, g);
    for (double x : sched.rates()) CHECK_THAT(x, WithinRel(10.0, 1e-12));
  }

  const VolumeModel gbm(TimeDepBS{100.0, constant(0.5), constant(0.3)}, 1.0);
  const auto s = expected_vwap(p, gbm, g);
  CHECK_THAT(s.terminal_holdings(), WithinAbs(0.0, 1e-9 * p.x0));
  for (int k = 0; k <= 200; ++k) {
    CHECK_THAT(s.rates()[k] / s.rates()[0], WithinRel(std::exp(0.455 * g.t(k)), 1e-12));
  }
  // Deterministic plug-in cost sum x^2 / u dt equals X0^2 / U_T on the grid.
  double u_sum = 0.0, cost = 0.0;
  for (int k = 0; k < 200; ++k) {
    const double u = harmonic_mean_u(gbm, g.t(k));
    u_sum += u * g.dt();
    cost += s.rates()[k] * s.rates()[k] / u * g.dt();
  }
  CHECK_THAT(cost, WithinRel(p.x0 * p.x0 / u_sum, 1e-12));
}

TEST_CASE("analytic adaptive BS schedule") {
  MarketParams p;
  const TimeGrid g(1.0, 100);
  const auto s = analytic_adaptive_bs(p, constant(0.5), constant(0.3), g);
  CHECK_THAT(s.terminal_holdings(), WithinAbs(0.0, 1e-9 * p.x0));
  CHECK_THAT(s.rates()[0], WithinRel(7.91492127466277, 1e-12));
  // Continuous limit of x_0 = X0 c / (e^{cT} - 1).
  CHECK_THAT(analytic_adaptive_bs(p, constant(0.5), constant(0.3), TimeGrid(1.0, 100000)).rates()[0],
             WithinRel(7.89692848364634, 1e-5));

  const auto flat = analytic_adaptive_bs(p, constant(0.045), constant(0.3), g);
  {
    const auto sched = flat;
    for (double x : sched.rates()) CHECK_THAT(x, WithinRel(10.0, 1e-12));
  }

  const VolumeModel gbm(TimeDepBS{100.0, constant(0.5), constant(0.3)}, 1.0);
  CHECK(max_rel_diff(s.rates(), expected_vwap(p, gbm, g).rates()) < 1e-12);

  const auto b = Coefficient::piecewise({0.0, 0.3, 0.6}, {0.5, -0.2, 1.0});
  const auto sig = Coefficient::piecewise({0.0, 0.5}, {0.3, 0.6});
  const VolumeModel tdm(TimeDepBS{100.0, b, sig}, 1.0);
  CHECK(max_rel_diff(analytic_adaptive_bs(p, b, sig, g).rates(), expected_vwap(p, tdm, g).rates()) < 1e-12);
}

TEST_CASE("closed-form adaptive value under Black-Scholes volume") {
  MarketParams p;
  CHECK_THAT(bs_adaptive_value(p, 100.0, constant(0.045), constant(0.3)), WithinRel(1.0, 1e-14));
  CHECK_THAT(bs_adaptive_value(p, 100.0, constant(0.5), constant(0.3)), WithinRel(0.789692848364634, 1e-13));
}

TEST_CASE("twisted VWAP") {
  MarketParams p;
  const TimeGrid g(1.0, 100);
  const auto ubar = Coefficient::piecewise({0.0, 0.5}, {100.0, 140.0});
  const auto s0 = twisted_vwap(p, ubar, constant(0.0), 2.0, 1.0, g);
  for (int k = 0; k <= 100; ++k) {
    CHECK_THAT(s0.rates()[k] / s0.rates()[0], WithinRel(std::sqrt(ubar(g.t(k)) / 100.0), 1e-12));
  }
  {
    const auto sched = twisted_vwap(p, ubar, constant(0.3), 1.0, 0.0, g);
    for (double x : sched.rates()) CHECK_THAT(x, WithinRel(10.0, 1e-12));
  }

  // alpha = beta = 1 with u_bar_t = v0 exp(int_0^t b ds) reproduces the closed-form adaptive schedule.
  const double b = 0.5, sig = 0.3;
  const auto u = Coefficient::tabulate([&](double t) { return 100.0 * std::exp(b * t); }, 1.0, 100);
  const auto tw = twisted_vwap(p, u, constant(sig), 1.0, 1.0, g);
  // tabulate samples cell midpoints; the node-wise ratio differs by the constant e^{b dt/2}.
  const auto an = analytic_adaptive_bs(p, constant(b), constant(sig), g);
  for (int k = 0; k < 100; ++k) CHECK_THAT(tw.rates()[k], WithinRel(an.rates()[k], 1e-10));
  CHECK_THAT(tw.terminal_holdings(), WithinAbs(0.0, 1e-9 * p.x0));

  REQUIRE_THROWS_AS(twisted_vwap(p, u, constant(sig), 0.0, 1.0, g), DomainError);
  REQUIRE_THROWS_AS(twisted_vwap(p, u, constant(sig), 1.0, -1.0, g), DomainError);
}

TEST_CASE("trend optimizer: case selection") {
  MarketParams p;
  p.kappa = p.kappa_tilde = 1.0;
  // mu_tilde = mu - 0.045; D = mu_tilde (mu_tilde - 2)
  CHECK(appendix_b_case(p, {1.045, 0.3}) == AppendixBCase::Oscillatory);
  CHECK(appendix_b_case(p, {2.045, 0.3}) == AppendixBCase::Critical);
  CHECK(appendix_b_case(p, {0.045, 0.3}) == AppendixBCase::Critical);
  CHECK(appendix_b_case(p, {3.045, 0.3}) == AppendixBCase::Exponential);
  CHECK(appendix_b_case(p, {-0.955, 0.3}) == AppendixBCase::Exponential);
  MarketParams q;
  q.kappa = 10.0;
  q.kappa_tilde = 1.0;
  AppendixBParams far{10.045, 0.3};
  CHECK(far.gamma(q) > 2.0 * M_PI);
  REQUIRE_THROWS_AS(appendix_b_case(q, far), UnsupportedRegime);
  REQUIRE_THROWS_AS(appendix_b_strategy(q, far, TimeGrid(1.0, 10)), UnsupportedRegime);
}

TEST_CASE("trend optimizer: reduces to TWAP at zero drift") {
  MarketParams p;
  const TimeGrid g(1.0, 100);
  AppendixBParams ab{0.045, 0.3};
  CHECK(ab.mu_tilde() == Catch::Approx(0.0).margin(1e-17));
  AppendixBParams exact{0.0, 0.0};
  for (int k = 0; k <= 100; ++k) CHECK(appendix_b_rate(p, exact, g.t(k), AppendixBCase::Critical) == 10.0);
  {
    const auto sched = appendix_b_strategy(p, exact, g);
    for (double x : sched.rates()) CHECK_THAT(x, WithinRel(10.0, 1e-14));
  }
}

TEST_CASE("trend optimizer: critical case formula") {
  MarketParams p;
  p.kappa = p.kappa_tilde = 1.0;
  AppendixBParams ab{2.045, 0.3};
  for (double t : {0.0, 0.3, 0.9}) {
    const double m = ab.mu_tilde();
    CHECK_THAT(appendix_b_rate(p, ab, t, AppendixBCase::Critical),
               WithinRel(10.0 * std::exp(m * t / 2) * (1.0 - m / 2 * (1.0 - t)), 1e-14));
  }
}

TEST_CASE("trend optimizer: limits across D = 0") {
  MarketParams p;
  p.kappa = 0.5;
  p.kappa_tilde = 1.0;
  // D = m (m - 1); |D| = 1e-8 at m = 1 +- 1e-8 (first order).
  const double shift = 1e-8;
  AppendixBParams hi{1.0 + shift, 0.0}, lo{1.0 - shift, 0.0}, mid{1.0, 0.0};
  CHECK(hi.discriminant(p) > 0.0);
  CHECK(lo.discriminant(p) < 0.0);
  CHECK(std::abs(hi.discriminant(p)) == Catch::Approx(1e-8).epsilon(1e-6));
  CHECK(appendix_b_case(p, mid) == AppendixBCase::Critical);
  for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const double c2 = appendix_b_rate(p, mid, t, AppendixBCase::Critical);
    CHECK(std::abs(appendix_b_rate(p, hi, t, AppendixBCase::Exponential) / c2 - 1.0) < 1e-6);
    CHECK(std::abs(appendix_b_rate(p, lo, t, AppendixBCase::Oscillatory) / c2 - 1.0) < 1e-6);
  }
}

TEST_CASE("trend optimizer: closed forms integrate to X0") {
  MarketParams p;
  p.kappa = p.kappa_tilde = 1.0;
  for (double mu : {1.045, 2.045, 3.045, -0.955}) {
    AppendixBParams ab{mu, 0.3};
    const auto which = appendix_b_case(p, ab);
    double acc = 0.0;
    const int n = 20000;
    for (int k = 0; k < n; ++k) acc += appendix_b_rate(p, ab, (k + 0.5) / n, which);
    CHECK_THAT(acc / n, WithinRel(10.0, 1e-6));
    const TimeGrid g(1.0, 500);
    const auto s = appendix_b_strategy(p, ab, g);
    CHECK_THAT(s.terminal_holdings(), WithinAbs(0.0, 1e-9 * p.x0));
    CHECK_THAT(sell_off(s, g), WithinRel(10.0, 1e-12));
    for (double X : s.holdings()) CHECK(std::abs(X) < 100.0);
  }
}

TEST_CASE("trend optimizer: strategy beats random sell-off preserving perturbations") {
  MarketParams p;
  p.kappa = p.kappa_tilde = 1.0;
  const int n = 2000;
  const TimeGrid g(1.0, n);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> amp(-1.0, 1.0), phase(0.0, 2.0 * M_PI);
  for (double mu : {1.045, 2.045, 3.045, -0.955}) {
    AppendixBParams ab{mu, 0.3};
    const auto opt = appendix_b_strategy(p, ab, g);
    const double best = appendix_b_cost(p, ab, opt, g);
    int beaten = 0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> eta(g.size(), 0.0);
      for (int mode = 1; mode <= 4; ++mode) {
        const double a = amp(rng), ph = phase(rng);
        for (int k = 0; k <= n; ++k) eta[k] += a * std::sin(mode * M_PI * g.t(k) + ph);
      }
      double mean = 0.0;
      for (int k = 0; k < n; ++k) mean += eta[k];
      mean /= n;
      std::vector<double> x(opt.rates().begin(), opt.rates().end());
      for (int k = 0; k <= n; ++k) x[k] += 0.05 * p.x0 * (eta[k] - mean);
      const auto pert = make_schedule(x, p.x0, g);
      REQUIRE_THAT(pert.terminal_holdings(), WithinAbs(0.0, 1e-9 * p.x0));
      if (appendix_b_cost(p, ab, pert, g) > best) ++beaten;
    }
    CHECK(beaten == 100);
  }
}

TEST_CASE("trend optimizer: can buy") {
  MarketParams p;
  p.kappa = p.kappa_tilde = 1.0;
  const auto s = appendix_b_strategy(p, {4.045, 0.3}, TimeGrid(1.0, 200));
  CHECK(s.min_rate() < 0.0);
}
