#include <doctest.h>

#include <cmath>
#include <vector>

#include "oblivion/random.hpp"
#include "oblivion/trend.hpp"

using namespace oblivion;
using Eigen::Index;

namespace {

Eigen::VectorXd white_noise(Index n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd x(n);
  for (Index i = 0; i < n; ++i) x[i] = rng.normal();
  return x;
}

Eigen::VectorXd brownian(Index n, std::uint64_t seed) {
  Eigen::VectorXd x = white_noise(n, seed);
  for (Index i = 1; i < n; ++i) x[i] += x[i - 1];
  return x;
}

Eigen::VectorXd power_series(Index n, double a, double h, double b) {
  Eigen::VectorXd y(n);
  for (Index i = 0; i < n; ++i) y[i] = a * std::pow(static_cast<double>(i + 1), -h) + b;
  return y;
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST_CASE("dfa window sizes") {
  const auto sizes = dfa_window_sizes(1024);
  CHECK(sizes.front() == 4);
  CHECK(sizes.back() == 256);
  CHECK(sizes.size() >= 4);
  for (std::size_t i = 1; i < sizes.size(); ++i) CHECK(sizes[i] > sizes[i - 1]);
  CHECK(dfa_window_sizes(4) == std::vector<Index>{3, 4});
}

TEST_CASE("dfa exponent of white noise and of random walks") {
  double white = 0, walk = 0;
  const int seeds = 50;
  for (int s = 0; s < seeds; ++s) {
    white += dfa_exponent(white_noise(1024, 1000 + s));
    walk += dfa_exponent(brownian(1024, 2000 + s));
  }
  white /= seeds;
  walk /= seeds;
  CHECK(white >= 0.4);
  CHECK(white <= 0.6);
  CHECK(walk >= 1.35);
  CHECK(walk <= 1.65);
}

TEST_CASE("dfa errors on short and constant series") {
  CHECK_THROWS_AS(dfa_exponent(Eigen::VectorXd::Ones(3)), DegenerateSeries);
  CHECK_THROWS_WITH_AS(dfa_exponent(Eigen::VectorXd::Constant(64, 2.5)), "degenerate series",
                       DegenerateSeries);
}

TEST_CASE("dfa is invariant to offsets and positive scaling") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Eigen::VectorXd x = white_noise(300, seed);
    const double h = dfa_exponent(x);
    CHECK(dfa_exponent((3.0 * x).eval()) == doctest::Approx(h).epsilon(1e-12));
    CHECK(dfa_exponent((x.array() + 7.0).matrix().eval()) == doctest::Approx(h).epsilon(1e-10));
  }
}

TEST_CASE("noiseless power law is recovered") {
  const auto fit = fit_power_law(power_series(40, 5.0, 1.2, 0.3), 1.2);
  CHECK(std::abs(fit.a - 5.0) < 1e-9);
  CHECK(std::abs(fit.b - 0.3) < 1e-9);
  CHECK(fit.h == 1.2);

  const auto flat = fit_power_law(Eigen::VectorXd::Constant(10, 4.0), 1.0);
  CHECK(std::abs(flat.a) < 1e-12);
  CHECK(flat.b == doctest::Approx(4.0).epsilon(1e-14));

  CHECK_THROWS_AS(fit_power_law(power_series(10, 1, 1, 0), 0.0), DegenerateSeries);
  CHECK_THROWS_AS(fit_power_law(Eigen::VectorXd::Ones(1), 1.0), DegenerateSeries);
}

TEST_CASE("least-squares residuals are orthogonal to the design columns") {
  Rng rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 5 + static_cast<Index>(rng.below(60));
    const double h = rng.uniform(0.2, 2.5);
    Eigen::VectorXd y(n);
    for (Index i = 0; i < n; ++i) y[i] = rng.normal();
    const auto fit = fit_power_law(y, h);
    double r_sum = 0, r_dot = 0;
    for (Index i = 0; i < n; ++i) {
      const double u = std::pow(static_cast<double>(i + 1), -h);
      const double r = y[i] - (fit.a * u + fit.b);
      r_sum += r;
      r_dot += r * u;
    }
    CHECK(std::abs(r_sum) < 1e-9);
    CHECK(std::abs(r_dot) < 1e-9);
  }
}

TEST_CASE("fitted amplitude is consistent as the series lengthens") {
  const double sigma = 0.05;
  double err_short = 0, err_long = 0;
  for (int s = 0; s < 200; ++s) {
    Rng rng(500 + s);
    auto noisy = [&](Index n) {
      Eigen::VectorXd y = power_series(n, 5.0, 1.2, 0.3);
      for (Index i = 0; i < n; ++i) y[i] += sigma * rng.normal();
      return y;
    };
    err_short += std::abs(fit_power_law(noisy(10), 1.2).a - 5.0);
    err_long += std::abs(fit_power_law(noisy(100), 1.2).a - 5.0);
  }
  CHECK(err_long < err_short);
}

TEST_CASE("decay derivative") {
  PowerLawFit<double> fit{2.0, 0.0, 1.0, 1};
  CHECK(decay_derivative(fit, 2.0) == -0.5);
  CHECK(decay_derivative(PowerLawFit<double>{0.0, 1.0, 1.5, 1}, 3.0) == 0.0);
  CHECK_THROWS(decay_derivative(fit, 0.0));

  const PowerLawFit<double> g{5.0, 0.3, 1.2, 1};
  const double x = 10.0, step = 1e-4;
  const double fd = (g(x + step) - g(x - step)) / (2 * step);
  CHECK(std::abs(decay_derivative(g, x) - fd) / std::abs(fd) < 1e-8);
  CHECK(std::abs(decay_derivative(g, 1e6)) < 1e-12);
}

TEST_CASE("stationarity basic verdicts") {
  StationarityConfig cfg;
  CHECK_FALSE(is_stationary(std::vector<double>{1, 0.5, 0.2}, cfg).stationary);
  CHECK(is_stationary(std::vector<double>{1, 0.5, 0.2}, cfg).reason == "too short");

  const auto zero = is_stationary(std::vector<double>(6, 0.0), cfg);
  CHECK(zero.stationary);
  CHECK(zero.reason == "no residual memory");

  std::vector<double> rising;
  for (int i = 1; i <= 30; ++i) rising.push_back(0.1 * i + 0.01 * i * i);
  for (std::size_t n = 4; n <= rising.size(); ++n) {
    const auto v = is_stationary(std::span(rising.data(), n), cfg);
    CHECK_FALSE(v.stationary);
  }
  // Even an enormous epsilon does not stop a rising series.
  cfg.epsilon = 1e9;
  CHECK_FALSE(is_stationary(rising, cfg).stationary);
}

TEST_CASE("stopping length on an exact power law matches the analytic inversion") {
  StationarityConfig cfg;
  cfg.epsilon = 0.05;
  cfg.normalize = false;
  const double a = 5.0, h = 1.2;
  // |a * h * x^(-h-1)| < eps  <=>  x > (a h / eps)^(1/(h+1)).
  const double threshold = std::pow(a * h / cfg.epsilon, 1.0 / (h + 1.0));
  const auto expected = static_cast<std::size_t>(std::floor(threshold)) + 1;
  CHECK(expected == 9);

  const auto series = to_std(power_series(40, a, h, 0.3));
  std::size_t found = 0;
  for (std::size_t n = 1; n <= series.size(); ++n) {
    if (is_stationary(std::span(series.data(), n), cfg, h).stationary) {
      found = n;
      break;
    }
  }
  CHECK(found == expected);
}

TEST_CASE("property: stationarity is monotone in epsilon") {
  Rng rng(901);
  const std::vector<double> eps{0.0, 0.005, 0.02, 0.04, 0.06, 0.08, 0.1, 0.5};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 4 + static_cast<std::size_t>(rng.below(40));
    std::vector<double> series(n);
    const double a = rng.uniform(0.5, 5), h = rng.uniform(0.3, 2.0);
    for (std::size_t i = 0; i < n; ++i) {
      series[i] = std::abs(a * std::pow(static_cast<double>(i + 1), -h) + 0.2 * rng.normal());
    }
    bool fired = false;
    for (double e : eps) {
      StationarityConfig cfg;
      cfg.epsilon = e;
      const bool now = is_stationary(series, cfg).stationary;
      if (fired) CHECK(now);
      fired = fired || now;
    }
  }
}

TEST_CASE("normalisation makes the verdict scale free") {
  const auto base = to_std(power_series(12, 3.0, 1.0, 0.1));
  std::vector<double> scaled;
  for (double v : base) scaled.push_back(1e4 * v);
  StationarityConfig cfg;
  const auto a = is_stationary(base, cfg);
  const auto b = is_stationary(scaled, cfg);
  CHECK(a.stationary == b.stationary);
  REQUIRE(a.fit);
  REQUIRE(b.fit);
  CHECK(a.fit->p == doctest::Approx(b.fit->p).epsilon(1e-9));
}
