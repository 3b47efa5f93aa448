#ifndef OBLIVION_TREND_HPP
#define OBLIVION_TREND_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "oblivion/error.hpp"

namespace oblivion {

namespace detail {

// Ordinary least-squares slope of y on x.
template <typename Scalar>
Scalar ols_slope(const std::vector<Scalar>& x, const std::vector<Scalar>& y) {
  const auto n = static_cast<Scalar>(x.size());
  Scalar mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  Scalar sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxy / sxx;
}

// Log-spaced window sizes in [lo, hi], deduplicated after rounding.
inline std::vector<Eigen::Index> log_spaced_windows(Eigen::Index lo, Eigen::Index hi,
                                                    std::size_t max_count = 16) {
  std::vector<Eigen::Index> sizes;
  const auto span = static_cast<std::size_t>(hi - lo + 1);
  const std::size_t count = std::min(span, max_count);
  for (std::size_t k = 0; k < count; ++k) {
    const double frac = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
    const double s = static_cast<double>(lo) *
                     std::pow(static_cast<double>(hi) / static_cast<double>(lo), frac);
    const auto rounded = static_cast<Eigen::Index>(std::lround(s));
    if (sizes.empty() || rounded != sizes.back()) sizes.push_back(rounded);
  }
  return sizes;
}

}  // namespace detail

/// Window sizes used by dfa_exponent for a series of length n: log-spaced in
/// [min_window, n/4]. Short series that cannot supply two sizes in that range
/// fall back to [3, n], the smallest windows a line fit leaves residuals in.
inline std::vector<Eigen::Index> dfa_window_sizes(Eigen::Index n, Eigen::Index min_window = 4) {
  Eigen::Index lo = min_window;
  Eigen::Index hi = n / 4;
  if (hi - lo + 1 < 2) {
    lo = 3;
    hi = n;
  }
  return detail::log_spaced_windows(lo, hi);
}

/// Detrended fluctuation analysis (first order) scaling exponent.
///
/// The mean-subtracted series is integrated into a profile, cut into
/// non-overlapping windows of each size s, each window is detrended by a
/// least-squares line and F(s) is the RMS of the residuals. The exponent is
/// the slope of log F(s) against log s. White noise gives about 0.5, a random
/// walk about 1.5.
template <typename Derived>
typename Derived::Scalar dfa_exponent(const Eigen::DenseBase<Derived>& series,
                                      Eigen::Index min_window = 4) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = series.size();
  if (n < 4) throw DegenerateSeries("series too short for DFA");

  const Scalar mean = series.derived().mean();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> profile(n);
  Scalar running = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    running += series.derived()(i) - mean;
    profile(i) = running;
  }

  std::vector<Scalar> log_s, log_f;
  for (const Eigen::Index s : dfa_window_sizes(n, min_window)) {
    const Eigen::Index windows = n / s;
    const Scalar xbar = static_cast<Scalar>(s - 1) / 2;
    Scalar sxx = 0;
    for (Eigen::Index i = 0; i < s; ++i) sxx += (i - xbar) * (i - xbar);
    Scalar sum_sq = 0;
    for (Eigen::Index w = 0; w < windows; ++w) {
      const auto seg = profile.segment(w * s, s);
      const Scalar ybar = seg.mean();
      Scalar sxy = 0;
      for (Eigen::Index i = 0; i < s; ++i) sxy += (i - xbar) * (seg(i) - ybar);
      const Scalar slope = sxy / sxx;
      for (Eigen::Index i = 0; i < s; ++i) {
        const Scalar r = seg(i) - (ybar + slope * (i - xbar));
        sum_sq += r * r;
      }
    }
    const Scalar fluct = std::sqrt(sum_sq / static_cast<Scalar>(windows * s));
    if (!(fluct > 0) || !std::isfinite(fluct)) throw DegenerateSeries("degenerate series");
    log_s.push_back(std::log(static_cast<Scalar>(s)));
    log_f.push_back(std::log(fluct));
  }
  if (log_s.size() < 2) throw DegenerateSeries("series too short for DFA");
  return detail::ols_slope(log_s, log_f);
}

/// Y(x) = a * x^(-h) + b for x >= x0.
template <typename Scalar = double>
struct PowerLawFit {
  Scalar a = 0;
  Scalar b = 0;
  Scalar h = 0;
  Eigen::Index x0 = 1;

  Scalar operator()(Scalar x) const { return a * std::pow(x, -h) + b; }
};

/// Least-squares (a, b) for a fixed exponent h, with samples at x = 1..n.
/// The model is linear in (a, b), so the normal equations are solved in
/// closed form on centred columns. Throws DegenerateSeries when every
/// x^(-h) is the same (h == 0) or fewer than two samples are given.
template <typename Derived>
PowerLawFit<typename Derived::Scalar> fit_power_law(const Eigen::DenseBase<Derived>& series,
                                                    typename Derived::Scalar h) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = series.size();
  if (n < 2) throw DegenerateSeries("power-law fit needs at least two points");
  if (!std::isfinite(h)) throw DegenerateSeries("power-law exponent is not finite");

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> u(n);
  for (Eigen::Index i = 0; i < n; ++i) u(i) = std::pow(static_cast<Scalar>(i + 1), -h);
  const Scalar ubar = u.mean();
  const Scalar ybar = series.derived().mean();
  Scalar suu = 0, suy = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    suu += (u(i) - ubar) * (u(i) - ubar);
    suy += (u(i) - ubar) * (series.derived()(i) - ybar);
  }
  if (!(suu > std::numeric_limits<Scalar>::min() * u.squaredNorm())) {
    throw DegenerateSeries("singular normal equations");
  }
  PowerLawFit<Scalar> fit;
  fit.h = h;
  fit.a = suy / suu;
  fit.b = ybar - fit.a * ubar;
  fit.x0 = 1;
  return fit;
}

/// dY/dx = a * (-h) * x^(-h-1).
template <typename Scalar>
Scalar decay_derivative(const PowerLawFit<Scalar>& fit, Scalar x) {
  if (!(x > 0)) throw Error("decay derivative needs x > 0");
  return fit.a * (-fit.h) * std::pow(x, -fit.h - 1);
}

struct StationarityConfig {
  double epsilon = 0.1;
  std::size_t min_points = 4;
  Eigen::Index dfa_min_window = 4;
  /// Divide the series by its first element before fitting, so epsilon does
  /// not depend on the parameter count.
  bool normalize = true;

  void validate() const {
    if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw Error("epsilon must be finite and >= 0");
    if (min_points < 4) throw Error("min_points must be at least 4");
    if (dfa_min_window < 4) throw Error("dfa_min_window must be at least 4");
  }
};

struct FitStep {
  double h;
  double a;
  double b;
  double p;
};

struct StationarityVerdict {
  bool stationary = false;
  std::string reason;
  std::optional<FitStep> fit;
};

/// Stopping rule for the residual-memory series. The verdict is positive
/// when the fitted decay is non-increasing (a >= 0) and its slope at the
/// right end has magnitude below epsilon. An all-zero series is stationary.
/// Every failure of the estimators maps to "not stationary yet".
/// `fixed_h` bypasses the DFA estimate.
inline StationarityVerdict is_stationary(std::span<const double> series,
                                         const StationarityConfig& cfg,
                                         std::optional<double> fixed_h = std::nullopt) {
  if (series.size() < cfg.min_points) return {false, "too short", std::nullopt};
  if (std::all_of(series.begin(), series.end(), [](double v) { return v == 0.0; })) {
    return {true, "no residual memory", std::nullopt};
  }
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(series.data(),
                                                        static_cast<Eigen::Index>(series.size()));
  if (cfg.normalize && y(0) > 0) y /= y(0);

  double h;
  try {
    h = fixed_h ? *fixed_h : dfa_exponent(y, cfg.dfa_min_window);
  } catch (const DegenerateSeries& e) {
    return {false, std::string("dfa: ") + e.what(), std::nullopt};
  }
  PowerLawFit<double> fit;
  try {
    fit = fit_power_law(y, h);
  } catch (const DegenerateSeries& e) {
    return {false, std::string("fit: ") + e.what(), std::nullopt};
  }
  const double p = decay_derivative(fit, static_cast<double>(series.size()));
  const FitStep step{h, fit.a, fit.b, p};
  if (fit.a < 0) return {false, "not decaying", step};
  if (std::abs(p) < cfg.epsilon) return {true, "stationary", step};
  return {false, "still decaying", step};
}

}  // namespace oblivion

#endif  // OBLIVION_TREND_HPP
