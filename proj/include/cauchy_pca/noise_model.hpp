#pragma once

// Zero-located location-scale noise models: densities, per-entry negative
// log-likelihood terms, score functions, and grid estimates of the gross-error
// and local-shift sensitivities of the corresponding MLE location estimators.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cauchy_pca/matrix_io.hpp"

namespace cpca {

enum class NoiseKind { Gaussian, Laplace, Cauchy, Logistic };

inline constexpr std::string_view to_string(NoiseKind k) noexcept {
  switch (k) {
    case NoiseKind::Gaussian: return "gaussian";
    case NoiseKind::Laplace: return "laplace";
    case NoiseKind::Cauchy: return "cauchy";
    case NoiseKind::Logistic: return "logistic";
  }
  return "unknown";
}

inline std::optional<NoiseKind> parse_noise_kind(std::string_view s) noexcept {
  for (auto k : {NoiseKind::Gaussian, NoiseKind::Laplace, NoiseKind::Cauchy, NoiseKind::Logistic}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

/// Noise distribution with location 0. `scale` is sigma, b, gamma or s.
class NoiseModel {
 public:
  NoiseModel(NoiseKind kind, double scale) : kind_(kind), scale_(scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) {
      throw std::invalid_argument("NoiseModel: scale must be positive and finite");
    }
  }

  static NoiseModel gaussian(double sigma) { return {NoiseKind::Gaussian, sigma}; }
  static NoiseModel laplace(double b) { return {NoiseKind::Laplace, b}; }
  static NoiseModel cauchy(double gamma) { return {NoiseKind::Cauchy, gamma}; }
  static NoiseModel logistic(double s) { return {NoiseKind::Logistic, s}; }

  NoiseKind kind() const noexcept { return kind_; }
  double scale() const noexcept { return scale_; }

  friend bool operator==(const NoiseModel&, const NoiseModel&) = default;

 private:
  NoiseKind kind_;
  double scale_;
};

inline double density(const NoiseModel& model, double x) {
  const double s = model.scale();
  switch (model.kind()) {
    case NoiseKind::Gaussian:
      return std::exp(-0.5 * (x / s) * (x / s)) / (s * std::sqrt(2.0 * std::numbers::pi));
    case NoiseKind::Laplace:
      return std::exp(-std::abs(x) / s) / (2.0 * s);
    case NoiseKind::Cauchy:
      return s / (std::numbers::pi * (s * s + x * x));
    case NoiseKind::Logistic: {
      const double e = std::exp(-std::abs(x) / s);
      return e / (s * (1.0 + e) * (1.0 + e));
    }
  }
  return 0.0;
}

/// Negative log-density up to a residual-independent constant.
/// Cauchy: log(gamma^2 + r^2). Gaussian: r^2 / (2 sigma^2). Laplace: |r| / b.
/// Logistic: |r|/s + 2 log(1 + exp(-|r|/s)).
inline double nll_term(const NoiseModel& model, double residual) {
  const double s = model.scale();
  switch (model.kind()) {
    case NoiseKind::Gaussian: return 0.5 * residual * residual / (s * s);
    case NoiseKind::Laplace: return std::abs(residual) / s;
    case NoiseKind::Cauchy: return std::log(s * s + residual * residual);
    case NoiseKind::Logistic: {
      const double z = std::abs(residual) / s;
      return z + 2.0 * std::log1p(std::exp(-z));
    }
  }
  return 0.0;
}

/// Score function: d nll_term / d residual. Odd in x; Laplace gives 0 at 0.
inline double psi(const NoiseModel& model, double x) {
  const double s = model.scale();
  switch (model.kind()) {
    case NoiseKind::Gaussian: return x / (s * s);
    case NoiseKind::Laplace: return x > 0.0 ? 1.0 / s : (x < 0.0 ? -1.0 / s : 0.0);
    case NoiseKind::Cauchy: return 2.0 * x / (s * s + x * x);
    case NoiseKind::Logistic: return std::tanh(x / (2.0 * s)) / s;
  }
  return 0.0;
}

struct SensitivityEstimate {
  double gross_error = 0.0;  // sup |psi| over the grid
  bool gross_error_bounded = true;
  double local_shift = 0.0;  // sup of adjacent difference quotients of psi
  bool local_shift_bounded = true;
  double grid_radius = 0.0;
  double grid_step = 0.0;
};

/// Evaluation points for the sensitivity suprema: the half-step lattice
/// +-(j - 1/2) * step inside [-radius, radius], plus the endpoints +-radius.
/// Zero is straddled, never sampled.
inline std::vector<double> sensitivity_grid(double radius, double step) {
  const auto half_count = static_cast<std::size_t>(std::floor(radius / step + 0.5));
  std::vector<double> pos;
  pos.reserve(half_count + 1);
  for (std::size_t j = 1; j <= half_count; ++j) {
    const double x = (static_cast<double>(j) - 0.5) * step;
    if (x < radius) pos.push_back(x);
  }
  pos.push_back(radius);
  std::vector<double> grid;
  grid.reserve(2 * pos.size());
  for (auto it = pos.rbegin(); it != pos.rend(); ++it) grid.push_back(-*it);
  grid.insert(grid.end(), pos.begin(), pos.end());
  return grid;
}

namespace detail {

struct GridSuprema {
  double gross = 0.0;
  double local = 0.0;
};

inline GridSuprema grid_suprema(const NoiseModel& model, double radius, double step) {
  const auto grid = sensitivity_grid(radius, step);
  GridSuprema out;
  double prev = psi(model, grid.front());
  out.gross = std::abs(prev);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double cur = psi(model, grid[i]);
    out.gross = std::max(out.gross, std::abs(cur));
    out.local = std::max(out.local, std::abs(cur - prev) / (grid[i] - grid[i - 1]));
    prev = cur;
  }
  return out;
}

inline bool stable(double coarse, double refined, double threshold) {
  return std::abs(refined - coarse) <= threshold * std::abs(coarse);
}

}  // namespace detail

/// Grid suprema of |psi| and of its difference quotients. A supremum counts as
/// bounded when doubling the radius (gross error) or halving the step (local
/// shift) moves it by at most `divergence_threshold` relative.
inline SensitivityEstimate estimate_sensitivities(const NoiseModel& model, double grid_radius, double grid_step,
                                                  double divergence_threshold = 0.1) {
  if (!(grid_step > 0.0) || !(grid_radius > 0.0) || !(grid_step < grid_radius) || !std::isfinite(grid_radius)) {
    throw std::invalid_argument("estimate_sensitivities: need 0 < step < radius");
  }
  const auto base = detail::grid_suprema(model, grid_radius, grid_step);
  const auto wide = detail::grid_suprema(model, 2.0 * grid_radius, grid_step);
  const auto fine = detail::grid_suprema(model, grid_radius, 0.5 * grid_step);
  return SensitivityEstimate{base.gross, detail::stable(base.gross, wide.gross, divergence_threshold), base.local,
                             detail::stable(base.local, fine.local, divergence_threshold), grid_radius, grid_step};
}

/// Scale at which density(0) equals peak_value.
inline double aligned_scale(NoiseKind kind, double peak_value) {
  if (!(peak_value > 0.0)) throw std::invalid_argument("aligned_scale: peak value must be positive");
  switch (kind) {
    case NoiseKind::Gaussian: return 1.0 / (peak_value * std::sqrt(2.0 * std::numbers::pi));
    case NoiseKind::Laplace: return 1.0 / (2.0 * peak_value);
    case NoiseKind::Cauchy: return 1.0 / (std::numbers::pi * peak_value);
    case NoiseKind::Logistic: return 1.0 / (4.0 * peak_value);
  }
  return 0.0;
}

struct DensityPoint {
  NoiseModel model;
  double x;
  double density;
};

/// Densities of peak-aligned models tabulated at xs, grouped by model.
inline std::vector<DensityPoint> aligned_density_curves(std::span<const NoiseKind> kinds, double peak_value,
                                                        std::span<const double> xs) {
  if (kinds.empty()) throw std::invalid_argument("aligned_density_curves: no models given");
  std::vector<DensityPoint> table;
  table.reserve(kinds.size() * xs.size());
  for (auto kind : kinds) {
    const NoiseModel model(kind, aligned_scale(kind, peak_value));
    for (double x : xs) table.push_back({model, x, density(model, x)});
  }
  return table;
}

inline void write_density_csv(std::ostream& os, std::span<const DensityPoint> table) {
  os << "model,x,density\n";
  for (const auto& p : table) {
    os << to_string(p.model.kind()) << ',' << format_number(p.x) << ',' << format_number(p.density) << '\n';
  }
}

struct NamedSensitivity {
  NoiseModel model;
  SensitivityEstimate estimate;
};

inline void write_sensitivity_csv(std::ostream& os, std::span<const NamedSensitivity> rows) {
  os << "model,scale,grid_radius,grid_step,gross_error,gross_error_bounded,local_shift,local_shift_bounded\n";
  for (const auto& r : rows) {
    const auto& e = r.estimate;
    os << to_string(r.model.kind()) << ',' << format_number(r.model.scale()) << ',' << format_number(e.grid_radius)
       << ',' << format_number(e.grid_step) << ',' << format_number(e.gross_error) << ','
       << (e.gross_error_bounded ? "bounded" : "diverging") << ',' << format_number(e.local_shift) << ','
       << (e.local_shift_bounded ? "bounded" : "diverging") << '\n';
  }
}

}  // namespace cpca
