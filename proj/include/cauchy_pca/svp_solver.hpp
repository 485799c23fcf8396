#pragma once

// Maximum-likelihood low-rank estimation under a location-scale noise model,
// solved by projected gradient descent onto the rank-k set (singular value
// projection) with backtracking and optional random restarts.

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cauchy_pca/matrix.hpp"
#include "cauchy_pca/noise_model.hpp"
#include "cauchy_pca/random.hpp"

namespace cpca {

/// 0/1 flags marking which entries of an observation matrix were observed.
class ObservationMask {
 public:
  ObservationMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> flags)
      : rows_(rows), cols_(cols), flags_(std::move(flags)) {
    if (flags_.size() != rows_ * cols_) throw std::invalid_argument("ObservationMask: flag count mismatch");
    bool any = false;
    for (auto& f : flags_) {
      if (f > 1) throw std::invalid_argument("ObservationMask: flags must be 0 or 1");
      any = any || f == 1;
    }
    if (!any) throw std::invalid_argument("ObservationMask: no observed entries");
  }

  static ObservationMask all_observed(std::size_t rows, std::size_t cols) {
    return {rows, cols, std::vector<std::uint8_t>(rows * cols, 1)};
  }

  /// Entries must be exactly 0 or 1.
  static ObservationMask from_matrix(const DenseMatrix& a) {
    std::vector<std::uint8_t> flags(a.size());
    const auto e = a.entries();
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (e[i] != 0.0 && e[i] != 1.0) throw std::invalid_argument("ObservationMask: matrix entries must be 0 or 1");
      flags[i] = e[i] == 1.0 ? 1 : 0;
    }
    return {a.rows(), a.cols(), std::move(flags)};
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool observed(std::size_t flat) const noexcept { return flags_[flat] != 0; }
  bool observed(std::size_t i, std::size_t j) const noexcept { return flags_[i * cols_ + j] != 0; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<std::uint8_t> flags_;
};

struct SvpConfig {
  std::size_t rank = 1;
  NoiseModel model = NoiseModel::cauchy(0.1);
  double initial_step = 1.0;
  double tolerance = 1e-7;
  std::size_t max_iterations = 500;
  std::size_t restarts = 0;
  std::uint64_t seed = 0;
  /// Backtracking halves the step at most this many times per iteration.
  std::size_t max_halvings = 30;
  SvdOptions svd{};
};

enum class StopReason { ObjectiveDecrease, IterateChange, LineSearchExhausted, MaxIterations };

inline constexpr std::string_view to_string(StopReason r) noexcept {
  switch (r) {
    case StopReason::ObjectiveDecrease: return "objective_decrease";
    case StopReason::IterateChange: return "iterate_change";
    case StopReason::LineSearchExhausted: return "line_search_exhausted";
    case StopReason::MaxIterations: return "max_iterations";
  }
  return "unknown";
}

struct SolverReport {
  DenseMatrix solution;
  TruncatedSvd factors;
  /// Objective at the starting point, then one value per accepted step.
  std::vector<double> objective_trace;
  std::size_t iterations = 0;
  bool converged = false;
  StopReason stop_reason = StopReason::MaxIterations;
  std::vector<double> step_sizes;
  std::uint64_t seed_used = 0;
  std::size_t restart_index = 0;
  /// ||grad||_F at the returned iterate.
  double final_gradient_norm = 0.0;

  double final_objective() const { return objective_trace.back(); }
};

namespace detail {

inline void check_shapes(const DenseMatrix& m, const DenseMatrix& l, const ObservationMask* mask, const char* who) {
  if (m.rows() != l.rows() || m.cols() != l.cols()) throw std::invalid_argument(std::string(who) + ": dimension mismatch");
  if (mask && (mask->rows() != m.rows() || mask->cols() != m.cols())) {
    throw std::invalid_argument(std::string(who) + ": mask dimension mismatch");
  }
}

}  // namespace detail

/// Sum of nll_term(M_ij - L_ij) over observed entries.
inline double objective(const DenseMatrix& m, const DenseMatrix& l, const NoiseModel& model,
                        const ObservationMask* mask = nullptr) {
  detail::check_shapes(m, l, mask, "objective");
  const auto me = m.entries();
  const auto le = l.entries();
  double total = 0.0;
  for (std::size_t i = 0; i < me.size(); ++i) {
    if (mask && !mask->observed(i)) continue;
    total += nll_term(model, me[i] - le[i]);
  }
  return total;
}

/// d objective / d L: -psi(M_ij - L_ij) where observed, 0 elsewhere.
inline DenseMatrix gradient(const DenseMatrix& m, const DenseMatrix& l, const NoiseModel& model,
                            const ObservationMask* mask = nullptr) {
  detail::check_shapes(m, l, mask, "gradient");
  DenseMatrix g(m.rows(), m.cols());
  const auto me = m.entries();
  const auto le = l.entries();
  auto ge = g.entries();
  for (std::size_t i = 0; i < me.size(); ++i) {
    if (mask && !mask->observed(i)) continue;
    ge[i] = -psi(model, me[i] - le[i]);
  }
  return g;
}

inline void validate(const SvpConfig& config, const DenseMatrix& m, const ObservationMask* mask) {
  const std::size_t limit = std::min(m.rows(), m.cols());
  if (config.rank < 1 || config.rank > limit) {
    throw std::invalid_argument("svp: rank " + std::to_string(config.rank) + " outside [1, " + std::to_string(limit) + "]");
  }
  if (config.model.kind() == NoiseKind::Logistic) {
    throw std::invalid_argument("svp: logistic noise is a diagnostic model only");
  }
  if (!(config.initial_step > 0.0) || !(config.tolerance > 0.0) || config.max_iterations < 1) {
    throw std::invalid_argument("svp: step, tolerance and iteration cap must be positive");
  }
  if (mask && (mask->rows() != m.rows() || mask->cols() != m.cols())) {
    throw std::invalid_argument("svp: mask dimension mismatch");
  }
}

namespace detail {

inline TruncatedSvd project_with_context(const DenseMatrix& a, const SvpConfig& config, std::size_t iteration) {
  try {
    return truncated_svd(a, config.rank, config.svd);
  } catch (const ConvergenceError& e) {
    throw ConvergenceError("svp iteration " + std::to_string(iteration) + ": " + e.what(), e.residual());
  }
}

inline SolverReport run_svp(const DenseMatrix& m, const SvpConfig& config, const ObservationMask* mask,
                            DenseMatrix start, std::uint64_t seed, std::size_t restart_index) {
  SolverReport report;
  report.seed_used = seed;
  report.restart_index = restart_index;

  TruncatedSvd factors = project_with_context(start, config, 0);
  DenseMatrix current = factors.reconstruct();
  double f = objective(m, current, config.model, mask);
  report.objective_trace.push_back(f);

  const double eps = config.tolerance;
  bool stopped = false;
  for (std::size_t t = 0; t < config.max_iterations; ++t) {
    const DenseMatrix g = gradient(m, current, config.model, mask);
    double eta = config.initial_step;
    bool accepted = false;
    TruncatedSvd cand_factors;
    DenseMatrix candidate;
    double f_cand = f;
    for (std::size_t h = 0; h <= config.max_halvings; ++h, eta *= 0.5) {
      cand_factors = project_with_context(DenseMatrix(RowMat(current.mat() - eta * g.mat())), config, t + 1);
      candidate = cand_factors.reconstruct();
      f_cand = objective(m, candidate, config.model, mask);
      if (f_cand < f) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      report.stop_reason = StopReason::LineSearchExhausted;
      stopped = true;
      break;
    }

    const double decrease = (f - f_cand) / std::max(std::abs(f), 1.0);
    const double change = (candidate.mat() - current.mat()).norm() / std::max(1.0, current.frobenius_norm());
    current = std::move(candidate);
    factors = std::move(cand_factors);
    f = f_cand;
    report.objective_trace.push_back(f);
    report.step_sizes.push_back(eta);
    ++report.iterations;

    if (decrease < eps) {
      report.stop_reason = StopReason::ObjectiveDecrease;
      stopped = true;
      break;
    }
    if (change < eps) {
      report.stop_reason = StopReason::IterateChange;
      stopped = true;
      break;
    }
  }
  report.converged = stopped;
  if (!stopped) report.stop_reason = StopReason::MaxIterations;
  report.final_gradient_norm = gradient(m, current, config.model, mask).frobenius_norm();
  report.solution = std::move(current);
  report.factors = std::move(factors);
  return report;
}

}  // namespace detail

/// Best of 1 + config.restarts projected-gradient runs (lowest final objective,
/// ties to the lower restart index).
///
/// Run 0 starts from the rank-k projection of M (unobserved entries zeroed).
/// Restart r starts from the projection of a uniform(-R, R) matrix, R the
/// largest observed |M_ij|, drawn from derive_seed(config.seed, {r}).
inline SolverReport solve(const DenseMatrix& m, const SvpConfig& config, const ObservationMask* mask = nullptr) {
  validate(config, m, mask);

  DenseMatrix observed = m;
  double range = 0.0;
  {
    auto e = observed.entries();
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (mask && !mask->observed(i)) e[i] = 0.0;
      range = std::max(range, std::abs(e[i]));
    }
  }

  SolverReport best = detail::run_svp(m, config, mask, observed, config.seed, 0);
  for (std::size_t r = 1; r <= config.restarts; ++r) {
    const std::uint64_t seed = derive_seed(config.seed, {r});
    Rng rng(seed);
    DenseMatrix start(m.rows(), m.cols());
    for (auto& x : start.entries()) x = rng.uniform(-range, range);
    SolverReport run = detail::run_svp(m, config, mask, std::move(start), seed, r);
    if (run.final_objective() < best.final_objective()) best = std::move(run);
  }
  return best;
}

/// JSON summary of a report; the solution itself lives in `solution_file`.
inline nlohmann::ordered_json report_to_json(const SolverReport& report, const std::string& solution_file) {
  nlohmann::ordered_json j;
  j["solution_file"] = solution_file;
  j["iterations"] = report.iterations;
  j["converged"] = report.converged;
  j["final_objective"] = report.final_objective();
  j["objective_trace"] = report.objective_trace;
  j["seed"] = report.seed_used;
  j["restart_index"] = report.restart_index;
  j["stop_reason"] = std::string(to_string(report.stop_reason));
  j["step_sizes"] = report.step_sizes;
  j["final_gradient_norm"] = report.final_gradient_norm;
  j["singular_values"] = report.factors.sigma;
  return j;
}

}  // namespace cpca
