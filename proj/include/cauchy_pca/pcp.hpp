#pragma once

// Principal Component Pursuit: min ||L||_* + lambda ||S||_1  s.t.  L + S = M,
// solved with the inexact augmented Lagrangian method, plus the rank-targeted
// lambda search used as the Laplace baseline.

#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cauchy_pca/matrix.hpp"
#include "cauchy_pca/matrix_io.hpp"

namespace cpca {

struct PcpConfig {
  double lambda = 0.0;
  /// Initial penalty; 0 selects 1.25 / sigma_1(M).
  double mu0 = 0.0;
  double penalty_growth = 1.5;
  /// Penalty stops growing at mu0 * mu_cap_factor.
  double mu_cap_factor = 1e7;
  double tolerance = 1e-7;
  std::size_t max_iterations = 500;
};

struct PcpResult {
  DenseMatrix low_rank;
  DenseMatrix sparse;
  std::size_t iterations = 0;
  bool converged = false;
  /// ||M - L - S||_F / ||M||_F of the returned pair.
  double relative_residual = 0.0;
};

/// Singular value thresholding: U max(Sigma - tau, 0) V^T from a full SVD.
inline DenseMatrix shrink_singular_values(const DenseMatrix& a, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("shrink_singular_values: tau must be positive");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a.mat(), Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = (svd.singularValues().array() - tau).max(0.0).matrix();
  return DenseMatrix(RowMat(svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose()));
}

/// Entry-wise sign(a) * max(|a| - tau, 0).
inline DenseMatrix soft_threshold(const DenseMatrix& a, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("soft_threshold: tau must be positive");
  DenseMatrix out = a;
  for (double& x : out.entries()) {
    const double mag = std::abs(x) - tau;
    x = mag > 0.0 ? std::copysign(mag, x) : 0.0;
  }
  return out;
}

inline void validate(const PcpConfig& c) {
  if (!(c.lambda > 0.0) || c.mu0 < 0.0 || !(c.penalty_growth > 1.0) || !(c.tolerance > 0.0) ||
      c.max_iterations < 1 || !(c.mu_cap_factor >= 1.0)) {
    throw std::invalid_argument("pcp: invalid configuration");
  }
}

/// Inexact ALM for PCP. Returns the lowest-residual iterate when the
/// iteration cap is reached before the residual drops below tolerance.
inline PcpResult pcp_solve(const DenseMatrix& m, const PcpConfig& config) {
  validate(config);
  const RowMat& mm = m.mat();
  const double norm_fro = mm.norm();
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  if (norm_fro == 0.0) return {DenseMatrix(rows, cols), DenseMatrix(rows, cols), 0, true, 0.0};

  const double norm_two = singular_values(m).front();
  const double norm_inf = mm.cwiseAbs().maxCoeff() / config.lambda;
  RowMat y = mm / std::max(norm_two, norm_inf);
  double mu = config.mu0 > 0.0 ? config.mu0 : 1.25 / norm_two;
  const double mu_cap = mu * config.mu_cap_factor;

  DenseMatrix low(rows, cols);
  DenseMatrix sparse(rows, cols);
  PcpResult best{low, sparse, 0, false, std::numeric_limits<double>::infinity()};

  for (std::size_t it = 1; it <= config.max_iterations; ++it) {
    sparse = soft_threshold(DenseMatrix(RowMat(mm - low.mat() + y / mu)), config.lambda / mu);
    low = shrink_singular_values(DenseMatrix(RowMat(mm - sparse.mat() + y / mu)), 1.0 / mu);
    const RowMat z = mm - low.mat() - sparse.mat();
    y += mu * z;
    mu = std::min(mu * config.penalty_growth, mu_cap);

    const double residual = z.norm() / norm_fro;
    if (residual < best.relative_residual) {
      best.low_rank = low;
      best.sparse = sparse;
      best.iterations = it;
      best.relative_residual = residual;
    }
    if (residual <= config.tolerance) {
      best.converged = true;
      return best;
    }
  }
  return best;
}

/// Rank threshold for PCP output; ALM iterates carry more solver noise than SVD output.
inline constexpr double kPcpRankThreshold = 1e-6;

/// c / sqrt(max(rows, cols)) for c in {2, 1.5, 1.25, 1, 0.75, 0.5, 0.25, 0.1}.
inline std::vector<double> default_lambda_grid(std::size_t rows, std::size_t cols) {
  const double base = 1.0 / std::sqrt(static_cast<double>(std::max(rows, cols)));
  std::vector<double> grid;
  for (double c : {2.0, 1.5, 1.25, 1.0, 0.75, 0.5, 0.25, 0.1}) grid.push_back(c * base);
  return grid;
}

struct TuningStep {
  double lambda;
  std::size_t rank;
  double rel_residual;
};

struct TuningResult {
  double lambda = 0.0;
  PcpResult pcp;
  std::size_t rank = 0;
  std::vector<TuningStep> trace;
};

class TuningError : public std::runtime_error {
 public:
  TuningError(std::size_t target, std::size_t smallest_lambda_rank, std::vector<TuningStep> trace)
      : std::runtime_error("lambda tuning: no grid value reaches rank <= " + std::to_string(target) +
                           " (rank " + std::to_string(smallest_lambda_rank) + " at the smallest lambda)"),
        rank_at_smallest_(smallest_lambda_rank),
        trace_(std::move(trace)) {}

  std::size_t rank_at_smallest() const noexcept { return rank_at_smallest_; }
  const std::vector<TuningStep>& trace() const noexcept { return trace_; }

 private:
  std::size_t rank_at_smallest_;
  std::vector<TuningStep> trace_;
};

/// Scans a strictly descending lambda grid and returns the first (largest)
/// lambda whose recovered L has numerical rank <= target_rank.
inline TuningResult tune_lambda_for_rank(const DenseMatrix& m, std::size_t target_rank,
                                         std::span<const double> lambda_grid, PcpConfig base = {}) {
  if (lambda_grid.empty()) throw std::invalid_argument("tune_lambda_for_rank: empty lambda grid");
  if (target_rank < 1) throw std::invalid_argument("tune_lambda_for_rank: target rank must be positive");
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    if (!(lambda_grid[i] > 0.0) || (i > 0 && !(lambda_grid[i] < lambda_grid[i - 1]))) {
      throw std::invalid_argument("tune_lambda_for_rank: grid must be positive and strictly descending");
    }
  }

  std::vector<TuningStep> trace;
  std::size_t last_rank = 0;
  for (double lambda : lambda_grid) {
    base.lambda = lambda;
    PcpResult pcp = pcp_solve(m, base);
    const std::size_t rank = numerical_rank(pcp.low_rank, kPcpRankThreshold);
    trace.push_back({lambda, rank, pcp.relative_residual});
    last_rank = rank;
    if (rank <= target_rank) return {lambda, std::move(pcp), rank, std::move(trace)};
  }
  throw TuningError(target_rank, last_rank, std::move(trace));
}

inline void write_tuning_csv(std::ostream& os, std::span<const TuningStep> trace) {
  os << "lambda,rank,rel_residual\n";
  for (const auto& s : trace) {
    os << format_number(s.lambda) << ',' << s.rank << ',' << format_number(s.rel_residual) << '\n';
  }
}

}  // namespace cpca
