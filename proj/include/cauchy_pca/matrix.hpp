#pragma once

// Dense matrices and the rank-k machinery behind singular value projection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "cauchy_pca/errors.hpp"

namespace cpca {

/// Row-major storage used for every DenseMatrix.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Real dense matrix, row-major, finite on construction.
class DenseMatrix {
 public:
  DenseMatrix() = default;

  /// Zero matrix of the given shape.
  DenseMatrix(std::size_t rows, std::size_t cols) : m_(RowMat::Zero(checked(rows), checked(cols))) {}

  DenseMatrix(std::size_t rows, std::size_t cols, std::span<const double> entries)
      : DenseMatrix(rows, cols) {
    if (entries.size() != rows * cols) {
      throw std::invalid_argument("DenseMatrix: expected " + std::to_string(rows * cols) +
                                  " entries, got " + std::to_string(entries.size()));
    }
    std::copy(entries.begin(), entries.end(), m_.data());
    require_finite();
  }

  DenseMatrix(std::size_t rows, std::size_t cols, std::initializer_list<double> entries)
      : DenseMatrix(rows, cols, std::span<const double>(entries.begin(), entries.size())) {}

  explicit DenseMatrix(RowMat m) : m_(std::move(m)) {
    if (m_.rows() == 0 || m_.cols() == 0) throw std::invalid_argument("DenseMatrix: empty shape");
    require_finite();
  }

  template <typename Derived>
  static DenseMatrix from(const Eigen::MatrixBase<Derived>& expr) {
    return DenseMatrix(RowMat(expr));
  }

  static DenseMatrix identity(std::size_t n) { return DenseMatrix(RowMat::Identity(checked(n), checked(n))); }

  static DenseMatrix diagonal(std::span<const double> d) {
    RowMat m = RowMat::Zero(checked(d.size()), checked(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return DenseMatrix(std::move(m));
  }
  static DenseMatrix diagonal(std::initializer_list<double> d) {
    return diagonal(std::span<const double>(d.begin(), d.size()));
  }

  std::size_t rows() const noexcept { return static_cast<std::size_t>(m_.rows()); }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(m_.cols()); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(m_.size()); }
  bool empty() const noexcept { return m_.size() == 0; }

  double operator()(std::size_t i, std::size_t j) const { return m_(i, j); }
  double& operator()(std::size_t i, std::size_t j) { return m_(i, j); }

  std::span<const double> entries() const noexcept { return {m_.data(), size()}; }
  std::span<double> entries() noexcept { return {m_.data(), size()}; }

  const RowMat& mat() const noexcept { return m_; }
  RowMat& mat() noexcept { return m_; }

  double frobenius_norm() const { return m_.norm(); }

  friend bool operator==(const DenseMatrix& a, const DenseMatrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::equal(a.entries().begin(), a.entries().end(), b.entries().begin());
  }

 private:
  static Eigen::Index checked(std::size_t n) {
    if (n == 0) throw std::invalid_argument("DenseMatrix: dimensions must be positive");
    return static_cast<Eigen::Index>(n);
  }

  void require_finite() const {
    if (!m_.allFinite()) throw std::invalid_argument("DenseMatrix: entries must be finite");
  }

  RowMat m_;
};

/// Rank-k factor triple; columns of u and v are orthonormal, sigma non-increasing.
struct TruncatedSvd {
  DenseMatrix u;              // rows x k
  std::vector<double> sigma;  // k values
  DenseMatrix v;              // cols x k

  std::size_t rank() const noexcept { return sigma.size(); }

  DenseMatrix reconstruct() const {
    Eigen::Map<const Eigen::VectorXd> s(sigma.data(), static_cast<Eigen::Index>(sigma.size()));
    return DenseMatrix(RowMat(u.mat() * s.asDiagonal() * v.mat().transpose()));
  }
};

struct SvdOptions {
  /// Matrices with min(rows, cols) at or below this size use a dense SVD.
  std::size_t dense_cutoff = 64;
  /// Lanczos stops once every wanted Ritz residual is below tolerance * sigma_1.
  double tolerance = 1e-10;
  /// Cap on Lanczos steps; 0 means min(rows, cols), where a dense SVD finishes the job.
  std::size_t max_steps = 0;
};

namespace detail {

inline void check_rank_arg(const DenseMatrix& a, std::size_t k, const char* who) {
  const std::size_t limit = std::min(a.rows(), a.cols());
  if (k < 1 || k > limit) {
    throw std::invalid_argument(std::string(who) + ": rank " + std::to_string(k) + " outside [1, " +
                                std::to_string(limit) + "]");
  }
}

inline TruncatedSvd dense_truncated_svd(const RowMat& a, std::size_t k) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto kk = static_cast<Eigen::Index>(k);
  TruncatedSvd out{DenseMatrix::from(svd.matrixU().leftCols(kk)),
                   std::vector<double>(svd.singularValues().data(), svd.singularValues().data() + kk),
                   DenseMatrix::from(svd.matrixV().leftCols(kk))};
  return out;
}

// Uniform(-1, 1) fill from a fixed stream; restarts and breakdowns stay reproducible.
inline void fill_random(Eigen::Ref<Eigen::VectorXd> x, std::mt19937_64& gen) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x[i] = 2.0 * (static_cast<double>(gen() >> 11) * 0x1.0p-53) - 1.0;
  }
}

// Two passes of classical Gram-Schmidt against the first `count` columns of basis.
inline void reorthogonalize(const Eigen::MatrixXd& basis, Eigen::Index count, Eigen::VectorXd& x) {
  if (count == 0) return;
  for (int pass = 0; pass < 2; ++pass) {
    const Eigen::VectorXd h = basis.leftCols(count).transpose() * x;
    x.noalias() -= basis.leftCols(count) * h;
  }
}

// Unit vector orthogonal to the first `count` columns of basis, drawn from gen.
inline Eigen::VectorXd random_orthogonal(const Eigen::MatrixXd& basis, Eigen::Index count,
                                         std::mt19937_64& gen) {
  Eigen::VectorXd x(basis.rows());
  for (int attempt = 0; attempt < 8; ++attempt) {
    fill_random(x, gen);
    reorthogonalize(basis, count, x);
    const double nrm = x.norm();
    if (nrm > 1e-8) return x / nrm;
  }
  throw ConvergenceError("lanczos: could not extend orthonormal basis", 0.0);
}

// Golub-Kahan-Lanczos bidiagonalization with full reorthogonalization.
// The basis is extended in blocks until the k wanted Ritz triplets have small residuals.
inline TruncatedSvd lanczos_truncated_svd(const RowMat& a, std::size_t k, const SvdOptions& opts) {
  const Eigen::Index n = a.rows();
  const Eigen::Index m = a.cols();
  const Eigen::Index full = std::min(n, m);
  const auto kk = static_cast<Eigen::Index>(k);
  const Eigen::Index cap =
      opts.max_steps == 0 ? full : std::min<Eigen::Index>(full, static_cast<Eigen::Index>(opts.max_steps));

  std::mt19937_64 gen(0x5eed5eedULL);
  Eigen::MatrixXd u_basis(n, cap);
  Eigen::MatrixXd v_basis(m, cap + 1);
  std::vector<double> alpha;
  std::vector<double> beta;
  alpha.reserve(static_cast<std::size_t>(cap));
  beta.reserve(static_cast<std::size_t>(cap));

  Eigen::VectorXd v(m);
  fill_random(v, gen);
  v_basis.col(0) = v / v.norm();

  const double scale = a.norm();
  if (scale == 0.0) {
    // Zero matrix: any orthonormal frames are valid.
    TruncatedSvd out{DenseMatrix::from(Eigen::MatrixXd::Identity(n, kk)), std::vector<double>(k, 0.0),
                     DenseMatrix::from(Eigen::MatrixXd::Identity(m, kk))};
    return out;
  }
  const double breakdown = 1e-14 * scale;

  Eigen::Index next_check = std::min(cap, std::max<Eigen::Index>(2 * kk, kk + 10));
  double last_residual = std::numeric_limits<double>::infinity();

  for (Eigen::Index j = 0; j < cap; ++j) {
    Eigen::VectorXd p = a * v_basis.col(j);
    if (j > 0) p -= beta[static_cast<std::size_t>(j - 1)] * u_basis.col(j - 1);
    reorthogonalize(u_basis, j, p);
    double aj = p.norm();
    if (aj <= breakdown) {
      aj = 0.0;
      u_basis.col(j) = random_orthogonal(u_basis, j, gen);
    } else {
      u_basis.col(j) = p / aj;
    }
    alpha.push_back(aj);

    Eigen::VectorXd r = a.transpose() * u_basis.col(j);
    r -= aj * v_basis.col(j);
    reorthogonalize(v_basis, j + 1, r);
    double bj = r.norm();
    if (bj <= breakdown) {
      bj = 0.0;
      if (j + 1 < m) v_basis.col(j + 1) = random_orthogonal(v_basis, j + 1, gen);
    } else {
      v_basis.col(j + 1) = r / bj;
    }
    beta.push_back(bj);

    const Eigen::Index steps = j + 1;
    if (steps < next_check && steps < cap) continue;
    next_check = steps + std::max<Eigen::Index>(5, kk / 2);

    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(steps, steps);
    for (Eigen::Index i = 0; i < steps; ++i) {
      b(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < steps) b(i, i + 1) = beta[static_cast<std::size_t>(i)];
    }
    Eigen::BDCSVD<Eigen::MatrixXd> small(b, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& s = small.singularValues();
    const Eigen::Index want = std::min(kk, steps);

    double worst = 0.0;
    for (Eigen::Index i = 0; i < want; ++i) {
      worst = std::max(worst, bj * std::abs(small.matrixU()(steps - 1, i)));
    }
    last_residual = s[0] > 0.0 ? worst / s[0] : worst;

    if (steps >= kk && (worst <= opts.tolerance * s[0] || bj == 0.0)) {
      TruncatedSvd out{DenseMatrix::from(u_basis.leftCols(steps) * small.matrixU().leftCols(kk)),
                       std::vector<double>(s.data(), s.data() + kk),
                       DenseMatrix::from(v_basis.leftCols(steps) * small.matrixV().leftCols(kk))};
      return out;
    }
  }

  if (cap == full) return dense_truncated_svd(a, k);
  throw ConvergenceError("lanczos: " + std::to_string(k) + " singular triplets not converged in " +
                             std::to_string(cap) + " steps",
                         last_residual);
}

}  // namespace detail

/// Top-k singular triplets of a.
///
/// Small problems (min dimension <= dense_cutoff) take the top k of a dense
/// bidiagonalization SVD. Larger ones run Lanczos bidiagonalization with full
/// reorthogonalization. The Lanczos start vector comes from a fixed seed, so
/// the result is a pure function of the input.
inline TruncatedSvd truncated_svd(const DenseMatrix& a, std::size_t k, const SvdOptions& opts = {}) {
  detail::check_rank_arg(a, k, "truncated_svd");
  if (std::min(a.rows(), a.cols()) <= opts.dense_cutoff) return detail::dense_truncated_svd(a.mat(), k);
  return detail::lanczos_truncated_svd(a.mat(), k, opts);
}

/// Best rank-k approximation in Frobenius norm (Eckart-Young).
inline DenseMatrix project_rank_k(const DenseMatrix& a, std::size_t k, const SvdOptions& opts = {}) {
  return truncated_svd(a, k, opts).reconstruct();
}

/// All singular values, descending.
inline std::vector<double> singular_values(const DenseMatrix& a) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a.mat());
  const auto& s = svd.singularValues();
  return {s.data(), s.data() + s.size()};
}

/// Count of singular values strictly above rel_threshold * sigma_1.
inline std::size_t numerical_rank(std::span<const double> sigma, double rel_threshold = 1e-8) {
  if (sigma.empty() || sigma.front() <= 0.0) return 0;
  const double cut = rel_threshold * sigma.front();
  return static_cast<std::size_t>(std::count_if(sigma.begin(), sigma.end(), [cut](double s) { return s > cut; }));
}

inline std::size_t numerical_rank(const DenseMatrix& a, double rel_threshold = 1e-8) {
  const auto s = singular_values(a);
  return numerical_rank(std::span<const double>(s), rel_threshold);
}

/// ||l0 - l||_F / ||l0||_F
inline double relative_error(const DenseMatrix& l0, const DenseMatrix& l) {
  if (l0.rows() != l.rows() || l0.cols() != l.cols()) {
    throw std::invalid_argument("relative_error: dimension mismatch");
  }
  const double denom = l0.frobenius_norm();
  if (denom == 0.0) throw std::invalid_argument("relative_error: reference matrix is zero");
  return (l0.mat() - l.mat()).norm() / denom;
}

}  // namespace cpca
