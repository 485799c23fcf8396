#pragma once

// Synthetic low-rank recovery study: ground truth L0 = XY with uniform(-1, 1)
// factors, sparse-to-dense uniform corruption, and a (method, magnitude, rho,
// replicate) grid of recovery errors.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <span>
#include <vector>

#include <json.hpp>

#include "cauchy_pca/matrix.hpp"
#include "cauchy_pca/matrix_io.hpp"
#include "cauchy_pca/pcp.hpp"
#include "cauchy_pca/random.hpp"
#include "cauchy_pca/svp_solver.hpp"

namespace cpca {

enum class Method { Gaussian, LaplacePcp, Cauchy };

inline constexpr std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::Gaussian: return "gaussian";
    case Method::LaplacePcp: return "laplace_pcp";
    case Method::Cauchy: return "cauchy";
  }
  return "unknown";
}

/// Accepts "laplace" as a synonym for "laplace_pcp".
inline std::optional<Method> parse_method(std::string_view s) noexcept {
  if (s == "gaussian") return Method::Gaussian;
  if (s == "laplace_pcp" || s == "laplace") return Method::LaplacePcp;
  if (s == "cauchy") return Method::Cauchy;
  return std::nullopt;
}

struct ExperimentSpec {
  std::size_t n = 200;
  double rank_ratio = 0.05;
  std::vector<double> rho_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  std::vector<double> magnitude_grid{0.1, 1.0, 10.0};
  std::size_t replicates = 3;
  std::vector<Method> methods{Method::Gaussian, Method::LaplacePcp, Method::Cauchy};
  std::uint64_t seed = 0;
  double gamma = 0.1;

  std::size_t rank() const { return static_cast<std::size_t>(std::llround(rank_ratio * static_cast<double>(n))); }

  void validate() const {
    if (n < 1) throw std::invalid_argument("experiment: n must be positive");
    if (!(rank_ratio > 0.0 && rank_ratio <= 1.0)) throw std::invalid_argument("experiment: rank_ratio must lie in (0, 1]");
    if (rank() < 1) throw std::invalid_argument("experiment: round(rank_ratio * n) must be at least 1");
    if (rho_grid.empty() || magnitude_grid.empty() || methods.empty() || replicates < 1) {
      throw std::invalid_argument("experiment: grids, methods and replicates must be non-empty");
    }
    for (double r : rho_grid) {
      if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("experiment: rho values must lie in [0, 1]");
    }
    for (double m : magnitude_grid) {
      if (!(m > 0.0) || !std::isfinite(m)) throw std::invalid_argument("experiment: magnitudes must be positive");
    }
    if (!(gamma > 0.0)) throw std::invalid_argument("experiment: gamma must be positive");
  }
};

inline void to_json(nlohmann::json& j, const ExperimentSpec& s) {
  std::vector<std::string> methods;
  for (auto m : s.methods) methods.emplace_back(to_string(m));
  j = nlohmann::json{{"n", s.n},
                     {"rank_ratio", s.rank_ratio},
                     {"rho_grid", s.rho_grid},
                     {"magnitude_grid", s.magnitude_grid},
                     {"replicates", s.replicates},
                     {"methods", methods},
                     {"seed", s.seed},
                     {"gamma", s.gamma}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, ExperimentSpec& s) {
  static const std::vector<std::string> known{"n",          "rank_ratio", "rho_grid", "magnitude_grid",
                                              "replicates", "methods",    "seed",     "gamma"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("experiment spec: unknown key '" + key + "'");
    }
  }
  if (j.contains("n")) j.at("n").get_to(s.n);
  if (j.contains("rank_ratio")) j.at("rank_ratio").get_to(s.rank_ratio);
  if (j.contains("rho_grid")) j.at("rho_grid").get_to(s.rho_grid);
  if (j.contains("magnitude_grid")) j.at("magnitude_grid").get_to(s.magnitude_grid);
  if (j.contains("replicates")) j.at("replicates").get_to(s.replicates);
  if (j.contains("seed")) j.at("seed").get_to(s.seed);
  if (j.contains("gamma")) j.at("gamma").get_to(s.gamma);
  if (j.contains("methods")) {
    s.methods.clear();
    for (const auto& name : j.at("methods")) {
      const auto m = parse_method(name.get<std::string>());
      if (!m) throw std::invalid_argument("experiment spec: unknown method '" + name.get<std::string>() + "'");
      s.methods.push_back(*m);
    }
  }
}

struct LowRankInstance {
  DenseMatrix l0;
  DenseMatrix x;
  DenseMatrix y;
};

/// L0 = X Y, X (n x r) and Y (r x 2n) with i.i.d. uniform(-1, 1) entries.
inline LowRankInstance generate_low_rank(std::size_t n, std::size_t r, std::uint64_t seed) {
  if (r < 1 || r > n) throw std::invalid_argument("generate_low_rank: need 1 <= r <= n");
  Rng rng(seed);
  DenseMatrix x(n, r);
  DenseMatrix y(r, 2 * n);
  for (double& v : x.entries()) v = rng.uniform(-1.0, 1.0);
  for (double& v : y.entries()) v = rng.uniform(-1.0, 1.0);
  DenseMatrix l0(RowMat(x.mat() * y.mat()));
  return {std::move(l0), std::move(x), std::move(y)};
}

struct CorruptedMatrix {
  DenseMatrix m;
  /// Flat row-major indices of the perturbed entries, ascending.
  std::vector<std::size_t> corrupted;
};

/// Adds uniform(-magnitude, magnitude) noise to round(rho * size) distinct entries.
inline CorruptedMatrix corrupt_uniform(const DenseMatrix& l0, double rho, double magnitude, std::uint64_t seed) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("corrupt_uniform: rho must lie in [0, 1]");
  if (!(magnitude > 0.0)) throw std::invalid_argument("corrupt_uniform: magnitude must be positive");
  Rng rng(seed);
  const auto count = static_cast<std::size_t>(std::llround(rho * static_cast<double>(l0.size())));
  auto idx = sample_without_replacement(l0.size(), count, rng);
  DenseMatrix m = l0;
  auto e = m.entries();
  for (auto i : idx) e[i] += rng.uniform(-magnitude, magnitude);
  std::sort(idx.begin(), idx.end());
  return {std::move(m), std::move(idx)};
}

struct RecoveryResult {
  Method method = Method::Gaussian;
  std::size_t n = 0;
  std::size_t r = 0;
  double rho = 0.0;
  double magnitude = 0.0;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  /// Relative Frobenius error; +inf when the method failed on this cell.
  double error = 0.0;
  std::size_t iterations = 0;
  double wall_seconds = 0.0;
  /// Solver objective trace (Cauchy cells only).
  std::vector<double> objective_trace;
  std::string failure;
};

/// Seed for the ground truth of one replicate; shared by every (rho, m) cell.
inline std::uint64_t ground_truth_seed(const ExperimentSpec& spec, std::size_t replicate) {
  return derive_seed(spec.seed, {0x4c30ULL, replicate});
}

/// Seed for the corruption pattern of one (rho, m, replicate) cell.
inline std::uint64_t cell_seed(const ExperimentSpec& spec, std::size_t rho_index, std::size_t magnitude_index,
                               std::size_t replicate) {
  return derive_seed(spec.seed, {rho_index, magnitude_index, replicate});
}

/// Recovers L from M with a rank-r constraint using one method.
inline RecoveryResult recover_with(Method method, const DenseMatrix& l0, const DenseMatrix& m, std::size_t r,
                                   double gamma, std::uint64_t seed) {
  RecoveryResult res;
  res.method = method;
  res.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    switch (method) {
      case Method::Gaussian:
        res.error = relative_error(l0, project_rank_k(m, r));
        break;
      case Method::Cauchy: {
        SvpConfig cfg;
        cfg.rank = r;
        cfg.model = NoiseModel::cauchy(gamma);
        cfg.seed = seed;
        auto rep = solve(m, cfg);
        res.error = relative_error(l0, rep.solution);
        res.iterations = rep.iterations;
        res.objective_trace = std::move(rep.objective_trace);
        break;
      }
      case Method::LaplacePcp: {
        const auto grid = default_lambda_grid(m.rows(), m.cols());
        auto tuned = tune_lambda_for_rank(m, r, grid);
        res.error = relative_error(l0, tuned.pcp.low_rank);
        res.iterations = tuned.pcp.iterations;
        break;
      }
    }
  } catch (const std::exception& e) {
    res.error = std::numeric_limits<double>::infinity();
    res.failure = e.what();
  }
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

/// Every method on one (rho, m, replicate) cell, in spec.methods order.
inline std::vector<RecoveryResult> run_cell(const ExperimentSpec& spec, std::size_t rho_index,
                                            std::size_t magnitude_index, std::size_t replicate) {
  const std::size_t n = spec.n;
  const std::size_t r = spec.rank();
  const double rho = spec.rho_grid.at(rho_index);
  const double mag = spec.magnitude_grid.at(magnitude_index);
  const auto truth = generate_low_rank(n, r, ground_truth_seed(spec, replicate));
  const std::uint64_t seed = cell_seed(spec, rho_index, magnitude_index, replicate);
  const auto corrupted = corrupt_uniform(truth.l0, rho, mag, seed);

  std::vector<RecoveryResult> out;
  for (auto method : spec.methods) {
    auto res = recover_with(method, truth.l0, corrupted.m, r, spec.gamma, seed);
    res.n = n;
    res.r = r;
    res.rho = rho;
    res.magnitude = mag;
    res.replicate = replicate;
    out.push_back(std::move(res));
  }
  return out;
}

/// Runs the whole grid. Output order is (method, magnitude, rho, replicate)
/// following the order of the spec's lists, independent of `jobs`.
inline std::vector<RecoveryResult> run_grid(const ExperimentSpec& spec, std::size_t jobs = 1) {
  spec.validate();
  const std::size_t n_rho = spec.rho_grid.size();
  const std::size_t n_mag = spec.magnitude_grid.size();
  const std::size_t n_rep = spec.replicates;
  const std::size_t n_method = spec.methods.size();
  const std::size_t cells = n_mag * n_rho * n_rep;

  std::vector<RecoveryResult> results(n_method * cells);
  auto work = [&](std::size_t cell) {
    const std::size_t rep = cell % n_rep;
    const std::size_t rho_i = (cell / n_rep) % n_rho;
    const std::size_t mag_i = cell / (n_rep * n_rho);
    auto per_method = run_cell(spec, rho_i, mag_i, rep);
    for (std::size_t k = 0; k < n_method; ++k) results[k * cells + cell] = std::move(per_method[k]);
  };

  jobs = std::max<std::size_t>(1, std::min(jobs, cells));
  if (jobs == 1) {
    for (std::size_t c = 0; c < cells; ++c) work(c);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) {
    pool.emplace_back([&] {
      for (std::size_t c = next++; c < cells; c = next++) work(c);
    });
  }
  for (auto& th : pool) th.join();
  return results;
}

inline constexpr std::string_view kResultsHeader =
    "method,n,rank,rho,magnitude,replicate,seed,error,iterations,wall_seconds";

/// With include_timing false the wall_seconds column is written as 0, which
/// keeps the file byte-identical across runs.
inline void write_results_csv(std::ostream& os, std::span<const RecoveryResult> results, bool include_timing) {
  os << kResultsHeader << '\n';
  for (const auto& r : results) {
    os << to_string(r.method) << ',' << r.n << ',' << r.r << ',' << format_number(r.rho) << ','
       << format_number(r.magnitude) << ',' << r.replicate << ',' << r.seed << ',' << format_number(r.error) << ','
       << r.iterations << ',' << format_number(include_timing ? r.wall_seconds : 0.0) << '\n';
  }
}

struct CellSummary {
  Method method;
  std::size_t n;
  std::size_t r;
  double rho;
  double magnitude;
  std::size_t replicates;
  double mean_error;
};

/// Mean error over replicates per (method, magnitude, rho), in result order.
inline std::vector<CellSummary> summarize(std::span<const RecoveryResult> results) {
  std::vector<CellSummary> out;
  std::map<std::tuple<int, double, double>, std::size_t> index;
  for (const auto& r : results) {
    const auto key = std::make_tuple(static_cast<int>(r.method), r.magnitude, r.rho);
    auto it = index.find(key);
    if (it == index.end()) {
      index.emplace(key, out.size());
      out.push_back({r.method, r.n, r.r, r.rho, r.magnitude, 1, r.error});
    } else {
      auto& s = out[it->second];
      ++s.replicates;
      s.mean_error += r.error;
    }
  }
  for (auto& s : out) s.mean_error /= static_cast<double>(s.replicates);
  return out;
}

/// Errors above 1 are flagged; plots conventionally drop them.
inline void write_summary_csv(std::ostream& os, std::span<const CellSummary> rows) {
  os << "method,n,rank,rho,magnitude,replicates,mean_error,exceeds_one\n";
  for (const auto& s : rows) {
    os << to_string(s.method) << ',' << s.n << ',' << s.r << ',' << format_number(s.rho) << ','
       << format_number(s.magnitude) << ',' << s.replicates << ',' << format_number(s.mean_error) << ','
       << (s.mean_error > 1.0 ? 1 : 0) << '\n';
  }
}

}  // namespace cpca
