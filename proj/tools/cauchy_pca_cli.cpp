// cauchy-pca: low-rank recovery, experiment grids, eigenface runs and
// noise-model diagnostics from the command line.
//
// Exit codes: 0 success, 1 internal error, 2 usage, 3 data/ingestion,
// 4 solver non-convergence (recover only).

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cauchy_pca/cauchy_pca.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNoConvergence = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotConverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw cpca::IngestionError("cannot write " + path.string());
  return out;
}

void print_summary(const ordered_json& j) { std::cout << j.dump() << '\n'; }

/// --seed wins; otherwise CAUCHY_LOWRANK_SEED; otherwise `fallback`.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback = 0) {
  if (flag) return *flag;
  if (const char* env = std::getenv("CAUCHY_LOWRANK_SEED"); env && *env) {
    std::uint64_t v = 0;
    const std::string s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw UsageError("CAUCHY_LOWRANK_SEED is not an unsigned integer: '" + s + "'");
    }
    return v;
  }
  return fallback;
}

std::vector<cpca::Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<cpca::Method> out;
  for (const auto& n : names) {
    const auto m = cpca::parse_method(n);
    if (!m) throw UsageError("unknown method '" + n + "' (expected gaussian, laplace or cauchy)");
    out.push_back(*m);
  }
  return out;
}

// ---------------------------------------------------------------- recover

struct RecoverArgs {
  std::string input;
  std::size_t rank = 0;
  std::string model = "cauchy";
  double gamma = 0.1;
  std::string mask;
  std::optional<std::uint64_t> seed;
  std::size_t restarts = 0;
  std::size_t max_iterations = 500;
  double tolerance = 1e-7;
  std::string out;
  std::string report;
};

int run_recover(const RecoverArgs& a) {
  const auto m = cpca::read_matrix(a.input);
  if (a.rank > std::min(m.rows(), m.cols())) {
    throw UsageError("--rank " + std::to_string(a.rank) + " exceeds min(rows, cols) = " +
                     std::to_string(std::min(m.rows(), m.cols())));
  }
  const std::uint64_t seed = resolve_seed(a.seed);

  ordered_json summary{{"command", "recover"}, {"model", a.model}, {"rank", a.rank}, {"out", a.out}};
  ordered_json report_json;
  bool converged = true;

  if (a.model == "laplace") {
    if (!a.mask.empty()) throw UsageError("--mask is not supported with --model laplace");
    const auto grid = cpca::default_lambda_grid(m.rows(), m.cols());
    cpca::PcpConfig base;
    base.max_iterations = a.max_iterations;
    base.tolerance = a.tolerance;
    std::optional<cpca::TuningResult> tuned;
    try {
      tuned = cpca::tune_lambda_for_rank(m, a.rank, grid, base);
    } catch (const cpca::TuningError& e) {
      throw NotConverged(e.what());
    }
    cpca::write_matrix(a.out, tuned->pcp.low_rank);
    converged = tuned->pcp.converged;
    report_json["solution_file"] = a.out;
    report_json["lambda"] = tuned->lambda;
    report_json["rank"] = tuned->rank;
    report_json["iterations"] = tuned->pcp.iterations;
    report_json["converged"] = converged;
    report_json["relative_residual"] = tuned->pcp.relative_residual;
    ordered_json trace = ordered_json::array();
    for (const auto& s : tuned->trace) trace.push_back({{"lambda", s.lambda}, {"rank", s.rank}, {"rel_residual", s.rel_residual}});
    report_json["tuning_trace"] = std::move(trace);
    summary["lambda"] = tuned->lambda;
    summary["iterations"] = tuned->pcp.iterations;
  } else {
    std::optional<cpca::ObservationMask> mask;
    if (!a.mask.empty()) {
      const auto mm = cpca::read_matrix(a.mask);
      if (mm.rows() != m.rows() || mm.cols() != m.cols()) throw cpca::IngestionError("mask shape differs from input");
      try {
        mask = cpca::ObservationMask::from_matrix(mm);
      } catch (const std::invalid_argument& e) {
        throw cpca::IngestionError(std::string("mask: ") + e.what());
      }
    }
    cpca::SvpConfig cfg;
    cfg.rank = a.rank;
    // A unit-variance Gaussian with unit step is one exact rank-k projection.
    cfg.model = a.model == "cauchy" ? cpca::NoiseModel::cauchy(a.gamma) : cpca::NoiseModel::gaussian(1.0);
    cfg.seed = seed;
    cfg.restarts = a.restarts;
    cfg.max_iterations = a.max_iterations;
    cfg.tolerance = a.tolerance;
    cpca::SolverReport rep;
    try {
      rep = cpca::solve(m, cfg, mask ? &*mask : nullptr);
    } catch (const cpca::ConvergenceError& e) {
      throw NotConverged(e.what());
    }
    cpca::write_matrix(a.out, rep.solution);
    converged = rep.converged;
    report_json = cpca::report_to_json(rep, a.out);
    summary["seed"] = seed;
    summary["iterations"] = rep.iterations;
    summary["final_objective"] = rep.final_objective();
    summary["stop_reason"] = std::string(cpca::to_string(rep.stop_reason));
  }

  if (!a.report.empty()) open_out(a.report) << report_json.dump(2) << '\n';
  summary["converged"] = converged;
  summary["status"] = converged ? "ok" : "not_converged";
  print_summary(summary);
  return converged ? kExitOk : kExitNoConvergence;
}

// --------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string spec_path;
  std::optional<std::size_t> n;
  std::optional<double> rank_ratio;
  std::vector<double> rho_grid;
  std::vector<double> magnitude_grid;
  std::optional<std::size_t> replicates;
  std::vector<std::string> methods;
  std::optional<std::uint64_t> seed;
  std::optional<double> gamma;
  std::size_t jobs = 1;
  std::string out;
  std::string summary;
  bool timing = false;
};

int run_simulate(const SimulateArgs& a) {
  cpca::ExperimentSpec spec;
  bool seed_from_file = false;
  if (!a.spec_path.empty()) {
    std::ifstream in(a.spec_path);
    if (!in) throw cpca::IngestionError("cannot open " + a.spec_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw cpca::IngestionError(a.spec_path + ": " + e.what());
    }
    try {
      spec = j.get<cpca::ExperimentSpec>();
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(a.spec_path + ": " + e.what());
    }
    seed_from_file = j.contains("seed");
  }
  if (a.n) spec.n = *a.n;
  if (a.rank_ratio) spec.rank_ratio = *a.rank_ratio;
  if (!a.rho_grid.empty()) spec.rho_grid = a.rho_grid;
  if (!a.magnitude_grid.empty()) spec.magnitude_grid = a.magnitude_grid;
  if (a.replicates) spec.replicates = *a.replicates;
  if (!a.methods.empty()) spec.methods = parse_methods(a.methods);
  if (a.gamma) spec.gamma = *a.gamma;
  if (a.seed || !seed_from_file) spec.seed = resolve_seed(a.seed, spec.seed);
  spec.validate();

  const auto results = cpca::run_grid(spec, a.jobs);
  {
    auto out = open_out(a.out);
    cpca::write_results_csv(out, results, a.timing);
  }
  std::size_t failures = 0;
  for (const auto& r : results) failures += r.failure.empty() ? 0 : 1;

  ordered_json summary{{"command", "simulate"}, {"status", "ok"},  {"out", a.out},        {"rows", results.size()},
                       {"n", spec.n},           {"rank", spec.rank()}, {"seed", spec.seed}, {"failed_cells", failures}};
  if (!a.summary.empty()) {
    const auto cells = cpca::summarize(results);
    auto out = open_out(a.summary);
    cpca::write_summary_csv(out, cells);
    summary["summary"] = a.summary;
  }
  print_summary(summary);
  return kExitOk;
}

// ------------------------------------------------------------------ faces

struct FacesArgs {
  std::string data;
  std::string labels;
  std::size_t height = 0;
  std::size_t width = 0;
  bool synthetic = false;
  std::size_t k = 30;
  std::vector<double> rho_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  std::vector<std::string> methods{"gaussian", "laplace_pcp", "cauchy"};
  std::size_t replicates = 5;
  std::optional<std::uint64_t> seed;
  double gamma = 0.1;
  bool train_only = false;
  std::size_t jobs = 1;
  std::string out;
};

int run_faces(const FacesArgs& a) {
  cpca::FaceGridSpec spec;
  spec.k = a.k;
  spec.rho_grid = a.rho_grid;
  spec.methods = parse_methods(a.methods);
  spec.replicates = a.replicates;
  spec.seed = resolve_seed(a.seed);
  spec.gamma = a.gamma;
  spec.corrupt_train_only = a.train_only;

  cpca::FaceDataset ds;
  std::string source;
  if (a.synthetic) {
    ds = cpca::make_synthetic_faces(spec.seed);
    source = "synthetic";
  } else if (fs::is_directory(a.data)) {
    ds = cpca::load_pgm_directory(a.data);
    source = a.data;
  } else {
    if (a.labels.empty()) throw UsageError("--labels is required when --data is a matrix file");
    ds = cpca::load_matrix_dataset(a.data, a.labels, a.height, a.width);
    source = a.data;
  }

  // Smallest training split is sum over identities of ceil(count / 2).
  std::map<std::string, std::size_t> per_label;
  for (const auto& l : ds.labels) ++per_label[l];
  std::size_t n_train = 0;
  for (const auto& [label, count] : per_label) {
    if (count < 2) throw cpca::IngestionError("identity '" + label + "' has a single image");
    n_train += (count + 1) / 2;
  }
  if (spec.k > std::min(ds.pixels(), n_train)) {
    throw UsageError("--k " + std::to_string(spec.k) + " exceeds min(pixels, training images) = " +
                     std::to_string(std::min(ds.pixels(), n_train)));
  }

  const auto rows = cpca::run_face_grid(ds, spec, a.jobs);
  {
    auto out = open_out(a.out);
    cpca::write_recognition_csv(out, rows);
  }
  std::size_t failures = 0;
  for (const auto& r : rows) failures += r.failure.empty() ? 0 : 1;
  print_summary({{"command", "faces"},
                 {"status", "ok"},
                 {"out", a.out},
                 {"source", source},
                 {"images", ds.images()},
                 {"identities", per_label.size()},
                 {"rows", rows.size()},
                 {"seed", spec.seed},
                 {"failed_cells", failures}});
  return kExitOk;
}

// --------------------------------------------------------------- diagnose

struct DiagnoseArgs {
  std::vector<std::string> models{"gaussian", "laplace", "cauchy", "logistic"};
  double peak = std::numbers::inv_pi;
  std::vector<double> x_range{-10.0, 10.0};
  std::size_t points = 401;
  std::string out;
  bool sensitivities = false;
  std::string sensitivity_out;
  double grid_radius = 100.0;
  double grid_step = 0.01;
  double threshold = 0.1;
};

int run_diagnose(const DiagnoseArgs& a) {
  std::vector<cpca::NoiseKind> kinds;
  for (const auto& name : a.models) {
    const auto k = cpca::parse_noise_kind(name);
    if (!k) throw UsageError("unknown model '" + name + "' (expected gaussian, laplace, cauchy or logistic)");
    kinds.push_back(*k);
  }
  if (a.x_range.size() != 2 || !(a.x_range[0] < a.x_range[1])) throw UsageError("--x-range needs lo,hi with lo < hi");
  if (a.points < 2) throw UsageError("--points must be at least 2");

  std::vector<double> xs(a.points);
  const double lo = a.x_range[0];
  const double hi = a.x_range[1];
  for (std::size_t i = 0; i < a.points; ++i) {
    xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(a.points - 1);
  }
  const auto table = cpca::aligned_density_curves(kinds, a.peak, xs);
  {
    auto out = open_out(a.out);
    cpca::write_density_csv(out, table);
  }

  ordered_json summary{{"command", "diagnose"}, {"status", "ok"}, {"out", a.out}, {"models", a.models},
                       {"peak", a.peak},        {"points", a.points}};
  if (a.sensitivities) {
    std::string path = a.sensitivity_out;
    if (path.empty()) {
      fs::path p(a.out);
      path = (p.parent_path() / (p.stem().string() + "_sensitivities.csv")).string();
    }
    std::vector<cpca::NamedSensitivity> rows;
    ordered_json flags;
    for (auto kind : kinds) {
      const cpca::NoiseModel model(kind, cpca::aligned_scale(kind, a.peak));
      const auto est = cpca::estimate_sensitivities(model, a.grid_radius, a.grid_step, a.threshold);
      rows.push_back({model, est});
      flags[std::string(cpca::to_string(kind))] = {{"gross_error", est.gross_error_bounded ? "bounded" : "diverging"},
                                                   {"local_shift", est.local_shift_bounded ? "bounded" : "diverging"}};
    }
    auto out = open_out(path);
    cpca::write_sensitivity_csv(out, rows);
    summary["sensitivity_out"] = path;
    summary["sensitivities"] = std::move(flags);
  }
  print_summary(summary);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust low-rank matrix recovery under Cauchy, Gaussian and Laplace noise", "cauchy-pca"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  RecoverArgs rec;
  auto* recover = app.add_subcommand("recover", "Recover a rank-k matrix from one input matrix");
  recover->add_option("input", rec.input, "Input matrix (CSV or CPCA binary)")->required();
  recover->add_option("--rank", rec.rank, "Rank constraint k")->required()->check(CLI::PositiveNumber);
  recover->add_option("--model", rec.model, "Noise model")->check(CLI::IsMember({"cauchy", "gaussian", "laplace"}));
  recover->add_option("--gamma", rec.gamma, "Cauchy scale")->check(CLI::PositiveNumber);
  recover->add_option("--mask", rec.mask, "Observation mask matrix of 0/1 entries");
  recover->add_option("--seed", rec.seed, "Seed (default: $CAUCHY_LOWRANK_SEED, else 0)");
  recover->add_option("--restarts", rec.restarts, "Random restarts after the first run");
  recover->add_option("--max-iterations", rec.max_iterations, "Iteration cap")->check(CLI::PositiveNumber);
  recover->add_option("--tolerance", rec.tolerance, "Stopping tolerance")->check(CLI::PositiveNumber);
  recover->add_option("--out", rec.out, "Output matrix path (.bin/.cpca binary, otherwise CSV)")->required();
  recover->add_option("--report", rec.report, "JSON solver report path");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Run the synthetic recovery grid");
  simulate->add_option("--spec", sim.spec_path, "Experiment spec JSON; flags below override it");
  simulate->add_option("--n", sim.n, "Rows of L0 (columns are 2n) [200]")->check(CLI::PositiveNumber);
  simulate->add_option("--rank-ratio", sim.rank_ratio, "r / n [0.05]");
  simulate->add_option("--rho-grid", sim.rho_grid, "Corruption rates [0,0.1,...,0.8]")->delimiter(',');
  simulate->add_option("--magnitude-grid", sim.magnitude_grid, "Corruption magnitudes [0.1,1,10]")->delimiter(',');
  simulate->add_option("--replicates", sim.replicates, "Replicates per cell [3]")->check(CLI::PositiveNumber);
  simulate->add_option("--methods", sim.methods, "gaussian,laplace_pcp,cauchy [all]")->delimiter(',');
  simulate->add_option("--seed", sim.seed, "Seed (default: spec file, $CAUCHY_LOWRANK_SEED, else 0)");
  simulate->add_option("--gamma", sim.gamma, "Cauchy scale [0.1]")->check(CLI::PositiveNumber);
  simulate->add_option("--jobs", sim.jobs, "Concurrent cells")->check(CLI::PositiveNumber);
  simulate->add_option("--out", sim.out, "Results CSV")->required();
  simulate->add_option("--summary", sim.summary, "Per-cell mean error CSV");
  simulate->add_flag("--timing", sim.timing, "Record wall_seconds (output is then not byte-reproducible)");

  FacesArgs fa;
  auto* faces = app.add_subcommand("faces", "Eigenface recognition under pixel corruption");
  auto* data_opt = faces->add_option("--data", fa.data, "PGM directory, or a pixels x images matrix file");
  auto* synth_opt = faces->add_flag("--synthetic", fa.synthetic, "Use the generated 10-identity corpus");
  data_opt->excludes(synth_opt);
  faces->add_option("--labels", fa.labels, "Labels file (one per line) for a matrix --data");
  faces->add_option("--height", fa.height, "Image height for a matrix --data");
  faces->add_option("--width", fa.width, "Image width for a matrix --data");
  faces->add_option("--k", fa.k, "Rank constraint")->check(CLI::PositiveNumber);
  faces->add_option("--rho-grid", fa.rho_grid, "Corruption rates")->delimiter(',');
  faces->add_option("--methods", fa.methods, "Methods")->delimiter(',');
  faces->add_option("--replicates", fa.replicates, "Replicates per rate")->check(CLI::PositiveNumber);
  faces->add_option("--seed", fa.seed, "Seed (default: $CAUCHY_LOWRANK_SEED, else 0)");
  faces->add_option("--gamma", fa.gamma, "Cauchy scale")->check(CLI::PositiveNumber);
  faces->add_flag("--train-only", fa.train_only, "Corrupt training images only");
  faces->add_option("--jobs", fa.jobs, "Concurrent cells")->check(CLI::PositiveNumber);
  faces->add_option("--out", fa.out, "Recognition CSV")->required();

  DiagnoseArgs dg;
  auto* diagnose = app.add_subcommand("diagnose", "Peak-aligned density curves and sensitivity estimates");
  diagnose->add_option("--models", dg.models, "Noise models")->delimiter(',');
  diagnose->add_option("--peak", dg.peak, "Shared density value at x = 0")->check(CLI::PositiveNumber);
  diagnose->add_option("--x-range", dg.x_range, "lo,hi")->delimiter(',')->expected(2);
  diagnose->add_option("--points", dg.points, "Evaluation points across the range");
  diagnose->add_option("--out", dg.out, "Density CSV")->required();
  diagnose->add_flag("--sensitivities", dg.sensitivities, "Also write the sensitivity table");
  diagnose->add_option("--sensitivity-out", dg.sensitivity_out, "Sensitivity CSV [<out>_sensitivities.csv]");
  diagnose->add_option("--grid-radius", dg.grid_radius, "Sensitivity grid radius")->check(CLI::PositiveNumber);
  diagnose->add_option("--grid-step", dg.grid_step, "Sensitivity grid step")->check(CLI::PositiveNumber);
  diagnose->add_option("--threshold", dg.threshold, "Relative change that marks divergence")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*recover) return run_recover(rec);
    if (*simulate) return run_simulate(sim);
    if (*faces) {
      if (fa.data.empty() && !fa.synthetic) throw UsageError("faces needs --data or --synthetic");
      return run_faces(fa);
    }
    if (*diagnose) return run_diagnose(dg);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const cpca::IngestionError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NotConverged& e) {
    std::cerr << "not converged: " << e.what() << '\n';
    return kExitNoConvergence;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}
