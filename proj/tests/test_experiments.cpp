#include <cmath>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "cauchy_pca/experiments.hpp"

namespace cpca {
namespace {

ExperimentSpec small_spec() {
  ExperimentSpec s;
  s.n = 30;
  s.rank_ratio = 0.1;
  s.rho_grid = {0.0, 0.2};
  s.magnitude_grid = {1.0, 10.0};
  s.replicates = 2;
  s.seed = 77;
  return s;
}

TEST(GenerateLowRank, RankOneMinorsVanish) {
  const auto inst = generate_low_rank(2, 1, 3);
  ASSERT_EQ(inst.l0.rows(), 2u);
  ASSERT_EQ(inst.l0.cols(), 4u);
  const auto& a = inst.l0;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = i + 1; j < 4; ++j) {
      EXPECT_NEAR(a(0, i) * a(1, j) - a(0, j) * a(1, i), 0.0, 1e-15);
    }
  }
}

TEST(GenerateLowRank, ShapeRankAndFactorRange) {
  const auto inst = generate_low_rank(100, 5, 11);
  EXPECT_EQ(inst.l0.rows(), 100u);
  EXPECT_EQ(inst.l0.cols(), 200u);
  EXPECT_EQ(numerical_rank(inst.l0), 5u);
  for (double v : inst.x.entries()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_EQ(inst.y.rows(), 5u);
}

TEST(GenerateLowRank, DeterministicAndValidated) {
  EXPECT_EQ(generate_low_rank(20, 2, 5).l0, generate_low_rank(20, 2, 5).l0);
  EXPECT_FALSE(generate_low_rank(20, 2, 5).l0 == generate_low_rank(20, 2, 6).l0);
  EXPECT_THROW(generate_low_rank(5, 6, 1), std::invalid_argument);
  EXPECT_THROW(generate_low_rank(5, 0, 1), std::invalid_argument);
}

TEST(CorruptUniform, CountsAndSupport) {
  const auto l0 = generate_low_rank(20, 2, 1).l0;
  const auto none = corrupt_uniform(l0, 0.0, 10.0, 2);
  EXPECT_TRUE(none.corrupted.empty());
  EXPECT_EQ(none.m, l0);

  const auto all = corrupt_uniform(l0, 1.0, 10.0, 2);
  EXPECT_EQ(all.corrupted.size(), l0.size());

  const auto half = corrupt_uniform(l0, 0.5, 10.0, 2);
  ASSERT_EQ(half.corrupted.size(), 400u);
  const std::set<std::size_t> hit(half.corrupted.begin(), half.corrupted.end());
  EXPECT_EQ(hit.size(), 400u);
  for (std::size_t i = 0; i < l0.size(); ++i) {
    const double d = half.m.entries()[i] - l0.entries()[i];
    if (hit.count(i)) {
      EXPECT_LE(std::abs(d), 10.0);
    } else {
      EXPECT_EQ(d, 0.0);
    }
  }
  EXPECT_THROW(corrupt_uniform(l0, 1.5, 1.0, 0), std::invalid_argument);
  EXPECT_THROW(corrupt_uniform(l0, 0.5, 0.0, 0), std::invalid_argument);
}

TEST(CorruptUniform, SmallMagnitudeStaysSmall) {
  const auto l0 = generate_low_rank(20, 2, 4).l0;
  const auto c = corrupt_uniform(l0, 0.8, 0.1, 9);
  EXPECT_LE((c.m.mat() - l0.mat()).cwiseAbs().maxCoeff(), 0.1);
}

TEST(Cells, NoCorruptionRecoversExactly) {
  auto spec = small_spec();
  for (const auto& r : run_cell(spec, 0, 1, 0)) {
    EXPECT_TRUE(r.failure.empty()) << r.failure;
    const double bound = r.method == Method::LaplacePcp ? 1e-4 : 1e-6;
    EXPECT_LE(r.error, bound) << to_string(r.method);
  }
}

TEST(Cells, DeterministicAndIsolated) {
  auto spec = small_spec();
  const auto a = run_cell(spec, 1, 1, 1);
  const auto b = run_cell(spec, 1, 1, 1);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].error, b[i].error);
    EXPECT_EQ(a[i].seed, b[i].seed);
    EXPECT_EQ(a[i].objective_trace, b[i].objective_trace);
  }
  // Running another cell in between must not change this one.
  run_cell(spec, 0, 0, 0);
  const auto c = run_cell(spec, 1, 1, 1);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].error, c[i].error);
}

TEST(Cells, SeedsDependOnlyOnCellCoordinates) {
  const auto spec = small_spec();
  EXPECT_EQ(cell_seed(spec, 1, 0, 1), cell_seed(spec, 1, 0, 1));
  EXPECT_NE(cell_seed(spec, 1, 0, 1), cell_seed(spec, 0, 1, 1));
  EXPECT_NE(cell_seed(spec, 1, 0, 1), cell_seed(spec, 1, 0, 0));
  auto other = spec;
  other.seed = spec.seed + 1;
  EXPECT_NE(cell_seed(spec, 1, 0, 1), cell_seed(other, 1, 0, 1));
  EXPECT_NE(ground_truth_seed(spec, 0), ground_truth_seed(spec, 1));
}

TEST(Grid, CanonicalOrderIndependentOfJobs) {
  auto spec = small_spec();
  spec.methods = {Method::Cauchy, Method::Gaussian};
  const auto serial = run_grid(spec, 1);
  const auto threaded = run_grid(spec, 3);
  ASSERT_EQ(serial.size(), 2u * 2 * 2 * 2);
  std::size_t i = 0;
  for (auto method : spec.methods) {
    for (double mag : spec.magnitude_grid) {
      for (double rho : spec.rho_grid) {
        for (std::size_t rep = 0; rep < spec.replicates; ++rep, ++i) {
          EXPECT_EQ(serial[i].method, method);
          EXPECT_EQ(serial[i].magnitude, mag);
          EXPECT_EQ(serial[i].rho, rho);
          EXPECT_EQ(serial[i].replicate, rep);
          EXPECT_EQ(serial[i].error, threaded[i].error);
        }
      }
    }
  }
  std::ostringstream a;
  std::ostringstream b;
  write_results_csv(a, serial, false);
  write_results_csv(b, threaded, false);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Grid, ResultsCsvSchema) {
  RecoveryResult r;
  r.method = Method::LaplacePcp;
  r.n = 200;
  r.r = 10;
  r.rho = 0.3;
  r.magnitude = 10;
  r.replicate = 2;
  r.seed = 42;
  r.error = std::numeric_limits<double>::infinity();
  r.iterations = 7;
  r.wall_seconds = 1.5;
  const std::vector<RecoveryResult> rows{r};
  std::ostringstream plain;
  write_results_csv(plain, rows, false);
  EXPECT_EQ(plain.str(),
            "method,n,rank,rho,magnitude,replicate,seed,error,iterations,wall_seconds\n"
            "laplace_pcp,200,10,0.3,10,2,42,inf,7,0\n");
  std::ostringstream timed;
  write_results_csv(timed, rows, true);
  EXPECT_NE(timed.str().find(",7,1.5\n"), std::string::npos);
}

TEST(Grid, SummaryAveragesReplicates) {
  std::vector<RecoveryResult> rows(2);
  rows[0].method = rows[1].method = Method::Gaussian;
  rows[0].rho = rows[1].rho = 0.5;
  rows[0].magnitude = rows[1].magnitude = 10;
  rows[0].error = 0.5;
  rows[1].error = 2.0;
  const auto s = summarize(rows);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].replicates, 2u);
  EXPECT_DOUBLE_EQ(s[0].mean_error, 1.25);
  std::ostringstream os;
  write_summary_csv(os, s);
  EXPECT_EQ(os.str(), "method,n,rank,rho,magnitude,replicates,mean_error,exceeds_one\ngaussian,0,0,0.5,10,2,1.25,1\n");
}

TEST(Spec, JsonRoundTripAndDefaults) {
  auto spec = small_spec();
  spec.methods = {Method::LaplacePcp};
  const nlohmann::json j = spec;
  const auto back = j.get<ExperimentSpec>();
  EXPECT_EQ(back.n, spec.n);
  EXPECT_EQ(back.rho_grid, spec.rho_grid);
  EXPECT_EQ(back.methods, spec.methods);
  EXPECT_EQ(back.seed, spec.seed);

  const auto partial = nlohmann::json::parse(R"({"n": 50, "methods": ["laplace", "cauchy"]})").get<ExperimentSpec>();
  EXPECT_EQ(partial.n, 50u);
  EXPECT_EQ(partial.rank(), 3u);
  EXPECT_EQ(partial.methods, (std::vector<Method>{Method::LaplacePcp, Method::Cauchy}));
  EXPECT_EQ(partial.replicates, 3u);

  EXPECT_THROW(nlohmann::json::parse(R"({"bogus": 1})").get<ExperimentSpec>(), std::invalid_argument);
  EXPECT_THROW(nlohmann::json::parse(R"({"methods": ["l1"]})").get<ExperimentSpec>(), std::invalid_argument);
}

TEST(Spec, Validation) {
  auto spec = small_spec();
  spec.rho_grid = {1.2};
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = small_spec();
  spec.rank_ratio = 0.001;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = small_spec();
  spec.replicates = 0;
  EXPECT_THROW(run_grid(spec), std::invalid_argument);
}

TEST(MethodNames, ParseRoundTrip) {
  for (auto m : {Method::Gaussian, Method::LaplacePcp, Method::Cauchy}) EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_EQ(parse_method("laplace"), Method::LaplacePcp);
  EXPECT_FALSE(parse_method("median").has_value());
}

}  // namespace
}  // namespace cpca
