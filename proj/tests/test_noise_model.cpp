#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "cauchy_pca/noise_model.hpp"
#include "cauchy_pca/random.hpp"

namespace cpca {
namespace {

const std::vector<NoiseKind> kAllKinds{NoiseKind::Gaussian, NoiseKind::Laplace, NoiseKind::Cauchy,
                                       NoiseKind::Logistic};

TEST(NoiseModel, RejectsNonPositiveScale) {
  EXPECT_THROW(NoiseModel::cauchy(0.0), std::invalid_argument);
  EXPECT_THROW(NoiseModel::gaussian(-1.0), std::invalid_argument);
  EXPECT_THROW(NoiseModel(NoiseKind::Laplace, std::nan("")), std::invalid_argument);
}

TEST(NoiseModel, ParseRoundTrip) {
  for (auto k : kAllKinds) EXPECT_EQ(parse_noise_kind(to_string(k)), k);
  EXPECT_FALSE(parse_noise_kind("student_t").has_value());
}

TEST(Density, PeakValues) {
  EXPECT_NEAR(density(NoiseModel::cauchy(1.0), 0.0), 1.0 / std::numbers::pi, 1e-15);
  EXPECT_NEAR(density(NoiseModel::cauchy(0.1), 0.0), 10.0 / std::numbers::pi, 1e-14);
  EXPECT_NEAR(density(NoiseModel::gaussian(1.0), 0.0), 0.398942280401432678, 1e-15);
  EXPECT_NEAR(density(NoiseModel::laplace(2.0), 0.0), 0.25, 1e-15);
  EXPECT_NEAR(density(NoiseModel::logistic(1.0), 0.0), 0.25, 1e-15);
}

// Trapezoid rule over [-200 s, 200 s].
TEST(Density, IntegratesToOne) {
  for (auto kind : kAllKinds) {
    for (double scale : {0.1, 1.0, 3.0}) {
      const NoiseModel model(kind, scale);
      const double lo = -200.0 * scale;
      const double h = scale / 200.0;
      const auto steps = static_cast<std::size_t>(400.0 * scale / h);
      double mass = 0.5 * (density(model, lo) + density(model, -lo));
      for (std::size_t i = 1; i < steps; ++i) mass += density(model, lo + static_cast<double>(i) * h);
      mass *= h;
      const double tol = kind == NoiseKind::Cauchy ? 5e-3 : 1e-3;
      EXPECT_NEAR(mass, 1.0, tol) << to_string(kind) << " scale " << scale;
    }
  }
}

TEST(NllTerm, ClosedFormValues) {
  EXPECT_EQ(nll_term(NoiseModel::cauchy(1.0), 0.0), 0.0);
  EXPECT_NEAR(nll_term(NoiseModel::cauchy(0.1), 0.0), -4.605170185988091, 1e-12);
  EXPECT_DOUBLE_EQ(nll_term(NoiseModel::gaussian(1.0), 2.0), 2.0);
  EXPECT_DOUBLE_EQ(nll_term(NoiseModel::laplace(0.5), -3.0), 6.0);
  // Cauchy term is exactly log(gamma^2 + r^2).
  EXPECT_EQ(nll_term(NoiseModel::cauchy(0.3), 1.7), std::log(0.3 * 0.3 + 1.7 * 1.7));
}

TEST(NllTerm, DiffersFromNegativeLogDensityByAConstant) {
  Rng rng(31);
  for (auto kind : kAllKinds) {
    const NoiseModel model(kind, 0.7);
    const double offset = nll_term(model, 0.0) + std::log(density(model, 0.0));
    for (int i = 0; i < 50; ++i) {
      const double x = rng.uniform(-20.0, 20.0);
      const double c = nll_term(model, x) + std::log(density(model, x));
      EXPECT_NEAR(c, offset, 1e-9) << to_string(kind) << " x=" << x;
    }
  }
}

TEST(Psi, ZeroAtOriginAndCauchyUnitPoint) {
  for (auto kind : kAllKinds) EXPECT_EQ(psi(NoiseModel(kind, 0.4), 0.0), 0.0);
  EXPECT_DOUBLE_EQ(psi(NoiseModel::cauchy(1.0), 1.0), 1.0);
  EXPECT_DOUBLE_EQ(psi(NoiseModel::gaussian(2.0), 3.0), 0.75);
  EXPECT_DOUBLE_EQ(psi(NoiseModel::laplace(0.5), -0.1), -2.0);
}

TEST(Psi, IsExactlyOdd) {
  Rng rng(37);
  for (auto kind : kAllKinds) {
    const NoiseModel model(kind, 0.25);
    for (int i = 0; i < 200; ++i) {
      const double x = rng.uniform(-50.0, 50.0);
      EXPECT_EQ(psi(model, -x), -psi(model, x));
    }
  }
}

TEST(Psi, MatchesFiniteDifferencesOfNll) {
  Rng rng(41);
  for (auto kind : kAllKinds) {
    const NoiseModel model(kind, rng.uniform(0.05, 2.0));
    for (int i = 0; i < 100; ++i) {
      const double x = rng.uniform(-10.0, 10.0);
      const double h = 1e-6 * std::max(1.0, std::abs(x));
      if (kind == NoiseKind::Laplace && std::abs(x) < 2.0 * h) continue;
      const double fd = (nll_term(model, x + h) - nll_term(model, x - h)) / (2.0 * h);
      const double an = psi(model, x);
      EXPECT_LE(std::abs(fd - an), 1e-6 * std::max(std::abs(an), 1e-3 / model.scale()))
          << to_string(kind) << " x=" << x;
    }
  }
}

// Brute-force grid maximum of |2x / (g^2 + x^2)|, independent of estimate_sensitivities.
TEST(Psi, CauchySupremumIsOneOverGamma) {
  const auto model = NoiseModel::cauchy(0.1);
  double best = 0.0;
  double arg = 0.0;
  for (long i = -1000000; i <= 1000000; ++i) {
    const double x = static_cast<double>(i) * 1e-4;
    if (std::abs(psi(model, x)) > best) {
      best = std::abs(psi(model, x));
      arg = x;
    }
  }
  EXPECT_NEAR(best, 10.0, 1e-9);
  EXPECT_NEAR(std::abs(arg), 0.1, 1e-4);
}

TEST(Sensitivities, GridStraddlesZeroAndHitsEndpoints) {
  const auto g = sensitivity_grid(1.0, 0.25);
  const std::vector<double> want{-1.0, -0.875, -0.625, -0.375, -0.125, 0.125, 0.375, 0.625, 0.875, 1.0};
  ASSERT_EQ(g.size(), want.size());
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_DOUBLE_EQ(g[i], want[i]);
}

TEST(Sensitivities, CauchyBoundedOnBothCounts) {
  const auto e = estimate_sensitivities(NoiseModel::cauchy(0.1), 100.0, 1e-3);
  // sup is 1/g = 10 at |x| = g; the nearest grid points are g -+ h/2.
  EXPECT_NEAR(e.gross_error, 2 * 0.1005 / (0.01 + 0.1005 * 0.1005), 1e-12);
  EXPECT_NEAR(e.gross_error, 10.0, 2e-4);
  // Difference quotient across +-h/2 is 2 / (g^2 + h^2/4); psi'(0) = 2 / g^2 = 200.
  EXPECT_NEAR(e.local_shift, 2.0 / (0.01 + 0.25e-6), 1e-9);
  EXPECT_NEAR(e.local_shift, 200.0, 0.01);
  EXPECT_TRUE(e.gross_error_bounded);
  EXPECT_TRUE(e.local_shift_bounded);
}

TEST(Sensitivities, GaussianGrossErrorDiverges) {
  for (double radius : {10.0, 50.0, 100.0}) {
    const auto e = estimate_sensitivities(NoiseModel::gaussian(1.0), radius, 1e-2);
    EXPECT_DOUBLE_EQ(e.gross_error, radius);
    EXPECT_FALSE(e.gross_error_bounded);
    EXPECT_NEAR(e.local_shift, 1.0, 1e-9);
    EXPECT_TRUE(e.local_shift_bounded);
  }
}

TEST(Sensitivities, LaplaceLocalShiftDiverges) {
  for (double step : {1e-1, 1e-2, 1e-3}) {
    const auto e = estimate_sensitivities(NoiseModel::laplace(1.0), 100.0, step);
    EXPECT_NEAR(e.local_shift, 2.0 / step, 1e-9 * (2.0 / step));
    EXPECT_FALSE(e.local_shift_bounded);
    EXPECT_DOUBLE_EQ(e.gross_error, 1.0);
    EXPECT_TRUE(e.gross_error_bounded);
  }
}

TEST(Sensitivities, LogisticBoundedOnBothCounts) {
  const auto e = estimate_sensitivities(NoiseModel::logistic(1.0), 100.0, 1e-3);
  EXPECT_NEAR(e.gross_error, 1.0, 1e-9);
  EXPECT_NEAR(e.local_shift, 0.5, 1e-6);
  EXPECT_TRUE(e.gross_error_bounded);
  EXPECT_TRUE(e.local_shift_bounded);
}

TEST(Sensitivities, GrossErrorNonDecreasingInRadius) {
  for (auto kind : kAllKinds) {
    double prev = 0.0;
    for (double r : {1.0, 2.0, 5.0, 20.0, 80.0}) {
      const auto e = estimate_sensitivities(NoiseModel(kind, 0.5), r, 0.01);
      EXPECT_GE(e.gross_error, prev);
      prev = e.gross_error;
    }
  }
}

TEST(Sensitivities, InvalidGridIsRejected) {
  const auto m = NoiseModel::cauchy(1.0);
  EXPECT_THROW(estimate_sensitivities(m, 1.0, 2.0), std::invalid_argument);
  EXPECT_THROW(estimate_sensitivities(m, 1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(estimate_sensitivities(m, -1.0, 0.1), std::invalid_argument);
}

TEST(AlignedDensityCurves, SharePeakValue) {
  const double peak = 1.0 / std::numbers::pi;
  EXPECT_NEAR(aligned_scale(NoiseKind::Cauchy, peak), 1.0, 1e-15);
  const std::vector<double> xs{0.0};
  const auto table = aligned_density_curves(kAllKinds, peak, xs);
  ASSERT_EQ(table.size(), 4u);
  for (const auto& p : table) EXPECT_NEAR(p.density, peak, 1e-12) << to_string(p.model.kind());
  EXPECT_THROW(aligned_density_curves({}, peak, xs), std::invalid_argument);
  EXPECT_THROW(aligned_scale(NoiseKind::Gaussian, 0.0), std::invalid_argument);
}

// Expected values computed from the closed-form aligned densities (peak 1/pi):
// Cauchy gamma = 1, Laplace b = pi/2, Gaussian sigma = sqrt(pi/2).
TEST(AlignedDensityCurves, TailOrdering) {
  const double peak = 1.0 / std::numbers::pi;
  const std::vector<NoiseKind> kinds{NoiseKind::Cauchy, NoiseKind::Laplace, NoiseKind::Gaussian};
  const std::vector<double> xs{5.0, 10.0};
  const auto t = aligned_density_curves(kinds, peak, xs);
  // x = 5: Laplace still above Cauchy.
  EXPECT_NEAR(t[0].density, 0.012242687930145794, 1e-15);
  EXPECT_NEAR(t[2].density, 0.013196168618621714, 1e-15);
  EXPECT_NEAR(t[4].density, 0.0001113895500591614, 1e-17);
  EXPECT_GT(t[2].density, t[0].density);
  EXPECT_GT(t[0].density, t[4].density);
  // x = 10: heavy-tail ordering Cauchy > Laplace > Gaussian.
  EXPECT_GT(t[1].density, t[3].density);
  EXPECT_GT(t[3].density, t[5].density);
  EXPECT_NEAR(t[1].density, 0.00315158303152268, 1e-15);
}

TEST(AlignedDensityCurves, CsvSchema) {
  const std::vector<double> xs{0.0, 1.0};
  const std::vector<NoiseKind> kinds{NoiseKind::Cauchy};
  const auto t = aligned_density_curves(kinds, 1.0 / std::numbers::pi, xs);
  std::ostringstream os;
  write_density_csv(os, t);
  EXPECT_EQ(os.str().substr(0, 16), "model,x,density\n");
  EXPECT_NE(os.str().find("cauchy,1,0.15915494309189535"), std::string::npos) << os.str();
}

}  // namespace
}  // namespace cpca
