#include <gtest/gtest.h>

#include <random>

#include "lgf/oulimit.hpp"

using namespace lgf;

namespace {

struct Mode {
  Vec3d k;
  Mat5c N, C;
};

Mode mode(const DiffusionTensor* d, const Vec3d& k) {
  static const VelocitySet V = build_velocity_set(std::sqrt(2.0));
  const auto p = equilibrium_params(ChemicalPotential::reference(0.3, -0.1), V);
  const auto cs = coefficient_set(p);
  const Mat5d C = compressibility_matrix(p);
  Mat5d G;
  G << 0.5, 0.1, 0.0, 0.05, 0.2,  //
      0.1, 0.4, 0.0, 0.0, 0.1,    //
      0.0, 0.0, 0.3, 0.0, 0.0,    //
      0.05, 0.0, 0.0, 0.3, 0.0,   //
      0.2, 0.1, 0.0, 0.0, 0.6;
  const auto fallback = compatible_diffusion(1.0, G, C);
  const auto pd = projected_diffusion(k, cs, d ? *d : fallback, C);
  return {k, pd.N, to_complex(C)};
}

}  // namespace

TEST(OUTransition, SmallStepLimit) {
  const auto m = mode(nullptr, Vec3d(0.4, -0.2, 0.3));
  const auto t = ou_transition(m.N, m.C, 1e-12);
  EXPECT_LT(max_abs(t.F - Mat5c::Identity()), 1e-10);
  EXPECT_LT(max_abs(t.Sigma), 1e-10);
  EXPECT_THROW(ou_transition(m.N, m.C, 0.0), ConfigError);
}

TEST(OUTransition, CompositionIdentity) {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const auto m = mode(nullptr, Vec3d(n(gen), n(gen), n(gen)));
    for (double d : {0.01, 0.05, 0.3}) EXPECT_LT(ou_composition_residual(m.N, m.C, d), 1e-12);
  }
}

TEST(OUTransition, SigmaIsPsd) {
  const auto m = mode(nullptr, Vec3d(1.5, 0.2, -0.7));
  for (double d : {1e-6, 0.05, 10.0}) {
    const auto t = ou_transition(m.N, m.C, d);
    EXPECT_GE(t.sigma_min_eigenvalue, -1e-12);
    EXPECT_LT(max_abs(t.Sigma_root * t.Sigma_root - t.Sigma), 1e-12);
  }
}

TEST(OUInit, ZeroAndDiagonalAndNonPsd) {
  Rng rng(2);
  EXPECT_EQ(max_abs(ou_init_stationary(Vec3d::UnitX(), Mat5c::Zero(), rng).xi), 0.0);

  Mat5c diag = Mat5c::Zero();
  for (int i = 0; i < 5; ++i) diag(i, i) = i + 1.0;
  CovarianceAccumulator acc;
  for (int i = 0; i < 20000; ++i) acc.add(ou_init_stationary(Vec3d::UnitX(), diag, rng).xi);
  EXPECT_LT(acc.max_z_score(diag), 4.5);

  Mat5c bad = diag;
  bad(2, 2) = -1.0;
  EXPECT_THROW(ou_init_stationary(Vec3d::UnitX(), bad, rng), RegimeError);
}

TEST(OUReport, StationaryLagCovariance) {
  const auto m = mode(nullptr, Vec3d(0.8, -0.5, 0.4));
  Rng rng(3);
  const auto r = ou_covariance_report(m.k, m.N, m.C, 0.05, {0, 1, 10, 40}, 100000, rng);
  EXPECT_LT(r.composition_residual, 1e-12);
  for (const auto& l : r.lags) {
    EXPECT_EQ(l.acc.count(), 100000u);
    EXPECT_LT(l.max_z, 4.5) << "lag " << l.steps;
  }
  EXPECT_LT(max_abs(r.lags[0].predicted - m.C), 1e-15);
}

TEST(OUReport, RejectsBadLags) {
  const auto m = mode(nullptr, Vec3d::UnitX());
  Rng rng(4);
  EXPECT_THROW(ou_covariance_report(m.k, m.N, m.C, 0.05, {0}, 10, rng), ConfigError);
  EXPECT_THROW(ou_covariance_report(m.k, m.N, m.C, 0.05, {1, 2}, 10, rng), ConfigError);
}

TEST(OULag, ScalarDiffusionClosedForm) {
  const double chi = 0.7;
  const DiffusionTensor d(chi);
  const Vec3d k(0.3, 1.1, -0.4);
  const auto m = mode(&d, k);
  for (double tau : {0.0, 0.2, 1.5}) {
    const Mat5c want = std::exp(-chi * k.squaredNorm() * tau) * m.C;
    EXPECT_LT(max_abs(ou_lag_covariance(m.N, m.C, tau) - want), 1e-12);
  }
}

TEST(OULag, DecaysToZero) {
  const auto m = mode(nullptr, Vec3d(0.6, 0.2, -0.3));
  const double a = max_abs(ou_lag_covariance(m.N, m.C, 1.0));
  const double b = max_abs(ou_lag_covariance(m.N, m.C, 50.0));
  const double c = max_abs(ou_lag_covariance(m.N, m.C, 500.0));
  EXPECT_LT(b, a);
  EXPECT_LT(c, 1e-6 * max_abs(m.C));
}

TEST(OUField, MirroredModesGiveRealField) {
  const int L = 2;
  Rng rng(5);
  std::vector<ModeAmplitude> half;
  for (const auto& z : half_grid(L)) {
    Vec5c xi;
    for (int i = 0; i < 5; ++i) xi(i) = rng.complex_normal();
    half.push_back({z, xi});
  }
  EXPECT_EQ(half.size(), static_cast<std::size_t>((125 - 1) / 2));
  const auto full = mirror_modes(half);
  double worst = 0.0;
  for (int a = -L; a <= L; ++a)
    for (int b = -L; b <= L; ++b)
      for (int c = -L; c <= L; ++c) worst = std::max(worst, synthesize_field(full, L, {a, b, c}).imag().cwiseAbs().maxCoeff());
  EXPECT_LT(worst, 1e-12);
}
