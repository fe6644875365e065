#include <gtest/gtest.h>

#include <random>

#include "lgf/spectral.hpp"

using namespace lgf;

namespace {

const VelocitySet& canonical() {
  static const VelocitySet V = build_velocity_set(std::sqrt(2.0));
  return V;
}

struct Regime {
  EquilibriumParams p;
  CoefficientSet cs;
  Mat5d C;
};

Regime regime(double r, double theta) {
  Regime g{equilibrium_params(ChemicalPotential::reference(r, theta), canonical()), {}, {}};
  g.cs = coefficient_set(g.p);
  g.C = compressibility_matrix(g.p);
  return g;
}

Vec3d random_k(std::mt19937_64& gen, double scale = 2.0) {
  std::normal_distribution<double> n(0.0, scale);
  return Vec3d(n(gen), n(gen), n(gen));
}

Mat5c random_matrix(std::mt19937_64& gen) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat5c m;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) m(i, j) = cplx(n(gen), n(gen));
  return m;
}

Mat5d random_spd(std::mt19937_64& gen, double scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat5d a;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) a(i, j) = n(gen);
  return scale * (a * a.transpose() + 0.1 * Mat5d::Identity());
}

}  // namespace

TEST(EulerSymbol, ZeroAtZeroK) {
  const auto g = regime(0.3, -0.1);
  EXPECT_EQ(max_abs(euler_symbol(Vec3d::Zero(), g.cs)), 0.0);
}

TEST(EulerSymbol, SkewWithRespectToCompressibility) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int r = 0; r < 5; ++r) {
    const auto g = regime(u(gen), 0.4 * u(gen));
    const Mat5c C = to_complex(g.C);
    for (int i = 0; i < 100; ++i) {
      const Mat5c E = euler_symbol(random_k(gen), g.cs);
      EXPECT_LT(max_abs(E * C + C * E.adjoint()), 1e-12);
    }
  }
}

TEST(EulerSymbol, SpectrumMatchesClosedForm) {
  std::mt19937_64 gen(2);
  const auto g = regime(0.3, -0.1);
  const double c = std::sqrt(g.cs.sound_speed_sq());
  for (int i = 0; i < 50; ++i) {
    const Vec3d k = random_k(gen);
    const Mat5c E = euler_symbol(k, g.cs);
    Eigen::ComplexEigenSolver<Mat5c> es(E, false);
    std::vector<double> im;
    for (int j = 0; j < 5; ++j) {
      EXPECT_LT(std::abs(es.eigenvalues()(j).real()), 1e-10 * E.norm());
      im.push_back(es.eigenvalues()(j).imag());
    }
    std::sort(im.begin(), im.end());
    const double w = c * k.norm();
    EXPECT_NEAR(im[0], -w, 1e-9 * w);
    EXPECT_NEAR(im[4], w, 1e-9 * w);
    for (int j = 1; j < 4; ++j) EXPECT_LT(std::abs(im[j]), 1e-9 * w);
  }
}

TEST(EigenDecompose, ExplicitDiagonalPartition) {
  Mat5c a = Mat5c::Zero();
  a(0, 0) = cplx(0, 1);
  a(1, 1) = cplx(0, -1);
  const auto es = eigen_decompose(a);
  EXPECT_EQ(es.blocks, 3);
  // Members of each class share a label; labels differ across classes.
  std::vector<int> zero, plus, minus;
  for (int i = 0; i < 5; ++i) {
    const auto l = es.eigenvalues(i);
    (std::abs(l) < 1e-12 ? zero : (l.imag() > 0 ? plus : minus)).push_back(es.block[i]);
  }
  ASSERT_EQ(zero.size(), 3u);
  ASSERT_EQ(plus.size(), 1u);
  ASSERT_EQ(minus.size(), 1u);
  EXPECT_EQ(zero[0], zero[1]);
  EXPECT_EQ(zero[1], zero[2]);
  EXPECT_NE(zero[0], plus[0]);
  EXPECT_NE(plus[0], minus[0]);
}

TEST(EigenDecompose, EulerThreeBlocksBothRoutes) {
  std::mt19937_64 gen(3);
  const auto g = regime(0.3, -0.1);
  for (int i = 0; i < 20; ++i) {
    const Vec3d k = random_k(gen);
    const Mat5c E = euler_symbol(k, g.cs);
    const auto analytic = euler_eigensystem(k, g.cs);
    EXPECT_EQ(analytic.blocks, 3);
    EXPECT_LT(max_abs(analytic.reconstruct() - E), 1e-10 * max_abs(E));
    for (int j = 0; j < 5; ++j) EXPECT_LT(std::abs(analytic.eigenvalues(j).real()), 1e-12);
    const auto dense = eigen_decompose(E);
    EXPECT_EQ(dense.blocks, 3);
    const Mat5c M = random_matrix(gen);
    EXPECT_LT(max_abs(commutant_project(analytic, M) - commutant_project(dense, M)), 1e-7);
  }
}

TEST(EigenDecompose, RejectsDefectiveInput) {
  Mat5c j = Mat5c::Zero();
  j(0, 1) = 1.0;  // Jordan block
  EXPECT_THROW(eigen_decompose(j), NonDiagonalizableError);
  // E^(k) with a0 b0 + a4 b4 = 0 but nonzero entries is nilpotent.
  CoefficientSet cs;
  cs.a0 = 1.0;
  EXPECT_THROW(euler_eigensystem(Vec3d(1, 0, 0), cs), NonDiagonalizableError);
}

TEST(Commutant, ZeroOperatorFixesEverything) {
  std::mt19937_64 gen(4);
  const auto es = eigen_decompose(Mat5c::Zero());
  const Mat5c M = random_matrix(gen);
  EXPECT_LT(max_abs(commutant_project(es, M) - M), 1e-14);
}

TEST(Commutant, DiagonalExampleMatchesClosedFormAverage) {
  // A = diag(i, -i, 2i, 3i, 4i), M = all ones: the off-diagonal entries
  // average as (e^{i w T} - 1)/(i w T) -> 0, leaving the identity.
  Mat5c a = Mat5c::Zero();
  const std::array<double, 5> w{1, -1, 2, 3, 4};
  for (int i = 0; i < 5; ++i) a(i, i) = cplx(0, w[i]);
  const Mat5c M = Mat5c::Constant(1.0);
  const Mat5c pi = commutant_project(eigen_decompose(a), M);
  EXPECT_LT(max_abs(pi - Mat5c::Identity()), 1e-12);
  const double T = 50.0;
  Mat5c closed;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const double om = w[i] - w[j];
      closed(i, j) = om == 0.0 ? cplx(1.0) : (std::exp(cplx(0, om * T)) - 1.0) / cplx(0, om * T);
    }
  EXPECT_LT(max_abs(time_average_conjugation(a, M, T, 0.1) - closed), 1e-12);
}

TEST(Commutant, ProjectionIdentities) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  double idem = 0, comm = 0, fix = 0, lin = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto g = regime(u(gen), 0.3 * u(gen));
    const Vec3d k = random_k(gen, 1.0);
    const Mat5c A = euler_symbol(k, g.cs);
    const auto es = euler_eigensystem(k, g.cs);
    const Mat5c M = random_matrix(gen), M2 = random_matrix(gen);
    const Mat5c p = commutant_project(es, M);
    const double s = std::max(1.0, max_abs(M));
    idem = std::max(idem, max_abs(commutant_project(es, p) - p) / s);
    comm = std::max(comm, max_abs(p * A - A * p) / (s * std::max(1.0, max_abs(A))));
    // An element of the commutant: block-diagonal in the eigenbasis.
    Mat5c inner = random_matrix(gen).cwiseProduct(es.mask());
    const Mat5c X = es.Pinv * inner * es.P;
    ASSERT_LT(max_abs(X * A - A * X), 1e-9 * std::max(1.0, max_abs(X)));
    fix = std::max(fix, max_abs(commutant_project(es, X) - X) / std::max(1.0, max_abs(X)));
    const cplx z(0.3, -1.2);
    lin = std::max(lin, max_abs(commutant_project(es, M + z * M2) - p - z * commutant_project(es, M2)) / s);
  }
  EXPECT_LT(idem, 1e-10);
  EXPECT_LT(comm, 1e-10);
  EXPECT_LT(fix, 1e-10);
  EXPECT_LT(lin, 1e-10);
}

TEST(TimeAverage, TrivialCases) {
  std::mt19937_64 gen(6);
  const Mat5c M = random_matrix(gen);
  EXPECT_LT(max_abs(time_average_conjugation(Mat5c::Zero(), M, 7.0, 0.5) - M), 1e-13);
  const auto g = regime(0.3, -0.1);
  const Vec3d k(0.4, -0.2, 0.1);
  const auto es = euler_eigensystem(k, g.cs);
  const Mat5c X = es.Pinv * random_matrix(gen).cwiseProduct(es.mask()) * es.P;
  EXPECT_LT(max_abs(time_average_conjugation(euler_symbol(k, g.cs), X, 30.0, 0.2) - X), 1e-10 * max_abs(X));
}

TEST(TimeAverage, RejectsUnderResolvedStep) {
  Mat5c a = Mat5c::Zero();
  a(0, 0) = cplx(0, 10.0);
  EXPECT_THROW(time_average_conjugation(a, Mat5c::Identity(), 10.0, 0.1), ConfigError);
  EXPECT_NO_THROW(time_average_conjugation(a, Mat5c::Identity(), 10.0, 0.07));
}

TEST(TimeAverage, ConvergesToProjection) {
  const auto g = regime(0.3, -0.1);
  std::mt19937_64 gen(7);
  const auto D = compatible_diffusion(1.0, random_spd(gen, 0.2), g.C);
  // Unit acoustic frequency, so every horizon below is many periods long.
  const Vec3d k = Vec3d(0.3, 0.5, -0.2).normalized() / std::sqrt(g.cs.sound_speed_sq());
  const Mat5c E = euler_symbol(k, g.cs);
  const Mat5c Dh = D.symbol(k);
  const Mat5c N = projected_diffusion(k, g.cs, D, g.C).N;
  std::vector<double> err;
  for (double T : {20.0, 200.0, 2000.0}) err.push_back(max_abs(time_average_conjugation(E, Dh, T, 0.25) - N));
  EXPECT_LT(err[1], err[0]);
  EXPECT_LT(err[2] * 2000.0, 3.0 * err[0] * 20.0);
  EXPECT_LT(err[2], err[0] / 30.0);
}

TEST(ProjectedDiffusion, ScalarTensorIsUntouched) {
  std::mt19937_64 gen(8);
  const auto g = regime(0.3, -0.1);
  const double chi = 1.3;
  for (int i = 0; i < 20; ++i) {
    const Vec3d k = random_k(gen);
    const auto pd = projected_diffusion(k, g.cs, DiffusionTensor(chi), g.C);
    EXPECT_LT(max_abs(pd.N + chi * k.squaredNorm() * Mat5c::Identity()), 1e-10 * chi * k.squaredNorm());
  }
}

TEST(ProjectedDiffusion, HalfFillingKeepsSymbol) {
  const auto g = regime(0.0, 0.0);
  std::mt19937_64 gen(9);
  const auto D = compatible_diffusion(1.0, random_spd(gen, 0.3), g.C);
  const Vec3d k(0.2, -0.7, 0.4);
  const auto pd = projected_diffusion(k, g.cs, D, g.C);
  EXPECT_EQ(max_abs(pd.E), 0.0);
  EXPECT_LT(max_abs(pd.N - pd.D), 1e-14);
}

TEST(ProjectedDiffusion, QuadraticScaling) {
  std::mt19937_64 gen(10);
  const auto g = regime(0.3, -0.1);
  const auto D = compatible_diffusion(1.0, random_spd(gen, 0.2), g.C);
  for (int i = 0; i < 20; ++i) {
    const Vec3d k = random_k(gen, 1.0);
    const double lam = 0.5 + 3.0 * std::uniform_real_distribution<double>(0, 1)(gen);
    const Mat5c a = projected_diffusion(lam * k, g.cs, D, g.C).N;
    const Mat5c b = lam * lam * projected_diffusion(k, g.cs, D, g.C).N;
    EXPECT_LT(max_abs(a - b), 1e-9 * max_abs(b));
  }
}

TEST(NoiseFactor, ScalarTensorClosedForm) {
  const auto g = regime(0.3, -0.1);
  const double chi = 0.9;
  const Vec3d k(0.3, -0.4, 1.1);
  const auto pd = projected_diffusion(k, g.cs, DiffusionTensor(chi), g.C);
  const auto nf = noise_factor(pd.N, g.C);
  EXPECT_LT(max_abs(nf.B * nf.B.adjoint() - 2.0 * chi * k.squaredNorm() * to_complex(g.C)), 1e-10);
  EXPECT_LT(nf.hermiticity_defect, 1e-8);
  EXPECT_LT(nf.lyapunov_residual, 1e-10);
}

TEST(NoiseFactor, LyapunovAcrossModesAndCompatibleTensors) {
  std::mt19937_64 gen(11);
  const auto g = regime(-0.4, 0.2);
  const auto D = compatible_diffusion(1.0, random_spd(gen, 0.2), g.C);
  for (int i = 0; i < 100; ++i) {
    const Vec3d k = random_k(gen, 1.0);
    const auto pd = projected_diffusion(k, g.cs, D, g.C);
    const auto nf = noise_factor(pd.N, g.C);
    EXPECT_LT(nf.lyapunov_residual, 1e-10);
    EXPECT_LT(nf.hermiticity_defect, 1e-8);
    EXPECT_GT(pd.dissipation_min, 0.0);
  }
}

TEST(NoiseFactor, VanishesAtZeroModeAndRejectsIndefinite) {
  const auto g = regime(0.3, -0.1);
  const auto pd = projected_diffusion(Vec3d(1e-6, 0, 0), g.cs, DiffusionTensor(1.0), g.C);
  EXPECT_LT(max_abs(noise_factor(pd.N, g.C).B), 1e-5);
  EXPECT_THROW(noise_factor(Mat5c::Identity(), g.C), RegimeError);
}

TEST(DiffusionTensor, Validation) {
  EXPECT_NO_THROW(validate(DiffusionTensor(1.0)));
  DiffusionTensor bad(1.0);
  bad.Dbar[0][0] = -3.0 * Mat5d::Identity();
  EXPECT_THROW(validate(bad), ConfigError);
  EXPECT_THROW(validate(DiffusionTensor(0.0)), ConfigError);
}

TEST(SymbolDump, RecordHasAllFields) {
  const auto g = regime(0.3, -0.1);
  const auto pd = projected_diffusion(Vec3d(0.1, 0.2, 0.3), g.cs, DiffusionTensor(1.0), g.C);
  const auto j = mode_record(pd, g.C, noise_factor(pd.N, g.C));
  for (const char* key : {"k", "E", "C", "D", "N", "B", "eigenvalues", "blocks", "hermiticity_defect"})
    EXPECT_TRUE(j.contains(key)) << key;
}
