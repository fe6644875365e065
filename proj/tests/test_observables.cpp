#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "lgf/observables.hpp"

using namespace lgf;

namespace {

const VelocitySet& canonical() {
  static const VelocitySet V = build_velocity_set(std::sqrt(2.0));
  return V;
}

// Generator of the exclusion part applied to I_beta(eta_x), by explicit
// enumeration of every jump touching x.
Vec5 generator_on_site(const LatticeState& s, std::size_t x, const VelocitySet& V, double chi) {
  Vec5 out{};
  const auto& lat = *s.lattice;
  for (int dir = 0; dir < lat.directions(); ++dir) {
    const auto y = static_cast<std::size_t>(lat.neighbor(x, dir));
    const double sign = dir % 2 == 0 ? 1.0 : -1.0;
    for (std::size_t v = 0; v < V.size(); ++v) {
      const bool at_x = (s.occ[x] >> v) & 1u, at_y = (s.occ[y] >> v) & 1u;
      const double ev = sign * V.component(v, dir / 2);
      if (at_x && !at_y)  // x -> y at chi + e.v/2
        for (int b = 0; b < 5; ++b) out[b] -= (chi + 0.5 * ev) * V.phi(b, v);
      if (at_y && !at_x)  // y -> x, direction -e, rate chi - e.v/2
        for (int b = 0; b < 5; ++b) out[b] += (chi - 0.5 * ev) * V.phi(b, v);
    }
  }
  return out;
}

// E^{mu_n'}[g] using E[eta(x,v) eta(x+e,v)] = f'^2 under the product law.
Vec5 expected_g(const ChemicalPotential& np, const VelocitySet& V, int alpha, const CoefficientSet& cs, const Vec5d& m) {
  const auto p = equilibrium_params(np, V);
  const Vec5d mp = mean_conserved(p);
  Vec5 out{};
  for (int beta = 0; beta < 5; ++beta) {
    double w = 0.0;
    for (std::size_t v = 0; v < V.size(); ++v) w += V.component(v, alpha) * V.phi(beta, v) * (p.f[v] * p.f[v] - p.f[v]);
    double s = w - cs.c[alpha][beta];
    for (int nu = 0; nu < 5; ++nu) s -= cs.d[alpha][beta][nu] * (mp(nu) - m(nu));
    out[beta] = s;
  }
  return out;
}

}  // namespace

TEST(Currents, VacuumAndFullPair) {
  const auto& V = canonical();
  const auto z = bond_currents(0, 0, 0, V, 1.0);
  for (int b = 0; b < 5; ++b) {
    EXPECT_EQ(z.symmetric[b], 0.0);
    EXPECT_EQ(z.antisymmetric[b], 0.0);
  }
  const auto f = bond_currents(~SiteMask{0}, ~SiteMask{0}, 1, V, 1.0);
  for (int b = 0; b < 5; ++b) {
    EXPECT_EQ(f.symmetric[b], 0.0);
    EXPECT_EQ(f.antisymmetric[b], 0.0);
  }
}

TEST(Currents, DivergenceMatchesGenerator) {
  const auto& V = canonical();
  const double chi = 1.1;
  const auto p = equilibrium_params(ChemicalPotential::reference(0.3, -0.1), V);
  Rng rng(17, 0);
  const auto s = sample_product_measure(p, 1, rng);
  double worst = 0.0;
  for (std::size_t x = 0; x < s.sites(); ++x) {
    const auto lhs = generator_on_site(s, x, V, chi);
    Vec5 rhs{};
    for (int a = 0; a < 3; ++a) {
      const auto back = static_cast<std::size_t>(s.lattice->neighbor(x, 2 * a + 1));
      const auto wx = currents(s, x, a, V, chi), wb = currents(s, back, a, V, chi);
      for (int b = 0; b < 5; ++b)
        rhs[b] += (wx.symmetric[b] + wx.antisymmetric[b]) - (wb.symmetric[b] + wb.antisymmetric[b]);
    }
    for (int b = 0; b < 5; ++b) worst = std::max(worst, std::abs(lhs[b] - rhs[b]));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(CenteredCurrent, ZeroMeanAndZeroGradient) {
  const auto& V = canonical();
  const auto n0 = ChemicalPotential::reference(0.3, -0.1);
  const auto p = equilibrium_params(n0, V);
  const auto cs = coefficient_set(p);
  const Vec5d m = mean_conserved(p);
  for (int a = 0; a < 3; ++a) {
    const auto e = expected_g(n0, V, a, cs, m);
    for (int b = 0; b < 5; ++b) EXPECT_NEAR(e[b], 0.0, 1e-14);
  }
  const double h = 1e-5;
  for (int nu = 0; nu < 5; ++nu) {
    Vec5d mp = m, mm = m;
    mp(nu) += h;
    mm(nu) -= h;
    const auto np = invert_moments(mp, V, n0).n, nm = invert_moments(mm, V, n0).n;
    for (int a = 0; a < 3; ++a) {
      const auto gp = expected_g(np, V, a, cs, m), gm = expected_g(nm, V, a, cs, m);
      for (int b = 0; b < 5; ++b) EXPECT_LT(std::abs(gp[b] - gm[b]) / (2 * h), 1e-5) << a << b << nu;
    }
  }
}

TEST(CenteredCurrent, ExhaustiveTwoSiteToy) {
  // A small 3-D toy with a generic n: d and c from the general Jacobian route.
  const auto V = build_velocity_set(
      std::sqrt(2.0),
      ToySpec::from_integers(3, {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {2, -1, 0}, {0, 1, 1}}));
  const ChemicalPotential n{{0.1, 0.3, -0.2, 0.0, -0.15}};
  const auto p = equilibrium_params(n, V);
  CoefficientSet cs;
  cs.d = current_response(p);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 5; ++b) cs.c[a][b] = mean_antisymmetric_current(p, a, b);
  const Vec5d m = mean_conserved(p);
  const std::size_t nv = V.size();
  for (int alpha = 0; alpha < 3; ++alpha) {
    Vec5 mean{};
    for (SiteMask s0 = 0; s0 < (1u << nv); ++s0)
      for (SiteMask s1 = 0; s1 < (1u << nv); ++s1) {
        double w = 1.0;
        for (std::size_t v = 0; v < nv; ++v) {
          w *= ((s0 >> v) & 1u) ? p.f[v] : 1 - p.f[v];
          w *= ((s1 >> v) & 1u) ? p.f[v] : 1 - p.f[v];
        }
        const auto g = centered_current(s0, s1, alpha, V, cs, m);
        for (int b = 0; b < 5; ++b) mean[b] += w * g[b];
      }
    for (int b = 0; b < 5; ++b) EXPECT_NEAR(mean[b], 0.0, 1e-13);
  }
}

TEST(CenteredCurrent, HalfFillingIsAntisymmetricCurrent) {
  const auto& V = canonical();
  const auto p = equilibrium_params({}, V);
  const auto cs = coefficient_set(p);
  const Vec5d m = mean_conserved(p);
  std::mt19937_64 gen(2);
  for (int i = 0; i < 50; ++i) {
    const auto a = static_cast<SiteMask>(gen()), b = static_cast<SiteMask>(gen());
    const auto g = centered_current(a, b, 1, V, cs, m);
    const auto w = bond_currents(a, b, 1, V, 1.0).antisymmetric;
    const auto& c = cs.c[1];
    for (int k = 0; k < 5; ++k) EXPECT_NEAR(g[k], w[k] - c[k], 1e-12);
  }
}

TEST(Fourier, StagedSumMatchesDirectSum) {
  const auto& V = canonical();
  const auto p = equilibrium_params(ChemicalPotential::reference(0.3, -0.1), V);
  Rng rng(3, 0);
  const auto s = sample_product_measure(p, 2, rng);
  const std::vector<ModeIndex> modes{{1, 0, 0}, {0, 2, -1}, {-2, 1, 1}, {1, 0, 2}};
  const double eps = 0.5;
  const Vec5d m = mean_conserved(p);
  const auto got = fourier_fluctuation(s, modes, V, m, eps);
  const double pi = std::acos(-1.0);
  for (std::size_t i = 0; i < modes.size(); ++i) {
    Vec5c direct = Vec5c::Zero();
    for (std::size_t x = 0; x < s.sites(); ++x) {
      const auto c = s.lattice->centered(x);
      const double ang = 2 * pi * (modes[i][0] * c[0] + modes[i][1] * c[1] + modes[i][2] * c[2]) / 5.0;
      const auto I = conserved_at_site(s.occ[x], V);
      for (int b = 0; b < 5; ++b) direct(b) += std::polar(1.0, ang) * (I[b] - m(b));
    }
    direct *= std::pow(eps, 1.5);
    EXPECT_LT(max_abs(got[i].zhat - direct), 1e-12);
    EXPECT_LT((got[i].k - k_macro(modes[i], 2, eps)).norm(), 1e-15);
  }
}

TEST(Fourier, ConjugateSymmetryAndShiftInvariance) {
  const auto& V = canonical();
  const auto p = equilibrium_params(ChemicalPotential::reference(0.3, -0.1), V);
  Rng rng(4, 0);
  const auto s = sample_product_measure(p, 3, rng);
  const std::vector<ModeIndex> modes{{1, 2, 0}, {-1, -2, 0}};
  const Vec5d m = mean_conserved(p);
  const auto a = fourier_fluctuation(s, modes, V, m, 1.0 / 3);
  EXPECT_LT(max_abs(a[0].zhat - a[1].zhat.conjugate()), 1e-12);
  const auto b = fourier_fluctuation(s, modes, V, m + Vec5d::Constant(3.7), 1.0 / 3);
  EXPECT_LT(max_abs(a[0].zhat - b[0].zhat), 1e-11);
}

TEST(Fourier, RejectsBadModes) {
  const auto& V = canonical();
  auto s = empty_state(std::make_shared<const Lattice>(Lattice::cube(3, 2)));
  EXPECT_THROW(fourier_fluctuation(s, {{0, 0, 0}}, V, Vec5d::Zero(), 0.5), ConfigError);
  EXPECT_THROW(fourier_fluctuation(s, {{3, 0, 0}}, V, Vec5d::Zero(), 0.5), ConfigError);
}

TEST(Fourier, ProductMeasureCovarianceIsCompressibility) {
  const auto& V = canonical();
  const auto p = equilibrium_params(ChemicalPotential::reference(0.3, -0.1), V);
  const Mat5d C = compressibility_matrix(p);
  const int L = 3;
  const double eps = 1.0 / L;
  const std::vector<ModeIndex> modes{{1, 0, 0}, {0, 1, 1}};
  auto s = empty_state(std::make_shared<const Lattice>(Lattice::cube(3, L)));
  const FourierProjector proj(*s.lattice, modes, eps);
  const ConservedLookup lookup(V);
  const Vec5d m = mean_conserved(p);
  std::vector<CovarianceAccumulator> acc(modes.size());
  Rng rng(5, 0);
  for (int i = 0; i < 4000; ++i) {
    resample_product_measure(s, p, rng);
    const auto f = proj(s, lookup, m);
    for (std::size_t j = 0; j < modes.size(); ++j) acc[j].add(f[j].zhat);
  }
  const double norm = std::pow((2 * L + 1) * eps, 3);
  for (const auto& a : acc) EXPECT_LT(a.max_z_score(to_complex(C) * norm), 4.5);
}

TEST(Transport, IdentityAtZeroAndUndoesEulerFlow) {
  const auto& V = canonical();
  const auto cs = coefficient_set(equilibrium_params(ChemicalPotential::reference(0.3, -0.1), V));
  FluctuationSample fs;
  fs.k = Vec3d(2.0, -1.0, 0.5);
  fs.zhat << cplx(1, 2), cplx(-0.3, 0), cplx(0, 1), cplx(2, -1), cplx(0.5, 0.5);
  EXPECT_EQ(transported_field(fs, cs, 0.1), fs.zhat);
  const Vec5c z0 = fs.zhat;
  fs.t = 0.7;
  fs.zhat = expm(-(fs.t / 0.1) * euler_symbol(fs.k, cs)) * z0;
  EXPECT_LT(max_abs(transported_field(fs, cs, 0.1) - z0), 1e-12);
  fs.k.setZero();
  fs.zhat = z0;
  EXPECT_LT(max_abs(transported_field(fs, cs, 0.1) - z0), 1e-15);
}

TEST(CovarianceCsv, Format) {
  CovarianceAccumulator acc;
  Vec5c x = Vec5c::Zero();
  x(0) = 1.0;
  acc.add(x);
  acc.add(-x);
  std::ostringstream os;
  write_covariance_csv_header(os);
  write_covariance_csv(os, {1, 0, 0}, acc);
  const auto text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "z1,z2,z3,beta,nu,re,im,stderr,nsamples");
  EXPECT_NE(text.find("1,0,0,0,0,1,0,0,2\n"), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 26);
}
