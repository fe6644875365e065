#pragma once

// Grand canonical product measures and everything computed from them in
// closed form: densities, moment brackets, the compressibility matrix and the
// transport-coefficient blocks of the linearized Euler operator.

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lgf/errors.hpp"
#include "lgf/model.hpp"

namespace lgf {

using Vec5d = Eigen::Matrix<double, 5, 1>;
using Mat5d = Eigen::Matrix<double, 5, 5>;

struct ChemicalPotential {
  std::array<double, 5> n{};

  /// n = (r, 0, 0, 0, theta).
  static ChemicalPotential reference(double r, double theta) { return {{r, 0.0, 0.0, 0.0, theta}}; }

  [[nodiscard]] bool is_reference_form() const { return n[1] == 0.0 && n[2] == 0.0 && n[3] == 0.0; }
  [[nodiscard]] bool finite() const {
    for (double x : n)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

/// <h |v|^p> style sums over the velocity set. Names read as <h0>, <h0 |v|^2>, ...
struct Brackets {
  double h0 = 0, h0_v2 = 0, h0_v4 = 0;
  double h1_v2 = 0, h1_v4 = 0;
  double h2_v2 = 0, h2_v4 = 0, h2_v6 = 0;
  double h2_v1sq_v2sq = 0;  // <v_1^2 v_2^2 h2>
  double Phi = 0, Phi1 = 0, Phi2 = 0;
  double Psi1 = 0, Psi2 = 0;
};

struct EquilibriumParams {
  ChemicalPotential n;
  VelocitySet velocities;
  std::vector<double> f;   // density of velocity v
  std::vector<double> h0;  // f(1-f)
  std::vector<double> h1;  // h0(1-2f)
  std::vector<double> h2;  // h1(1-6f(1-f))/2
  Brackets brackets;

  /// sum_v h(v) |v|^power
  [[nodiscard]] double bracket(std::span<const double> h, int power) const {
    double s = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) s += h[i] * std::pow(velocities.speed_sq(i), 0.5 * power);
    return s;
  }
};

inline double logistic(double lambda) {
  return lambda >= 0.0 ? 1.0 / (1.0 + std::exp(-lambda)) : std::exp(lambda) / (1.0 + std::exp(lambda));
}

inline EquilibriumParams equilibrium_params(const ChemicalPotential& n, const VelocitySet& V) {
  if (!n.finite()) throw ConfigError("chemical potential must be finite");
  EquilibriumParams p;
  p.n = n;
  p.velocities = V;
  const std::size_t m = V.size();
  p.f.resize(m);
  p.h0.resize(m);
  p.h1.resize(m);
  p.h2.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    double lambda = 0.0;
    for (int b = 0; b < kNumConserved; ++b) lambda += n.n[b] * V.phi(b, i);
    const double f = logistic(lambda);
    p.f[i] = f;
    p.h0[i] = f * (1.0 - f);
    p.h1[i] = p.h0[i] * (1.0 - 2.0 * f);
    p.h2[i] = 0.5 * p.h1[i] * (1.0 - 6.0 * f * (1.0 - f));
  }
  auto& B = p.brackets;
  B.h0 = p.bracket(p.h0, 0);
  B.h0_v2 = p.bracket(p.h0, 2);
  B.h0_v4 = p.bracket(p.h0, 4);
  B.h1_v2 = p.bracket(p.h1, 2);
  B.h1_v4 = p.bracket(p.h1, 4);
  B.h2_v2 = p.bracket(p.h2, 2);
  B.h2_v4 = p.bracket(p.h2, 4);
  B.h2_v6 = p.bracket(p.h2, 6);
  for (std::size_t i = 0; i < m; ++i) {
    const double v1 = V.component(i, 0), v2 = V.component(i, 1);
    B.h2_v1sq_v2sq += v1 * v1 * v2 * v2 * p.h2[i];
  }
  B.Phi = B.h0_v4 * B.h0 - B.h0_v2 * B.h0_v2;
  B.Phi1 = B.h1_v4 * B.h0 - B.h1_v2 * B.h0_v2;
  B.Phi2 = B.h0_v4 * B.h1_v2 - B.h1_v4 * B.h0_v2;
  B.Psi1 = B.h2_v6 * B.h1_v2 - B.h2_v4 * B.h1_v4;
  B.Psi2 = B.h2_v4 * B.h1_v2 - B.h2_v2 * B.h1_v4;
  return p;
}

/// m_beta = E[I_beta(eta_0)].
inline Vec5d mean_conserved(const EquilibriumParams& p) {
  Vec5d m = Vec5d::Zero();
  for (std::size_t i = 0; i < p.f.size(); ++i)
    for (int b = 0; b < kNumConserved; ++b) m(b) += p.velocities.phi(b, i) * p.f[i];
  return m;
}

/// Cov(I_beta, I_nu) on one site: sum_v phi_beta phi_nu h0. Valid for any n.
inline Mat5d single_site_covariance(const EquilibriumParams& p) {
  Mat5d c = Mat5d::Zero();
  for (std::size_t i = 0; i < p.f.size(); ++i)
    for (int b = 0; b < kNumConserved; ++b)
      for (int nu = 0; nu < kNumConserved; ++nu)
        c(b, nu) += p.velocities.phi(b, i) * p.velocities.phi(nu, i) * p.h0[i];
  return c;
}

/// The block form of C built from brackets; agrees with single_site_covariance
/// at reference-form n on a set closed under sign flips and permutations.
inline Mat5d compressibility_block_form(const EquilibriumParams& p) {
  const auto& B = p.brackets;
  Mat5d c = Mat5d::Zero();
  c(0, 0) = B.h0;
  c(0, 4) = c(4, 0) = 0.5 * B.h0_v2;
  c(4, 4) = 0.25 * B.h0_v4;
  for (int a = 1; a <= 3; ++a) c(a, a) = B.h0_v2 / 3.0;
  return c;
}

/// Compressibility matrix C. Throws RegimeError unless symmetric positive definite.
inline Mat5d compressibility_matrix(const EquilibriumParams& p, double tolerance = 1e-12) {
  const Mat5d c = single_site_covariance(p);
  Eigen::SelfAdjointEigenSolver<Mat5d> es(c);
  if (es.eigenvalues().minCoeff() <= tolerance * std::max(1.0, es.eigenvalues().maxCoeff())) {
    throw RegimeError("compressibility matrix is not positive definite");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Coefficients

/// Index layout: d[alpha][beta][nu], c[alpha][beta] with alpha = 0..2 for the
/// three spatial directions.
struct CoefficientSet {
  double a0 = 0, a4 = 0, b0 = 0, b4 = 0;
  std::array<std::array<std::array<double, 5>, 5>, 3> d{};
  std::array<std::array<double, 5>, 3> c{};
  double K = 0;
  std::optional<double> H;
  std::optional<double> C_const;  // <h1|v|^4> / (2 <h1|v|^2>)

  /// a0 b0 + a4 b4: the squared sound speed of the Euler symbol.
  [[nodiscard]] double sound_speed_sq() const { return a0 * b0 + a4 * b4; }
};

/// E[w^{(a),beta}_{x,alpha}] = sum_v v_alpha phi_beta(v) (f^2 - f).
inline double mean_antisymmetric_current(const EquilibriumParams& p, int alpha, int beta) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.f.size(); ++i) {
    s += p.velocities.component(i, alpha) * p.velocities.phi(beta, i) * (p.f[i] * p.f[i] - p.f[i]);
  }
  return s;
}

/// d E[w^{(a),beta}_alpha] / d m_nu through the chain rule dn = C^{-1} dm,
/// using d(f^2 - f)/d n_mu = -h1 phi_mu. Valid for any n with C invertible.
inline std::array<std::array<std::array<double, 5>, 5>, 3> current_response(const EquilibriumParams& p) {
  const Mat5d Cinv = single_site_covariance(p).inverse();
  std::array<std::array<std::array<double, 5>, 5>, 3> d{};
  for (int alpha = 0; alpha < 3; ++alpha) {
    for (int beta = 0; beta < 5; ++beta) {
      Vec5d grad_n = Vec5d::Zero();
      for (std::size_t i = 0; i < p.f.size(); ++i) {
        const double w = p.velocities.component(i, alpha) * p.velocities.phi(beta, i) * p.h1[i];
        for (int mu = 0; mu < 5; ++mu) grad_n(mu) -= w * p.velocities.phi(mu, i);
      }
      const Vec5d grad_m = Cinv * grad_n;  // C symmetric
      for (int nu = 0; nu < 5; ++nu) d[alpha][beta][nu] = grad_m(nu);
    }
  }
  return d;
}

inline CoefficientSet coefficient_set(const EquilibriumParams& p) {
  const auto& B = p.brackets;
  if (!(B.h0_v2 > 0.0)) throw RegimeError("<|v|^2 h0> must be positive");
  if (!(B.Phi > 0.0)) throw RegimeError("Phi must be positive (needs two distinct speeds)");
  CoefficientSet cs;
  cs.a0 = B.h1_v2 / B.h0_v2;
  cs.a4 = 0.5 * B.h1_v4 / B.h0_v2;
  cs.b0 = B.Phi2 / (3.0 * B.Phi);
  cs.b4 = 2.0 * B.Phi1 / (3.0 * B.Phi);
  for (int alpha = 0; alpha < 3; ++alpha) {
    const int na = alpha + 1;  // nu index of momentum component alpha
    cs.d[alpha][0][na] = -cs.a0;
    cs.d[alpha][4][na] = -cs.a4;
    cs.d[alpha][na][0] = -cs.b0;
    cs.d[alpha][na][4] = -cs.b4;
    for (int beta = 0; beta < 5; ++beta) cs.c[alpha][beta] = mean_antisymmetric_current(p, alpha, beta);
  }
  cs.K = 18.0 * B.h2_v1sq_v2sq / (B.h0_v2 * B.h0_v2);
  if (std::abs(B.h1_v2) > 1e-14 * B.h0_v2) {
    const double cc = 0.5 * B.h1_v4 / B.h1_v2;
    cs.C_const = cc;
    const double denom = B.Phi2 + cc * B.Phi1;
    if (denom != 0.0) cs.H = (B.Psi1 - 2.0 * cc * B.Psi2) / (denom * B.h0_v2);
  }
  return cs;
}

// ---------------------------------------------------------------------------
// Moments -> chemical potential

struct MomentInversion {
  ChemicalPotential n;
  int iterations = 0;
  double residual = 0.0;
};

/// Solves E^{mu_n}[I_beta] = M_beta for the active coordinates by damped
/// Newton on the strictly convex pressure; inactive coordinates of n stay at
/// their start value. Active defaults to all independent conserved functionals.
inline MomentInversion invert_moments(const Vec5d& target, const VelocitySet& V,
                                      ChemicalPotential start = {}, std::vector<int> active = {},
                                      double tolerance = 1e-12, int max_iterations = 200) {
  if (active.empty()) active = independent_conserved_indices(V);
  const auto k = static_cast<Eigen::Index>(active.size());
  auto objective = [&](const ChemicalPotential& n) {
    double value = 0.0;
    for (std::size_t i = 0; i < V.size(); ++i) {
      double lambda = 0.0;
      for (int b = 0; b < 5; ++b) lambda += n.n[b] * V.phi(b, i);
      value += lambda > 0 ? lambda + std::log1p(std::exp(-lambda)) : std::log1p(std::exp(lambda));
    }
    for (int b : active) value -= n.n[b] * target(b);
    return value;
  };
  ChemicalPotential n = start;
  MomentInversion out;
  for (int it = 0; it < max_iterations; ++it) {
    const auto p = equilibrium_params(n, V);
    const Vec5d m = mean_conserved(p);
    const Mat5d C = single_site_covariance(p);
    Eigen::VectorXd r(k);
    Eigen::MatrixXd H(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      r(i) = target(active[i]) - m(active[i]);
      for (Eigen::Index j = 0; j < k; ++j) H(i, j) = C(active[i], active[j]);
    }
    out.residual = r.cwiseAbs().maxCoeff();
    out.iterations = it;
    if (out.residual <= tolerance) {
      out.n = n;
      return out;
    }
    const Eigen::VectorXd step = H.ldlt().solve(r);
    const double f0 = objective(n);
    double t = 1.0;
    ChemicalPotential trial = n;
    for (int half = 0; half < 60; ++half, t *= 0.5) {
      trial = n;
      for (Eigen::Index i = 0; i < k; ++i) trial.n[active[i]] += t * step(i);
      // Armijo on the convex objective; the slack absorbs rounding near the optimum.
      if (objective(trial) <= f0 - 1e-4 * t * r.dot(step) + 1e-15 * std::abs(f0)) break;
    }
    n = trial;
  }
  throw RegimeError("moment inversion did not converge");
}

}  // namespace lgf
