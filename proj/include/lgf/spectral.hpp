#pragma once

// Fourier symbols of the linearized Euler and Navier-Stokes operators, their
// eigen-analysis, the projection onto the commutant of the Euler symbol, and
// the noise factor fixed by the fluctuation-dissipation relation.

#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lgf/equilibrium.hpp"
#include "lgf/errors.hpp"
#include "lgf/linalg.hpp"

namespace lgf {

using Vec3d = Eigen::Vector3d;

/// Mode amplitudes evolve under the Euler flow as zhat(t) = exp(-(t/eps) E^(k)) zhat(0);
/// transport back multiplies by exp(kTransportSign * (t/eps) E^(k)). The OU
/// amplitude obeys d xi = N^ xi dt + B^ dW, so its lag covariance is exp(N^ tau) C.
inline constexpr double kTransportSign = +1.0;

struct ModeMatrix {
  Vec3d k = Vec3d::Zero();
  Mat5c entries = Mat5c::Zero();
};

/// E^(k) = -i [[0, a0 k^T, 0], [b0 k, 0, b4 k], [0, a4 k^T, 0]].
inline Mat5c euler_symbol(const Vec3d& k, const CoefficientSet& cs) {
  Mat5c e = Mat5c::Zero();
  const cplx mi(0.0, -1.0);
  for (int a = 0; a < 3; ++a) {
    e(0, 1 + a) = mi * cs.a0 * k(a);
    e(4, 1 + a) = mi * cs.a4 * k(a);
    e(1 + a, 0) = mi * cs.b0 * k(a);
    e(1 + a, 4) = mi * cs.b4 * k(a);
  }
  return e;
}

inline Mat5c to_complex(const Mat5d& m) { return m.cast<cplx>(); }

// ---------------------------------------------------------------------------
// Eigen-analysis

/// A = P^{-1} diag(eigenvalues) P; block[i] labels the equivalence class of
/// eigenvalue i, classes numbered by first occurrence.
struct EigenSystem {
  Vec5c eigenvalues = Vec5c::Zero();
  Mat5c P = Mat5c::Identity();
  Mat5c Pinv = Mat5c::Identity();
  std::array<int, 5> block{};
  int blocks = 1;
  double condition = 1.0;
  double residual = 0.0;

  [[nodiscard]] Mat5c mask() const {
    Mat5c k = Mat5c::Zero();
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) k(i, j) = block[i] == block[j] ? 1.0 : 0.0;
    return k;
  }
  [[nodiscard]] Mat5c reconstruct() const { return Pinv * eigenvalues.asDiagonal() * P; }
};

struct EigenOptions {
  double tau_eig = 1e-9;
  double condition_cap = 1e8;
  double residual_tol = 1e-10;
};

namespace detail {

inline void partition_eigenvalues(EigenSystem& es, double tau_eig) {
  double rho = 0.0;
  for (int i = 0; i < 5; ++i) rho = std::max(rho, std::abs(es.eigenvalues(i)));
  const double tol = tau_eig * (1.0 + rho);
  std::array<int, 5> parent{};
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (int i = 0; i < 5; ++i)
    for (int j = i + 1; j < 5; ++j)
      if (std::abs(es.eigenvalues(i) - es.eigenvalues(j)) <= tol) parent[find(j)] = find(i);
  std::array<int, 5> label;
  label.fill(-1);
  es.blocks = 0;
  for (int i = 0; i < 5; ++i) {
    const int r = find(i);
    if (label[r] < 0) label[r] = es.blocks++;
    es.block[i] = label[r];
  }
}

inline void finish(EigenSystem& es, const Mat5c& a, const EigenOptions& opt) {
  Eigen::JacobiSVD<Mat5c> svd(es.Pinv);
  const auto& sv = svd.singularValues();
  es.condition = sv(4) > 0.0 ? sv(0) / sv(4) : std::numeric_limits<double>::infinity();
  if (!(es.condition <= opt.condition_cap)) throw NonDiagonalizableError("eigenvector matrix is ill-conditioned");
  es.P = es.Pinv.inverse();
  es.residual = max_abs(es.reconstruct() - a);
  const double scale = max_abs(a);
  if (es.residual > opt.residual_tol * std::max(scale, 1e-300) && es.residual > 0.0) {
    throw NonDiagonalizableError("eigen decomposition residual too large");
  }
  partition_eigenvalues(es, opt.tau_eig);
}

}  // namespace detail

/// General dense route (complex Schur via Eigen).
inline EigenSystem eigen_decompose(const Mat5c& a, const EigenOptions& opt = {}) {
  EigenSystem es;
  if (max_abs(a) == 0.0) {
    detail::partition_eigenvalues(es, opt.tau_eig);
    return es;
  }
  Eigen::ComplexEigenSolver<Mat5c> solver(a, true);
  if (solver.info() != Eigen::Success) throw NonDiagonalizableError("eigensolver did not converge");
  es.eigenvalues = solver.eigenvalues();
  es.Pinv = solver.eigenvectors();
  for (int j = 0; j < 5; ++j) es.Pinv.col(j).normalize();
  detail::finish(es, a, opt);
  return es;
}

/// Analytic eigenvectors of E^(k): two transverse momentum modes, the
/// density-energy null mode (b4, 0, -b0) and the acoustic pair
/// (a0, +-c k/|k|, a4) with eigenvalue -+ i c |k|, c^2 = a0 b0 + a4 b4.
/// Falls back to the dense route when c^2 <= 0.
inline EigenSystem euler_eigensystem(const Vec3d& k, const CoefficientSet& cs, const EigenOptions& opt = {}) {
  const Mat5c e = euler_symbol(k, cs);
  const double kn = k.norm();
  const double c2 = cs.sound_speed_sq();
  if (kn == 0.0 || max_abs(e) == 0.0) return eigen_decompose(e, opt);
  if (!(c2 > 0.0)) return eigen_decompose(e, opt);
  const double c = std::sqrt(c2);
  const Vec3d u = k / kn;
  // Orthonormal transverse pair.
  Vec3d seed = std::abs(u(0)) < 0.9 ? Vec3d::UnitX() : Vec3d::UnitY();
  const Vec3d t1 = (seed - seed.dot(u) * u).normalized();
  const Vec3d t2 = u.cross(t1);
  EigenSystem es;
  Mat5c R = Mat5c::Zero();
  for (int a = 0; a < 3; ++a) {
    R(1 + a, 0) = t1(a);
    R(1 + a, 1) = t2(a);
  }
  R(0, 2) = cs.b4;
  R(4, 2) = -cs.b0;
  for (int s = 0; s < 2; ++s) {
    const double sigma = s == 0 ? c : -c;
    const int col = 3 + s;
    R(0, col) = cs.a0;
    R(4, col) = cs.a4;
    for (int a = 0; a < 3; ++a) R(1 + a, col) = sigma * u(a);
    es.eigenvalues(col) = cplx(0.0, -kn * sigma);
  }
  for (int j = 0; j < 5; ++j) R.col(j).normalize();
  es.Pinv = R;
  detail::finish(es, e, opt);
  return es;
}

// ---------------------------------------------------------------------------
// Commutant projection and time averaging

/// Pi_A(M) = P^{-1} (K o (P M P^{-1})) P.
inline Mat5c commutant_project(const EigenSystem& es, const Mat5c& m) {
  const Mat5c inner = es.P * m * es.Pinv;
  return es.Pinv * inner.cwiseProduct(es.mask()) * es.P;
}

namespace detail {

/// Gauss-Legendre nodes and weights on [0, 1].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre01(int n) {
  std::vector<double> x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
  const double pi = std::acos(-1.0);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[static_cast<std::size_t>(i)] = 0.5 * (1.0 - z);
    w[static_cast<std::size_t>(i)] = 1.0 / ((1.0 - z * z) * dp * dp);
  }
  return {x, w};
}

}  // namespace detail

/// (1/T) int_0^T e^{sA} M e^{-sA} ds by composite 10-point Gauss-Legendre on
/// panels of width <= step. Throws ConfigError if step > pi / (4 max|lambda|).
inline Mat5c time_average_conjugation(const Mat5c& a, const Mat5c& m, double T, double step) {
  if (!(T > 0.0)) throw ConfigError("averaging horizon must be positive");
  if (!(step > 0.0)) throw ConfigError("quadrature step must be positive");
  Eigen::ComplexEigenSolver<Mat5c> ev(a, false);
  const double lmax = ev.eigenvalues().cwiseAbs().maxCoeff();
  if (lmax > 0.0 && step > std::acos(-1.0) / (4.0 * lmax)) {
    throw ConfigError("quadrature step under-resolves the oscillation period");
  }
  const auto panels = static_cast<long>(std::ceil(T / step - 1e-12));
  const double h = T / static_cast<double>(panels);
  const auto [x, w] = detail::gauss_legendre01(10);
  std::vector<Mat5c> fwd(x.size()), bwd(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    fwd[j] = expm(x[j] * h * a);
    bwd[j] = expm(-x[j] * h * a);
  }
  const Mat5c Uf = expm(h * a), Ub = expm(-h * a);
  Mat5c left = Mat5c::Identity(), right = Mat5c::Identity();  // e^{phA}, e^{-phA}
  Mat5c acc = Mat5c::Zero();
  for (long p = 0; p < panels; ++p) {
    const Mat5c inner = left * m * right;
    Mat5c panel = Mat5c::Zero();
    for (std::size_t j = 0; j < x.size(); ++j) panel += w[j] * (fwd[j] * inner * bwd[j]);
    acc += panel;
    left = left * Uf;
    right = Ub * right;
  }
  return acc * (h / T);
}

// ---------------------------------------------------------------------------
// Diffusion

/// D_{alpha gamma} = Dbar_{alpha gamma} + chi delta_{alpha gamma} Id_5.
struct DiffusionTensor {
  std::array<std::array<Mat5d, 3>, 3> Dbar;
  double chi = 1.0;

  DiffusionTensor() {
    for (auto& row : Dbar)
      for (auto& m : row) m.setZero();
  }
  explicit DiffusionTensor(double chi_) : DiffusionTensor() { chi = chi_; }

  [[nodiscard]] Mat5d full(int alpha, int gamma) const {
    Mat5d m = Dbar[alpha][gamma];
    if (alpha == gamma) m += chi * Mat5d::Identity();
    return m;
  }
  /// sum_{alpha gamma} D_{alpha gamma} k_alpha k_gamma.
  [[nodiscard]] Mat5d contract(const Vec3d& k) const {
    Mat5d s = Mat5d::Zero();
    for (int a = 0; a < 3; ++a)
      for (int g = 0; g < 3; ++g) s += full(a, g) * (k(a) * k(g));
    return s;
  }
  /// D^(k) = -sum D_{alpha gamma} k_alpha k_gamma.
  [[nodiscard]] Mat5c symbol(const Vec3d& k) const { return to_complex(-contract(k)); }
};

/// D_{alpha alpha} = chi Id + G C^{-1}, off-diagonal zero: a tensor with D C symmetric
/// for symmetric G.
inline DiffusionTensor compatible_diffusion(double chi, const Mat5d& G, const Mat5d& C) {
  DiffusionTensor d(chi);
  const Mat5d g = G * C.inverse();
  for (int a = 0; a < 3; ++a) d.Dbar[a][a] = g;
  return d;
}

/// Minimum over a deterministic Fibonacci sphere of the smallest real part of
/// the eigenvalues of sum D k k, |k| = 1. Positive means the symbol is
/// positive definite in the similarity-invariant sense.
inline double symbol_positivity(const DiffusionTensor& d, int samples = 200) {
  double worst = std::numeric_limits<double>::infinity();
  const double golden = std::acos(-1.0) * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < samples; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / samples;
    const double r = std::sqrt(1.0 - z * z);
    const Vec3d k(r * std::cos(golden * i), r * std::sin(golden * i), z);
    Eigen::EigenSolver<Mat5d> es(d.contract(k), false);
    worst = std::min(worst, es.eigenvalues().real().minCoeff());
  }
  return worst;
}

inline void validate(const DiffusionTensor& d) {
  if (!(d.chi > 0.0)) throw ConfigError("chi must be positive");
  if (!(symbol_positivity(d) > 0.0)) throw ConfigError("diffusion symbol is not positive definite");
}

struct ProjectedDiffusion {
  Vec3d k = Vec3d::Zero();
  Mat5c E, D, N;
  EigenSystem eigen;
  double dissipation_min = 0.0;     // min eigenvalue of -(N C + C N^*)
  double hermitian_abscissa = 0.0;  // max eigenvalue of (N + N^*)/2, diagnostic only
};

/// N^(k) = Pi_{E^(k)}(D^(k)); validates that -(N C + C N^*) is positive
/// definite for k != 0 (dissipation in the C^{-1} inner product).
inline ProjectedDiffusion projected_diffusion(const Vec3d& k, const CoefficientSet& cs, const DiffusionTensor& d,
                                              const Mat5d& C, const EigenOptions& opt = {}) {
  ProjectedDiffusion out;
  out.k = k;
  out.E = euler_symbol(k, cs);
  out.D = d.symbol(k);
  out.eigen = euler_eigensystem(k, cs, opt);
  out.N = commutant_project(out.eigen, out.D);
  const Mat5c Cc = to_complex(C);
  const Mat5c S = -(out.N * Cc + Cc * out.N.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat5c> es(hermitian_part(S), Eigen::EigenvaluesOnly);
  out.dissipation_min = es.eigenvalues().minCoeff();
  out.hermitian_abscissa = hermitian_range(out.N).second;
  if (k.norm() > 0.0 && !(out.dissipation_min > 1e-12 * es.eigenvalues().cwiseAbs().maxCoeff())) {
    throw RegimeError("projected diffusion is not dissipative");
  }
  return out;
}

struct NoiseFactor {
  Mat5c B;
  double hermiticity_defect = 0.0;  // |N C - (N C)^*|
  double lyapunov_residual = 0.0;   // |N C + C N^* + B B^*|
};

/// B^ = hermitian square root of -(N C + C N^*).
inline NoiseFactor noise_factor(const Mat5c& N, const Mat5d& C, double tol = 1e-12) {
  const Mat5c Cc = to_complex(C);
  const Mat5c NC = N * Cc;
  const Mat5c S = -(NC + Cc * N.adjoint());
  NoiseFactor out;
  out.B = hermitian_sqrt_psd(S, tol).root;
  out.hermiticity_defect = max_abs(NC - NC.adjoint());
  out.lyapunov_residual = max_abs(NC + Cc * N.adjoint() + out.B * out.B.adjoint());
  return out;
}

// ---------------------------------------------------------------------------
// Dumps

inline nlohmann::json matrix_json(const Mat5c& m) {
  auto rows = nlohmann::json::array();
  for (int i = 0; i < 5; ++i) {
    auto row = nlohmann::json::array();
    for (int j = 0; j < 5; ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json mode_record(const ProjectedDiffusion& pd, const Mat5d& C, const NoiseFactor& nf) {
  nlohmann::json j;
  j["k"] = {pd.k(0), pd.k(1), pd.k(2)};
  j["E"] = matrix_json(pd.E);
  j["C"] = matrix_json(to_complex(C));
  j["D"] = matrix_json(pd.D);
  j["N"] = matrix_json(pd.N);
  j["B"] = matrix_json(nf.B);
  auto ev = nlohmann::json::array();
  for (int i = 0; i < 5; ++i) ev.push_back({pd.eigen.eigenvalues(i).real(), pd.eigen.eigenvalues(i).imag()});
  j["eigenvalues"] = std::move(ev);
  j["blocks"] = pd.eigen.block;
  j["eigen_condition"] = pd.eigen.condition;
  j["eigen_residual"] = pd.eigen.residual;
  j["dissipation_min"] = pd.dissipation_min;
  j["hermitian_abscissa"] = pd.hermitian_abscissa;
  j["hermiticity_defect"] = nf.hermiticity_defect;
  j["lyapunov_residual"] = nf.lyapunov_residual;
  return j;
}

}  // namespace lgf
