#pragma once

// Currents, centered currents, Fourier fluctuation modes and covariance
// estimation.

#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <utility>
#include <vector>

#include "lgf/equilibrium.hpp"
#include "lgf/lattice.hpp"
#include "lgf/spectral.hpp"

namespace lgf {

using Vec5 = std::array<double, 5>;

struct BondCurrents {
  Vec5 symmetric{};      // chi (I(eta_{x+e}) - I(eta_x))
  Vec5 antisymmetric{};  // w^{(a)}: sum_v v_alpha phi_beta(v) b(v)
};

/// Currents across the bond (x, x+e_alpha) from the two site masks.
/// b(v) = eta(x+e,v) eta(x,v) - (eta(x+e,v) + eta(x,v))/2.
inline BondCurrents bond_currents(SiteMask here, SiteMask there, int alpha, const VelocitySet& V, double chi) {
  BondCurrents out;
  const auto a = conserved_at_site(here, V), b = conserved_at_site(there, V);
  for (int beta = 0; beta < 5; ++beta) out.symmetric[beta] = chi * (b[beta] - a[beta]);
  for (std::size_t v = 0; v < V.size(); ++v) {
    const double e0 = (here >> v) & 1u, e1 = (there >> v) & 1u;
    const double bv = e1 * e0 - 0.5 * (e1 + e0);
    if (bv == 0.0) continue;
    const double va = V.component(v, alpha);
    for (int beta = 0; beta < 5; ++beta) out.antisymmetric[beta] += va * V.phi(beta, v) * bv;
  }
  return out;
}

inline BondCurrents currents(const LatticeState& s, std::size_t x, int alpha, const VelocitySet& V, double chi) {
  const auto y = s.lattice->neighbor(x, 2 * alpha);
  if (y == Lattice::kNone) throw ConfigError("bond leaves the lattice");
  return bond_currents(s.occ[x], s.occ[static_cast<std::size_t>(y)], alpha, V, chi);
}

/// g^beta_alpha = w^{(a),beta} - c^beta_alpha - (1/2) sum_nu d_alpha^{beta,nu} (I~_nu(x) + I~_nu(x+e)),
/// with I~ = I - m for the reference mean m.
inline Vec5 centered_current(SiteMask here, SiteMask there, int alpha, const VelocitySet& V, const CoefficientSet& cs,
                             const Vec5d& m) {
  const auto w = bond_currents(here, there, alpha, V, 0.0).antisymmetric;
  const auto a = conserved_at_site(here, V), b = conserved_at_site(there, V);
  Vec5 g{};
  for (int beta = 0; beta < 5; ++beta) {
    double s = w[beta] - cs.c[alpha][beta];
    for (int nu = 0; nu < 5; ++nu) s -= 0.5 * cs.d[alpha][beta][nu] * ((a[nu] - m(nu)) + (b[nu] - m(nu)));
    g[beta] = s;
  }
  return g;
}

inline Vec5 centered_current_g(const LatticeState& s, std::size_t x, int alpha, const VelocitySet& V,
                               const CoefficientSet& cs, const Vec5d& m) {
  const auto y = s.lattice->neighbor(x, 2 * alpha);
  if (y == Lattice::kNone) throw ConfigError("bond leaves the lattice");
  return centered_current(s.occ[x], s.occ[static_cast<std::size_t>(y)], alpha, V, cs, m);
}

// ---------------------------------------------------------------------------
// Fourier modes

using ModeIndex = std::array<int, 3>;

/// Macroscopic wave vector of grid mode z on a box of side 2L+1 with spacing eps.
inline Vec3d k_macro(const ModeIndex& z, int half_width, double epsilon) {
  const double f = 2.0 * std::acos(-1.0) / ((2.0 * half_width + 1.0) * epsilon);
  return Vec3d(f * z[0], f * z[1], f * z[2]);
}

struct FluctuationSample {
  ModeIndex z{};
  Vec3d k = Vec3d::Zero();
  Vec5c zhat = Vec5c::Zero();
  double t = 0.0;
};

/// zhat(z) = eps^{3/2} sum_x exp(i 2 pi z.x / (2L+1)) (I(eta_x) - m), x centered.
/// Modes are evaluated by a staged separable sum: first over x1 for each
/// distinct z1, then over x2 for each distinct (z1, z2), then over x3.
class FourierProjector {
 public:
  FourierProjector(const Lattice& lattice, std::vector<ModeIndex> modes, double epsilon)
      : modes_(std::move(modes)), epsilon_(epsilon), extent_(lattice.extent()), dim_(lattice.dimension()) {
    for (int a = 0; a < 3; ++a) {
      if (a < dim_ && extent_[a] % 2 == 0) throw ConfigError("Fourier modes need an odd box side");
    }
    for (const auto& z : modes_) {
      if (z == ModeIndex{0, 0, 0}) throw ConfigError("mode k = 0 carries the conserved totals");
      for (int a = 0; a < 3; ++a) {
        const int half = extent_[a] / 2;
        if (std::abs(z[a]) > half) throw ConfigError("mode outside the grid");
      }
    }
    for (int a = 0; a < 3; ++a) {
      const int n = extent_[a];
      std::map<int, std::size_t> seen;
      for (const auto& z : modes_) {
        if (seen.count(z[a])) continue;
        seen.emplace(z[a], phase_[a].size());
        std::vector<cplx> tab(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
          const double ang = 2.0 * std::acos(-1.0) * z[a] * (i - n / 2) / n;
          tab[static_cast<std::size_t>(i)] = cplx(std::cos(ang), std::sin(ang));
        }
        phase_[a].push_back(std::move(tab));
        value_[a].push_back(z[a]);
      }
    }
    std::map<std::pair<int, int>, std::size_t> pairs;
    for (const auto& z : modes_) {
      const auto key = std::pair{z[0], z[1]};
      if (!pairs.count(key)) {
        pairs.emplace(key, pair_keys_.size());
        pair_keys_.push_back({index_of(0, z[0]), index_of(1, z[1])});
      }
      mode_pair_.push_back(pairs.at(key));
      mode_z3_.push_back(index_of(2, z[2]));
    }
    half_width_ = extent_[0] / 2;
  }

  [[nodiscard]] const std::vector<ModeIndex>& modes() const { return modes_; }

  std::vector<FluctuationSample> operator()(const LatticeState& s, const ConservedLookup& lookup, const Vec5d& m) const {
    const int n1 = extent_[0], n2 = extent_[1], n3 = extent_[2];
    const auto rows = static_cast<std::size_t>(n2) * static_cast<std::size_t>(n3);
    // Per-site fluctuation I - m, laid out [site][beta].
    std::vector<double> field(s.occ.size() * 5);
    for (std::size_t i = 0; i < s.occ.size(); ++i) {
      const auto I = lookup(s.occ[i]);
      for (int b = 0; b < 5; ++b) field[i * 5 + b] = I[b] - m(b);
    }
    // Stage 1: sum over x1, per distinct z1; layout [z1][row][beta].
    const std::size_t nz1 = phase_[0].size();
    std::vector<cplx> s1(nz1 * rows * 5, cplx(0.0));
    for (std::size_t r = 0; r < rows; ++r) {
      const double* base = field.data() + r * static_cast<std::size_t>(n1) * 5;
      for (std::size_t a = 0; a < nz1; ++a) {
        const auto& ph = phase_[0][a];
        std::array<double, 5> re{}, im{};
        for (int x1 = 0; x1 < n1; ++x1) {
          const cplx p = ph[static_cast<std::size_t>(x1)];
          const double* f = base + static_cast<std::size_t>(x1) * 5;
          for (int b = 0; b < 5; ++b) {
            re[b] += p.real() * f[b];
            im[b] += p.imag() * f[b];
          }
        }
        for (int b = 0; b < 5; ++b) s1[(a * rows + r) * 5 + b] = cplx(re[b], im[b]);
      }
    }
    // Stage 2: sum over x2 per distinct (z1, z2); layout [pair][x3][beta].
    std::vector<cplx> s2(pair_keys_.size() * static_cast<std::size_t>(n3) * 5, cplx(0.0));
    for (std::size_t q = 0; q < pair_keys_.size(); ++q) {
      const auto [a, b2] = pair_keys_[q];
      const auto& ph = phase_[1][b2];
      for (int x3 = 0; x3 < n3; ++x3)
        for (int x2 = 0; x2 < n2; ++x2) {
          const std::size_t r = static_cast<std::size_t>(x2) + static_cast<std::size_t>(n2) * static_cast<std::size_t>(x3);
          const cplx p = ph[static_cast<std::size_t>(x2)];
          for (int b = 0; b < 5; ++b)
            s2[(q * static_cast<std::size_t>(n3) + static_cast<std::size_t>(x3)) * 5 + b] += p * s1[(a * rows + r) * 5 + b];
        }
    }
    // Stage 3: sum over x3 per mode.
    const double scale = std::pow(epsilon_, 1.5);
    std::vector<FluctuationSample> out;
    out.reserve(modes_.size());
    for (std::size_t i = 0; i < modes_.size(); ++i) {
      FluctuationSample fs;
      fs.z = modes_[i];
      fs.k = k_macro(modes_[i], half_width_, epsilon_);
      fs.t = s.time;
      const auto& ph = phase_[2][mode_z3_[i]];
      for (int x3 = 0; x3 < n3; ++x3) {
        const cplx p = ph[static_cast<std::size_t>(x3)];
        for (int b = 0; b < 5; ++b)
          fs.zhat(b) += p * s2[(mode_pair_[i] * static_cast<std::size_t>(n3) + static_cast<std::size_t>(x3)) * 5 + b];
      }
      fs.zhat *= scale;
      out.push_back(fs);
    }
    return out;
  }

 private:
  [[nodiscard]] std::size_t index_of(int axis, int value) const {
    for (std::size_t i = 0; i < value_[axis].size(); ++i)
      if (value_[axis][i] == value) return i;
    throw InvariantViolation("mode component not tabulated");
  }

  std::vector<ModeIndex> modes_;
  double epsilon_;
  std::array<int, 3> extent_;
  int dim_;
  int half_width_ = 0;
  std::array<std::vector<std::vector<cplx>>, 3> phase_;
  std::array<std::vector<int>, 3> value_;
  std::vector<std::pair<std::size_t, std::size_t>> pair_keys_;
  std::vector<std::size_t> mode_pair_;
  std::vector<std::size_t> mode_z3_;
};

inline std::vector<FluctuationSample> fourier_fluctuation(const LatticeState& s, const std::vector<ModeIndex>& modes,
                                                          const VelocitySet& V, const Vec5d& m, double epsilon) {
  return FourierProjector(*s.lattice, modes, epsilon)(s, ConservedLookup(V), m);
}

/// Amplitude with the Euler transport removed: exp(+(t/eps) E^(k)) zhat.
inline Vec5c transported_field(const FluctuationSample& s, const CoefficientSet& cs, double epsilon) {
  if (s.t == 0.0) return s.zhat;
  return expm(kTransportSign * (s.t / epsilon) * euler_symbol(s.k, cs)) * s.zhat;
}

// ---------------------------------------------------------------------------
// Covariance estimation

/// Running estimate of E[x y^*] for centered 5-vectors with per-entry
/// standard errors of the real and imaginary parts.
class CovarianceAccumulator {
 public:
  void add(const Vec5c& x, const Vec5c& y) {
    const Mat5c p = x * y.adjoint();
    sum_ += p;
    sum_sq_re_ += p.real().cwiseAbs2();
    sum_sq_im_ += p.imag().cwiseAbs2();
    ++n_;
  }
  void add(const Vec5c& x) { add(x, x); }
  void merge(const CovarianceAccumulator& o) {
    sum_ += o.sum_;
    sum_sq_re_ += o.sum_sq_re_;
    sum_sq_im_ += o.sum_sq_im_;
    n_ += o.n_;
  }

  [[nodiscard]] std::size_t count() const { return n_; }
  [[nodiscard]] Mat5c mean() const { return n_ ? Mat5c(sum_ / static_cast<double>(n_)) : Mat5c::Zero(); }

  [[nodiscard]] Eigen::Matrix<double, 5, 5> stderr_re() const { return stderr_of(sum_.real(), sum_sq_re_); }
  [[nodiscard]] Eigen::Matrix<double, 5, 5> stderr_im() const { return stderr_of(sum_.imag(), sum_sq_im_); }
  /// sqrt(se_re^2 + se_im^2).
  [[nodiscard]] Eigen::Matrix<double, 5, 5> stderr() const {
    return (stderr_re().cwiseAbs2() + stderr_im().cwiseAbs2()).cwiseSqrt();
  }

  /// Largest |z| over real and imaginary parts against a prediction; entries
  /// with zero standard error must match exactly (else the score is infinite).
  [[nodiscard]] double max_z_score(const Mat5c& expected, Mat5c* scaled = nullptr) const {
    const Mat5c mu = mean();
    const auto sr = stderr_re(), si = stderr_im();
    double worst = 0.0;
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) {
        const double dr = mu(i, j).real() - expected(i, j).real();
        const double di = mu(i, j).imag() - expected(i, j).imag();
        const double zr = sr(i, j) > 0 ? dr / sr(i, j) : (std::abs(dr) <= 1e-12 * (1 + std::abs(expected(i, j))) ? 0.0 : INFINITY);
        const double zi = si(i, j) > 0 ? di / si(i, j) : (std::abs(di) <= 1e-12 * (1 + std::abs(expected(i, j))) ? 0.0 : INFINITY);
        if (scaled) (*scaled)(i, j) = cplx(zr, zi);
        worst = std::max({worst, std::abs(zr), std::abs(zi)});
      }
    return worst;
  }

 private:
  [[nodiscard]] Eigen::Matrix<double, 5, 5> stderr_of(const Eigen::Matrix<double, 5, 5>& s,
                                                      const Eigen::Matrix<double, 5, 5>& sq) const {
    if (n_ < 2) return Eigen::Matrix<double, 5, 5>::Constant(INFINITY);
    const double n = static_cast<double>(n_);
    const Eigen::Matrix<double, 5, 5> mean = s / n;
    const Eigen::Matrix<double, 5, 5> var = ((sq / n) - mean.cwiseAbs2()).cwiseMax(0.0) * (n / (n - 1.0));
    return (var / n).cwiseSqrt();
  }

  Mat5c sum_ = Mat5c::Zero();
  Eigen::Matrix<double, 5, 5> sum_sq_re_ = Eigen::Matrix<double, 5, 5>::Zero();
  Eigen::Matrix<double, 5, 5> sum_sq_im_ = Eigen::Matrix<double, 5, 5>::Zero();
  std::size_t n_ = 0;
};

inline void write_covariance_csv_header(std::ostream& os) { os << "z1,z2,z3,beta,nu,re,im,stderr,nsamples\n"; }

/// One CSV row per (beta, nu); `scale` divides the estimate and its error.
inline void write_covariance_csv(std::ostream& os, const ModeIndex& z, const CovarianceAccumulator& acc,
                                 double scale = 1.0) {
  const Mat5c mu = acc.mean() / scale;
  const Eigen::Matrix<double, 5, 5> se = acc.stderr() / scale;
  char buf[256];
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%d,%.17g,%.17g,%.17g,%zu\n", z[0], z[1], z[2], i, j, mu(i, j).real(),
                    mu(i, j).imag(), se(i, j), acc.count());
      os << buf;
    }
}

}  // namespace lgf
