#pragma once

// Exact per-mode simulation of the limiting Ornstein-Uhlenbeck field
//   d xi = N xi dt + B dW,  stationary covariance C.
// Amplitudes follow the transported convention of observables.hpp, so the
// lag covariance is E[xi(t + tau) xi(t)^*] = exp(N tau) C.

#include <cmath>
#include <complex>
#include <vector>

#include "lgf/linalg.hpp"
#include "lgf/observables.hpp"
#include "lgf/rng.hpp"
#include "lgf/spectral.hpp"

namespace lgf {

struct OUTransition {
  double delta = 0.0;
  Mat5c F = Mat5c::Identity();      // exp(N delta)
  Mat5c Sigma = Mat5c::Zero();      // C - F C F^*
  Mat5c Sigma_root = Mat5c::Zero();
  double sigma_min_eigenvalue = 0.0;  // before clipping
};

inline OUTransition ou_transition(const Mat5c& N, const Mat5c& C, double delta) {
  if (!(delta > 0.0)) throw ConfigError("OU step must be positive");
  OUTransition t;
  t.delta = delta;
  t.F = expm(delta * N);
  t.Sigma = hermitian_part(C - t.F * C * t.F.adjoint());
  const auto f = hermitian_sqrt_psd(t.Sigma, 1e-12);
  t.Sigma_root = f.root;
  t.sigma_min_eigenvalue = f.min_eigenvalue;
  return t;
}

struct OUModeState {
  Vec3d k = Vec3d::Zero();
  Vec5c xi = Vec5c::Zero();
  OUTransition cached;
  double t = 0.0;
};

inline Vec5c complex_normal_vector(Rng& rng) {
  Vec5c w;
  for (int i = 0; i < 5; ++i) w(i) = rng.complex_normal();
  return w;
}

/// xi ~ CN(0, C). Throws RegimeError when C is not PSD.
inline OUModeState ou_init_stationary(const Vec3d& k, const Mat5c& C, Rng& rng) {
  const auto root = hermitian_sqrt_psd(C, 1e-12).root;
  OUModeState s;
  s.k = k;
  s.xi = root * complex_normal_vector(rng);
  return s;
}

inline void ou_step(OUModeState& s, Rng& rng) {
  s.xi = s.cached.F * s.xi + s.cached.Sigma_root * complex_normal_vector(rng);
  s.t += s.cached.delta;
}

/// max(|F_{2d} - F_d^2|, |Sigma_{2d} - (F_d Sigma_d F_d^* + Sigma_d)|).
inline double ou_composition_residual(const Mat5c& N, const Mat5c& C, double delta) {
  const auto one = ou_transition(N, C, delta);
  const auto two = ou_transition(N, C, 2 * delta);
  const double rf = max_abs(two.F - one.F * one.F);
  const double rs = max_abs(two.Sigma - (one.F * one.Sigma * one.F.adjoint() + one.Sigma));
  return std::max(rf, rs);
}

inline Mat5c ou_lag_covariance(const Mat5c& N, const Mat5c& C, double tau) { return expm(tau * N) * C; }

struct OULagEntry {
  int steps = 0;
  double tau = 0.0;
  CovarianceAccumulator acc;
  Mat5c predicted;
  double max_z = 0.0;
};

struct OUReport {
  Vec3d k = Vec3d::Zero();
  double delta = 0.0;
  std::size_t replicas = 0;
  double composition_residual = 0.0;
  std::vector<OULagEntry> lags;
  [[nodiscard]] double max_z() const {
    double w = 0.0;
    for (const auto& l : lags) w = std::max(w, l.max_z);
    return w;
  }
};

/// Independent stationary replicas, each stepped to the largest lag; one
/// (xi(tau), xi(0)) pair per replica and lag. `lag_steps` must contain 0.
inline OUReport ou_covariance_report(const Vec3d& k, const Mat5c& N, const Mat5c& C, double delta,
                                     const std::vector<int>& lag_steps, std::size_t replicas, Rng& rng) {
  if (lag_steps.size() < 2) throw ConfigError("need at least two lags");
  bool has_zero = false;
  int last = 0;
  for (int s : lag_steps) {
    if (s < 0) throw ConfigError("negative lag");
    has_zero |= s == 0;
    last = std::max(last, s);
  }
  if (!has_zero) throw ConfigError("lags must include 0");
  OUReport r;
  r.k = k;
  r.delta = delta;
  r.replicas = replicas;
  r.composition_residual = ou_composition_residual(N, C, delta);
  const auto tr = ou_transition(N, C, delta);
  r.lags.resize(lag_steps.size());
  for (std::size_t i = 0; i < lag_steps.size(); ++i) {
    r.lags[i].steps = lag_steps[i];
    r.lags[i].tau = lag_steps[i] * delta;
    r.lags[i].predicted = ou_lag_covariance(N, C, r.lags[i].tau);
  }
  for (std::size_t rep = 0; rep < replicas; ++rep) {
    auto s = ou_init_stationary(k, C, rng);
    s.cached = tr;
    const Vec5c x0 = s.xi;
    for (int step = 0; step <= last; ++step) {
      for (auto& l : r.lags)
        if (l.steps == step) l.acc.add(s.xi, x0);
      if (step < last) ou_step(s, rng);
    }
  }
  for (auto& l : r.lags) l.max_z = l.acc.max_z_score(l.predicted);
  return r;
}

// ---------------------------------------------------------------------------
// Field-level bookkeeping: modes live on a half grid and are mirrored.

/// Nonzero z with |z_a| <= L whose first nonzero component is positive.
inline std::vector<ModeIndex> half_grid(int L) {
  std::vector<ModeIndex> out;
  for (int a = -L; a <= L; ++a)
    for (int b = -L; b <= L; ++b)
      for (int c = -L; c <= L; ++c) {
        const ModeIndex z{a, b, c};
        const int lead = a != 0 ? a : (b != 0 ? b : c);
        if (lead > 0) out.push_back(z);
      }
  return out;
}

struct ModeAmplitude {
  ModeIndex z;
  Vec5c xi;
};

/// Appends (-z, conj xi) for every entry.
inline std::vector<ModeAmplitude> mirror_modes(const std::vector<ModeAmplitude>& half) {
  std::vector<ModeAmplitude> out = half;
  for (const auto& m : half) out.push_back({{-m.z[0], -m.z[1], -m.z[2]}, m.xi.conjugate()});
  return out;
}

/// Inverse transform at a centered lattice point of side 2L+1.
inline Vec5c synthesize_field(const std::vector<ModeAmplitude>& modes, int L, const std::array<int, 3>& x) {
  const double w = 2.0 * std::acos(-1.0) / (2 * L + 1);
  Vec5c out = Vec5c::Zero();
  for (const auto& m : modes) {
    const double ang = -w * (m.z[0] * x[0] + m.z[1] * x[1] + m.z[2] * x[2]);
    out += std::polar(1.0, ang) * m.xi;
  }
  return out;
}

}  // namespace lgf
