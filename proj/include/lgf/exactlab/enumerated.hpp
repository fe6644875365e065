#pragma once

// Exact generators of the lattice gas on small boxes, states enumerated as
// bit strings (site-major, velocity-minor).

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <vector>

#include <Eigen/Sparse>

#include "lgf/equilibrium.hpp"
#include "lgf/lattice.hpp"
#include "lgf/model.hpp"
#include "lgf/observables.hpp"

namespace lgf::exactlab {

using SparseRow = Eigen::SparseMatrix<double, Eigen::RowMajor, std::int64_t>;
using VecX = Eigen::VectorXd;

inline constexpr std::uint64_t kDefaultStateCap = std::uint64_t{1} << 20;

struct SystemSpec {
  std::shared_ptr<const Lattice> lattice;
  VelocitySet V;
  double chi = 1.0;
  double collision_rate_scale = 1.0;
  bool exchange = true;
  bool collisions = true;
  bool symmetric_rates = false;  // exchange at rate chi in both directions
  std::uint64_t state_cap = kDefaultStateCap;
};

class EnumeratedSystem {
 public:
  explicit EnumeratedSystem(SystemSpec spec) : spec_(std::move(spec)) {
    if (!spec_.lattice) throw ConfigError("enumerated system needs a lattice");
    nv_ = spec_.V.size();
    sites_ = spec_.lattice->sites();
    const std::size_t bits = sites_ * nv_;
    if (bits >= 63 || (std::uint64_t{1} << bits) > spec_.state_cap) throw ConfigError("state count exceeds cap");
    if (!spec_.symmetric_rates && !(spec_.chi > 0.5 * max_speed_component(spec_.V))) throw ConfigError("chi too small for positive jump rates");
    states_ = std::uint64_t{1} << bits;
    if (spec_.collisions) table_ = build_collision_table(spec_.V);
    build();
  }

  [[nodiscard]] const SystemSpec& spec() const { return spec_; }
  [[nodiscard]] const VelocitySet& velocities() const { return spec_.V; }
  [[nodiscard]] const Lattice& lattice() const { return *spec_.lattice; }
  [[nodiscard]] std::uint64_t states() const { return states_; }
  [[nodiscard]] std::size_t sites() const { return sites_; }
  [[nodiscard]] const SparseRow& generator() const { return L_; }
  [[nodiscard]] const CollisionTable& collisions() const { return table_; }

  [[nodiscard]] SiteMask site(std::uint64_t state, std::size_t x) const {
    return static_cast<SiteMask>((state >> (x * nv_)) & ((std::uint64_t{1} << nv_) - 1));
  }
  [[nodiscard]] std::uint64_t with_site(std::uint64_t state, std::size_t x, SiteMask m) const {
    const std::uint64_t mask = ((std::uint64_t{1} << nv_) - 1) << (x * nv_);
    return (state & ~mask) | (static_cast<std::uint64_t>(m) << (x * nv_));
  }
  [[nodiscard]] LatticeState lattice_state(std::uint64_t state) const {
    auto s = empty_state(spec_.lattice);
    for (std::size_t x = 0; x < sites_; ++x) s.occ[x] = site(state, x);
    return s;
  }

  /// Every transition out of `state` as (target, rate); duplicates are kept.
  void for_each_transition(std::uint64_t state, const std::function<void(std::uint64_t, double)>& fn) const {
    const auto& lat = *spec_.lattice;
    if (spec_.exchange) {
      for (std::size_t x = 0; x < sites_; ++x) {
        const SiteMask here = site(state, x);
        if (!here) continue;
        for (int dir = 0; dir < lat.directions(); ++dir) {
          const auto y = lat.neighbor(x, dir);
          if (y == Lattice::kNone) continue;
          const auto yy = static_cast<std::size_t>(y);
          const SiteMask there = site(state, yy);
          const double sign = dir % 2 == 0 ? 1.0 : -1.0;
          for (std::size_t v = 0; v < nv_; ++v) {
            const SiteMask bit = SiteMask{1} << v;
            if (!(here & bit) || (there & bit)) continue;
            const double rate = spec_.symmetric_rates ? spec_.chi
                                                      : spec_.chi + 0.5 * sign * spec_.V.component(v, dir / 2);
            if (rate == 0.0) continue;
            std::uint64_t next = with_site(state, x, here ^ bit);
            next = with_site(next, yy, there | bit);
            fn(next, rate);
          }
        }
      }
    }
    if (spec_.collisions && spec_.collision_rate_scale > 0) {
      for (std::size_t x = 0; x < sites_; ++x) {
        const SiteMask here = site(state, x);
        for (const auto& q : table_)
          if (q.compatible(here)) fn(with_site(state, x, q.apply(here)), spec_.collision_rate_scale);
      }
    }
  }

  /// (L f)(eta) = sum rate (f(eta') - f(eta)).
  [[nodiscard]] VecX apply(const VecX& f) const { return L_ * f; }

  /// Product Bernoulli weights with marginals p.f.
  [[nodiscard]] VecX product_measure(const EquilibriumParams& p) const {
    VecX mu(static_cast<Eigen::Index>(states_));
    for (std::uint64_t s = 0; s < states_; ++s) {
      double w = 1.0;
      for (std::size_t x = 0; x < sites_; ++x) {
        const SiteMask m = site(s, x);
        for (std::size_t v = 0; v < nv_; ++v) w *= ((m >> v) & 1u) ? p.f[v] : 1.0 - p.f[v];
      }
      mu(static_cast<Eigen::Index>(s)) = w;
    }
    return mu;
  }

  /// State function x -> F(eta).
  [[nodiscard]] VecX tabulate(const std::function<double(std::uint64_t)>& F) const {
    VecX out(static_cast<Eigen::Index>(states_));
    for (std::uint64_t s = 0; s < states_; ++s) out(static_cast<Eigen::Index>(s)) = F(s);
    return out;
  }

  /// N_beta = sum_x I_beta(eta_x).
  [[nodiscard]] VecX conserved_total(int beta) const {
    return tabulate([&](std::uint64_t s) {
      double t = 0.0;
      for (std::size_t x = 0; x < sites_; ++x) t += conserved_at_site(site(s, x), spec_.V)[beta];
      return t;
    });
  }

  /// Exact conserved tuple of a whole state, the sector key.
  [[nodiscard]] ExactConserved sector_key(std::uint64_t state) const {
    ExactConserved t{};
    for (std::size_t x = 0; x < sites_; ++x) t += exact_conserved_at_site(site(state, x), spec_.V);
    return t;
  }

 private:
  static double max_speed_component(const VelocitySet& V) {
    double m = 0.0;
    for (std::size_t v = 0; v < V.size(); ++v)
      for (int a = 0; a < 3; ++a) m = std::max(m, std::abs(V.component(v, a)));
    return m;
  }

  void build() {
    std::vector<Eigen::Triplet<double, std::int64_t>> trip;
    std::vector<double> diag(states_, 0.0);
    for (std::uint64_t s = 0; s < states_; ++s) {
      for_each_transition(s, [&](std::uint64_t t, double r) {
        trip.emplace_back(static_cast<std::int64_t>(s), static_cast<std::int64_t>(t), r);
        diag[s] -= r;
      });
    }
    for (std::uint64_t s = 0; s < states_; ++s)
      trip.emplace_back(static_cast<std::int64_t>(s), static_cast<std::int64_t>(s), diag[s]);
    L_.resize(static_cast<std::int64_t>(states_), static_cast<std::int64_t>(states_));
    L_.setFromTriplets(trip.begin(), trip.end());
  }

  SystemSpec spec_;
  std::size_t nv_ = 0, sites_ = 0;
  std::uint64_t states_ = 0;
  CollisionTable table_;
  SparseRow L_;
};

inline double sparse_max_abs(const SparseRow& m) {
  double w = 0.0;
  for (Eigen::Index r = 0; r < m.outerSize(); ++r)
    for (SparseRow::InnerIterator it(m, r); it; ++it) w = std::max(w, std::abs(it.value()));
  return w;
}

/// mu-symmetric part (L + L^dagger_mu)/2, L^dagger_mu(a, b) = mu(b) L(b, a) / mu(a).
inline SparseRow symmetric_part(const SparseRow& L, const VecX& mu) {
  SparseRow adj = SparseRow(L.transpose());
  for (Eigen::Index r = 0; r < adj.outerSize(); ++r)
    for (SparseRow::InnerIterator it(adj, r); it; ++it) it.valueRef() *= mu(it.col()) / mu(r);
  return SparseRow(0.5 * (L + adj));
}

/// Gamma(f, g) = L(fg) - f Lg - g Lf from the matrix.
inline VecX carre_du_champ_matrix(const EnumeratedSystem& sys, const VecX& f, const VecX& g) {
  const VecX fg = f.cwiseProduct(g);
  return sys.apply(fg) - f.cwiseProduct(sys.apply(g)) - g.cwiseProduct(sys.apply(f));
}

/// Gamma(f, g) as the explicit bond and collision sums
///   sum_{x,e,v} b(x,x+e,v) grad f grad g + scale * sum_{x,q} grad f grad g,
/// b(x,y,v) = (chi + v.(y-x)/2) eta(x,v)(1 - eta(y,v)).
inline VecX carre_du_champ_explicit(const EnumeratedSystem& sys, const VecX& f, const VecX& g) {
  const auto& spec = sys.spec();
  const auto& lat = sys.lattice();
  const std::size_t nv = spec.V.size();
  VecX out = VecX::Zero(f.size());
  for (std::uint64_t s = 0; s < sys.states(); ++s) {
    const auto i = static_cast<Eigen::Index>(s);
    double acc = 0.0;
    if (spec.exchange) {
      for (std::size_t x = 0; x < sys.sites(); ++x)
        for (int dir = 0; dir < lat.directions(); ++dir) {
          const auto y = lat.neighbor(x, dir);
          if (y == Lattice::kNone) continue;
          const auto e = direction_vector(dir);
          for (std::size_t v = 0; v < nv; ++v) {
            const bool ex = (sys.site(s, x) >> v) & 1u, ey = (sys.site(s, static_cast<std::size_t>(y)) >> v) & 1u;
            double vdote = 0.0;
            for (int a = 0; a < 3; ++a) vdote += spec.V.component(v, a) * e[a];
            const double b = (spec.symmetric_rates ? spec.chi : spec.chi + 0.5 * vdote) * (ex ? 1 : 0) * (ey ? 0 : 1);
            if (b == 0.0) continue;
            // eta^{x,y,v}: the particle at (x, v) moved to (y, v)
            const SiteMask bit = SiteMask{1} << v;
            std::uint64_t t = sys.with_site(s, x, sys.site(s, x) ^ bit);
            t = sys.with_site(t, static_cast<std::size_t>(y), sys.site(t, static_cast<std::size_t>(y)) ^ bit);
            const auto j = static_cast<Eigen::Index>(t);
            acc += b * (f(j) - f(i)) * (g(j) - g(i));
          }
        }
    }
    if (spec.collisions) {
      for (std::size_t x = 0; x < sys.sites(); ++x)
        for (const auto& q : sys.collisions()) {
          if (!q.compatible(sys.site(s, x))) continue;
          const auto j = static_cast<Eigen::Index>(sys.with_site(s, x, q.apply(sys.site(s, x))));
          acc += spec.collision_rate_scale * (f(j) - f(i)) * (g(j) - g(i));
        }
    }
    out(i) = acc;
  }
  return out;
}

/// max over states and beta of |L I_beta(eta_x) - sum_alpha (w_{x,alpha} - w_{x-e_alpha,alpha})|
/// for one site x of a periodic system.
inline double current_identity_residual(const EnumeratedSystem& sys, std::size_t x) {
  const auto& lat = sys.lattice();
  if (!lat.periodic()) throw ConfigError("current identity needs a periodic lattice");
  const auto& V = sys.velocities();
  double worst = 0.0;
  for (int beta = 0; beta < 5; ++beta) {
    const VecX I = sys.tabulate([&](std::uint64_t s) { return conserved_at_site(sys.site(s, x), V)[beta]; });
    const VecX LI = sys.apply(I);
    for (std::uint64_t s = 0; s < sys.states(); ++s) {
      const auto st = sys.lattice_state(s);
      double div = 0.0;
      for (int a = 0; a < lat.dimension(); ++a) {
        const auto back = static_cast<std::size_t>(lat.neighbor(x, 2 * a + 1));
        const auto wx = currents(st, x, a, V, sys.spec().chi);
        const auto wb = currents(st, back, a, V, sys.spec().chi);
        div += wx.symmetric[beta] + wx.antisymmetric[beta] - wb.symmetric[beta] - wb.antisymmetric[beta];
      }
      worst = std::max(worst, std::abs(LI(static_cast<Eigen::Index>(s)) - div));
    }
  }
  return worst;
}

struct IdentityResult {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  [[nodiscard]] bool pass() const { return residual < tolerance; }
};

/// mu^T L = 0, L N_beta = 0, the current identity at every site, row sums,
/// and the carre du champ on `trials` random pairs.
inline std::vector<IdentityResult> generator_identities(const EnumeratedSystem& sys, const EquilibriumParams& p,
                                                        std::uint64_t seed, int trials = 3, double tol = 1e-10) {
  std::vector<IdentityResult> out;
  const auto& L = sys.generator();
  out.push_back({"row_sums", max_abs(L * VecX::Ones(L.cols())), tol});
  const VecX mu = sys.product_measure(p);
  out.push_back({"invariant_measure", max_abs(VecX(L.transpose() * mu)), tol});
  double cons = 0.0;
  for (int b = 0; b < 5; ++b) cons = std::max(cons, max_abs(sys.apply(sys.conserved_total(b))));
  out.push_back({"conservation", cons, tol});
  if (sys.spec().exchange && !sys.spec().symmetric_rates && sys.lattice().periodic()) {
    double cur = 0.0;
    for (std::size_t x = 0; x < sys.sites(); ++x) cur = std::max(cur, current_identity_residual(sys, x));
    out.push_back({"current_decomposition", cur, tol});
  }
  Rng rng(seed, 0);
  double gam = 0.0;
  for (int t = 0; t < trials; ++t) {
    VecX f(static_cast<Eigen::Index>(sys.states())), g(f.size());
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      f(i) = 2 * rng.uniform() - 1;
      g(i) = 2 * rng.uniform() - 1;
    }
    gam = std::max(gam, max_abs(carre_du_champ_matrix(sys, f, g) - carre_du_champ_explicit(sys, f, g)));
  }
  out.push_back({"carre_du_champ", gam, tol});
  return out;
}

}  // namespace lgf::exactlab
