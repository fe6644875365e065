#pragma once

// Box lattices with nearest-neighbour tables, occupancy states and product
// measure sampling.

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "lgf/equilibrium.hpp"
#include "lgf/errors.hpp"
#include "lgf/model.hpp"
#include "lgf/rng.hpp"

namespace lgf {

/// Row-major box {0..n_1-1} x ... with optional periodic wrap. Direction
/// index dir = 2*alpha + s is +e_alpha for s = 0 and -e_alpha for s = 1.
class Lattice {
 public:
  static constexpr std::int32_t kNone = -1;

  Lattice(int dimension, std::array<int, 3> extent, bool periodic)
      : dim_(dimension), extent_(extent), periodic_(periodic) {
    if (dim_ < 1 || dim_ > 3) throw ConfigError("lattice dimension must be 1, 2 or 3");
    for (int a = dim_; a < 3; ++a) extent_[a] = 1;
    sites_ = 1;
    for (int a = 0; a < 3; ++a) {
      if (extent_[a] < 1) throw ConfigError("lattice extent must be positive");
      sites_ *= static_cast<std::size_t>(extent_[a]);
    }
    stride_ = {1, extent_[0], extent_[0] * extent_[1]};
    neighbor_.assign(static_cast<std::size_t>(2 * dim_) * sites_, kNone);
    for (std::size_t s = 0; s < sites_; ++s) {
      const auto c = coords(s);
      for (int a = 0; a < dim_; ++a) {
        for (int sign = 0; sign < 2; ++sign) {
          auto d = c;
          d[a] += sign == 0 ? 1 : -1;
          if (d[a] < 0 || d[a] >= extent_[a]) {
            if (!periodic_) continue;
            d[a] = (d[a] + extent_[a]) % extent_[a];
          }
          neighbor_[(2 * a + sign) * sites_ + s] = static_cast<std::int32_t>(index(d));
        }
      }
    }
  }

  /// The cube {-L..L}^d with periodic wrap.
  static Lattice cube(int dimension, int half_width) {
    if (half_width < 1) throw ConfigError("lattice half-width L must be >= 1");
    const int n = 2 * half_width + 1;
    return Lattice(dimension, {n, n, n}, true);
  }

  [[nodiscard]] int dimension() const { return dim_; }
  [[nodiscard]] int directions() const { return 2 * dim_; }
  [[nodiscard]] const std::array<int, 3>& extent() const { return extent_; }
  [[nodiscard]] bool periodic() const { return periodic_; }
  [[nodiscard]] std::size_t sites() const { return sites_; }

  [[nodiscard]] std::array<int, 3> coords(std::size_t site) const {
    const auto s = static_cast<int>(site);
    return {s % extent_[0], (s / extent_[0]) % extent_[1], s / (extent_[0] * extent_[1])};
  }
  [[nodiscard]] std::size_t index(const std::array<int, 3>& c) const {
    return static_cast<std::size_t>(c[0] + stride_[1] * c[1] + stride_[2] * c[2]);
  }
  /// Coordinate relative to the box centre: x in {-L..L} for odd extents.
  [[nodiscard]] std::array<int, 3> centered(std::size_t site) const {
    auto c = coords(site);
    for (int a = 0; a < 3; ++a) c[a] -= extent_[a] / 2;
    return c;
  }

  /// Neighbour in direction dir, or kNone across an open boundary.
  [[nodiscard]] std::int32_t neighbor(std::size_t site, int dir) const { return neighbor_[dir * sites_ + site]; }

 private:
  int dim_;
  std::array<int, 3> extent_;
  bool periodic_;
  std::size_t sites_ = 0;
  std::array<int, 3> stride_{};
  std::vector<std::int32_t> neighbor_;
};

/// Unit vector e of direction index dir as a component array.
inline std::array<int, 3> direction_vector(int dir) {
  std::array<int, 3> e{};
  e[dir / 2] = (dir % 2 == 0) ? 1 : -1;
  return e;
}

struct LatticeState {
  std::shared_ptr<const Lattice> lattice;
  std::vector<SiteMask> occ;
  ExactConserved totals{};                // cached, updated event by event
  std::array<double, 5> numeric_totals{};  // cached float accumulation of the same
  double time = 0.0;                       // macroscopic time

  [[nodiscard]] std::size_t sites() const { return occ.size(); }
  /// L for a cube of side 2L+1.
  [[nodiscard]] int half_width() const { return lattice->extent()[0] / 2; }
  [[nodiscard]] bool occupied(std::size_t site, int v) const { return (occ[site] >> v) & 1u; }
};

inline ExactConserved recompute_totals(const LatticeState& s, const VelocitySet& V) {
  ExactConserved t{};
  if (s.occ.size() < 64) {
    for (SiteMask m : s.occ) t += exact_conserved_at_site(m, V);
    return t;
  }
  const ExactConservedLookup lookup(V);
  for (SiteMask m : s.occ) lookup.accumulate(t, m);
  return t;
}

/// Fresh totals from the occupancy field.
inline void reset_totals(LatticeState& s, const VelocitySet& V) {
  s.totals = recompute_totals(s, V);
  s.numeric_totals = evaluate(s.totals, V.varpi());
}

inline LatticeState empty_state(std::shared_ptr<const Lattice> lattice) {
  LatticeState s;
  s.occ.assign(lattice->sites(), 0);
  s.lattice = std::move(lattice);
  return s;
}

/// Redraws every occupancy of `state` i.i.d. with marginal f(v); keeps the
/// allocation. Bernoulli draws use 32-bit thresholds, two per 64-bit word.
inline void resample_product_measure(LatticeState& state, const EquilibriumParams& p, Rng& rng) {
  const std::size_t nv = p.f.size();
  std::array<std::uint64_t, kMaxVelocities> threshold{};
  for (std::size_t v = 0; v < nv; ++v) {
    const long double t = static_cast<long double>(p.f[v]) * 4294967296.0L;
    threshold[v] = t >= 4294967296.0L ? (std::uint64_t{1} << 32) : static_cast<std::uint64_t>(t);
  }
  for (auto& site : state.occ) {
    SiteMask m = 0;
    std::size_t v = 0;
    for (; v + 1 < nv; v += 2) {
      const std::uint64_t r = rng.bits();
      m |= static_cast<SiteMask>((r & 0xFFFFFFFFULL) < threshold[v]) << v;
      m |= static_cast<SiteMask>((r >> 32) < threshold[v + 1]) << (v + 1);
    }
    if (v < nv) m |= static_cast<SiteMask>((rng.bits() & 0xFFFFFFFFULL) < threshold[v]) << v;
    site = m;
  }
  state.time = 0.0;
  reset_totals(state, p.velocities);
}

/// I.i.d. occupancies on the cube {-L..L}^d with marginal f(v).
inline LatticeState sample_product_measure(const EquilibriumParams& p, int half_width, Rng& rng) {
  auto lattice = std::make_shared<const Lattice>(Lattice::cube(p.velocities.dimension(), half_width));
  auto state = empty_state(std::move(lattice));
  resample_product_measure(state, p, rng);
  return state;
}

}  // namespace lgf
