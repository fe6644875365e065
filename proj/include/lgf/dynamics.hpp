#pragma once

// Continuous-time simulation of the exclusion + collision process with
// generator eps^{-2} (L_ex + L_c) on a periodic box.
//
// Event selection is uniformization: every (site, direction, velocity) slot
// carries the bound rate chi + max|v_alpha|/2 and every (site, quadruple) the
// rate collision_rate_scale. A proposal is drawn uniformly within its category
// and accepted with probability actual_rate / bound_rate, which realizes the
// CTMC law exactly.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "lgf/errors.hpp"
#include "lgf/lattice.hpp"
#include "lgf/model.hpp"
#include "lgf/rng.hpp"

namespace lgf {

struct DynamicsParams {
  double chi = 1.0;
  double epsilon = 1.0;  // normally 1/L
  double collision_rate_scale = 1.0;
};

inline void validate(const DynamicsParams& p, const VelocitySet& V) {
  if (!(p.epsilon > 0.0) || !std::isfinite(p.epsilon)) throw ConfigError("epsilon must be positive");
  if (!(p.collision_rate_scale >= 0.0)) throw ConfigError("collision_rate_scale must be non-negative");
  if (!(p.chi > 0.5 * V.max_abs_component())) {
    throw ConfigError("chi must exceed max|v_alpha|/2 so that every jump rate is positive");
  }
}

/// Jump rate chi + e.v/2 of velocity v across direction dir.
inline double jump_rate(const VelocitySet& V, double chi, int dir, std::size_t v) {
  const double ev = (dir % 2 == 0 ? 1.0 : -1.0) * V.component(v, dir / 2);
  return chi + 0.5 * ev;
}

/// Exchanges eta(x, v) and eta(x+e, v). Returns whether the state changed.
inline bool apply_exchange(LatticeState& s, std::size_t x, int dir, int v) {
  const auto y = s.lattice->neighbor(x, dir);
  if (y == Lattice::kNone) return false;
  const SiteMask bit = SiteMask{1} << v;
  const SiteMask a = s.occ[x] & bit;
  const SiteMask b = s.occ[static_cast<std::size_t>(y)] & bit;
  if ((a == 0) == (b == 0)) return false;
  s.occ[x] ^= bit;
  s.occ[static_cast<std::size_t>(y)] ^= bit;
  return true;
}

/// Performs collision q at site x when compatible; otherwise leaves the state
/// unchanged. Conserved totals are updated by the collision's exact delta.
inline bool apply_collision(LatticeState& s, const VelocitySet& V, std::size_t x, const Collision& q) {
  if (!q.compatible(s.occ[x])) return false;
  s.occ[x] = q.apply(s.occ[x]);
  ExactConserved delta = V.exact_phi(q.vp);
  delta += V.exact_phi(q.wp);
  delta -= V.exact_phi(q.v);
  delta -= V.exact_phi(q.w);
  s.totals += delta;
  for (int b = 0; b < kNumConserved; ++b) {
    s.numeric_totals[b] += (V.phi(b, q.vp) + V.phi(b, q.wp)) - (V.phi(b, q.v) + V.phi(b, q.w));
  }
  return true;
}

struct EventStats {
  std::uint64_t proposals = 0;
  std::uint64_t jumps = 0;
  std::uint64_t collisions = 0;

  EventStats& operator+=(const EventStats& o) {
    proposals += o.proposals;
    jumps += o.jumps;
    collisions += o.collisions;
    return *this;
  }
};

class Simulator {
 public:
  Simulator(const VelocitySet& V, const CollisionTable& Q, DynamicsParams params)
      : V_(V), Q_(Q), params_(params) {
    validate(params_, V_);
    jump_bound_ = params_.chi + 0.5 * V_.max_abs_component();
  }

  [[nodiscard]] const DynamicsParams& params() const { return params_; }

  /// Total uniformized rate (macroscopic time units) for a state of this geometry.
  [[nodiscard]] double total_rate(const Lattice& lattice) const {
    return (jump_weight(lattice) + collision_weight(lattice)) / (params_.epsilon * params_.epsilon);
  }

  /// Advances to t_end; the state's time is t_end on return.
  EventStats step_to(LatticeState& s, double t_end, Rng& rng) const {
    if (t_end < s.time) throw ConfigError("t_end must not precede the current time");
    EventStats stats;
    const double rate = total_rate(*s.lattice);
    if (rate <= 0.0) {
      s.time = t_end;
      return stats;
    }
    for (;;) {
      const double next = s.time + rng.exponential(rate);
      if (next > t_end) break;
      s.time = next;
      propose(s, rng, stats);
    }
    s.time = t_end;
    return stats;
  }

  /// Runs exactly `count` uniformized clock ticks (accepted or not).
  EventStats step_events(LatticeState& s, std::uint64_t count, Rng& rng) const {
    EventStats stats;
    const double rate = total_rate(*s.lattice);
    if (rate <= 0.0) return stats;
    for (std::uint64_t i = 0; i < count; ++i) {
      s.time += rng.exponential(rate);
      propose(s, rng, stats);
    }
    return stats;
  }

 private:
  [[nodiscard]] double jump_weight(const Lattice& lattice) const {
    return static_cast<double>(lattice.sites()) * lattice.directions() * static_cast<double>(V_.size()) * jump_bound_;
  }
  [[nodiscard]] double collision_weight(const Lattice& lattice) const {
    return static_cast<double>(lattice.sites()) * static_cast<double>(Q_.size()) * params_.collision_rate_scale;
  }

  void propose(LatticeState& s, Rng& rng, EventStats& stats) const {
    ++stats.proposals;
    const Lattice& lat = *s.lattice;
    const double wj = jump_weight(lat);
    const double wc = collision_weight(lat);
    if (rng.uniform() * (wj + wc) < wj) {
      const auto x = static_cast<std::size_t>(rng.below(lat.sites()));
      const int dir = static_cast<int>(rng.below(static_cast<std::uint64_t>(lat.directions())));
      const int v = static_cast<int>(rng.below(V_.size()));
      const auto y = lat.neighbor(x, dir);
      if (y == Lattice::kNone) return;
      if (!s.occupied(x, v) || s.occupied(static_cast<std::size_t>(y), v)) return;
      if (rng.uniform() * jump_bound_ >= jump_rate(V_, params_.chi, dir, static_cast<std::size_t>(v))) return;
      if (!apply_exchange(s, x, dir, v)) throw InvariantViolation("accepted jump did not change the state");
      ++stats.jumps;
    } else {
      const auto x = static_cast<std::size_t>(rng.below(lat.sites()));
      const auto& q = Q_[static_cast<std::size_t>(rng.below(Q_.size()))];
      if (!q.compatible(s.occ[x])) return;
      if (!apply_collision(s, V_, x, q)) throw InvariantViolation("accepted collision did not change the state");
      ++stats.collisions;
    }
  }

  const VelocitySet& V_;
  const CollisionTable& Q_;
  DynamicsParams params_;
  double jump_bound_ = 0.0;
};

inline EventStats step_to(LatticeState& s, const VelocitySet& V, const CollisionTable& Q, const DynamicsParams& p,
                          double t_end, Rng& rng) {
  return Simulator(V, Q, p).step_to(s, t_end, rng);
}

// ---------------------------------------------------------------------------
// Snapshots: little-endian binary, versioned.
//
//   "LGFSNAP\0" u32 version
//   u32 dimension, u32 extent[3], u32 periodic, u32 velocity_count
//   f64 varpi, chi, epsilon, collision_rate_scale, time
//   u64 seed, u64 site_count, u32 occupancy[site_count]
//   u64 note_length, char note[note_length]     (free-form provenance text)

struct SnapshotMeta {
  std::uint64_t seed = 0;
  double varpi = 0.0;
  std::uint32_t velocity_count = 0;
  DynamicsParams params;
  std::string note;
};

inline constexpr std::uint32_t kSnapshotVersion = 2;

namespace detail {
template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ConfigError("truncated snapshot");
  return v;
}
}  // namespace detail

inline void write_snapshot(std::ostream& os, const LatticeState& s, const SnapshotMeta& meta) {
  os.write("LGFSNAP", 8);
  detail::put<std::uint32_t>(os, kSnapshotVersion);
  const auto& lat = *s.lattice;
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(lat.dimension()));
  for (int a = 0; a < 3; ++a) detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(lat.extent()[a]));
  detail::put<std::uint32_t>(os, lat.periodic() ? 1u : 0u);
  detail::put<std::uint32_t>(os, meta.velocity_count);
  detail::put<double>(os, meta.varpi);
  detail::put<double>(os, meta.params.chi);
  detail::put<double>(os, meta.params.epsilon);
  detail::put<double>(os, meta.params.collision_rate_scale);
  detail::put<double>(os, s.time);
  detail::put<std::uint64_t>(os, meta.seed);
  detail::put<std::uint64_t>(os, s.occ.size());
  for (SiteMask m : s.occ) detail::put<std::uint32_t>(os, m);
  detail::put<std::uint64_t>(os, meta.note.size());
  os.write(meta.note.data(), static_cast<std::streamsize>(meta.note.size()));
}

struct Snapshot {
  LatticeState state;
  SnapshotMeta meta;
};

/// Reads a snapshot; totals are recomputed from the occupancies with V.
inline Snapshot read_snapshot(std::istream& is, const VelocitySet& V) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, "LGFSNAP", 8) != 0) throw ConfigError("not a lattice snapshot");
  if (detail::get<std::uint32_t>(is) != kSnapshotVersion) throw ConfigError("unsupported snapshot version");
  const int dim = static_cast<int>(detail::get<std::uint32_t>(is));
  std::array<int, 3> extent{};
  for (auto& e : extent) e = static_cast<int>(detail::get<std::uint32_t>(is));
  const bool periodic = detail::get<std::uint32_t>(is) != 0;
  Snapshot snap;
  snap.meta.velocity_count = detail::get<std::uint32_t>(is);
  if (snap.meta.velocity_count != V.size()) throw ConfigError("snapshot velocity count mismatch");
  snap.meta.varpi = detail::get<double>(is);
  snap.meta.params.chi = detail::get<double>(is);
  snap.meta.params.epsilon = detail::get<double>(is);
  snap.meta.params.collision_rate_scale = detail::get<double>(is);
  const double time = detail::get<double>(is);
  snap.meta.seed = detail::get<std::uint64_t>(is);
  const auto count = detail::get<std::uint64_t>(is);
  auto lattice = std::make_shared<const Lattice>(dim, extent, periodic);
  if (count != lattice->sites()) throw ConfigError("snapshot site count mismatch");
  snap.state = empty_state(std::move(lattice));
  for (auto& m : snap.state.occ) m = detail::get<std::uint32_t>(is);
  const auto note_length = detail::get<std::uint64_t>(is);
  if (note_length > (std::uint64_t{1} << 30)) throw ConfigError("corrupt snapshot note");
  snap.meta.note.resize(note_length);
  if (note_length && !is.read(snap.meta.note.data(), static_cast<std::streamsize>(note_length))) {
    throw ConfigError("truncated snapshot");
  }
  reset_totals(snap.state, V);
  snap.state.time = time;
  return snap;
}

}  // namespace lgf
