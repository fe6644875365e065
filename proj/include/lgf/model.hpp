#pragma once

// Velocity sets, the collision table and per-site conserved quantities.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lgf/errors.hpp"
#include "lgf/symbolic.hpp"

namespace lgf {

/// Occupancy of one site: bit v set iff a particle with velocity id v is present.
using SiteMask = std::uint32_t;

inline constexpr int kMaxVelocities = 32;
inline constexpr int kNumConserved = 5;

using Components = std::array<SymbolicScalar, 3>;

struct Velocity {
  Components components{};
  SymbolicQuadratic speed_sq{};  // |v|^2
};

/// Explicit small velocity table for exact-enumeration experiments.
/// Components beyond `dimension` must be zero.
struct ToySpec {
  int dimension = 1;
  std::vector<Components> velocities;

  /// Convenience for integer-valued toy tables.
  static ToySpec from_integers(int dimension, const std::vector<std::array<int, 3>>& list) {
    ToySpec t;
    t.dimension = dimension;
    for (const auto& v : list) {
      t.velocities.push_back({SymbolicScalar{v[0], 0}, SymbolicScalar{v[1], 0}, SymbolicScalar{v[2], 0}});
    }
    return t;
  }
};

class VelocitySet {
 public:
  VelocitySet() = default;

  VelocitySet(int dimension, double varpi, std::vector<Velocity> velocities, bool canonical)
      : dimension_(dimension), varpi_(varpi), canonical_(canonical), velocities_(std::move(velocities)) {
    if (velocities_.empty() || velocities_.size() > static_cast<std::size_t>(kMaxVelocities)) {
      throw ConfigError("velocity set must hold between 1 and 32 velocities");
    }
    for (std::size_t i = 0; i < velocities_.size(); ++i) {
      auto& v = velocities_[i];
      for (int a = dimension_; a < 3; ++a) {
        if (!v.components[a].is_zero()) throw ConfigError("velocity component beyond dimension");
      }
      v.speed_sq = square(v.components[0]) + square(v.components[1]) + square(v.components[2]);
      if (!index_.emplace(v.components, static_cast<int>(i)).second) {
        throw ConfigError("duplicate velocity in velocity set");
      }
    }
    phi_.assign(kNumConserved * velocities_.size(), 0.0);
    for (std::size_t i = 0; i < velocities_.size(); ++i) {
      const auto& v = velocities_[i];
      phi_[0 * size() + i] = 1.0;
      for (int a = 0; a < 3; ++a) phi_[(1 + a) * size() + i] = v.components[a].evaluate(varpi_);
      phi_[4 * size() + i] = 0.5 * v.speed_sq.evaluate(varpi_);
    }
  }

  [[nodiscard]] int dimension() const { return dimension_; }
  [[nodiscard]] double varpi() const { return varpi_; }
  [[nodiscard]] bool canonical() const { return canonical_; }
  [[nodiscard]] std::size_t size() const { return velocities_.size(); }
  [[nodiscard]] const Velocity& operator[](std::size_t id) const { return velocities_[id]; }
  [[nodiscard]] const std::vector<Velocity>& velocities() const { return velocities_; }

  [[nodiscard]] std::optional<int> find(const Components& c) const {
    auto it = index_.find(c);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// phi_beta(v): 1, v_1, v_2, v_3, |v|^2/2 evaluated at the configured varpi.
  [[nodiscard]] double phi(int beta, std::size_t id) const { return phi_[beta * size() + id]; }
  [[nodiscard]] double component(std::size_t id, int alpha) const { return phi(1 + alpha, id); }
  [[nodiscard]] double speed_sq(std::size_t id) const { return 2.0 * phi(4, id); }

  [[nodiscard]] double max_abs_component() const {
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i)
      for (int a = 0; a < 3; ++a) m = std::max(m, std::abs(component(i, a)));
    return m;
  }

  /// Exact (I_0, I_1, I_2, I_3, 2 I_4) of a single particle of velocity id.
  [[nodiscard]] ExactConserved exact_phi(std::size_t id) const {
    const auto& v = velocities_[id];
    return {SymbolicQuadratic{1, 0, 0}, lift(v.components[0]), lift(v.components[1]),
            lift(v.components[2]), v.speed_sq};
  }

 private:
  int dimension_ = 3;
  double varpi_ = std::sqrt(2.0);
  bool canonical_ = false;
  std::vector<Velocity> velocities_;
  std::map<Components, int> index_;
  std::vector<double> phi_;
};

/// The 32-velocity set: (±1,±1,±1) followed by all permutations of (±varpi,±1,±1).
inline VelocitySet build_velocity_set(double varpi = std::sqrt(2.0)) {
  if (!(varpi > 0.0) || varpi == 1.0 || !std::isfinite(varpi)) {
    throw ConfigError("varpi must be positive, finite and different from 1");
  }
  std::vector<Velocity> list;
  const std::int64_t signs[2] = {1, -1};
  for (auto s0 : signs)
    for (auto s1 : signs)
      for (auto s2 : signs) list.push_back({{SymbolicScalar{s0, 0}, SymbolicScalar{s1, 0}, SymbolicScalar{s2, 0}}, {}});
  for (int pos = 0; pos < 3; ++pos) {
    for (auto s0 : signs)
      for (auto s1 : signs)
        for (auto s2 : signs) {
          Components c{SymbolicScalar{s0, 0}, SymbolicScalar{s1, 0}, SymbolicScalar{s2, 0}};
          const std::int64_t s[3] = {s0, s1, s2};
          c[pos] = SymbolicScalar{0, s[pos]};
          list.push_back({c, {}});
        }
  }
  return VelocitySet(3, varpi, std::move(list), true);
}

inline VelocitySet build_velocity_set(double varpi, const ToySpec& toy) {
  if (!(varpi > 0.0) || !std::isfinite(varpi)) throw ConfigError("varpi must be positive and finite");
  if (toy.dimension < 1 || toy.dimension > 3) throw ConfigError("toy dimension must be 1, 2 or 3");
  std::vector<Velocity> list;
  list.reserve(toy.velocities.size());
  for (const auto& c : toy.velocities) list.push_back({c, {}});
  return VelocitySet(toy.dimension, varpi, std::move(list), false);
}

// ---------------------------------------------------------------------------
// Collisions

struct Collision {
  std::uint8_t v = 0, w = 0, vp = 0, wp = 0;
  SiteMask in_mask = 0;   // bits of v, w
  SiteMask out_mask = 0;  // bits of v', w'

  [[nodiscard]] bool compatible(SiteMask site) const {
    return (site & in_mask) == in_mask && (site & out_mask) == 0;
  }
  [[nodiscard]] SiteMask apply(SiteMask site) const { return site ^ in_mask ^ out_mask; }
  [[nodiscard]] auto ids() const { return std::tuple{v, w, vp, wp}; }

  friend bool operator==(const Collision& a, const Collision& b) { return a.ids() == b.ids(); }
  friend bool operator<(const Collision& a, const Collision& b) { return a.ids() < b.ids(); }
};

inline Collision make_collision(int v, int w, int vp, int wp) {
  Collision c;
  c.v = static_cast<std::uint8_t>(v);
  c.w = static_cast<std::uint8_t>(w);
  c.vp = static_cast<std::uint8_t>(vp);
  c.wp = static_cast<std::uint8_t>(wp);
  c.in_mask = (SiteMask{1} << v) | (SiteMask{1} << w);
  c.out_mask = (SiteMask{1} << vp) | (SiteMask{1} << wp);
  return c;
}

struct CollisionTable {
  std::vector<Collision> quadruples;  // lexicographic on (v, w, v', w')

  [[nodiscard]] std::size_t size() const { return quadruples.size(); }
  [[nodiscard]] bool empty() const { return quadruples.empty(); }
  [[nodiscard]] const Collision& operator[](std::size_t i) const { return quadruples[i]; }
  [[nodiscard]] auto begin() const { return quadruples.begin(); }
  [[nodiscard]] auto end() const { return quadruples.end(); }
};

/// v + w = v' + w' in Z[varpi]^3 and |v|^2 + |w|^2 = |v'|^2 + |w'|^2 in Z[varpi, varpi^2].
inline bool conserves(const VelocitySet& V, int v, int w, int vp, int wp) {
  for (int a = 0; a < 3; ++a) {
    if (V[v].components[a] + V[w].components[a] != V[vp].components[a] + V[wp].components[a]) return false;
  }
  return V[v].speed_sq + V[w].speed_sq == V[vp].speed_sq + V[wp].speed_sq;
}

/// Admissible and not a no-op: distinct incoming, distinct outgoing, {v',w'} != {v,w}.
inline bool admissible_nontrivial(const VelocitySet& V, int v, int w, int vp, int wp) {
  if (v == w || vp == wp) return false;
  if ((vp == v && wp == w) || (vp == w && wp == v)) return false;
  return conserves(V, v, w, vp, wp);
}

/// All non-trivial admissible quadruples, grouping ordered pairs by their
/// exact (momentum, energy) key.
inline CollisionTable build_collision_table(const VelocitySet& V) {
  using Key = std::pair<Components, SymbolicQuadratic>;
  std::map<Key, std::vector<std::pair<int, int>>> groups;
  const int n = static_cast<int>(V.size());
  for (int v = 0; v < n; ++v) {
    for (int w = 0; w < n; ++w) {
      if (v == w) continue;
      Components p{};
      for (int a = 0; a < 3; ++a) p[a] = V[v].components[a] + V[w].components[a];
      groups[{p, V[v].speed_sq + V[w].speed_sq}].emplace_back(v, w);
    }
  }
  CollisionTable table;
  for (const auto& [key, pairs] : groups) {
    for (const auto& [v, w] : pairs) {
      for (const auto& [vp, wp] : pairs) {
        if ((vp == v && wp == w) || (vp == w && wp == v)) continue;
        table.quadruples.push_back(make_collision(v, w, vp, wp));
      }
    }
  }
  std::sort(table.quadruples.begin(), table.quadruples.end());
  return table;
}

// ---------------------------------------------------------------------------
// Conserved quantities

/// (I_0, ..., I_4) of a site, evaluated at the set's varpi.
inline std::array<double, 5> conserved_at_site(SiteMask site, const VelocitySet& V) {
  std::array<double, 5> out{};
  for (SiteMask m = site; m != 0; m &= m - 1) {
    const auto id = static_cast<std::size_t>(std::countr_zero(m));
    for (int b = 0; b < kNumConserved; ++b) out[b] += V.phi(b, id);
  }
  return out;
}

inline ExactConserved exact_conserved_at_site(SiteMask site, const VelocitySet& V) {
  ExactConserved out{};
  for (SiteMask m = site; m != 0; m &= m - 1) out += V.exact_phi(static_cast<std::size_t>(std::countr_zero(m)));
  return out;
}

/// Byte-sliced lookup of conserved_at_site for hot loops.
class ConservedLookup {
 public:
  explicit ConservedLookup(const VelocitySet& V) {
    for (int byte = 0; byte < 4; ++byte) {
      for (int value = 0; value < 256; ++value) {
        const SiteMask mask = static_cast<SiteMask>(value) << (8 * byte);
        const SiteMask valid = V.size() >= 32 ? ~SiteMask{0} : ((SiteMask{1} << V.size()) - 1);
        table_[byte][value] = conserved_at_site(mask & valid, V);
      }
    }
  }

  [[nodiscard]] std::array<double, 5> operator()(SiteMask site) const {
    std::array<double, 5> out = table_[0][site & 0xFFu];
    for (int byte = 1; byte < 4; ++byte) {
      const auto& t = table_[byte][(site >> (8 * byte)) & 0xFFu];
      for (int b = 0; b < 5; ++b) out[b] += t[b];
    }
    return out;
  }

 private:
  std::array<std::array<std::array<double, 5>, 256>, 4> table_{};
};

/// Byte-sliced lookup of exact_conserved_at_site.
class ExactConservedLookup {
 public:
  explicit ExactConservedLookup(const VelocitySet& V) {
    const SiteMask valid = V.size() >= 32 ? ~SiteMask{0} : ((SiteMask{1} << V.size()) - 1);
    for (int byte = 0; byte < 4; ++byte)
      for (int value = 0; value < 256; ++value)
        table_[byte][value] = exact_conserved_at_site((static_cast<SiteMask>(value) << (8 * byte)) & valid, V);
  }

  void accumulate(ExactConserved& acc, SiteMask site) const {
    for (int byte = 0; byte < 4; ++byte) acc += table_[byte][(site >> (8 * byte)) & 0xFFu];
  }

 private:
  std::array<std::array<ExactConserved, 256>, 4> table_{};
};

/// Indices beta of a maximal linearly independent subset of the conserved
/// functionals, as functions on the velocity set (greedy in beta order).
inline std::vector<int> independent_conserved_indices(const VelocitySet& V) {
  std::vector<int> chosen;
  Eigen::MatrixXd cols(static_cast<Eigen::Index>(V.size()), 0);
  for (int b = 0; b < kNumConserved; ++b) {
    Eigen::MatrixXd trial(cols.rows(), cols.cols() + 1);
    trial.leftCols(cols.cols()) = cols;
    for (std::size_t i = 0; i < V.size(); ++i) trial(static_cast<Eigen::Index>(i), cols.cols()) = V.phi(b, i);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(trial);
    lu.setThreshold(1e-10);
    if (lu.rank() == trial.cols()) {
      cols = trial;
      chosen.push_back(b);
    }
  }
  return chosen;
}

/// Dimension of the space of functions psi on the velocity set with
/// psi(v) + psi(w) = psi(v') + psi(w') for every tabled collision.
/// Equals 5 (or the number of independent conserved functionals) when
/// collisions conserve nothing beyond mass, momentum and energy.
inline int collision_invariant_dimension(const VelocitySet& V, const CollisionTable& Q) {
  const auto n = static_cast<Eigen::Index>(V.size());
  if (Q.empty()) return static_cast<int>(n);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(Q.size()), n);
  for (std::size_t r = 0; r < Q.size(); ++r) {
    const auto& q = Q[r];
    const auto row = static_cast<Eigen::Index>(r);
    A(row, q.v) += 1.0;
    A(row, q.w) += 1.0;
    A(row, q.vp) -= 1.0;
    A(row, q.wp) -= 1.0;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  lu.setThreshold(1e-10);
  return static_cast<int>(n - lu.rank());
}

inline nlohmann::json components_json(const Components& c, int dimension) {
  auto arr = nlohmann::json::array();
  for (int a = 0; a < dimension; ++a) arr.push_back({c[a].unit_part, c[a].varpi_part});
  return arr;
}

/// Collision table export. Each component is written as [unit_part, varpi_part].
inline nlohmann::json collision_table_json(const VelocitySet& V, const CollisionTable& Q) {
  nlohmann::json doc;
  doc["format"] = "lgf-collision-table/1";
  doc["varpi"] = V.varpi();
  doc["dimension"] = V.dimension();
  doc["velocity_count"] = V.size();
  auto quads = nlohmann::json::array();
  for (const auto& q : Q) {
    quads.push_back({components_json(V[q.v].components, V.dimension()), components_json(V[q.w].components, V.dimension()),
                     components_json(V[q.vp].components, V.dimension()),
                     components_json(V[q.wp].components, V.dimension())});
  }
  doc["quadruples"] = std::move(quads);
  return doc;
}

}  // namespace lgf
