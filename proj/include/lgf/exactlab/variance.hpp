#pragma once

// Canonical sectors of an enumerated block and the finite-volume variance
//   V(g, n) = |X|^{-1} E^{mu_n}[ G (-L_s)^{-1} G ],  G = sum_{x in X} (tau_x g - alpha(g)),
// with X the translates whose support fits in the block.

#include <array>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lgf/exactlab/enumerated.hpp"

namespace lgf::exactlab {

struct SectorPartition {
  std::vector<std::vector<std::uint64_t>> members;
  std::vector<std::int64_t> sector_of;  // per state
};

inline SectorPartition sectors(const EnumeratedSystem& sys) {
  std::map<ExactConserved, std::size_t> ids;
  SectorPartition out;
  out.sector_of.resize(sys.states());
  for (std::uint64_t s = 0; s < sys.states(); ++s) {
    const auto [it, fresh] = ids.try_emplace(sys.sector_key(s), out.members.size());
    if (fresh) out.members.emplace_back();
    out.members[it->second].push_back(s);
    out.sector_of[s] = static_cast<std::int64_t>(it->second);
  }
  return out;
}

/// Sector average of F, i.e. the uniform canonical expectation, per state.
inline VecX canonical_average(const SectorPartition& sp, const VecX& F) {
  VecX out(F.size());
  for (const auto& sec : sp.members) {
    double m = 0.0;
    for (auto s : sec) m += F(static_cast<Eigen::Index>(s));
    m /= static_cast<double>(sec.size());
    for (auto s : sec) out(static_cast<Eigen::Index>(s)) = m;
  }
  return out;
}

struct LocalFunction {
  std::vector<std::array<int, 3>> offsets;                // support relative to the base site
  std::function<double(std::span<const SiteMask>)> fn;  // one mask per offset
};

/// Base sites x with every x + offset inside the box (all sites if periodic).
inline std::vector<std::size_t> fitting_translates(const Lattice& lat, const LocalFunction& g) {
  std::vector<std::size_t> out;
  for (std::size_t x = 0; x < lat.sites(); ++x) {
    const auto c = lat.coords(x);
    bool ok = true;
    for (const auto& o : g.offsets)
      for (int a = 0; a < 3; ++a) {
        const int y = c[a] + o[a];
        if (!lat.periodic() && (y < 0 || y >= lat.extent()[a])) ok = false;
      }
    if (ok) out.push_back(x);
  }
  return out;
}

/// sum_{x in X} tau_x g as a state vector.
inline VecX translate_sum(const EnumeratedSystem& sys, const LocalFunction& g, const std::vector<std::size_t>& X) {
  const auto& lat = sys.lattice();
  std::vector<std::vector<std::size_t>> support;
  for (auto x : X) {
    std::vector<std::size_t> sites;
    const auto c = lat.coords(x);
    for (const auto& o : g.offsets) {
      std::array<int, 3> d{};
      for (int a = 0; a < 3; ++a) d[a] = ((c[a] + o[a]) % lat.extent()[a] + lat.extent()[a]) % lat.extent()[a];
      sites.push_back(lat.index(d));
    }
    support.push_back(std::move(sites));
  }
  std::vector<SiteMask> masks(g.offsets.size());
  return sys.tabulate([&](std::uint64_t s) {
    double t = 0.0;
    for (const auto& sites : support) {
      for (std::size_t i = 0; i < sites.size(); ++i) masks[i] = sys.site(s, sites[i]);
      t += g.fn(masks);
    }
    return t;
  });
}

struct SectorSolve {
  double value = 0.0;          // E^mu[G u],  -L_s u = G on every sector
  double kernel_defect = 0.0;  // largest |component of G in ker L_s| relative to |G|
  std::size_t sectors = 0;
};

/// E^mu[G (-L_s)^{-1} G] by dense pseudo-inverse per sector. `Ls` must be
/// mu-reversible; mu is uniform on sectors, so each sector block is symmetric.
inline SectorSolve inverse_quadratic_form(const SparseRow& Ls, const SectorPartition& sp, const VecX& mu, const VecX& G,
                                          double zero_tol = 1e-10) {
  SectorSolve out;
  out.sectors = sp.members.size();
  for (const auto& sec : sp.members) {
    const auto n = static_cast<Eigen::Index>(sec.size());
    Eigen::VectorXd g(n);
    double weight = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      g(i) = G(static_cast<Eigen::Index>(sec[i]));
      weight += mu(static_cast<Eigen::Index>(sec[i]));
    }
    if (g.cwiseAbs().maxCoeff() == 0.0) continue;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    std::map<std::uint64_t, Eigen::Index> local;
    for (Eigen::Index i = 0; i < n; ++i) local[sec[i]] = i;
    for (Eigen::Index i = 0; i < n; ++i)
      for (SparseRow::InnerIterator it(Ls, static_cast<Eigen::Index>(sec[i])); it; ++it) {
        const auto f = local.find(static_cast<std::uint64_t>(it.col()));
        if (f == local.end()) {
          if (it.value() != 0.0) throw InvariantViolation("symmetric generator leaves a sector");
          continue;
        }
        A(i, f->second) = -it.value();
      }
    A = 0.5 * (A + A.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    const auto& lam = es.eigenvalues();
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    const Eigen::VectorXd c = es.eigenvectors().transpose() * g;
    double q = 0.0, ker = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      if (std::abs(lam(k)) <= zero_tol * scale) {
        ker = std::max(ker, std::abs(c(k)));
      } else {
        q += c(k) * c(k) / lam(k);
      }
    }
    out.kernel_defect = std::max(out.kernel_defect, ker / g.norm());
    // uniform law inside the sector: E[G u | sector] = q / n
    out.value += weight * q / static_cast<double>(n);
  }
  if (out.kernel_defect > 1e-8) throw RegimeError("observable is not in the range of the symmetric generator");
  return out;
}

struct VarianceReport {
  double value = 0.0;
  std::size_t translates = 0;
  std::size_t sectors = 0;
  double kernel_defect = 0.0;
  bool l1_equals_l = true;  // the whole block is used for the translate sum
};

/// V(g, n) on the block `sys` (open boundaries give the block generator).
inline VarianceReport finite_volume_variance(const EnumeratedSystem& sys, const LocalFunction& g,
                                             const EquilibriumParams& p) {
  const auto X = fitting_translates(sys.lattice(), g);
  if (X.empty()) throw ConfigError("local function does not fit in the block");
  const VecX mu = sys.product_measure(p);
  // symmetrize the infinite-volume rates, then restrict to the block: the
  // product measure is not invariant for the open-boundary asymmetric rates
  SystemSpec s = sys.spec();
  s.symmetric_rates = true;
  const EnumeratedSystem block(s);
  const SparseRow& Ls = block.generator();
  const auto sp = sectors(sys);
  const VecX S = translate_sum(sys, g, X);
  const VecX G = S - canonical_average(sp, S);
  const auto solve = inverse_quadratic_form(Ls, sp, mu, G);
  VarianceReport r;
  r.value = solve.value / static_cast<double>(X.size());
  r.translates = X.size();
  r.sectors = solve.sectors;
  r.kernel_defect = solve.kernel_defect;
  return r;
}

}  // namespace lgf::exactlab
