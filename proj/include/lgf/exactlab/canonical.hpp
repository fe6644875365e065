#pragma once

// Canonical and grand-canonical expectations of local functions on a block of
// n exchangeable sites, computed exactly over per-velocity particle counts.
// Given the counts k = (k_v), velocities are independent and each is a
// uniform placement of k_v particles on n sites, so an s-site function only
// needs the joint law of s draws without replacement.

#include <cmath>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "lgf/exactlab/variance.hpp"

namespace lgf::exactlab {

using Counts = std::vector<int>;

class CountEnsemble {
 public:
  CountEnsemble(VelocitySet V, int n_sites) : V_(std::move(V)), n_(n_sites), nv_(V_.size()) {
    if (n_ < 1) throw ConfigError("block needs at least one site");
    Eigen::MatrixXd phi(5, static_cast<Eigen::Index>(nv_));
    for (int b = 0; b < 5; ++b)
      for (std::size_t v = 0; v < nv_; ++v) phi(b, static_cast<Eigen::Index>(v)) = V_.phi(b, v);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(phi, Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    int r = 0;
    while (r < s.size() && s(r) > 1e-10 * s(0)) ++r;
    R_ = svd.matrixV().leftCols(r).transpose();  // orthonormal basis of the row space
  }

  [[nodiscard]] int sites() const { return n_; }
  [[nodiscard]] std::size_t velocities() const { return nv_; }
  [[nodiscard]] int rank() const { return static_cast<int>(R_.rows()); }
  /// Every sector is a single count vector.
  [[nodiscard]] bool point_fibers() const { return rank() == static_cast<int>(nv_); }
  [[nodiscard]] const VelocitySet& velocity_set() const { return V_; }

  [[nodiscard]] ExactConserved key(const Counts& k) const {
    ExactConserved t{};
    for (std::size_t v = 0; v < nv_; ++v) {
      const auto one = exact_conserved_at_site(SiteMask{1} << v, V_);
      for (int b = 0; b < 5; ++b) {
        t[b].c0 += k[v] * one[b].c0;
        t[b].c1 += k[v] * one[b].c1;
        t[b].c2 += k[v] * one[b].c2;
      }
    }
    return t;
  }

  /// Block average of I_beta for counts k.
  [[nodiscard]] Vec5d average(const Counts& k) const {
    Vec5d m = Vec5d::Zero();
    for (std::size_t v = 0; v < nv_; ++v)
      for (int b = 0; b < 5; ++b) m(b) += k[v] * V_.phi(b, v);
    return m / n_;
  }

  /// Per-velocity occupation probabilities of the grand-canonical measure
  /// with E[I(eta_0)] = m, f = logistic(R^T theta).
  [[nodiscard]] std::vector<double> grand_canonical_density(const Vec5d& m) const {
    Eigen::MatrixXd phi(5, static_cast<Eigen::Index>(nv_));
    for (int b = 0; b < 5; ++b)
      for (std::size_t v = 0; v < nv_; ++v) phi(b, static_cast<Eigen::Index>(v)) = V_.phi(b, v);
    // phi = (phi R^T) R, so phi f = m fixes t = R f
    const Eigen::VectorXd t = (phi * R_.transpose()).completeOrthogonalDecomposition().solve(Eigen::VectorXd(m));
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(R_.rows());
    std::vector<double> f(nv_);
    for (int it = 0; it < 200; ++it) {
      const Eigen::VectorXd lam = R_.transpose() * theta;
      Eigen::VectorXd fv(static_cast<Eigen::Index>(nv_)), h(static_cast<Eigen::Index>(nv_));
      for (Eigen::Index v = 0; v < lam.size(); ++v) {
        fv(v) = logistic(lam(v));
        h(v) = fv(v) * (1 - fv(v));
      }
      const Eigen::VectorXd res = R_ * fv - t;
      for (std::size_t v = 0; v < nv_; ++v) f[v] = fv(static_cast<Eigen::Index>(v));
      if (res.norm() < 1e-15) break;
      const Eigen::MatrixXd J = R_ * h.asDiagonal() * R_.transpose();
      Eigen::VectorXd step = J.ldlt().solve(res);
      if (step.norm() > 2.0) step *= 2.0 / step.norm();
      theta -= step;
    }
    Eigen::VectorXd fv(static_cast<Eigen::Index>(nv_));
    for (std::size_t v = 0; v < nv_; ++v) fv(static_cast<Eigen::Index>(v)) = f[v];
    if ((phi * fv - m).norm() > 1e-10 * (1 + m.norm())) throw RegimeError("grand-canonical inversion did not converge");
    return f;
  }

  /// Joint law of s sites, per velocity: probability of one fixed pattern
  /// with j occupied, given k of n occupied (draws without replacement).
  [[nodiscard]] double pattern_probability(int k, int s, int j) const {
    if (j > k || s - j > n_ - k) return 0.0;
    double p = 1.0;
    for (int i = 0; i < j; ++i) p *= static_cast<double>(k - i);
    for (int i = 0; i < s - j; ++i) p *= static_cast<double>(n_ - k - i);
    for (int i = 0; i < s; ++i) p /= static_cast<double>(n_ - i);
    return p;
  }

  /// Table A[j] = sum of h over joint patterns whose per-velocity occupation
  /// counts are j = (j_v), flattened base s+1, velocity 0 most significant.
  [[nodiscard]] std::vector<double> count_table(const LocalFunction& h) const {
    const int s = static_cast<int>(h.offsets.size());
    if (n_ < s) throw ConfigError("local function support exceeds the block");
    const std::size_t bits = static_cast<std::size_t>(s) * nv_;
    if (bits > 24) throw ConfigError("local function support too large for exact tables");
    std::size_t tsize = 1;
    for (std::size_t v = 0; v < nv_; ++v) tsize *= static_cast<std::size_t>(s + 1);
    std::vector<double> A(tsize, 0.0);
    std::vector<SiteMask> masks(static_cast<std::size_t>(s));
    for (std::uint64_t pat = 0; pat < (std::uint64_t{1} << bits); ++pat) {
      for (int i = 0; i < s; ++i) masks[i] = static_cast<SiteMask>((pat >> (i * nv_)) & ((std::uint64_t{1} << nv_) - 1));
      std::size_t idx = 0;
      for (std::size_t v = 0; v < nv_; ++v) {
        int j = 0;
        for (int i = 0; i < s; ++i) j += (masks[i] >> v) & 1u;
        idx = idx * static_cast<std::size_t>(s + 1) + static_cast<std::size_t>(j);
      }
      A[idx] += h.fn(masks);
    }
    return A;
  }

  /// Contract A with per-velocity weight vectors w[v][j].
  [[nodiscard]] static double contract(std::vector<double> A, const std::vector<std::vector<double>>& w, int s) {
    const std::size_t b = static_cast<std::size_t>(s + 1);
    for (std::size_t v = w.size(); v-- > 0;) {
      const std::size_t outer = A.size() / b;
      std::vector<double> next(outer, 0.0);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < b; ++j) next[o] += A[o * b + j] * w[v][j];
      A.swap(next);
    }
    return A[0];
  }

  /// E[h | counts k], uniform placement.
  [[nodiscard]] double fixed_count_expectation(const std::vector<double>& A, int s, const Counts& k) const {
    std::vector<std::vector<double>> w(nv_, std::vector<double>(static_cast<std::size_t>(s + 1)));
    for (std::size_t v = 0; v < nv_; ++v)
      for (int j = 0; j <= s; ++j) w[v][j] = pattern_probability(k[v], s, j);
    return contract(A, w, s);
  }

  /// Product Bernoulli(f) expectation of h.
  [[nodiscard]] double product_expectation(const LocalFunction& h, const std::vector<double>& f) const {
    const int s = static_cast<int>(h.offsets.size());
    std::vector<std::vector<double>> w(nv_, std::vector<double>(static_cast<std::size_t>(s + 1)));
    for (std::size_t v = 0; v < nv_; ++v)
      for (int j = 0; j <= s; ++j) w[v][j] = std::pow(f[v], j) * std::pow(1 - f[v], s - j);
    return contract(count_table(h), w, s);
  }

  /// log of the number of configurations with counts k.
  [[nodiscard]] double log_multiplicity(const Counts& k) const {
    double t = 0.0;
    for (int kv : k) t += std::lgamma(n_ + 1.0) - std::lgamma(kv + 1.0) - std::lgamma(n_ - kv + 1.0);
    return t;
  }

  /// All count vectors in the sector of k (brute force unless fibers are points).
  [[nodiscard]] std::vector<Counts> fiber(const Counts& k, std::uint64_t cap = std::uint64_t{1} << 24) const {
    if (point_fibers()) return {k};
    const double total = std::pow(n_ + 1.0, static_cast<double>(nv_));
    if (total > static_cast<double>(cap)) throw ConfigError("fiber enumeration exceeds cap");
    const auto target = key(k);
    std::vector<Counts> out;
    Counts c(nv_, 0);
    while (true) {
      if (key(c) == target) out.push_back(c);
      std::size_t v = 0;
      while (v < nv_ && ++c[v] > n_) c[v++] = 0;
      if (v == nv_) break;
    }
    return out;
  }

  /// E^mu[h | block averages of the sector containing k]; independent of n.
  [[nodiscard]] double canonical_expectation(const LocalFunction& h, const Counts& k) const {
    const auto A = count_table(h);
    const int s = static_cast<int>(h.offsets.size());
    const auto F = fiber(k);
    double lmax = -INFINITY;
    for (const auto& c : F) lmax = std::max(lmax, log_multiplicity(c));
    double num = 0.0, den = 0.0;
    for (const auto& c : F) {
      const double w = std::exp(log_multiplicity(c) - lmax);
      num += w * fixed_count_expectation(A, s, c);
      den += w;
    }
    return num / den;
  }

  /// |canonical - grand canonical at the matched averages|.
  [[nodiscard]] double ensemble_gap(const LocalFunction& h, const Counts& k) const {
    return std::abs(canonical_expectation(h, k) - product_expectation(h, grand_canonical_density(average(k))));
  }

  /// logit f lies in the span of the conserved quantities, i.e. the product
  /// measure is uniform on every sector.
  [[nodiscard]] bool in_equilibrium_family(const std::vector<double>& f, double tol = 1e-9) const {
    Eigen::VectorXd lam(static_cast<Eigen::Index>(nv_));
    for (std::size_t v = 0; v < nv_; ++v) lam(static_cast<Eigen::Index>(v)) = std::log(f[v] / (1 - f[v]));
    return (lam - R_.transpose() * (R_ * lam)).norm() <= tol * (1 + lam.norm());
  }

  /// E^mu[(E^mu[h | block averages])^2] for mu = product Bernoulli(f) in the
  /// equilibrium family, summing counts within `width` binomial standard
  /// deviations.
  [[nodiscard]] double conditional_second_moment(const LocalFunction& h, const std::vector<double>& f,
                                                 double width = 9.0) const {
    if (!in_equilibrium_family(f)) throw ConfigError("density is not an equilibrium product measure");
    const auto A = count_table(h);
    const int s = static_cast<int>(h.offsets.size());
    std::vector<int> lo(nv_), hi(nv_);
    std::vector<std::vector<double>> pmf(nv_);
    for (std::size_t v = 0; v < nv_; ++v) {
      const double sd = std::sqrt(n_ * f[v] * (1 - f[v]));
      lo[v] = std::max(0, static_cast<int>(std::floor(n_ * f[v] - width * sd - 2)));
      hi[v] = std::min(n_, static_cast<int>(std::ceil(n_ * f[v] + width * sd + 2)));
      for (int k = lo[v]; k <= hi[v]; ++k) {
        const double lp = std::lgamma(n_ + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n_ - k + 1.0) +
                          k * std::log(f[v]) + (n_ - k) * std::log1p(-f[v]);
        pmf[v].push_back(std::exp(lp));
      }
    }
    // per-velocity pattern weights for every count in range
    std::vector<std::vector<std::vector<double>>> pw(nv_);
    for (std::size_t v = 0; v < nv_; ++v)
      for (int k = lo[v]; k <= hi[v]; ++k) {
        std::vector<double> w(static_cast<std::size_t>(s + 1));
        for (int j = 0; j <= s; ++j) w[j] = pattern_probability(k, s, j);
        pw[v].push_back(std::move(w));
      }
    const std::size_t b = static_cast<std::size_t>(s + 1);
    if (point_fibers()) {
      // nested contraction: velocity 0 is the most significant table digit
      double total = 0.0;
      std::function<void(std::size_t, const std::vector<double>&, double)> rec =
          [&](std::size_t v, const std::vector<double>& T, double prob) {
            if (v == nv_) {
              total += prob * T[0] * T[0];
              return;
            }
            const std::size_t inner = T.size() / b;
            std::vector<double> next(inner);
            for (std::size_t i = 0; i < pw[v].size(); ++i) {
              const double p = prob * pmf[v][i];
              if (p < 1e-300) continue;
              std::fill(next.begin(), next.end(), 0.0);
              for (std::size_t j = 0; j < b; ++j) {
                const double wj = pw[v][i][j];
                if (wj == 0.0) continue;
                for (std::size_t o = 0; o < inner; ++o) next[o] += wj * T[j * inner + o];
              }
              rec(v + 1, next, p);
            }
          };
      rec(0, A, 1.0);
      return total;
    }
    struct Acc {
      double prob = 0.0, weighted = 0.0;
    };
    std::map<ExactConserved, Acc> by_sector;
    Counts c(nv_);
    for (std::size_t v = 0; v < nv_; ++v) c[v] = lo[v];
    while (true) {
      double p = 1.0;
      for (std::size_t v = 0; v < nv_; ++v) p *= pmf[v][static_cast<std::size_t>(c[v] - lo[v])];
      if (p > 1e-300) {
        auto& a = by_sector[key(c)];
        a.prob += p;
        a.weighted += p * fixed_count_expectation(A, s, c);  // within a sector P(k) is proportional to multiplicity
      }
      std::size_t v = 0;
      while (v < nv_ && ++c[v] > hi[v]) c[v] = lo[v], ++v;
      if (v == nv_) break;
    }
    double total = 0.0;
    for (const auto& [_, a] : by_sector) total += a.weighted * a.weighted / a.prob;
    return total;
  }

  /// h - E[h] - sum_i c_i (J_i(eta_0) - E J_i), J = R I over the rank
  /// directions, with c chosen so the grand-canonical gradient vanishes at f.
  /// The first offset is taken as eta_0.
  [[nodiscard]] LocalFunction project_to_fluctuation_free(const LocalFunction& h, const std::vector<double>& f) const {
    const int s = static_cast<int>(h.offsets.size());
    const auto r = R_.rows();
    // dE[h]/dlambda_v = sum over support sites of Cov(h, eta(x, v))
    Eigen::VectorXd dh(static_cast<Eigen::Index>(nv_));
    const double eh = product_expectation(h, f);
    for (std::size_t v = 0; v < nv_; ++v) {
      LocalFunction occ{h.offsets, [&, v](std::span<const SiteMask> m) {
                          double n = 0;
                          for (auto x : m) n += (x >> v) & 1u;
                          return h.fn(m) * n;
                        }};
      dh(static_cast<Eigen::Index>(v)) = product_expectation(occ, f) - eh * s * f[v];
    }
    Eigen::VectorXd h0(static_cast<Eigen::Index>(nv_));
    for (std::size_t v = 0; v < nv_; ++v) h0(static_cast<Eigen::Index>(v)) = f[v] * (1 - f[v]);
    const Eigen::MatrixXd J = R_ * h0.asDiagonal() * R_.transpose();
    const Eigen::VectorXd c = J.ldlt().solve(R_ * dh);
    Eigen::VectorXd meanJ = Eigen::VectorXd::Zero(r);
    for (std::size_t v = 0; v < nv_; ++v) meanJ += R_.col(static_cast<Eigen::Index>(v)) * f[v];
    const Eigen::MatrixXd R = R_;
    const std::size_t nv = nv_;
    auto inner = h.fn;
    return {h.offsets, [=](std::span<const SiteMask> m) {
              Eigen::VectorXd j = -meanJ;
              for (std::size_t v = 0; v < nv; ++v)
                if ((m[0] >> v) & 1u) j += R.col(static_cast<Eigen::Index>(v));
              return inner(m) - eh - c.dot(j);
            }};
  }

 private:
  VelocitySet V_;
  int n_;
  std::size_t nv_;
  Eigen::MatrixXd R_;
};

}  // namespace lgf::exactlab
