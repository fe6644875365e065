#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <sstream>

#include "lgf/dynamics.hpp"

using namespace lgf;

namespace {

const VelocitySet& canonical() {
  static const VelocitySet V = build_velocity_set(std::sqrt(2.0));
  return V;
}
const CollisionTable& canonical_table() {
  static const CollisionTable Q = build_collision_table(canonical());
  return Q;
}

}  // namespace

TEST(Dynamics, ValidatesChi) {
  EXPECT_THROW(validate(DynamicsParams{0.7, 1.0, 1.0}, canonical()), ConfigError);
  EXPECT_NO_THROW(validate(DynamicsParams{0.71, 1.0, 1.0}, canonical()));
  EXPECT_THROW(validate(DynamicsParams{1.0, 0.0, 1.0}, canonical()), ConfigError);
}

TEST(Dynamics, SingleParticleDrift) {
  // Biased walk: right at chi + v/2, left at chi - v/2; mean displacement v t,
  // variance 2 chi t (epsilon = 1).
  const auto V = build_velocity_set(std::sqrt(2.0), ToySpec::from_integers(1, {{1, 0, 0}}));
  const CollisionTable Q;
  const DynamicsParams prm{1.0, 1.0, 1.0};
  const Simulator sim(V, Q, prm);
  auto lattice = std::make_shared<const Lattice>(Lattice::cube(1, 100));
  const double t = 5.0;
  const int replicas = 4000;
  Rng rng(5, 0);
  double sum = 0, sum2 = 0;
  for (int r = 0; r < replicas; ++r) {
    auto s = empty_state(lattice);
    s.occ[100] = 1;
    reset_totals(s, V);
    sim.step_to(s, t, rng);
    std::size_t pos = 0;
    while (s.occ[pos] == 0) ++pos;
    const double d = static_cast<double>(pos) - 100.0;
    sum += d;
    sum2 += d * d;
  }
  const double mean = sum / replicas;
  const double var = sum2 / replicas - mean * mean;
  EXPECT_LT(std::abs(mean - t), 4.0 * std::sqrt(2.0 * t / replicas));
  EXPECT_NEAR(var, 2.0 * t, 0.15 * 2.0 * t);
}

TEST(Dynamics, ZeroHorizonIsNoOp) {
  const auto p = equilibrium_params(ChemicalPotential::reference(0.3, -0.1), canonical());
  Rng rng(1, 0);
  auto s = sample_product_measure(p, 2, rng);
  const auto before = s.occ;
  const auto stats = step_to(s, canonical(), canonical_table(), DynamicsParams{1.0, 0.5, 1.0}, 0.0, rng);
  EXPECT_EQ(stats.proposals, 0u);
  EXPECT_EQ(s.occ, before);
  EXPECT_THROW(step_to(s, canonical(), canonical_table(), DynamicsParams{1.0, 0.5, 1.0}, -1.0, rng), ConfigError);
}

TEST(Dynamics, ExchangeAndCollisionEdgeCases) {
  const auto& V = canonical();
  const auto& Q = canonical_table();
  auto s = empty_state(std::make_shared<const Lattice>(Lattice::cube(3, 1)));
  s.occ[0] = 0b101;
  s.occ[s.lattice->neighbor(0, 0)] = 0b001;
  reset_totals(s, V);
  const auto before = s.occ;
  EXPECT_FALSE(apply_exchange(s, 0, 0, 0));
  EXPECT_EQ(s.occ, before);
  EXPECT_TRUE(apply_exchange(s, 0, 0, 2));
  EXPECT_EQ(s.occ[s.lattice->neighbor(0, 0)], 0b101u);

  const auto& q = Q[0];
  s.occ[1] = q.in_mask | q.out_mask;  // an outgoing slot is occupied
  const auto blocked = s.occ;
  EXPECT_FALSE(apply_collision(s, V, 1, q));
  EXPECT_EQ(s.occ, blocked);
  s.occ[1] = q.in_mask;
  reset_totals(s, V);
  const auto totals = s.totals;
  EXPECT_TRUE(apply_collision(s, V, 1, q));
  EXPECT_EQ(std::popcount(s.occ[1] ^ q.in_mask), 4);
  EXPECT_EQ(s.totals, totals);
}

TEST(Dynamics, ConservationAlongTrajectory) {
  const auto& V = canonical();
  const auto p = equilibrium_params(ChemicalPotential::reference(0.3, -0.1), V);
  Rng rng(77, 0);
  auto s = sample_product_measure(p, 3, rng);
  const auto initial = s.totals;
  const Simulator sim(V, canonical_table(), DynamicsParams{1.0, 1.0 / 3.0, 1.0});
  for (int chunk = 0; chunk < 20; ++chunk) {
    const auto stats = sim.step_events(s, 5000, rng);
    EXPECT_EQ(stats.proposals, 5000u);
    EXPECT_EQ(s.totals, initial);
    EXPECT_EQ(recompute_totals(s, V), s.totals);
    const auto fresh = evaluate(recompute_totals(s, V), V.varpi());
    for (int b = 0; b < 5; ++b) EXPECT_NEAR(s.numeric_totals[b], fresh[b], 1e-9);
    EXPECT_EQ(s.numeric_totals[0], fresh[0]);
  }
}

TEST(Dynamics, SymmetricExclusionKeepsProductMeasureStationary) {
  // One zero velocity: pure symmetric exclusion at rate chi. Start from
  // Bernoulli(f) and compare the joint law of two adjacent sites with the
  // product law by a chi-square test.
  const auto V = build_velocity_set(std::sqrt(2.0), ToySpec::from_integers(1, {{0, 0, 0}}));
  const CollisionTable Q;
  const Simulator sim(V, Q, DynamicsParams{1.0, 1.0, 1.0});
  const auto p = equilibrium_params(ChemicalPotential{{-0.4, 0, 0, 0, 0}}, V);
  auto lattice = std::make_shared<const Lattice>(Lattice::cube(1, 3));
  auto s = empty_state(lattice);
  Rng rng(31, 0);
  std::array<double, 4> counts{};
  const int replicas = 20000;
  for (int r = 0; r < replicas; ++r) {
    resample_product_measure(s, p, rng);
    sim.step_to(s, 2.0, rng);
    counts[(s.occ[0] & 1u) * 2 + (s.occ[1] & 1u)] += 1;
  }
  const double f = p.f[0];
  const std::array<double, 4> prob{(1 - f) * (1 - f), (1 - f) * f, f * (1 - f), f * f};
  double chi2 = 0;
  for (int i = 0; i < 4; ++i) {
    const double e = prob[i] * replicas;
    chi2 += (counts[i] - e) * (counts[i] - e) / e;
  }
  const boost::math::chi_squared dist(3);
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.01) << chi2;
}

TEST(Dynamics, StationarityOfMarginals) {
  const auto& V = canonical();
  const auto p = equilibrium_params(ChemicalPotential::reference(0.3, -0.1), V);
  const Simulator sim(V, canonical_table(), DynamicsParams{1.0, 0.5, 1.0});
  auto lattice = std::make_shared<const Lattice>(Lattice::cube(3, 2));
  auto s = empty_state(lattice);
  Rng rng(8, 1);
  std::vector<double> counts(V.size(), 0.0);
  const int replicas = 40;
  for (int r = 0; r < replicas; ++r) {
    resample_product_measure(s, p, rng);
    sim.step_to(s, 0.05, rng);
    // The law at time T is again a product measure, so sites pool.
    for (auto m : s.occ)
      for (std::size_t v = 0; v < V.size(); ++v) counts[v] += m >> v & 1u;
  }
  for (std::size_t v = 0; v < V.size(); ++v) {
    const double n = replicas * static_cast<double>(lattice->sites());
    EXPECT_LT(std::abs(counts[v] - n * p.f[v]), 4 * std::sqrt(n * p.f[v] * (1 - p.f[v]))) << v;
  }
}

TEST(Dynamics, DeterministicForFixedSeed) {
  const auto& V = canonical();
  const auto p = equilibrium_params(ChemicalPotential::reference(0.3, -0.1), V);
  auto run = [&] {
    Rng rng(123, 4);
    auto s = sample_product_measure(p, 2, rng);
    step_to(s, V, canonical_table(), DynamicsParams{1.0, 0.5, 1.0}, 0.02, rng);
    return s.occ;
  };
  EXPECT_EQ(run(), run());
}

TEST(Snapshot, RoundTrip) {
  const auto& V = canonical();
  const auto p = equilibrium_params(ChemicalPotential::reference(0.3, -0.1), V);
  Rng rng(4, 0);
  auto s = sample_product_measure(p, 2, rng);
  s.time = 1.25;
  std::stringstream buf;
  write_snapshot(buf, s, SnapshotMeta{4, V.varpi(), static_cast<std::uint32_t>(V.size()), DynamicsParams{1.0, 0.5, 1.0}, "note"});
  const auto back = read_snapshot(buf, V);
  EXPECT_EQ(back.state.occ, s.occ);
  EXPECT_EQ(back.meta.note, "note");
  EXPECT_EQ(back.state.totals, s.totals);
  EXPECT_EQ(back.state.time, 1.25);
  EXPECT_EQ(back.meta.seed, 4u);
  std::stringstream bad("NOTASNAP");
  EXPECT_THROW(read_snapshot(bad, V), ConfigError);
}
