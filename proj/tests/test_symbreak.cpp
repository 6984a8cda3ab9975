#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

#include "mpcc/errors.hpp"
#include "mpcc/symbreak.hpp"

#include <bit>
#include <random>

using namespace mpcc;

namespace {

Excitation ex(std::vector<int> h, std::vector<int> p) { return Excitation::from_lists(h, p); }

SymmetrySectors reflection_sectors(const fixture::System& sys) {
  return build_symmetry_sectors(SymmetryGroup::z2(reflection_in_orbitals(sys.spec, sys.orbitals.coefficients)),
                                sys.basis);
}

/// 4-site ring in the site basis with the mirror 0<->1, 2<->3 that keeps the
/// reference (sites 0 and 1 doubly occupied) fixed.
struct SiteRing {
  DeterminantBasis basis = enumerate_basis(8, 4, 0.0);
  Operator h = oracle::site_hubbard(4, 1.0, 3.0, true, basis);
  SymmetrySectors sectors = build_symmetry_sectors(
      SymmetryGroup::z2(SignedPermutation::from_spatial(std::vector{1, 0, 3, 2}, std::vector{1, 1, 1, 1})), basis);
};

State random_in(const Operator& q, std::mt19937& rng) {
  return q * oracle::random_vector(q.rows(), rng);
}

double level_distance(const Determinant& a, const Determinant& b) {
  return std::popcount(a.bits() ^ b.bits()) / 2;
}

}  // namespace

TEST_CASE("sector projectors and block structure") {
  const auto dimer = fixture::hubbard(2, 1.0, 4.0);
  const auto s = reflection_sectors(dimer);
  CHECK(s.size() == 2);
  CHECK(s.projectors[static_cast<std::size_t>(s.reference_sector)].label == "even");
  const Operator p = dimer.basis.reference_vector() * dimer.basis.reference_vector().transpose();
  CHECK(max_abs((p + s.q_s1) * dimer.h * s.q_s2) == 0.0);

  const SiteRing ring;
  const Operator pr = ring.basis.reference_vector() * ring.basis.reference_vector().transpose();
  CHECK(max_abs((pr + ring.sectors.q_s1) * ring.h * ring.sectors.q_s2) < 1e-14);

  // a mirror that moves the reference leaves it in no single sector
  const auto bad = SymmetryGroup::z2(SignedPermutation::from_spatial(std::vector{3, 2, 1, 0}, std::vector{1, 1, 1, 1}));
  CHECK_THROWS_AS(build_symmetry_sectors(bad, ring.basis), ValidationError);
}

TEST_CASE("split_by_sector") {
  const auto dimer = fixture::hubbard(2, 1.0, 4.0);
  const auto s = reflection_sectors(dimer);
  const Excitation even = ex({0, 1}, {2, 3});
  const Excitation odd = ex({0}, {2});
  const ClusterOperator t{{{even, 0.3}, {odd, -0.2}}};
  const auto split = split_by_sector(t, s, dimer.basis);
  REQUIRE(split.components.size() == 2);
  const auto& s1 = split.components[static_cast<std::size_t>(split.reference_sector)].amplitudes;
  const auto& s2 = split.components[static_cast<std::size_t>(1 - split.reference_sector)].amplitudes;
  CHECK(s1.size() == 1);
  CHECK(s1.at(even) == doctest::Approx(0.3));
  CHECK(s2.size() == 1);
  CHECK(s2.at(odd) == doctest::Approx(-0.2));

  const auto trivial = build_symmetry_sectors(SymmetryGroup::trivial(4), dimer.basis);
  const auto one = split_by_sector(t, trivial, dimer.basis);
  REQUIRE(one.components.size() == 1);
  CHECK(one.components[0].amplitudes == t.amplitudes);

  const SiteRing ring;
  std::mt19937 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    State v = oracle::random_vector(ring.basis.size(), rng);
    v(ring.basis.reference_index()) = 0.0;
    const ClusterOperator tr{amplitudes_from_reference_action(ring.basis, v)};
    const auto parts = split_by_sector(tr, ring.sectors, ring.basis);
    ClusterOperator sum;
    for (std::size_t k = 0; k < parts.components.size(); ++k) {
      sum += parts.components[k];
      const State a = reference_action(ring.basis, parts.components[k].amplitudes);
      CHECK((a - ring.sectors.projectors[k].matrix * a).norm() < 1e-12);
    }
    CHECK(max_abs(reference_action(ring.basis, sum.amplitudes) - v) < 1e-13);

    const CIOperator c{0.7, tr.amplitudes};
    const auto cparts = split_by_sector(c, ring.sectors, ring.basis);
    State csum = State::Zero(ring.basis.size());
    for (const auto& comp : cparts.components) csum += ci_vector(ring.basis, comp);
    CHECK(max_abs(csum - ci_vector(ring.basis, c)) < 1e-13);
    CHECK(cparts.components[static_cast<std::size_t>(1 - cparts.reference_sector)].c0 == 0.0);
  }
}

TEST_CASE("map_c_to_t") {
  const SiteRing ring;
  const auto& b = ring.basis;
  std::mt19937 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const CIOperator c_s2{0.0, amplitudes_from_reference_action(b, random_in(ring.sectors.q_s2, rng))};
    const ClusterOperator t_s1{amplitudes_from_reference_action(b, 0.5 * random_in(ring.sectors.q_s1, rng))};
    const ClusterOperator t_s2 = map_c_to_t(c_s2, t_s1, ring.sectors, b);
    const State lhs = ring.sectors.q_s2 * exp_apply(t_s1 + t_s2, b.reference_vector(), b);
    CHECK(max_abs(lhs - ci_vector(b, c_s2)) < 1e-12);

    // rank 1 is copied; rank 2 follows the explicit second-order expansion
    CHECK(max_abs(reference_action(b, t_s2.rank(1).amplitudes) - reference_action(b, c_s2.rank(1).coefficients)) < 1e-14);
    const Operator c1 = excitation_matrix(b, c_s2.rank(1).coefficients);
    const Operator s1 = excitation_matrix(b, t_s1.rank(1).amplitudes);
    const State second = ring.sectors.q_s2 * ((0.5 * c1 * c1 + c1 * s1 + 0.5 * s1 * s1) * b.reference_vector());
    State expect = reference_action(b, c_s2.rank(2).coefficients) - second;
    for (Eigen::Index i = 0; i < b.size(); ++i)
      if (level_distance(b[i], b.reference()) != 2) expect(i) = 0.0;
    CHECK(max_abs(reference_action(b, t_s2.rank(2).amplitudes) - expect) < 1e-13);
  }

  CHECK_THROWS_AS(map_c_to_t(CIOperator{}, {}, ring.sectors, b), ValidationError);
  const CIOperator leaks{0.0, amplitudes_from_reference_action(b, random_in(ring.sectors.q_s1, rng))};
  CHECK_THROWS_AS(map_c_to_t(leaks, {}, ring.sectors, b), ValidationError);
}

TEST_CASE("messenger on the dimer: Q_S1 solved, reference row violated") {
  for (double u : {0.0, 4.0}) {
    const auto dimer = fixture::hubbard(2, 1.0, u);
    const auto s = reflection_sectors(dimer);
    // lowest odd state
    Eigen::Index pick = -1;
    for (Eigen::Index k = 0; k < dimer.eig.energies.size(); ++k)
      if ((s.q_s2 * dimer.eig.vectors.col(k)).norm() > 1.0 - 1e-10) {
        pick = k;
        break;
      }
    REQUIRE(pick >= 0);
    const double e = dimer.eig.energies(pick);
    const auto r = solve_broken_symmetry(dimer.h, dimer.eig.vectors.col(pick), e, s, dimer.basis, SolverConfig{});
    CHECK(r.messenger.projected_converged);
    CHECK(r.messenger.residual_norm < 1e-10);
    CHECK_FALSE(r.converged);
    CHECK_FALSE(r.message.empty());

    // S1 part is Phi + c D with c = -H_DPhi / (H_DD - E); the row is H_PhiPhi - E + H_PhiD c
    const auto phi = dimer.basis.reference_index();
    const auto d = *dimer.basis.find(0b1100);
    const double c = -dimer.h(d, phi) / (dimer.h(d, d) - e);
    CHECK(r.messenger.reference_residual == doctest::Approx(dimer.h(phi, phi) - e + dimer.h(phi, d) * c).epsilon(1e-10));
    if (u == 0.0) CHECK(std::abs(c) < 1e-12);
    CHECK(r.energy == doctest::Approx(e + r.messenger.reference_residual).epsilon(1e-10));
  }
}

TEST_CASE("messenger preconditions") {
  const auto dimer = fixture::hubbard(2, 1.0, 4.0);
  const auto s = reflection_sectors(dimer);
  const ClusterOperator t_s2{{{ex({0}, {2}), 0.1}}};
  const double e_s1 = dimer.eig.energies(0);
  CHECK_THROWS_AS(solve_messenger(dimer.h, t_s2, e_s1, s, dimer.basis, SolverConfig{}), ValidationError);

  const auto trivial = build_symmetry_sectors(SymmetryGroup::trivial(4), dimer.basis);
  CHECK_THROWS_AS(solve_broken_symmetry(dimer.h, dimer.eig.vectors.col(0), e_s1, trivial, dimer.basis, SolverConfig{}),
                  ValidationError);
  CHECK_THROWS_AS(solve_broken_symmetry(dimer.h, dimer.eig.vectors.col(0), e_s1, s, dimer.basis, SolverConfig{}),
                  ValidationError);
}

TEST_CASE("T_S2 = 0 branch reproduces the S1 ground state") {
  const auto sys = fixture::hubbard(4, 1.0, 4.0);
  const auto s = reflection_sectors(sys);
  const double e0 = sys.eig.energies(0);
  const auto r = solve_messenger(sys.h, {}, e0, s, sys.basis, SolverConfig{});
  CHECK(r.converged);
  CHECK(std::abs(r.reference_residual) < 1e-8);
  CHECK(verify_broken_energy(sys.h, r.t_s1, {}, sys.basis) == doctest::Approx(e0).epsilon(1e-10));
  // the standard solution is a root of the full CC residual as well
  const auto pr = build_reference_projectors(sys.basis, 0xFF);
  CHECK(cc_residual(sys.h, r.t_s1, pr.q, sys.basis).norm() < 1e-7);
}

TEST_CASE("verify_broken_energy and cross-symmetry downfolding") {
  // U = 4 would put <Phi|H|Phi> on top of the triplet energy
  const auto dimer = fixture::hubbard(2, 1.0, 2.0);
  const auto s = reflection_sectors(dimer);
  const auto phi = dimer.basis.reference_index();
  CHECK(verify_broken_energy(dimer.h, {}, {}, dimer.basis) == dimer.h(phi, phi));

  Eigen::Index pick = 0;
  while ((s.q_s2 * dimer.eig.vectors.col(pick)).norm() < 0.5) ++pick;
  const double e = dimer.eig.energies(pick);
  const auto r = solve_broken_symmetry(dimer.h, dimer.eig.vectors.col(pick), e, s, dimer.basis, SolverConfig{});
  const ClusterOperator t = r.t_s1 + r.t_s2;

  // bonding orbital only: the CAS is Phi alone, so H^eff is the CC energy
  const auto minimal = cross_symmetry_downfold(dimer.h, t, 0b0011, e, s, dimer.basis);
  CHECK(minimal.s1_only);
  CHECK(minimal.error == doctest::Approx(std::abs(r.energy - e)).epsilon(1e-10));
  CHECK(minimal.matched == (minimal.error < 1e-8));

  const auto all = cross_symmetry_downfold(dimer.h, t, 0xF, e, s, dimer.basis);
  CHECK_FALSE(all.s1_only);
  CHECK(all.matched);

  const auto zero = cross_symmetry_downfold(dimer.h, {}, 0b0011, e, s, dimer.basis);
  CHECK_FALSE(zero.matched);
  CHECK_FALSE(zero.message.empty());
}
