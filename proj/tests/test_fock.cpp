#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

#include "mpcc/errors.hpp"
#include "mpcc/fock.hpp"

#include <algorithm>
#include <bit>
#include <random>

using namespace mpcc;

namespace {

Excitation ex(std::vector<int> h, std::vector<int> p) { return Excitation::from_lists(h, p); }

Determinant det(Occupation bits, int n) { return Determinant(bits, n); }

}  // namespace

TEST_CASE("enumerate_basis counts") {
  CHECK(enumerate_basis(4, 2).size() == 6);
  CHECK(enumerate_basis(2, 2).size() == 1);

  int brute = 0;
  for (Occupation b = 0; b < 16; ++b) {
    if (std::popcount(b) != 2) continue;
    int alpha = std::popcount(b & 0b0101);
    if (alpha == 1) ++brute;
  }
  const auto sz0 = enumerate_basis(4, 2, 0.0);
  CHECK(sz0.size() == brute);
  CHECK(sz0.size() == 4);
  CHECK(sz0.reference().bits() == 0b0011);

  CHECK_THROWS_AS(enumerate_basis(4, 2, 2.0), ValidationError);
  CHECK_THROWS_AS(enumerate_basis(4, 5), ValidationError);
}

TEST_CASE("basis is ascending and indexable") {
  const auto basis = enumerate_basis(8, 4, 0.0);
  for (Eigen::Index i = 1; i < basis.size(); ++i) CHECK(basis[i - 1].bits() < basis[i].bits());
  for (Eigen::Index i = 0; i < basis.size(); ++i) CHECK(basis.index_of(basis[i]) == i);
  CHECK(basis.max_excitation_level() == 4);
}

TEST_CASE("apply_excitation examples") {
  auto r = apply_excitation(det(0b0011, 4), ex({0}, {2}));
  REQUIRE(r);
  CHECK(r->determinant.bits() == 0b0110);
  CHECK(r->sign == -1);

  CHECK_FALSE(apply_excitation(det(0b0011, 4), ex({0}, {1})));

  auto d = apply_excitation(det(0b0101, 4), ex({0, 2}, {1, 3}));
  REQUIRE(d);
  auto o = oracle::apply_string(oracle::excitation_string({0, 2}, {1, 3}), oracle::to_list(0b0101, 4));
  REQUIRE(o);
  CHECK(d->determinant.bits() == 0b1010);
  CHECK(oracle::to_bits(o->first) == 0b1010);
  CHECK(d->sign == o->second);
  CHECK(d->sign == 1);
}

TEST_CASE("apply_excitation agrees with ladder strings") {
  std::mt19937 rng(11);
  const int n = 10;
  for (int trial = 0; trial < 400; ++trial) {
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    const int k = 1 + static_cast<int>(rng() % 3);
    std::vector<int> holes(perm.begin(), perm.begin() + k);
    std::vector<int> parts(perm.begin() + k, perm.begin() + 2 * k);
    std::sort(holes.begin(), holes.end());
    std::sort(parts.begin(), parts.end());
    const Occupation bits = rng() & ((Occupation{1} << n) - 1);
    auto lib = apply_excitation(det(bits, n), ex(holes, parts));
    auto ref = oracle::apply_string(oracle::excitation_string(holes, parts), oracle::to_list(bits, n));
    REQUIRE(lib.has_value() == ref.has_value());
    if (lib) {
      CHECK(lib->determinant.bits() == oracle::to_bits(ref->first));
      CHECK(lib->sign == ref->second);
    }
  }
}

TEST_CASE("excitation_between examples") {
  CHECK(excitation_between(det(0b0011, 4), det(0b0110, 4)) == ex({0}, {2}));
  CHECK(excitation_between(det(0b0011, 4), det(0b1100, 4)) == ex({0, 1}, {2, 3}));
  CHECK_THROWS_AS(excitation_between(det(0b0011, 4), det(0b0011, 4)), ValidationError);
  CHECK_THROWS_AS(excitation_between(det(0b0011, 4), det(0b0111, 4)), ValidationError);
}

TEST_CASE("apply and between are inverse, de-excitation restores with sign +1") {
  std::mt19937 rng(5);
  for (int n : {6, 8, 10}) {
    for (int ne = 2; ne <= n - 2; ne += 2) {
      const auto basis = enumerate_basis(n, ne);
      const Determinant ref = basis[static_cast<Eigen::Index>(rng() % basis.size())];
      for (Eigen::Index i = 0; i < basis.size(); ++i) {
        if (basis[i] == ref) continue;
        const Excitation x = excitation_between(ref, basis[i]);
        CHECK(is_well_formed(x, ref));
        auto there = apply_excitation(ref, x);
        REQUIRE(there);
        CHECK(there->determinant == basis[i]);
        auto back = apply_excitation(there->determinant, Excitation{x.particles, x.holes});
        REQUIRE(back);
        CHECK(back->determinant == ref);
        CHECK(there->sign * back->sign == 1);
      }
    }
  }
}

TEST_CASE("reference projectors") {
  const auto basis = enumerate_basis(4, 2);
  const Operator id = Operator::Identity(6, 6);

  const auto all = build_reference_projectors(basis, 0b1111);
  CHECK(all.kind == ActiveSpaceKind::Full);
  CHECK(max_abs(all.q_ext.matrix) == 0.0);
  CHECK(max_abs(all.p.matrix + all.q_int.matrix - id) < 1e-12);

  const auto occ = build_reference_projectors(basis, 0b0011);
  CHECK(occ.kind == ActiveSpaceKind::NoExcitations);
  CHECK(max_abs(occ.q_int.matrix) == 0.0);

  // Drop virtual 3: internal determinants are those inside {0,1,2} other than Phi.
  const auto part = build_reference_projectors(basis, 0b0111);
  int brute = 0;
  for (Eigen::Index i = 0; i < basis.size(); ++i)
    if (i != basis.reference_index() && (basis[i].bits() & ~Occupation{0b0111}) == 0) ++brute;
  CHECK(part.q_int.matrix.trace() == doctest::Approx(brute));
  CHECK(brute == 2);
  CHECK(part.cas_indices.size() == 3);

  CHECK_THROWS_AS(build_reference_projectors(basis, 0), ValidationError);
  CHECK_THROWS_AS(build_reference_projectors(basis, 0b10000), ValidationError);
}

TEST_CASE("reference projectors partition identity for random active sets") {
  std::mt19937 rng(3);
  const auto basis = enumerate_basis(8, 4, 0.0);
  const Operator id = Operator::Identity(basis.size(), basis.size());
  for (int trial = 0; trial < 30; ++trial) {
    const Occupation active = 1 + rng() % 255;
    const auto pr = build_reference_projectors(basis, active);
    CHECK(max_abs(pr.p.matrix + pr.q_int.matrix + pr.q_ext.matrix - id) < 1e-12);
    for (const Projector* p : {&pr.p, &pr.q, &pr.q_int, &pr.q_ext}) {
      CHECK(max_abs(p->matrix * p->matrix - p->matrix) < 1e-12);
      CHECK(symmetry_defect(p->matrix) < 1e-12);
    }
    CHECK(static_cast<double>(pr.cas_indices.size()) == doctest::Approx(1.0 + pr.q_int.matrix.trace()));
  }
}

TEST_CASE("sector projectors") {
  SUBCASE("trivial group") {
    const auto basis = enumerate_basis(6, 3);
    const auto ps = build_sector_projectors(SymmetryGroup::trivial(6), basis);
    REQUIRE(ps.size() == 1);
    CHECK(max_abs(ps[0].matrix - Operator::Identity(basis.size(), basis.size())) == 0.0);
  }
  SUBCASE("two-site reflection") {
    const auto basis = enumerate_basis(4, 2, 0.0);
    const std::vector<int> image{1, 0};
    const std::vector<int> phase{1, 1};
    const auto ps = build_sector_projectors(SymmetryGroup::z2(SignedPermutation::from_spatial(image, phase)), basis);
    REQUIRE(ps.size() == 2);
    CHECK(max_abs(ps[0].matrix + ps[1].matrix - Operator::Identity(4, 4)) < 1e-14);
    CHECK(max_abs(ps[0].matrix * ps[1].matrix) < 1e-14);
  }
  SUBCASE("four-site ring reflection dimensions") {
    const auto basis = enumerate_basis(8, 4, 0.0);
    const std::vector<int> image{3, 2, 1, 0};
    const std::vector<int> phase{1, 1, 1, 1};
    const auto g = SignedPermutation::from_spatial(image, phase);
    const Operator d = group_action(g, basis);
    Eigen::SelfAdjointEigenSolver<Operator> es(d);
    int plus = 0;
    for (double v : es.eigenvalues()) plus += v > 0 ? 1 : 0;
    const auto ps = build_sector_projectors(SymmetryGroup::z2(g), basis);
    CHECK(ps[0].matrix.trace() == doctest::Approx(plus));
    CHECK(ps[1].matrix.trace() == doctest::Approx(basis.size() - plus));
    for (std::size_t i = 0; i < ps.size(); ++i)
      for (std::size_t j = 0; j < ps.size(); ++j) {
        const Operator expect = i == j ? ps[i].matrix : Operator::Zero(basis.size(), basis.size());
        CHECK(max_abs(ps[i].matrix * ps[j].matrix - expect) < 1e-12);
      }
  }
  SUBCASE("commutes with a symmetric Hamiltonian") {
    const auto sys = fixture::hubbard(4, 1.0, 2.0, true);
    const auto site_basis = enumerate_basis(8, 4, 0.0);
    const Operator h = assemble_hamiltonian(build_model(sys.spec), site_basis);
    const std::vector<int> image{3, 2, 1, 0};
    const std::vector<int> phase{1, 1, 1, 1};
    const auto ps = build_sector_projectors(SymmetryGroup::z2(SignedPermutation::from_spatial(image, phase)), site_basis);
    for (const auto& p : ps) CHECK(max_abs(commutator(h, p.matrix)) < 1e-10);
  }
}

TEST_CASE("group validation") {
  const std::vector<int> image{1, 0};
  const std::vector<int> phase{1, 1};
  const auto g = SignedPermutation::from_spatial(image, phase);
  CHECK(g.compose(g) == SignedPermutation::identity(4));
  // not closed: {1, g} for an element of order 3
  const std::vector<int> cyc{1, 2, 0};
  const std::vector<int> ones{1, 1, 1};
  const auto c = SignedPermutation::from_spatial(cyc, ones);
  CHECK_THROWS_AS(SymmetryGroup::z2(c), ValidationError);
  // swapping the spins of one orbital leaves a fixed-Sz basis
  SignedPermutation flip = SignedPermutation::identity(4);
  std::swap(flip.image[0], flip.image[1]);
  CHECK_THROWS_AS(group_action(flip, enumerate_basis(4, 1, 0.5)), ValidationError);
}

TEST_CASE("spin flip and Z2 products") {
  const auto basis = enumerate_basis(4, 2, 0.0);
  const auto s = spin_flip(4);
  CHECK(s.compose(s) == SignedPermutation::identity(4));
  CHECK(group_closure(std::vector{s}).size() == 2);
  // a single doubly occupied orbital picks up -1
  const auto img = s.apply(0b0011);
  REQUIRE(img);
  CHECK(img->bits == 0b0011);
  CHECK(img->sign == -1);

  const std::vector<int> image{1, 0};
  const std::vector<int> phase{1, 1};
  const auto r = SignedPermutation::from_spatial(image, phase);
  const std::vector<std::string> names{"reflection", "spin"};
  const auto g = SymmetryGroup::z2_product(std::vector{r, s}, names);
  CHECK(g.order() == 4);
  CHECK(g.n_sectors() == 4);
  CHECK(g.labels()[0] == "reflection+,spin+");
  CHECK(g.labels()[3] == "reflection-,spin-");
  const auto ps = build_sector_projectors(g, basis);
  Operator sum = Operator::Zero(basis.size(), basis.size());
  for (const auto& p : ps) sum += p.matrix;
  CHECK(max_abs(sum - Operator::Identity(basis.size(), basis.size())) < 1e-14);

  const std::vector<std::string> two{"a", "b"};
  CHECK_THROWS_AS(SymmetryGroup::z2_product(std::vector{r, r}, two), ValidationError);
  const std::vector<std::string> one{"a"};
  CHECK_THROWS_AS(SymmetryGroup::z2_product(std::vector{r}, two), ValidationError);
  CHECK_THROWS_AS(SymmetryGroup::z2_product(std::vector{SignedPermutation::identity(4)}, one), ValidationError);
}
