#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"
#include "oracles.hpp"

#include "mpcc/downfold.hpp"
#include "mpcc/errors.hpp"

#include <random>

using namespace mpcc;

namespace {

Excitation ex(std::vector<int> h, std::vector<int> p) { return Excitation::from_lists(h, p); }

constexpr Occupation kMiddle = 0b00111100;  // spatial orbitals 1 and 2 of the 4-site chain

}  // namespace

TEST_CASE("build_heff examples") {
  const auto sys = fixture::hubbard(4, 1.0, 4.0);
  const auto full = build_heff(sys.h, ClusterOperator{}, sys.basis, 0xFF);
  CHECK(max_abs(full.matrix - sys.h) == 0.0);
  CHECK_FALSE(full.hermitian);

  const auto d = casscc_decompose(sys.eig.vectors.col(0), sys.basis, kMiddle);
  const auto heff = build_heff(sys.h, d.t_ext, sys.basis, kMiddle);
  CHECK(heff.dimension() == 4);
  const auto ev = heff_eigenvalues(heff);
  CHECK((ev.array() - sys.eig.energies(0)).abs().minCoeff() < 1e-9);
  CHECK(verify_ses(heff, d.t_int, sys.basis, sys.eig.energies(0)) < 1e-9);
  CHECK(heff.cas_basis[static_cast<std::size_t>(heff.reference_position)] == sys.basis.reference());

  CHECK_THROWS_AS(build_heff(sys.h, d.t_int + d.t_ext, sys.basis, kMiddle), ValidationError);
}

TEST_CASE("SES on every admissible dimer CAS") {
  const auto dimer = fixture::hubbard(2, 1.0, 4.0);
  const double e0 = dimer.eig.energies(0);
  for (Occupation occ : {0b01u, 0b10u, 0b11u})
    for (Occupation vir : {0b01u, 0b10u, 0b11u}) {
      const Occupation active = occ | (vir << 2);
      const auto d = casscc_decompose(dimer.eig.vectors.col(0), dimer.basis, active);
      const auto heff = build_heff(dimer.h, d.t_ext, dimer.basis, active);
      CHECK((heff_eigenvalues(heff).array() - e0).abs().minCoeff() < 1e-9);
      CHECK(verify_ses(heff, d.t_int, dimer.basis, e0) < 1e-9);
    }
}

TEST_CASE("verify_ses responds linearly to an energy shift") {
  const auto sys = fixture::hubbard(4, 1.0, 4.0);
  const auto d = casscc_decompose(sys.eig.vectors.col(0), sys.basis, kMiddle);
  const auto heff = build_heff(sys.h, d.t_ext, sys.basis, kMiddle);
  const double norm = heff.restrict(exp_apply(d.t_int, sys.basis.reference_vector(), sys.basis)).norm();
  CHECK(verify_ses(heff, d.t_int, sys.basis, sys.eig.energies(0) + 0.1) == doctest::Approx(0.1 * norm).epsilon(1e-8));

  // T_int = 0 measures the coupling of Phi to the rest of the CAS
  const double e_ref = heff.matrix(heff.reference_position, heff.reference_position);
  Eigen::VectorXd col = heff.matrix.col(heff.reference_position);
  col(heff.reference_position) -= e_ref;
  CHECK(verify_ses(heff, ClusterOperator{}, sys.basis, e_ref) == doctest::Approx(col.norm()));
}

TEST_CASE("cumulative_sigma") {
  const ClusterOperator a{{{ex({0}, {4}), 0.1}}};
  const ClusterOperator b{{{ex({1}, {5}), 0.2}}};
  const ClusterOperator c{{{ex({0}, {4}), 0.2}}};
  const Occupation active = 0b0011;
  CHECK(cumulative_sigma(std::vector{a}, active).amplitudes == a.amplitudes);
  CHECK(cumulative_sigma(std::vector{a, b}, active).size() == 2);
  CHECK(cumulative_sigma(std::vector{a, c}, active).amplitudes.at(ex({0}, {4})) == doctest::Approx(0.3));
  const ClusterOperator internal{{{ex({0}, {4}), 0.1}}};
  CHECK_THROWS_AS(cumulative_sigma(std::vector{internal}, 0b010011), ValidationError);
}

TEST_CASE("multistate K = 1 equals SES and K > M is rejected") {
  const auto sys = fixture::hubbard(4, 1.0, 4.0);
  const auto one = select_states(sys.eig, sys.basis, 1);
  const auto ms = build_multistate_heff(sys.h, one, sys.basis, kMiddle);
  const auto ses = build_heff(sys.h, ms.states[0].t_ext, sys.basis, kMiddle);
  CHECK(max_abs(ms.heff.matrix - ses.matrix) < 1e-12);

  const auto five = select_states(sys.eig, sys.basis, 5);
  CHECK_THROWS_AS(build_multistate_heff(sys.h, five, sys.basis, kMiddle), ValidationError);
}

TEST_CASE("multistate with the full CAS holds every state") {
  const auto sys = fixture::hubbard(4, 1.0, 4.0);
  const auto states = select_states(sys.eig, sys.basis, 3);
  const auto ms = build_multistate_heff(sys.h, states, sys.basis, 0xFF);
  CHECK(ms.sigma.empty());
  for (const auto& s : states.states) {
    const auto m = match_eigenpair(ms.heff, s.energy, s.vector);
    CHECK(m.energy_error < 1e-9);
    CHECK(m.vector_error < 1e-8);
  }
}

TEST_CASE("build_hbar_i") {
  const auto sys = fixture::hubbard(4, 1.0, 4.0);
  const auto states = select_states(sys.eig, sys.basis, 2);
  std::vector<ClusterOperator> ts;
  std::vector<CasccDecomposition> ds;
  for (const auto& s : states.states) {
    ds.push_back(casscc_decompose(s.vector, sys.basis, kMiddle));
    ts.push_back(ds.back().t_ext);
  }
  CHECK(max_abs(build_hbar_i(sys.h, 0, std::span(ts).first(1), sys.basis) - sys.h) == 0.0);
  CHECK(max_abs(build_hbar_i(sys.h, 0, ts, sys.basis) - similarity_transform(sys.h, ts[1], sys.basis)) == 0.0);
  CHECK_THROWS_AS(build_hbar_i(sys.h, 2, ts, sys.basis), ValidationError);

  // Similarity keeps E_i but moves the eigenvector to e^{-S_i} Psi_i.
  for (std::size_t i = 0; i < 2; ++i) {
    const Operator hb = build_hbar_i(sys.h, i, ts, sys.basis);
    const State psi = exp_apply(ts[i], ci_vector(sys.basis, ds[i].c_int), sys.basis);
    const State moved = exp_apply(-1.0 * ts[1 - i], psi, sys.basis);
    CHECK((hb * moved - states[i].energy * moved).norm() < 1e-9);
  }
}

TEST_CASE("GST residuals") {
  const auto sys = fixture::hubbard(4, 1.0, 4.0);
  const auto pr = build_reference_projectors(sys.basis, kMiddle);
  const auto d = casscc_decompose(sys.eig.vectors.col(0), sys.basis, kMiddle);
  const Operator gst = gst_hamiltonian(sys.h, d.t_ext, sys.basis);
  CHECK(gst_residual(gst, d.c_int, pr.q_ext, sys.basis).norm() < 1e-10);

  const Operator bare = gst_hamiltonian(sys.h, ClusterOperator{}, sys.basis);
  CHECK(gst_residual(bare, d.c_int, pr.q_ext, sys.basis).norm() > 1e-3);

  CIOperator scaled = d.c_int;
  scaled.c0 *= 2.5;
  for (auto& [x, v] : scaled.coefficients) v *= 2.5;
  CHECK(max_abs(gst_residual(gst, scaled, pr.q_ext, sys.basis) - 2.5 * gst_residual(gst, d.c_int, pr.q_ext, sys.basis)) < 1e-12);

  // one shared transform versus independent per-state transforms
  const auto states = select_states(sys.eig, sys.basis, 2);
  ClusterOperator sigma;
  std::vector<CIOperator> cs;
  for (const auto& s : states.states) {
    const auto di = casscc_decompose(s.vector, sys.basis, kMiddle);
    sigma += di.t_ext;
    cs.push_back(di.c_int);
  }
  const Operator shared = gst_hamiltonian(sys.h, sigma, sys.basis);
  for (const auto& c : cs) {
    const Operator own = similarity_transform(sys.h, sigma, sys.basis);
    CHECK(max_abs(gst_residual(shared, c, pr.q_ext, sys.basis) - gst_residual(own, c, pr.q_ext, sys.basis)) < 1e-12);
  }
}

TEST_CASE("effective Hamiltonians are genuinely non-Hermitian") {
  const auto sys = fixture::hubbard(4, 1.0, 4.0);
  const auto d = casscc_decompose(sys.eig.vectors.col(0), sys.basis, kMiddle);
  const auto heff = build_heff(sys.h, d.t_ext, sys.basis, kMiddle);
  CHECK(symmetry_defect(heff.matrix) > 1e-3);
  const Operator sym = 0.5 * (heff.matrix + heff.matrix.transpose());
  const double e_sym = Eigen::SelfAdjointEigenSolver<Operator>(sym).eigenvalues()(0);
  CHECK(std::abs(e_sym - sys.eig.energies(0)) > 1e-6);
}

TEST_CASE("solver configuration") {
  SolverConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.damping = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.damping = 1.2;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.damping = 1.0;
  cfg.tolerance = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("Newton-Raphson: exact start converges at iteration 1") {
  const auto sys = fixture::hubbard(4, 1.0, 4.0);
  const auto d = casscc_decompose(sys.eig.vectors.col(0), sys.basis, kMiddle);
  const std::vector<std::vector<Excitation>> support{external_excitations(sys.basis, kMiddle)};
  const std::vector<StateGuess> guess{{d.t_ext, d.c_int}};
  const auto r = newton_raphson_solve(sys.h, sys.basis, kMiddle, support, guess, SolverConfig{});
  CHECK(r.converged);
  CHECK(r.iterations == 1);
  CHECK(std::abs(r.energies[0] - sys.eig.energies(0)) < 1e-9);
}

TEST_CASE("Newton-Raphson: external doubles on the dimer from zero") {
  const auto dimer = fixture::hubbard(2, 1.0, 4.0);
  const Occupation active = 0b0011;  // sigma_g only: the CAS is the reference alone
  const std::vector<int> doubles{2};
  const std::vector<std::vector<Excitation>> support{external_excitations(dimer.basis, active, doubles)};
  CHECK(support[0].size() == 1);
  const std::vector<StateGuess> guess{{ClusterOperator{}, CIOperator{}}};
  const auto r = newton_raphson_solve(dimer.h, dimer.basis, active, support, guess, SolverConfig{});
  CHECK(r.converged);
  CHECK(r.iterations <= 50);
  CHECK(r.log.back().residual_norm < 1e-8);
  // the doubles ansatz is exact here because singles vanish by symmetry
  CHECK(std::abs(r.energies[0] - dimer.eig.energies(0)) < 1e-8);
}

TEST_CASE("Newton-Raphson reports non-convergence") {
  const auto sys = fixture::hubbard(4, 1.0, 4.0);
  SolverConfig cfg;
  cfg.max_iterations = 2;
  const std::vector<std::vector<Excitation>> support{external_excitations(sys.basis, kMiddle)};
  const std::vector<StateGuess> guess{{ClusterOperator{}, CIOperator{}}};
  const auto r = newton_raphson_solve(sys.h, sys.basis, kMiddle, support, guess, cfg);
  CHECK_FALSE(r.converged);
  CHECK(r.log.size() == 2);
  CHECK_FALSE(r.message.empty());
}
