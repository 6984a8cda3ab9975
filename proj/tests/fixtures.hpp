#pragma once

// Shared model setups for the test programs.

#include "mpcc/fci.hpp"
#include "mpcc/fock.hpp"
#include "mpcc/ham.hpp"

namespace fixture {

struct System {
  mpcc::ModelSpec spec;
  mpcc::OrbitalBasis orbitals;
  mpcc::DeterminantBasis basis;
  mpcc::Operator h;
  mpcc::EigenSet eig;
};

/// Half-filled Hubbard model in its hopping eigenbasis, Sz = 0 sector.
inline System hubbard(int sites, double t, double u, bool ring = false) {
  mpcc::ModelSpec spec{ring ? mpcc::ModelSpec::Kind::HubbardRing : mpcc::ModelSpec::Kind::HubbardChain,
                       sites, t, u};
  auto orbitals = mpcc::one_body_eigenbasis(mpcc::build_model(spec));
  auto basis = mpcc::enumerate_basis(2 * sites, sites, 0.0);
  auto h = mpcc::assemble_hamiltonian(orbitals.integrals, basis);
  auto eig = mpcc::diagonalize(h);
  return {spec, std::move(orbitals), std::move(basis), std::move(h), std::move(eig)};
}

inline double dimer_ground(double t, double u) { return 0.5 * (u - std::sqrt(u * u + 16.0 * t * t)); }

}  // namespace fixture
