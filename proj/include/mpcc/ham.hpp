#pragma once

// Hamiltonian ingestion: FCIDUMP integral files, Hubbard lattice models and
// Slater-Condon assembly of the many-body matrix.

#include "mpcc/fock.hpp"
#include "mpcc/linalg.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mpcc {

/// Real spatial-orbital integrals. Two-electron integrals are stored densely
/// in chemists' notation (pq|rs) = int phi_p(1) phi_q(1) r12^-1 phi_r(2) phi_s(2).
struct IntegralSet {
  int n_spatial = 0;
  Operator h1;
  std::vector<double> h2;
  double e_core = 0.0;
  /// Header fields carried by FCIDUMP files; zero when not applicable.
  int n_electrons = 0;
  int ms2 = 0;
  std::vector<int> orbital_symmetry;

  static IntegralSet zeros(int n_spatial);

  double eri(int p, int q, int r, int s) const {
    return h2[static_cast<std::size_t>(((p * n_spatial + q) * n_spatial + r) * n_spatial + s)];
  }
  /// Writes the value into all eight permutationally equivalent slots.
  void set_eri(int p, int q, int r, int s, double value);
};

/// Throws ValidationError unless h1 is symmetric and h2 has 8-fold symmetry.
void validate_integrals(const IntegralSet& ints, double tol = 1e-12);

IntegralSet parse_fcidump(std::istream& in);
IntegralSet parse_fcidump_file(const std::filesystem::path& path);
/// Canonical representatives only (p>=q, r>=s, pq>=rs), full precision.
void write_fcidump(std::ostream& out, const IntegralSet& ints, double drop_below = 0.0);

struct ModelSpec {
  enum class Kind { HubbardChain, HubbardRing };
  Kind kind = Kind::HubbardChain;
  int sites = 2;
  double t = 1.0;
  double u = 0.0;
};

void validate(const ModelSpec& spec);

/// Site-basis integrals: h_pq = -t on bonds, (pp|pp) = U.
IntegralSet build_model(const ModelSpec& spec);

/// Integrals in the rotated orbitals phi'_k = sum_p C_pk phi_p.
IntegralSet rotate_orbitals(const IntegralSet& ints, const Operator& coefficients);

struct OrbitalBasis {
  IntegralSet integrals;
  /// Columns are the new orbitals in terms of the old ones.
  Operator coefficients;
  Eigen::VectorXd orbital_energies;
};

/// Rotate to the eigenbasis of h1 (Hueckel orbitals for lattice models), in
/// ascending orbital energy with the largest-magnitude coefficient of each
/// orbital made positive.
OrbitalBasis one_body_eigenbasis(const IntegralSet& ints);

/// Site reflection j -> L-1-j of a lattice model as a signed permutation of
/// the spin-orbitals of the given orbital basis. ValidationError when the
/// reflection mixes orbitals (degenerate one-body levels).
SignedPermutation reflection_in_orbitals(const ModelSpec& spec, const Operator& coefficients);

/// Slater-Condon assembly on the basis (spin-orbital count == 2 n_spatial).
Operator assemble_hamiltonian(const IntegralSet& ints, const DeterminantBasis& basis);

}  // namespace mpcc
