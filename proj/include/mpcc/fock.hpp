#pragma once

// Fermionic Fock-space machinery: determinants as occupation bit strings,
// excitation operators relative to a reference determinant, fixed-particle
// determinant bases, reference/active-space projectors and abelian symmetry
// sectors.
//
// Spin-orbital p = 2 * spatial + spin, spin 0 = alpha, spin 1 = beta.

#include "mpcc/linalg.hpp"

#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace mpcc {

using Occupation = std::uint64_t;
inline constexpr int kMaxSpinOrbitals = 64;

/// Mask with the given spin-orbitals set.
Occupation orbital_mask(std::span<const int> orbitals);
/// Spin-orbitals {2s, 2s+1} for every spatial orbital s.
Occupation spatial_orbital_mask(std::span<const int> spatial);
std::vector<int> mask_orbitals(Occupation mask);

/// (-1)^(number of occupied orbitals below p)
inline int ordering_phase(Occupation bits, int p) noexcept {
  const Occupation below = p == 0 ? 0 : (bits & ((Occupation{1} << p) - 1));
  return (std::popcount(below) & 1) ? -1 : 1;
}

class Determinant {
 public:
  Determinant() = default;
  Determinant(Occupation bits, int n_spinorbitals);
  static Determinant from_orbitals(std::span<const int> occupied, int n_spinorbitals);

  Occupation bits() const noexcept { return bits_; }
  int n_spinorbitals() const noexcept { return n_spinorbitals_; }
  int n_electrons() const noexcept { return std::popcount(bits_); }
  bool occupied(int p) const noexcept { return (bits_ >> p) & 1U; }
  std::vector<int> occupied_orbitals() const { return mask_orbitals(bits_); }
  /// Sz in units of hbar (even spin-orbitals alpha).
  double sz() const noexcept;
  /// Binary literal, most significant spin-orbital first, e.g. "0b0011".
  std::string to_string() const;

  auto operator<=>(const Determinant&) const = default;

 private:
  Occupation bits_ = 0;
  int n_spinorbitals_ = 0;
};

/// Excitation relative to a reference determinant, stored as hole and
/// particle masks. Operator form: a+_{p1} ... a+_{pk} a_{hk} ... a_{h1} with
/// holes and particles in ascending order.
struct Excitation {
  Occupation holes = 0;
  Occupation particles = 0;

  static Excitation from_lists(std::span<const int> holes, std::span<const int> particles);

  int rank() const noexcept { return std::popcount(holes); }
  std::vector<int> hole_list() const { return mask_orbitals(holes); }
  std::vector<int> particle_list() const { return mask_orbitals(particles); }
  /// All hole and particle indices inside the active mask.
  bool is_internal(Occupation active) const noexcept {
    return ((holes | particles) & ~active) == 0;
  }
  std::string to_string() const;

  auto operator<=>(const Excitation&) const = default;
};

bool is_well_formed(const Excitation& x, const Determinant& reference) noexcept;

struct SignedOccupation {
  Occupation bits;
  int sign;
};

/// Raw-bit version used in inner loops; nullopt when Pauli-blocked.
inline std::optional<SignedOccupation> apply_excitation(Occupation d, const Excitation& x) noexcept {
  if ((d & x.holes) != x.holes) return std::nullopt;
  int sign = 1;
  for (Occupation h = x.holes; h != 0; h &= h - 1) {
    const int p = std::countr_zero(h);
    sign *= ordering_phase(d, p);
    d &= ~(Occupation{1} << p);
  }
  if ((d & x.particles) != 0) return std::nullopt;
  for (Occupation q = x.particles; q != 0;) {
    const int p = 63 - std::countl_zero(q);
    q &= ~(Occupation{1} << p);
    sign *= ordering_phase(d, p);
    d |= Occupation{1} << p;
  }
  return SignedOccupation{d, sign};
}

struct SignedDeterminant {
  Determinant determinant;
  int sign;
};

std::optional<SignedDeterminant> apply_excitation(const Determinant& d, const Excitation& x);

/// The unique excitation taking ref to d. Throws ValidationError when d == ref
/// or the particle numbers differ.
Excitation excitation_between(const Determinant& ref, const Determinant& d);

/// Number of reference-occupied orbitals vacated in d.
inline int excitation_level(Occupation ref, Occupation d) noexcept {
  return std::popcount(ref & ~d);
}

class DeterminantBasis {
 public:
  /// The reference must be one of the determinants.
  DeterminantBasis(std::vector<Determinant> determinants, Determinant reference);

  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(determinants_.size()); }
  const Determinant& operator[](Eigen::Index i) const { return determinants_[static_cast<std::size_t>(i)]; }
  std::span<const Determinant> determinants() const noexcept { return determinants_; }

  std::optional<Eigen::Index> find(Occupation bits) const;
  Eigen::Index index_of(const Determinant& d) const;

  const Determinant& reference() const noexcept { return (*this)[reference_index_]; }
  Eigen::Index reference_index() const noexcept { return reference_index_; }
  int n_spinorbitals() const noexcept { return n_spinorbitals_; }
  int n_electrons() const noexcept { return n_electrons_; }
  /// Largest excitation level reachable from the reference in this basis.
  int max_excitation_level() const noexcept { return max_level_; }

  DeterminantBasis with_reference(const Determinant& reference) const;
  State reference_vector() const;

 private:
  std::vector<Determinant> determinants_;
  std::unordered_map<Occupation, Eigen::Index> index_;
  Eigen::Index reference_index_ = 0;
  int n_spinorbitals_ = 0;
  int n_electrons_ = 0;
  int max_level_ = 0;
};

/// All determinants with the given particle number (and optionally Sz) in
/// ascending order of the occupation bit pattern. The reference is the first
/// determinant, i.e. the aufbau occupation allowed by the constraints.
DeterminantBasis enumerate_basis(int n_spinorbitals, int n_electrons,
                                 std::optional<double> sz = std::nullopt);

struct Projector {
  Operator matrix;
  std::string label;
};

enum class ActiveSpaceKind {
  Proper,       // at least one occupied and one virtual active orbital, not all orbitals
  Full,         // every spin-orbital active: Q_ext = 0
  NoExcitations // only occupied or only virtual orbitals active: Q_int = 0
};

struct ReferenceProjectors {
  Projector p;
  Projector q;
  Projector q_int;
  Projector q_ext;
  ActiveSpaceKind kind = ActiveSpaceKind::Proper;
  /// Basis positions spanning P + Q_int, in basis order.
  std::vector<Eigen::Index> cas_indices;
};

/// Basis positions of the complete active space (reference plus internal
/// excitations).
std::vector<Eigen::Index> cas_indices(const DeterminantBasis& basis, Occupation active);

ReferenceProjectors build_reference_projectors(const DeterminantBasis& basis, Occupation active);

/// Orbital map p -> phase[p] * image[p] over spin-orbitals.
struct SignedPermutation {
  std::vector<int> image;
  std::vector<int> phase;

  static SignedPermutation identity(int n_spinorbitals);
  /// Lift a signed permutation of spatial orbitals to both spins.
  static SignedPermutation from_spatial(std::span<const int> image, std::span<const int> phase);

  int size() const noexcept { return static_cast<int>(image.size()); }
  /// (this * other)(p) = this(other(p))
  SignedPermutation compose(const SignedPermutation& other) const;
  std::optional<SignedOccupation> apply(Occupation d) const;

  bool operator==(const SignedPermutation&) const = default;
};

/// Finite abelian group of signed orbital permutations with a real character
/// table (characters[irrep][element]).
class SymmetryGroup {
 public:
  SymmetryGroup(std::vector<SignedPermutation> elements,
                std::vector<std::vector<double>> characters,
                std::vector<std::string> labels);

  static SymmetryGroup trivial(int n_spinorbitals);
  /// {1, g} with g^2 = 1 and sectors "even" (index 0) and "odd" (index 1).
  static SymmetryGroup z2(const SignedPermutation& generator);
  /// Z2^m from m commuting, independent involutions. Sector labels join the
  /// generator names with their parity, e.g. "reflection+,spin-".
  static SymmetryGroup z2_product(std::span<const SignedPermutation> generators,
                                  std::span<const std::string> names);

  std::span<const SignedPermutation> elements() const noexcept { return elements_; }
  const std::vector<std::vector<double>>& characters() const noexcept { return characters_; }
  std::span<const std::string> labels() const noexcept { return labels_; }
  int n_sectors() const noexcept { return static_cast<int>(characters_.size()); }
  int order() const noexcept { return static_cast<int>(elements_.size()); }

 private:
  std::vector<SignedPermutation> elements_;
  std::vector<std::vector<double>> characters_;
  std::vector<std::string> labels_;
};

/// Swap alpha and beta partners of every spatial orbital, all phases +1. A
/// closed-shell determinant with n doubly occupied orbitals maps to (-1)^n itself.
SignedPermutation spin_flip(int n_spinorbitals);

/// All products of the generators (the generated finite group), identity first.
std::vector<SignedPermutation> group_closure(std::span<const SignedPermutation> generators);

/// Matrix of the group element acting on the basis; ValidationError when an
/// image leaves the basis.
Operator group_action(const SignedPermutation& g, const DeterminantBasis& basis);

/// One projector per sector: P_k = |G|^-1 sum_g chi_k(g) D(g).
std::vector<Projector> build_sector_projectors(const SymmetryGroup& group,
                                               const DeterminantBasis& basis);

}  // namespace mpcc
