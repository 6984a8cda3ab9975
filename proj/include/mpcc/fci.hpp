#pragma once

// Exact-diagonalization oracle: eigenpairs of H, reference-overlap state
// selection and symmetry-sector labels.

#include "mpcc/fock.hpp"
#include "mpcc/linalg.hpp"

#include <span>
#include <vector>

namespace mpcc {

/// Ascending energies; columns of `vectors` are orthonormal eigenvectors with
/// their largest-magnitude component positive.
struct EigenSet {
  Eigen::VectorXd energies;
  Operator vectors;

  Eigen::Index size() const noexcept { return energies.size(); }
};

struct DiagonalizeOptions {
  /// Dense solver up to this dimension; iterative lowest-k beyond it.
  Eigen::Index dense_limit = 2000;
  Eigen::Index lowest = 8;
  double tolerance = 1e-10;
  int max_iterations = 500;
};

inline constexpr double kDegeneracyTolerance = 1e-9;
inline constexpr double kDefaultOverlapTolerance = 1e-6;

EigenSet diagonalize(const Operator& h, const DiagonalizeOptions& options = {});

/// Block Davidson for the lowest `count` eigenpairs with a diagonal
/// preconditioner. Used only above the dense limit.
EigenSet davidson_lowest(const Operator& h, Eigen::Index count, double tolerance, int max_iterations);

inline constexpr int kMixedSector = -1;

struct SelectedState {
  double energy = 0.0;
  State vector;
  /// <Phi|Psi>
  double overlap = 0.0;
  int sector = kMixedSector;
  Eigen::Index eigen_index = 0;
  /// Part of a degenerate multiplet, rotated so that only this member
  /// overlaps the reference.
  bool degenerate = false;
};

struct StateSet {
  std::vector<SelectedState> states;

  std::size_t size() const noexcept { return states.size(); }
  const SelectedState& operator[](std::size_t i) const { return states[i]; }
};

/// The k lowest eigenstates with |<Phi|Psi>| > overlap_tol. Inside a
/// degenerate multiplet the reference overlap is concentrated on one vector
/// first. Throws ValidationError listing the overlaps when fewer qualify.
StateSet select_states(const EigenSet& eig, const DeterminantBasis& basis, int k,
                       double overlap_tol = kDefaultOverlapTolerance);

/// Sector index per eigenvector (||P_k v|| > 1 - 1e-8), kMixedSector when no
/// projector claims the vector. Throws when a projector fails to commute with h.
std::vector<int> label_sectors(const EigenSet& eig, std::span<const Projector> projectors,
                               const Operator& h);

}  // namespace mpcc
