#pragma once

// Non-Hermitian downfolding: single-state (SES) effective Hamiltonians, the
// state-universal construction driven by a cumulative external cluster
// operator, and the Newton-Raphson solver for approximate external amplitudes.

#include "mpcc/cluster.hpp"
#include "mpcc/fci.hpp"
#include "mpcc/fock.hpp"

#include <complex>
#include <span>
#include <string>
#include <vector>

namespace mpcc {

struct Provenance {
  std::string method;
  /// Per-state generators (T_ext or sigma_ext amplitudes) used to build H^eff.
  std::vector<Amplitudes> generators;
  /// The operator actually exponentiated (Sigma_ext or Gamma_ext).
  Amplitudes cumulative;
  int trotter_rank = 0;
};

struct EffectiveHamiltonian {
  Operator matrix;
  /// CAS determinants: the reference plus all internal excitations, in basis order.
  std::vector<Determinant> cas_basis;
  std::vector<Eigen::Index> cas_indices;
  Eigen::Index reference_position = 0;
  bool hermitian = false;
  Provenance provenance;

  Eigen::Index dimension() const noexcept { return matrix.rows(); }
  /// Full-space vector -> CAS coordinates.
  Eigen::VectorXd restrict(const State& v) const;
  /// CAS coordinates -> full-space vector (zero outside the CAS).
  State embed(const Eigen::VectorXd& c, Eigen::Index full_size) const;
};

/// (P+Q_int) A (P+Q_int) restricted to the CAS rows and columns.
EffectiveHamiltonian project_to_cas(const Operator& transformed, const DeterminantBasis& basis, Occupation active,
                                    bool hermitian, Provenance provenance);

/// (P+Q_int) e^{-T_ext} H e^{T_ext} (P+Q_int). ValidationError when T_ext
/// holds an internal amplitude.
EffectiveHamiltonian build_heff(const Operator& h, const ClusterOperator& t_ext, const DeterminantBasis& basis,
                                Occupation active);

/// ||H^eff e^{T_int}|Phi> - E e^{T_int}|Phi>||_2 inside the CAS.
double verify_ses(const EffectiveHamiltonian& heff, const ClusterOperator& t_int, const DeterminantBasis& basis,
                  double energy);

/// Amplitude-wise sum; ValidationError on internal amplitudes.
ClusterOperator cumulative_sigma(std::span<const ClusterOperator> t_list, Occupation active);

struct StateDecomposition {
  double energy = 0.0;
  State state;
  ClusterOperator t_ext;
  ClusterOperator t_int;
  CIOperator c_int;
};

struct MultistateHeff {
  EffectiveHamiltonian heff;
  std::vector<StateDecomposition> states;
  ClusterOperator sigma;
};

/// CASCC-decompose each state, sum the external parts and downfold with the
/// sum. ValidationError when K exceeds the CAS dimension.
MultistateHeff build_multistate_heff(const Operator& h, const StateSet& states, const DeterminantBasis& basis,
                                     Occupation active);

/// e^{-S_i} H e^{S_i} with S_i the sum of every T_ext except the i-th.
Operator build_hbar_i(const Operator& h, std::size_t i, std::span<const ClusterOperator> t_list,
                      const DeterminantBasis& basis);

/// The GST Hamiltonian e^{-Sigma} H e^{Sigma}, shared by all state equations.
inline Operator gst_hamiltonian(const Operator& h, const ClusterOperator& sigma, const DeterminantBasis& basis) {
  return similarity_transform(h, sigma, basis);
}

/// Q_ext (GST) C~_int |Phi>
State gst_residual(const Operator& gst, const CIOperator& c_tilde, const Projector& q_ext,
                   const DeterminantBasis& basis);

/// Eigenvalues of a (possibly non-symmetric) effective Hamiltonian.
Eigen::VectorXcd heff_eigenvalues(const EffectiveHamiltonian& heff);

struct EigenMatch {
  /// |lambda - E| for the closest eigenvalue.
  double energy_error = 0.0;
  /// Distance between the matching eigenvector and the target direction,
  /// both scaled to unit reference component (infinity norm).
  double vector_error = 0.0;
  std::complex<double> eigenvalue;
};

/// Closest eigenpair of H^eff to the target energy, compared with the target
/// CAS vector given in full-space coordinates.
EigenMatch match_eigenpair(const EffectiveHamiltonian& heff, double energy, const State& target);

// ---------------------------------------------------------------------------
// Newton-Raphson solver

enum class Preconditioner { Diagonal, Identity };

struct SolverConfig {
  int max_iterations = 50;
  double tolerance = 1e-8;
  Preconditioner preconditioner = Preconditioner::Diagonal;
  double damping = 0.7;
  std::vector<double> weights;

  /// ValidationError unless tolerance > 0, damping in (0, 1] and the
  /// iteration limit is positive.
  void validate() const;
};

/// External excitations (not all indices active) connecting the reference to
/// basis determinants, restricted to the given ranks (all ranks when empty).
std::vector<Excitation> external_excitations(const DeterminantBasis& basis, Occupation active,
                                             std::span<const int> ranks = {});

struct StateGuess {
  ClusterOperator t_ext;
  CIOperator c_int;
};

struct IterationRecord {
  int iteration = 0;
  int state = 0;
  double residual_norm = 0.0;
  double energy = 0.0;
};

struct NewtonResult {
  bool converged = false;
  int iterations = 0;
  std::vector<ClusterOperator> t_ext;
  std::vector<CIOperator> c_int;
  std::vector<double> energies;
  std::vector<IterationRecord> log;
  EffectiveHamiltonian heff;
  std::string message;
};

/// Damped, preconditioned Newton iterations on the GST residuals with the
/// external support fixed per state. C~_int is refreshed each macro-step
/// from the eigenvectors of the current H^eff, tracked by overlap. Returns
/// with converged == false and the residual history when the iteration limit
/// is reached.
NewtonResult newton_raphson_solve(const Operator& h, const DeterminantBasis& basis, Occupation active,
                                  std::span<const std::vector<Excitation>> support,
                                  std::span<const StateGuess> guesses, const SolverConfig& cfg);

}  // namespace mpcc
