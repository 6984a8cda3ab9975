#pragma once

// Hermitian downfolding with anti-Hermitian external generators: sigma
// extraction, Trotter products U(N, i), rank-1 and general Hermitian effective
// Hamiltonians, the fixed-point sweep and the weighted eigenvalue minimization.

#include "mpcc/cluster.hpp"
#include "mpcc/downfold.hpp"
#include "mpcc/fci.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mpcc {

/// sigma = sum_mu theta_mu (E_mu - E_mu^T)
struct AntiHermitianCluster {
  Amplitudes thetas;

  bool empty() const noexcept { return thetas.empty(); }
  std::size_t size() const noexcept { return thetas.size(); }

  AntiHermitianCluster& operator+=(const AntiHermitianCluster& other);
  friend AntiHermitianCluster operator+(AntiHermitianCluster a, const AntiHermitianCluster& b) { return a += b; }
  friend AntiHermitianCluster operator*(double s, AntiHermitianCluster a) {
    for (auto& [x, v] : a.thetas) v *= s;
    return a;
  }
};

Operator anti_hermitian_matrix(const DeterminantBasis& basis, const AntiHermitianCluster& sigma);

/// e^{scale sigma}
Operator unitary_exp(const AntiHermitianCluster& sigma, const DeterminantBasis& basis, double scale = 1.0);

/// One direction per excitation: sigma = sum_x theta_x (E_x - E_x^T).
std::vector<Amplitudes> singleton_directions(std::span<const Excitation> excitations);

/// Orthonormal combinations of external excitations that are invariant under
/// the group, D = sum_g chi_g(Phi) g E_x|Phi>. A Gamma built from them commutes
/// with every element, so it cannot mix symmetry sectors. ValidationError when
/// the reference is not a pure sector state or the CAS is not invariant.
std::vector<Amplitudes> symmetry_adapted_directions(const DeterminantBasis& basis, Occupation active,
                                                    std::span<const SignedPermutation> group);

struct ExtractionOptions {
  /// Accept a start when ||(1 - P - Q_int) e^{-sigma} v|| falls below this.
  double tolerance = 1e-10;
  int max_iterations = 200;
  int random_starts = 8;
  std::uint32_t seed = 7;
  double random_scale = 0.3;
  /// Orthonormal parameter directions; one per external excitation when empty.
  std::vector<Amplitudes> directions;
  std::optional<AntiHermitianCluster> guess;
};

struct SigmaExtraction {
  AntiHermitianCluster sigma;
  /// (P+Q_int) e^{-sigma} v for the unit-normalized v, not renormalized.
  CIOperator c_int;
  double residual = 0.0;
  bool converged = false;
  int iterations = 0;
  /// 0 = supplied guess, 1 = zero, 2.. = random starts; -1 when none worked.
  int start = -1;
};

/// Solve (1 - P - Q_int) e^{-sigma_ext} v = 0 by Levenberg-Marquardt with the
/// exact Jacobian, trying the guess, zero, then seeded random starts. The
/// best attempt is returned with converged == false when none reaches the
/// tolerance.
SigmaExtraction extract_sigma(const State& v, const DeterminantBasis& basis, Occupation active,
                              const ExtractionOptions& options = {});

/// U(N,i) = {[prod_{n != i} e^{s_n/N}] e^{s_i/N}}^{N-1} [prod_{n != i} e^{s_n/N}],
/// products in ascending state index.
Operator build_trotter_U(int n, std::size_t i, std::span<const AntiHermitianCluster> sigmas,
                         const DeterminantBasis& basis);

/// ||U(N,i) e^{s_i/N} - e^{sum s}||_max
double trotter_deviation(int n, std::size_t i, std::span<const AntiHermitianCluster> sigmas,
                         const DeterminantBasis& basis);

/// (P+Q_int) e^{-Gamma} H e^{Gamma} (P+Q_int); InvariantError when the result
/// is not symmetric within 1e-10.
EffectiveHamiltonian hermitian_heff(const AntiHermitianCluster& gamma, const Operator& h,
                                    const DeterminantBasis& basis, Occupation active);

/// Hermitian H^eff with Gamma = sum of the sigmas.
EffectiveHamiltonian rank1_heff(std::span<const AntiHermitianCluster> sigmas, const Operator& h,
                                const DeterminantBasis& basis, Occupation active);

struct FixedPointOptions {
  int trotter_rank = 1;
  double tolerance = 1e-8;
  int max_sweeps = 100;
  /// s(p+1) = (1 - mixing) s(p) + mixing * (extracted sigma).
  double mixing = 1.0;
  ExtractionOptions extraction;
};

struct FixedPointResult {
  bool converged = false;
  int sweeps = 0;
  std::vector<AntiHermitianCluster> sigmas;
  std::vector<CIOperator> c_int;
  /// Lambda^{(i)} per sweep.
  std::vector<std::vector<double>> lambda_history;
  /// max_i ||theta_i(p+1) - theta_i(p)|| per sweep.
  std::vector<double> step_history;
  /// Largest sigma-extraction residual per sweep; sweeps keep the
  /// least-squares sigma when the eigenvector is not exactly representable.
  std::vector<double> extraction_history;
  /// ||U^-1 H U e^{s_i/N} C_i|Phi> - Lambda_i (same)|| at the final sigmas.
  std::vector<double> eigen_residuals;
  std::vector<double> energies;
  std::string message;
};

/// Sweeps p -> p+1: for each state, the eigenvector of U(N,i,p)^-1 H U(N,i,p)
/// that continues state i is written as e^{s_i(p+1)/N} C_i(p+1)|Phi> by
/// sigma extraction warm-started at s_i(p)/N. Converged when the largest
/// parameter move drops below the tolerance. Initial sigmas default to
/// extract_sigma of each state (ConvergenceError when that fails).
FixedPointResult fixed_point_iterate(const Operator& h, const StateSet& states, const DeterminantBasis& basis,
                                     Occupation active, const FixedPointOptions& options,
                                     std::vector<AntiHermitianCluster> initial = {});

struct WeightedOptions {
  int max_iterations = 300;
  double gradient_tolerance = 1e-9;
  /// Relative central-difference step.
  double fd_step = 1e-5;
};

struct TraceRecord {
  int iteration = 0;
  double r = 0.0;
  std::vector<double> energies;
  double theta_norm = 0.0;
};

struct WeightedResult {
  AntiHermitianCluster gamma;
  std::vector<CIOperator> c_int;
  std::vector<double> energies;
  double r = 0.0;
  std::vector<TraceRecord> trace;
  bool converged = false;
  /// The K-th and (K+1)-th subspace weights came within 1e-3 at some accepted step.
  bool tracking_ambiguous = false;
  std::string message;
};

/// BFGS on R(theta) = sum_i w_i E_i(Gamma(theta)), Gamma = sum_k theta_k D_k
/// over orthonormal directions D_k and E_i the eigenvalues of hermitian_heff.
/// Tracking keeps the K eigenvectors with most weight on the span of the
/// previous ones (seeded by c_init) and matches states by overlap inside it.
/// Gradients by central differences. init must lie in the span of the
/// directions.
WeightedResult weighted_minimize(const Operator& h, const DeterminantBasis& basis, Occupation active,
                                 std::span<const double> weights, const AntiHermitianCluster& init,
                                 std::span<const State> c_init, std::span<const Amplitudes> directions,
                                 const WeightedOptions& options = {});

}  // namespace mpcc
