#pragma once

// Cluster-operator algebra on an explicit determinant basis: intermediate
// normalization, CI -> CC cluster analysis, internal/external splitting,
// exponentials, similarity transforms and the CC residual and energy.
//
// Amplitudes live at operator level: C = c0 + sum_x c_x E_x, so the vector
// component of E_x |Phi> carries c_x times the phase of E_x |Phi>.

#include "mpcc/fock.hpp"
#include "mpcc/linalg.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>

namespace mpcc {

using Amplitudes = std::map<Excitation, double>;

inline constexpr double kNormalizationTolerance = 1e-8;

struct CIOperator {
  double c0 = 1.0;
  Amplitudes coefficients;

  CIOperator rank(int k) const;
};

struct ClusterOperator {
  Amplitudes amplitudes;

  bool empty() const noexcept { return amplitudes.empty(); }
  std::size_t size() const noexcept { return amplitudes.size(); }
  ClusterOperator rank(int k) const;
  int max_rank() const noexcept;

  ClusterOperator& operator+=(const ClusterOperator& other);
  friend ClusterOperator operator+(ClusterOperator a, const ClusterOperator& b) { return a += b; }
  friend ClusterOperator operator*(double s, ClusterOperator a) {
    for (auto& [x, v] : a.amplitudes) v *= s;
    return a;
  }
};

/// Matrix of sum_x a_x E_x on the basis. ValidationError if some E_x maps a
/// basis determinant outside the basis.
Operator excitation_matrix(const DeterminantBasis& basis, const Amplitudes& amplitudes);
inline Operator excitation_matrix(const DeterminantBasis& basis, const ClusterOperator& t) {
  return excitation_matrix(basis, t.amplitudes);
}

/// sum_x a_x E_x |Phi>
State reference_action(const DeterminantBasis& basis, const Amplitudes& amplitudes);
/// Inverse of reference_action on vectors with no reference component
/// (exact zeros are skipped).
Amplitudes amplitudes_from_reference_action(const DeterminantBasis& basis, const State& v);

/// C |Phi>
State ci_vector(const DeterminantBasis& basis, const CIOperator& c);

/// v / <Phi|v> as a CI operator. ValidationError when |<Phi|v>| <= tol.
CIOperator intermediate_normalize(const State& v, const DeterminantBasis& basis,
                                  double tol = kNormalizationTolerance);

/// T with e^T |Phi> = C |Phi>, by the rank recursion
/// T_k = C_k - [e^{T_1 + ... + T_{k-1}} |Phi>]_k. Requires c0 == 1.
ClusterOperator cluster_analyze(const CIOperator& c, const DeterminantBasis& basis);

struct ClusterSplit {
  ClusterOperator t_int;
  ClusterOperator t_ext;
};

/// Internal = every hole and particle index active.
ClusterSplit split_cluster(const ClusterOperator& t, Occupation active);

/// Highest power that can survive when a cluster operator acts on the basis.
inline int nilpotency_order(const DeterminantBasis& basis) { return basis.n_electrons(); }

State exp_apply(const ClusterOperator& t, const State& v, const DeterminantBasis& basis);
/// e^{scale T} as a matrix (finite series).
Operator cluster_exp(const ClusterOperator& t, const DeterminantBasis& basis, double scale = 1.0);
/// e^{-T} H e^{T}
Operator similarity_transform(const Operator& h, const ClusterOperator& t, const DeterminantBasis& basis);

/// Q e^{-T} H e^{T} |Phi>
State cc_residual(const Operator& h, const ClusterOperator& t, const Projector& q, const DeterminantBasis& basis);
/// <Phi| e^{-T} H e^{T} |Phi>
double cc_energy(const Operator& h, const ClusterOperator& t, const DeterminantBasis& basis);

struct CasccDecomposition {
  ClusterOperator t_ext;
  CIOperator c_int;
  ClusterOperator t_int;
};

/// v / <Phi|v> = e^{T_ext} C_int |Phi>, with C_int |Phi> = e^{T_int} |Phi>
/// inside the complete active space.
CasccDecomposition casscc_decompose(const State& v, const DeterminantBasis& basis, Occupation active,
                                    double tol = kNormalizationTolerance);

/// Text dump, one line per amplitude: "rank h1..hk p1..pk amplitude".
void write_amplitudes(std::ostream& out, const Amplitudes& amplitudes);
Amplitudes read_amplitudes(std::istream& in);
void write_amplitudes_file(const std::filesystem::path& path, const Amplitudes& amplitudes);

}  // namespace mpcc
