#pragma once

// Symmetry-broken coupled-cluster solutions: sector decomposition of cluster
// and CI operators, the rank recursion C_S2 -> T_S2, the messenger solve for
// T_S1 at a fixed S2 energy and the cross-symmetry downfolding check.

#include "mpcc/cluster.hpp"
#include "mpcc/downfold.hpp"
#include "mpcc/fock.hpp"

#include <complex>
#include <string>
#include <vector>

namespace mpcc {

/// Sector projectors with the reference sector S1 singled out.
struct SymmetrySectors {
  std::vector<Projector> projectors;
  int reference_sector = 0;
  /// P_S1 - |Phi><Phi|
  Operator q_s1;
  /// Sum of the projectors of every other sector.
  Operator q_s2;

  int size() const noexcept { return static_cast<int>(projectors.size()); }
};

/// ValidationError unless |Phi> lies in a single sector.
SymmetrySectors build_symmetry_sectors(const SymmetryGroup& group, const DeterminantBasis& basis);

template <typename Op>
struct SectorSplit {
  std::vector<std::string> labels;
  /// components[k]|Phi> = P_k op|Phi>; only the reference sector carries c0.
  std::vector<Op> components;
  int reference_sector = 0;
};

SectorSplit<ClusterOperator> split_by_sector(const ClusterOperator& t, const SymmetrySectors& sectors,
                                             const DeterminantBasis& basis);
SectorSplit<CIOperator> split_by_sector(const CIOperator& c, const SymmetrySectors& sectors,
                                        const DeterminantBasis& basis);

/// T_S2 rank by rank so that Q_S2 e^{T_S1 + T_S2}|Phi> = C_S2|Phi>. ValidationError
/// when C_S2 has a scalar part or leaves the range of Q_S2.
ClusterOperator map_c_to_t(const CIOperator& c_s2, const ClusterOperator& t_s1, const SymmetrySectors& sectors,
                           const DeterminantBasis& basis);

struct MessengerResult {
  /// Both the Q_S1 equations and the reference row hold.
  bool converged = false;
  /// The Q_S1 equations alone reached the tolerance.
  bool projected_converged = false;
  int iterations = 0;
  ClusterOperator t_s1;
  double residual_norm = 0.0;
  /// <Phi|(H - E) e^T|Phi>
  double reference_residual = 0.0;
  std::vector<double> history;
  std::string message;
};

/// Newton on Q_S1 (H - E_S2) e^{T_S1 + T_S2}|Phi> = 0 over T_S1 amplitudes
/// spanning the range of Q_S1, then the reference-row check. ValidationError
/// when T_S2 is nonzero and E_S2 lies within 1e-8 of the S1 spectrum.
MessengerResult solve_messenger(const Operator& h, const ClusterOperator& t_s2, double e_s2,
                                const SymmetrySectors& sectors, const DeterminantBasis& basis,
                                const SolverConfig& cfg, const ClusterOperator& t_s1_init = {});

/// <Phi| e^{-T} H e^{T} |Phi> for T = T_S1 + T_S2.
double verify_broken_energy(const Operator& h, const ClusterOperator& t_s1, const ClusterOperator& t_s2,
                            const DeterminantBasis& basis);

struct BrokenSymmetryResult {
  bool converged = false;
  int macro_iterations = 0;
  ClusterOperator t_s1;
  ClusterOperator t_s2;
  CIOperator c_s2;
  double energy = 0.0;
  MessengerResult messenger;
  std::string message;
};

/// Alternates T_S2 = map_c_to_t(C_S2, T_S1) with solve_messenger until T_S2
/// stops moving. C_S2|Phi> is the target S2 state at unit norm.
BrokenSymmetryResult solve_broken_symmetry(const Operator& h, const State& target, double e_s2,
                                           const SymmetrySectors& sectors, const DeterminantBasis& basis,
                                           const SolverConfig& cfg);

struct CrossSymmetryCheck {
  EffectiveHamiltonian heff;
  std::complex<double> eigenvalue;
  double error = 0.0;
  bool matched = false;
  /// No CAS configuration has an S2 component.
  bool s1_only = true;
  std::string message;
};

/// build_heff with the external part of the broken T and a search for E_S2
/// in its spectrum; a mismatch is reported, not thrown.
CrossSymmetryCheck cross_symmetry_downfold(const Operator& h, const ClusterOperator& t, Occupation active,
                                           double e_s2, const SymmetrySectors& sectors,
                                           const DeterminantBasis& basis, double tolerance = 1e-8);

}  // namespace mpcc
