#include "mpcc/symbreak.hpp"

#include "mpcc/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

namespace mpcc {

namespace {

constexpr double kPurityTolerance = 1e-10;

int level_of(const DeterminantBasis& basis, Eigen::Index i) {
  return std::popcount(basis[i].bits() ^ basis.reference().bits()) / 2;
}

/// Components of v at excitation level k, zero elsewhere.
State level_part(const DeterminantBasis& basis, const State& v, int k) {
  State out = State::Zero(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (level_of(basis, i) == k) out(i) = v(i);
  return out;
}

/// Orthonormal columns spanning the range of a projector.
Operator range_basis(const Operator& q) {
  Eigen::SelfAdjointEigenSolver<Operator> es(0.5 * (q + q.transpose()));
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
    if (es.eigenvalues()(k) > 0.5) keep.push_back(k);
  Operator b(q.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) b.col(static_cast<Eigen::Index>(c)) = es.eigenvectors().col(keep[c]);
  return b;
}

bool has_nonzero(const ClusterOperator& t) {
  return std::any_of(t.amplitudes.begin(), t.amplitudes.end(), [](const auto& kv) { return kv.second != 0.0; });
}

}  // namespace

SymmetrySectors build_symmetry_sectors(const SymmetryGroup& group, const DeterminantBasis& basis) {
  SymmetrySectors out;
  out.projectors = build_sector_projectors(group, basis);
  const State phi = basis.reference_vector();
  out.reference_sector = -1;
  for (int k = 0; k < out.size(); ++k) {
    const double w = (out.projectors[static_cast<std::size_t>(k)].matrix * phi).norm();
    if (std::abs(w - 1.0) < kPurityTolerance) out.reference_sector = k;
  }
  if (out.reference_sector < 0) throw ValidationError("the reference is not a pure symmetry state");
  const auto dim = basis.size();
  out.q_s1 = out.projectors[static_cast<std::size_t>(out.reference_sector)].matrix - phi * phi.transpose();
  out.q_s2 = Operator::Zero(dim, dim);
  for (int k = 0; k < out.size(); ++k)
    if (k != out.reference_sector) out.q_s2 += out.projectors[static_cast<std::size_t>(k)].matrix;
  return out;
}

SectorSplit<ClusterOperator> split_by_sector(const ClusterOperator& t, const SymmetrySectors& sectors,
                                             const DeterminantBasis& basis) {
  SectorSplit<ClusterOperator> out;
  out.reference_sector = sectors.reference_sector;
  const State v = reference_action(basis, t.amplitudes);
  for (const auto& p : sectors.projectors) {
    out.labels.push_back(p.label);
    out.components.push_back({amplitudes_from_reference_action(basis, p.matrix * v)});
  }
  return out;
}

SectorSplit<CIOperator> split_by_sector(const CIOperator& c, const SymmetrySectors& sectors,
                                        const DeterminantBasis& basis) {
  SectorSplit<CIOperator> out;
  out.reference_sector = sectors.reference_sector;
  const State v = reference_action(basis, c.coefficients);
  for (int k = 0; k < sectors.size(); ++k) {
    const auto& p = sectors.projectors[static_cast<std::size_t>(k)];
    out.labels.push_back(p.label);
    out.components.push_back({k == sectors.reference_sector ? c.c0 : 0.0,
                              amplitudes_from_reference_action(basis, p.matrix * v)});
  }
  return out;
}

ClusterOperator map_c_to_t(const CIOperator& c_s2, const ClusterOperator& t_s1, const SymmetrySectors& sectors,
                           const DeterminantBasis& basis) {
  if (c_s2.c0 != 0.0) throw ValidationError("C_S2 must have no scalar part");
  const State target = ci_vector(basis, c_s2);
  if ((target - sectors.q_s2 * target).norm() > kPurityTolerance * std::max(1.0, target.norm())) {
    throw ValidationError("C_S2|Phi> leaves the S2 sectors");
  }
  ClusterOperator t_s2;
  for (int k = 1; k <= basis.max_excitation_level(); ++k) {
    const State have = sectors.q_s2 * exp_apply(t_s1 + t_s2, basis.reference_vector(), basis);
    const State add = level_part(basis, target - have, k);
    t_s2 += ClusterOperator{amplitudes_from_reference_action(basis, add)};
  }
  return t_s2;
}

MessengerResult solve_messenger(const Operator& h, const ClusterOperator& t_s2, double e_s2,
                                const SymmetrySectors& sectors, const DeterminantBasis& basis,
                                const SolverConfig& cfg, const ClusterOperator& t_s1_init) {
  cfg.validate();
  const auto dim = basis.size();
  const Operator s1 = range_basis(sectors.projectors[static_cast<std::size_t>(sectors.reference_sector)].matrix);
  if (has_nonzero(t_s2)) {
    const Eigen::VectorXd spec =
        Eigen::SelfAdjointEigenSolver<Operator>(s1.transpose() * h * s1, Eigen::EigenvaluesOnly).eigenvalues();
    const double gap = (spec.array() - e_s2).abs().minCoeff();
    if (gap < 1e-8) {
      std::ostringstream os;
      os << "E_S2 = " << e_s2 << " is degenerate with the S1 spectrum (gap " << gap << ")";
      throw ValidationError(os.str());
    }
  }

  // T_S1 coordinates along an orthonormal basis of range(Q_S1)
  const Operator b = range_basis(sectors.q_s1);
  const auto n = b.cols();
  std::vector<Amplitudes> dirs;
  std::vector<Operator> x;
  for (Eigen::Index k = 0; k < n; ++k) {
    dirs.push_back(amplitudes_from_reference_action(basis, b.col(k)));
    x.push_back(excitation_matrix(basis, dirs.back()));
  }
  const State phi = basis.reference_vector();
  Eigen::VectorXd theta = b.transpose() * reference_action(basis, t_s1_init.amplitudes);
  const Operator shifted = h - e_s2 * Operator::Identity(dim, dim);

  auto to_cluster = [&](const Eigen::VectorXd& th) {
    ClusterOperator t;
    for (Eigen::Index k = 0; k < n; ++k)
      for (const auto& [ex, v] : dirs[static_cast<std::size_t>(k)]) t.amplitudes[ex] += th(k) * v;
    return t;
  };
  auto residual = [&](const Eigen::VectorXd& th, State* wave) {
    const State w = exp_apply(to_cluster(th) + t_s2, phi, basis);
    if (wave) *wave = w;
    return Eigen::VectorXd(b.transpose() * (shifted * w));
  };

  MessengerResult out;
  State wave;
  Eigen::VectorXd r = residual(theta, &wave);
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    out.iterations = it;
    out.history.push_back(r.norm());
    if (r.norm() < cfg.tolerance) {
      out.projected_converged = true;
      break;
    }
    // d e^T|Phi> / d theta_k = X_k e^T|Phi>, since excitations commute
    Operator jac(n, n);
    for (Eigen::Index k = 0; k < n; ++k) jac.col(k) = b.transpose() * (shifted * (x[static_cast<std::size_t>(k)] * wave));
    const Eigen::VectorXd step = jac.fullPivLu().solve(-r);
    double alpha = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
      State w_try;
      const Eigen::VectorXd trial = theta + alpha * step;
      const Eigen::VectorXd r_try = residual(trial, &w_try);
      if (r_try.norm() < r.norm()) {
        theta = trial;
        r = r_try;
        wave = w_try;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  if (!out.projected_converged && r.norm() < cfg.tolerance) {
    out.projected_converged = true;
    out.history.push_back(r.norm());
  }
  out.t_s1 = to_cluster(theta);
  out.residual_norm = r.norm();
  out.reference_residual = phi.dot(shifted * wave);

  std::ostringstream os;
  if (!out.projected_converged) {
    os << "Q_S1 equations stalled at residual " << out.residual_norm << " after " << out.iterations << " iterations";
  } else if (std::abs(out.reference_residual) >= cfg.tolerance) {
    os << "Q_S1 equations solved (residual " << out.residual_norm << ") but the reference row is violated by "
       << out.reference_residual;
  } else {
    out.converged = true;
  }
  out.message = os.str();
  return out;
}

double verify_broken_energy(const Operator& h, const ClusterOperator& t_s1, const ClusterOperator& t_s2,
                            const DeterminantBasis& basis) {
  return cc_energy(h, t_s1 + t_s2, basis);
}

BrokenSymmetryResult solve_broken_symmetry(const Operator& h, const State& target, double e_s2,
                                           const SymmetrySectors& sectors, const DeterminantBasis& basis,
                                           const SolverConfig& cfg) {
  cfg.validate();
  if (sectors.size() < 2) throw ValidationError("symmetry breaking needs at least two sectors");
  const double norm = target.norm();
  if (!(norm > 0.0)) throw ValidationError("target state vanishes");
  if ((target - sectors.q_s2 * target).norm() > kPurityTolerance * norm) {
    throw ValidationError("target state is not an S2 state");
  }
  BrokenSymmetryResult out;
  out.c_s2 = {0.0, amplitudes_from_reference_action(basis, target / norm)};

  ClusterOperator t_s1;
  State last = State::Zero(basis.size());
  for (int macro = 1; macro <= cfg.max_iterations; ++macro) {
    out.macro_iterations = macro;
    out.t_s2 = map_c_to_t(out.c_s2, t_s1, sectors, basis);
    out.messenger = solve_messenger(h, out.t_s2, e_s2, sectors, basis, cfg, t_s1);
    t_s1 = out.messenger.t_s1;
    const State now = reference_action(basis, out.t_s2.amplitudes);
    const double moved = (now - last).norm();
    last = now;
    if (!out.messenger.projected_converged) break;
    if (moved < cfg.tolerance) break;
  }
  out.t_s1 = t_s1;
  out.t_s2 = map_c_to_t(out.c_s2, t_s1, sectors, basis);
  out.energy = verify_broken_energy(h, out.t_s1, out.t_s2, basis);
  out.converged = out.messenger.converged;
  out.message = out.messenger.message;
  return out;
}

CrossSymmetryCheck cross_symmetry_downfold(const Operator& h, const ClusterOperator& t, Occupation active,
                                           double e_s2, const SymmetrySectors& sectors,
                                           const DeterminantBasis& basis, double tolerance) {
  CrossSymmetryCheck out;
  for (auto i : cas_indices(basis, active))
    if (sectors.q_s2.col(i).norm() > kPurityTolerance) out.s1_only = false;
  out.heff = build_heff(h, split_cluster(t, active).t_ext, basis, active);
  const Eigen::VectorXcd ev = heff_eigenvalues(out.heff);
  Eigen::Index at = 0;
  (ev.array() - e_s2).abs().minCoeff(&at);
  out.eigenvalue = ev(at);
  out.error = std::abs(ev(at) - e_s2);
  out.matched = out.error < tolerance;
  if (!out.matched) {
    std::ostringstream os;
    os << "closest H^eff eigenvalue misses E_S2 by " << out.error;
    out.message = os.str();
  }
  return out;
}

}  // namespace mpcc
