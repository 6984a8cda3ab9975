#include "mpcc/fci.hpp"

#include "mpcc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mpcc {

namespace {

void fix_signs(Operator& vectors) {
  for (Eigen::Index k = 0; k < vectors.cols(); ++k) {
    Eigen::Index at = 0;
    const double big = vectors.col(k).cwiseAbs().maxCoeff(&at);
    // first index among near-ties keeps the convention stable
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
      if (std::abs(vectors(i, k)) > big - 1e-12) {
        at = i;
        break;
      }
    }
    if (vectors(at, k) < 0) vectors.col(k) *= -1.0;
  }
}

}  // namespace

EigenSet diagonalize(const Operator& h, const DiagonalizeOptions& options) {
  if (h.rows() != h.cols()) throw ValidationError("Hamiltonian is not square");
  const double defect = symmetry_defect(h);
  if (defect > 1e-10 * std::max(1.0, max_abs(h))) {
    std::ostringstream os;
    os << "Hamiltonian is not symmetric (max asymmetry " << defect << ")";
    throw ValidationError(os.str());
  }
  if (h.rows() > options.dense_limit) {
    return davidson_lowest(h, std::min(options.lowest, h.rows()), options.tolerance,
                           options.max_iterations);
  }
  Eigen::SelfAdjointEigenSolver<Operator> es(h);
  if (es.info() != Eigen::Success) throw InvariantError("dense eigensolver failed");
  EigenSet out{es.eigenvalues(), es.eigenvectors()};
  fix_signs(out.vectors);
  return out;
}

EigenSet davidson_lowest(const Operator& h, Eigen::Index count, double tolerance,
                         int max_iterations) {
  const Eigen::Index n = h.rows();
  if (count < 1 || count > n) throw ValidationError("requested eigenpair count out of range");
  const Eigen::VectorXd diag = h.diagonal();

  // Start from unit vectors on the lowest diagonal entries.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return diag(a) < diag(b); });
  const Eigen::Index block = std::min(n, 2 * count);
  const Eigen::Index max_space = std::min(n, std::max<Eigen::Index>(8 * count, 20));
  Operator space = Operator::Zero(n, block);
  for (Eigen::Index k = 0; k < block; ++k) space(order[static_cast<std::size_t>(k)], k) = 1.0;

  for (int it = 0; it < max_iterations; ++it) {
    Eigen::HouseholderQR<Operator> qr(space);
    space = qr.householderQ() * Operator::Identity(n, space.cols());
    const Operator hs = h * space;
    const Operator small = space.transpose() * hs;
    Eigen::SelfAdjointEigenSolver<Operator> es(0.5 * (small + small.transpose()));
    const Operator ritz = space * es.eigenvectors().leftCols(count);
    const Operator hritz = hs * es.eigenvectors().leftCols(count);

    Operator corrections(n, 0);
    bool done = true;
    for (Eigen::Index k = 0; k < count; ++k) {
      const double theta = es.eigenvalues()(k);
      Eigen::VectorXd r = hritz.col(k) - theta * ritz.col(k);
      if (r.norm() < tolerance) continue;
      done = false;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double denom = theta - diag(i);
        r(i) /= std::abs(denom) > 1e-8 ? denom : 1e-8;
      }
      r -= space * (space.transpose() * r);
      const double norm = r.norm();
      if (norm < 1e-12) continue;
      corrections.conservativeResize(n, corrections.cols() + 1);
      corrections.col(corrections.cols() - 1) = r / norm;
    }
    if (done || corrections.cols() == 0) {
      EigenSet out{es.eigenvalues().head(count), ritz};
      fix_signs(out.vectors);
      if (!done) throw ConvergenceError("Davidson subspace stagnated before convergence");
      return out;
    }
    if (space.cols() + corrections.cols() > max_space) {
      space = ritz;  // restart on the current Ritz vectors
    }
    Operator grown(n, space.cols() + corrections.cols());
    grown << space, corrections;
    space = std::move(grown);
  }
  throw ConvergenceError("Davidson did not converge within the iteration limit");
}

StateSet select_states(const EigenSet& eig, const DeterminantBasis& basis, int k, double overlap_tol) {
  if (k < 1) throw ValidationError("at least one state must be requested");
  if (eig.vectors.rows() != basis.size()) throw ValidationError("eigenvectors do not match the basis");
  const Eigen::Index r = basis.reference_index();
  const Eigen::Index n = eig.size();

  Operator vectors = eig.vectors;
  std::vector<bool> degenerate(static_cast<std::size_t>(n), false);
  for (Eigen::Index start = 0; start < n;) {
    Eigen::Index stop = start + 1;
    while (stop < n && eig.energies(stop) - eig.energies(stop - 1) < kDegeneracyTolerance) ++stop;
    const Eigen::Index m = stop - start;
    if (m > 1) {
      // Rotate the multiplet so that its reference overlap sits on one vector.
      auto block = vectors.middleCols(start, m);
      const Eigen::RowVectorXd o = block.row(r);
      if (o.norm() > 0) {
        Operator seed(block.rows(), m);
        seed.col(0) = block * (o.transpose() / o.norm());
        seed.rightCols(m - 1) = block.rightCols(m - 1);
        // Gram-Schmidt keeps the span and leaves only seed.col(0) with overlap.
        for (Eigen::Index j = 0; j < m; ++j) {
          for (Eigen::Index i = 0; i < j; ++i) seed.col(j) -= seed.col(i).dot(seed.col(j)) * seed.col(i);
          const double norm = seed.col(j).norm();
          if (norm < 1e-10) {
            // replace a dependent column by the block member it came from
            seed.col(j) = block.col(0);
            for (Eigen::Index i = 0; i < j; ++i) seed.col(j) -= seed.col(i).dot(seed.col(j)) * seed.col(i);
          }
          seed.col(j).normalize();
        }
        block = seed;
      }
      for (Eigen::Index j = start; j < stop; ++j) degenerate[static_cast<std::size_t>(j)] = true;
    }
    start = stop;
  }

  StateSet out;
  for (Eigen::Index j = 0; j < n && static_cast<int>(out.size()) < k; ++j) {
    State v = vectors.col(j);
    if (std::abs(v(r)) <= overlap_tol) continue;
    if (v(r) < 0) v = -v;
    out.states.push_back({eig.energies(j), v, v(r), kMixedSector, j, degenerate[static_cast<std::size_t>(j)]});
  }
  if (static_cast<int>(out.size()) < k) {
    std::ostringstream os;
    os << "only " << out.size() << " of " << k << " requested states overlap the reference above "
       << overlap_tol << "; overlaps:";
    for (Eigen::Index j = 0; j < n; ++j) os << " " << vectors(r, j);
    throw ValidationError(os.str());
  }
  return out;
}

std::vector<int> label_sectors(const EigenSet& eig, std::span<const Projector> projectors,
                               const Operator& h) {
  for (const auto& p : projectors) {
    const double c = max_abs(commutator(h, p.matrix));
    if (c > 1e-10) {
      std::ostringstream os;
      os << "projector " << p.label << " does not commute with H (max " << c << ")";
      throw ValidationError(os.str());
    }
  }
  std::vector<int> labels(static_cast<std::size_t>(eig.size()), kMixedSector);
  for (Eigen::Index j = 0; j < eig.size(); ++j) {
    for (std::size_t k = 0; k < projectors.size(); ++k) {
      if ((projectors[k].matrix * eig.vectors.col(j)).norm() > 1.0 - 1e-8) {
        labels[static_cast<std::size_t>(j)] = static_cast<int>(k);
        break;
      }
    }
  }
  return labels;
}

}  // namespace mpcc
