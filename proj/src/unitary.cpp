#include "mpcc/unitary.hpp"

#include "mpcc/errors.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace mpcc {

AntiHermitianCluster& AntiHermitianCluster::operator+=(const AntiHermitianCluster& other) {
  for (const auto& [x, v] : other.thetas) thetas[x] += v;
  return *this;
}

Operator anti_hermitian_matrix(const DeterminantBasis& basis, const AntiHermitianCluster& sigma) {
  const Operator m = excitation_matrix(basis, sigma.thetas);
  return m - m.transpose();
}

Operator unitary_exp(const AntiHermitianCluster& sigma, const DeterminantBasis& basis, double scale) {
  if (sigma.empty()) return Operator::Identity(basis.size(), basis.size());
  return dense_exp((scale * anti_hermitian_matrix(basis, sigma)).eval());
}

namespace {

using cplx = std::complex<double>;

/// exp(s) for real antisymmetric s through the Hermitian matrix i s, with the
/// Frechet derivative L(s, e) from first divided differences of exp.
class SkewExp {
 public:
  explicit SkewExp(const Operator& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(cplx(0.0, 1.0) * s.cast<cplx>());
    v_ = es.eigenvectors();
    const Eigen::VectorXd mu = es.eigenvalues();
    const auto n = mu.size();
    phase_ = (-cplx(0.0, 1.0) * mu.cast<cplx>()).array().exp();
    phi_.resize(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b) {
        const double x = 0.5 * (mu(a) - mu(b));
        const double sinc = std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
        phi_(a, b) = std::exp(-cplx(0.0, 0.5 * (mu(a) + mu(b)))) * sinc;
      }
  }

  State apply(const State& x) const {
    const Eigen::VectorXcd u = v_.adjoint() * x.cast<cplx>();
    return (v_ * (phase_.asDiagonal() * u)).real();
  }

  /// L(s, e) x for e given as (row, col, value) entries.
  template <typename Entries>
  State frechet_apply(const Entries& e, const State& x) const {
    const auto n = v_.rows();
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& [row, col, value] : e) m += value * v_.row(row).adjoint() * v_.row(col);
    const Eigen::VectorXcd u = v_.adjoint() * x.cast<cplx>();
    return (v_ * (m.cwiseProduct(phi_) * u)).real();
  }

 private:
  Eigen::MatrixXcd v_;
  Eigen::VectorXcd phase_;
  Eigen::MatrixXcd phi_;
};

struct Entry {
  Eigen::Index row;
  Eigen::Index col;
  double value;
};

/// Nonzero entries of E_x - E_x^T on the basis.
std::vector<Entry> generator_entries(const DeterminantBasis& basis, const Excitation& x) {
  std::vector<Entry> out;
  for (Eigen::Index j = 0; j < basis.size(); ++j) {
    const auto r = apply_excitation(basis[j].bits(), x);
    if (!r) continue;
    const auto i = basis.find(r->bits);
    if (!i) throw ValidationError("excitation " + x.to_string() + " leaves the determinant basis");
    out.push_back({*i, j, static_cast<double>(r->sign)});
    out.push_back({j, *i, -static_cast<double>(r->sign)});
  }
  return out;
}

Operator generator_sum(Eigen::Index n, const std::vector<std::vector<Entry>>& gens, const Eigen::VectorXd& theta,
                       double scale) {
  Operator s = Operator::Zero(n, n);
  for (std::size_t mu = 0; mu < gens.size(); ++mu)
    for (const auto& e : gens[mu]) s(e.row, e.col) += scale * theta(static_cast<Eigen::Index>(mu)) * e.value;
  return s;
}

std::vector<Eigen::Index> complement(Eigen::Index n, const std::vector<Eigen::Index>& inside) {
  std::vector<bool> in(static_cast<std::size_t>(n), false);
  for (auto i : inside) in[static_cast<std::size_t>(i)] = true;
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!in[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

Eigen::VectorXd gather(const State& v, const std::vector<Eigen::Index>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = v(idx[k]);
  return out;
}

/// CI operator with the reference weight kept as c0 (no normalization).
CIOperator ci_operator_from_vector(const DeterminantBasis& basis, State v) {
  const double c0 = v(basis.reference_index());
  v(basis.reference_index()) = 0.0;
  return {c0, amplitudes_from_reference_action(basis, v)};
}

/// Validated, orthonormal directions; singletons of every external excitation
/// when none are given.
std::vector<Amplitudes> resolve_directions(const DeterminantBasis& basis, Occupation active,
                                           const std::vector<Amplitudes>& given) {
  if (given.empty()) {
    const auto ext = external_excitations(basis, active);
    return singleton_directions(ext);
  }
  for (std::size_t k = 0; k < given.size(); ++k) {
    for (const auto& [x, v] : given[k])
      if (x.is_internal(active)) throw ValidationError("parameter direction holds the internal excitation " + x.to_string());
    for (std::size_t l = 0; l <= k; ++l) {
      double dot = 0.0;
      for (const auto& [x, v] : given[k]) {
        auto it = given[l].find(x);
        if (it != given[l].end()) dot += v * it->second;
      }
      if (std::abs(dot - (k == l ? 1.0 : 0.0)) > 1e-10) throw ValidationError("parameter directions are not orthonormal");
    }
  }
  return given;
}

std::vector<Entry> direction_entries(const DeterminantBasis& basis, const Amplitudes& d) {
  std::vector<Entry> out;
  for (const auto& [x, v] : d)
    for (auto e : generator_entries(basis, x)) {
      e.value *= v;
      out.push_back(e);
    }
  return out;
}

Eigen::VectorXd to_theta(const AntiHermitianCluster& s, const std::vector<Amplitudes>& directions) {
  Eigen::VectorXd theta(static_cast<Eigen::Index>(directions.size()));
  AntiHermitianCluster rest = s;
  for (std::size_t k = 0; k < directions.size(); ++k) {
    double dot = 0.0;
    for (const auto& [x, v] : directions[k]) {
      auto it = s.thetas.find(x);
      if (it != s.thetas.end()) dot += v * it->second;
    }
    theta(static_cast<Eigen::Index>(k)) = dot;
    for (const auto& [x, v] : directions[k]) rest.thetas[x] -= dot * v;
  }
  for (const auto& [x, v] : rest.thetas)
    if (std::abs(v) > 1e-10) throw ValidationError("amplitude " + x.to_string() + " lies outside the parameter directions");
  return theta;
}

AntiHermitianCluster from_theta(const Eigen::VectorXd& theta, const std::vector<Amplitudes>& directions) {
  AntiHermitianCluster s;
  for (std::size_t k = 0; k < directions.size(); ++k)
    for (const auto& [x, v] : directions[k]) s.thetas[x] += theta(static_cast<Eigen::Index>(k)) * v;
  return s;
}

}  // namespace

std::vector<Amplitudes> singleton_directions(std::span<const Excitation> excitations) {
  std::vector<Amplitudes> out;
  out.reserve(excitations.size());
  for (const auto& x : excitations) out.push_back({{x, 1.0}});
  return out;
}

std::vector<Amplitudes> symmetry_adapted_directions(const DeterminantBasis& basis, Occupation active,
                                                    std::span<const SignedPermutation> group) {
  const State phi = basis.reference_vector();
  std::vector<Operator> actions;
  std::vector<double> chi;
  for (const auto& g : group) {
    actions.push_back(group_action(g, basis));
    const double c = phi.dot(actions.back() * phi);
    if (std::abs(std::abs(c) - 1.0) > 1e-12) throw ValidationError("reference is not mapped onto itself by the group");
    chi.push_back(c);
  }
  std::vector<State> kept;
  std::vector<Amplitudes> out;
  for (const auto& x : external_excitations(basis, active)) {
    const State ex = excitation_matrix(basis, Amplitudes{{x, 1.0}}) * phi;
    State v = State::Zero(basis.size());
    for (std::size_t k = 0; k < actions.size(); ++k) v += chi[k] * (actions[k] * ex);
    for (const auto& q : kept) v -= q.dot(v) * q;
    if (v.norm() < 1e-8) continue;
    v.normalize();
    kept.push_back(v);
    Amplitudes d = amplitudes_from_reference_action(basis, v);
    for (auto it = d.begin(); it != d.end();) {
      if (std::abs(it->second) < 1e-14) {
        it = d.erase(it);
        continue;
      }
      if (it->first.is_internal(active)) throw ValidationError("the active space is not invariant under the group");
      ++it;
    }
    out.push_back(std::move(d));
  }
  return out;
}

SigmaExtraction extract_sigma(const State& v_in, const DeterminantBasis& basis, Occupation active,
                              const ExtractionOptions& options) {
  if (v_in.size() != basis.size()) throw ValidationError("state does not match the basis");
  const double norm = v_in.norm();
  if (!(norm > 0.0)) throw ValidationError("cannot extract sigma from a zero vector");
  State v = v_in / norm;
  if (std::abs(v(basis.reference_index())) <= kNormalizationTolerance) {
    throw ValidationError("state has no reference overlap");
  }
  if (v(basis.reference_index()) < 0) v = -v;

  const auto support = resolve_directions(basis, active, options.directions);
  const auto cas = cas_indices(basis, active);
  const auto ext = complement(basis.size(), cas);
  const auto n = static_cast<Eigen::Index>(support.size());
  std::vector<std::vector<Entry>> gens;
  gens.reserve(support.size());
  for (const auto& d : support) gens.push_back(direction_entries(basis, d));

  auto finish = [&](const Eigen::VectorXd& theta, double residual, int iterations, int start) {
    SigmaExtraction out;
    out.sigma = from_theta(theta, support);
    out.residual = residual;
    out.iterations = iterations;
    out.start = start;
    out.converged = residual < options.tolerance;
    const SkewExp e(generator_sum(basis.size(), gens, theta, -1.0));
    State inner = e.apply(v);
    for (auto i : ext) inner(i) = 0.0;
    out.c_int = ci_operator_from_vector(basis, inner);
    return out;
  };

  if (ext.empty() || n == 0) {
    State inner = v;
    double residual = 0.0;
    for (auto i : ext) residual += inner(i) * inner(i), inner(i) = 0.0;
    SigmaExtraction out;
    out.residual = std::sqrt(residual);
    out.converged = out.residual < options.tolerance;
    out.start = 1;
    out.c_int = ci_operator_from_vector(basis, inner);
    return out;
  }

  std::vector<Eigen::VectorXd> starts;
  if (options.guess) starts.push_back(to_theta(*options.guess, support));
  starts.push_back(Eigen::VectorXd::Zero(n));
  std::mt19937 rng(options.seed);
  std::normal_distribution<double> gauss(0.0, options.random_scale);
  for (int k = 0; k < options.random_starts; ++k) {
    Eigen::VectorXd t(n);
    for (auto& x : t) x = gauss(rng);
    starts.push_back(t);
  }

  Eigen::VectorXd best_theta = Eigen::VectorXd::Zero(n);
  double best = std::numeric_limits<double>::infinity();
  int best_iterations = 0;
  int best_start = -1;
  const int offset = options.guess ? 0 : 1;
  for (std::size_t s = 0; s < starts.size(); ++s) {
    Eigen::VectorXd theta = starts[s];
    auto residual_of = [&](const Eigen::VectorXd& t) {
      return gather(SkewExp(generator_sum(basis.size(), gens, t, -1.0)).apply(v), ext);
    };
    Eigen::VectorXd r = residual_of(theta);
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    int it = 0;
    for (; it < options.max_iterations && std::sqrt(cost) > 1e-14; ++it) {
      const SkewExp e(generator_sum(basis.size(), gens, theta, -1.0));
      Operator jac(static_cast<Eigen::Index>(ext.size()), n);
      for (Eigen::Index mu = 0; mu < n; ++mu) {
        std::vector<std::tuple<Eigen::Index, Eigen::Index, double>> neg;
        for (const auto& en : gens[static_cast<std::size_t>(mu)]) neg.emplace_back(en.row, en.col, -en.value);
        jac.col(mu) = gather(e.frechet_apply(neg, v), ext);
      }
      const Eigen::VectorXd g = jac.transpose() * r;
      const Operator a = jac.transpose() * jac;
      bool accepted = false;
      while (lambda < 1e12) {
        Operator damped = a;
        damped.diagonal().array() += lambda * (a.diagonal().array().max(1e-12));
        const Eigen::VectorXd step = damped.ldlt().solve(-g);
        const Eigen::VectorXd trial = theta + step;
        const Eigen::VectorXd rt = residual_of(trial);
        const double ct = rt.squaredNorm();
        if (ct < cost) {
          theta = trial;
          r = rt;
          const bool tiny = step.norm() < 1e-15 * (1.0 + theta.norm());
          cost = ct;
          lambda = std::max(lambda / 3.0, 1e-12);
          accepted = !tiny;
          break;
        }
        lambda *= 4.0;
      }
      if (!accepted) break;
    }
    const double res = std::sqrt(cost);
    if (res < best) {
      best = res;
      best_theta = theta;
      best_iterations = it;
      best_start = static_cast<int>(s) + offset;
    }
    if (best < options.tolerance * 1e-2) break;
  }
  return finish(best_theta, best, best_iterations, best_start);
}

Operator build_trotter_U(int n, std::size_t i, std::span<const AntiHermitianCluster> sigmas,
                         const DeterminantBasis& basis) {
  if (n < 1) throw ValidationError("Trotter rank must be at least 1");
  if (i >= sigmas.size()) throw ValidationError("state index out of range");
  const double scale = 1.0 / n;
  Operator others = Operator::Identity(basis.size(), basis.size());
  for (std::size_t m = 0; m < sigmas.size(); ++m)
    if (m != i) others = others * unitary_exp(sigmas[m], basis, scale);
  const Operator block = others * unitary_exp(sigmas[i], basis, scale);
  Operator u = Operator::Identity(basis.size(), basis.size());
  for (int k = 0; k < n - 1; ++k) u = u * block;
  return u * others;
}

double trotter_deviation(int n, std::size_t i, std::span<const AntiHermitianCluster> sigmas,
                         const DeterminantBasis& basis) {
  AntiHermitianCluster total;
  for (const auto& s : sigmas) total += s;
  const Operator lhs = build_trotter_U(n, i, sigmas, basis) * unitary_exp(sigmas[i], basis, 1.0 / n);
  return max_abs(lhs - unitary_exp(total, basis));
}

EffectiveHamiltonian hermitian_heff(const AntiHermitianCluster& gamma, const Operator& h,
                                    const DeterminantBasis& basis, Occupation active) {
  for (const auto& [x, v] : gamma.thetas)
    if (x.is_internal(active)) throw ValidationError("Gamma_ext holds the internal amplitude " + x.to_string());
  const Operator u = unitary_exp(gamma, basis);
  auto heff = project_to_cas(u.transpose() * h * u, basis, active, true,
                             {"hermitian", {}, gamma.thetas, 0});
  const double defect = symmetry_defect(heff.matrix);
  if (defect > 1e-10) {
    std::ostringstream os;
    os << "Hermitian effective Hamiltonian is asymmetric by " << defect;
    throw InvariantError(os.str());
  }
  return heff;
}

EffectiveHamiltonian rank1_heff(std::span<const AntiHermitianCluster> sigmas, const Operator& h,
                                const DeterminantBasis& basis, Occupation active) {
  AntiHermitianCluster gamma;
  for (const auto& s : sigmas) gamma += s;
  auto heff = hermitian_heff(gamma, h, basis, active);
  heff.provenance.method = "rank-1 Trotter";
  heff.provenance.trotter_rank = 1;
  for (const auto& s : sigmas) heff.provenance.generators.push_back(s.thetas);
  return heff;
}

namespace {

double theta_distance(const AntiHermitianCluster& a, const AntiHermitianCluster& b) {
  double d = 0.0;
  for (const auto& [x, v] : a.thetas) {
    auto it = b.thetas.find(x);
    const double w = v - (it == b.thetas.end() ? 0.0 : it->second);
    d += w * w;
  }
  for (const auto& [x, v] : b.thetas)
    if (!a.thetas.count(x)) d += v * v;
  return std::sqrt(d);
}

}  // namespace

FixedPointResult fixed_point_iterate(const Operator& h, const StateSet& states, const DeterminantBasis& basis,
                                     Occupation active, const FixedPointOptions& options,
                                     std::vector<AntiHermitianCluster> initial) {
  const int n = options.trotter_rank;
  if (n < 1) throw ValidationError("Trotter rank must be at least 1");
  if (!(options.tolerance > 0.0)) throw ValidationError("fixed-point tolerance must be positive");
  if (!(options.mixing > 0.0 && options.mixing <= 1.0)) throw ValidationError("mixing must lie in (0, 1]");
  const std::size_t k = states.size();
  if (k == 0) throw ValidationError("no target states");
  if (k > cas_indices(basis, active).size()) throw ValidationError("K exceeds the CAS dimension");

  FixedPointResult out;
  if (initial.empty()) {
    for (std::size_t i = 0; i < k; ++i) {
      auto e = extract_sigma(states[i].vector, basis, active, options.extraction);
      if (!e.converged) {
        std::ostringstream os;
        os << "sigma extraction for state " << i << " stalled at residual " << e.residual;
        throw ConvergenceError(os.str());
      }
      initial.push_back(std::move(e.sigma));
    }
  }
  if (initial.size() != k) throw ValidationError("one initial sigma per state is required");
  out.sigmas = std::move(initial);

  // the state each sweep follows: initially the exact eigenvector of Hbar(i,0),
  // afterwards e^{s_i/N} C_i|Phi> as represented by the extraction
  std::vector<State> follow(k);
  for (std::size_t i = 0; i < k; ++i) {
    const Operator u = build_trotter_U(n, i, out.sigmas, basis);
    follow[i] = u.transpose() * states[i].vector;
  }
  out.c_int.resize(k);
  out.energies.assign(k, 0.0);

  for (int sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    out.sweeps = sweep;
    std::vector<AntiHermitianCluster> next(k);
    std::vector<double> lambdas(k);
    double worst = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const Operator u = build_trotter_U(n, i, out.sigmas, basis);
      const Operator hb = u.transpose() * h * u;
      Eigen::SelfAdjointEigenSolver<Operator> es(0.5 * (hb + hb.transpose()));
      Eigen::Index at = 0;
      (es.eigenvectors().transpose() * follow[i]).cwiseAbs().maxCoeff(&at);
      State psi = es.eigenvectors().col(at);
      if (psi.dot(follow[i]) < 0) psi = -psi;
      // warm start only: a distant root would make the map discontinuous
      ExtractionOptions eo = options.extraction;
      eo.guess = (1.0 / n) * out.sigmas[i];
      eo.random_starts = 0;
      const auto e = extract_sigma(psi, basis, active, eo);
      worst = std::max(worst, e.residual);
      next[i] = (1.0 - options.mixing) * out.sigmas[i] + (options.mixing * n) * e.sigma;
      out.c_int[i] = e.c_int;
      lambdas[i] = es.eigenvalues()(at);
      follow[i] = psi;
    }
    double step = 0.0;
    for (std::size_t i = 0; i < k; ++i) step = std::max(step, theta_distance(next[i], out.sigmas[i]));
    out.sigmas = std::move(next);
    out.lambda_history.push_back(lambdas);
    out.step_history.push_back(step);
    out.extraction_history.push_back(worst);
    out.energies = lambdas;
    if (step < options.tolerance) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged) {
    std::ostringstream os;
    os << "parameters still moving after " << options.max_sweeps << " sweeps (last step "
       << (out.step_history.empty() ? 0.0 : out.step_history.back()) << ", extraction residual "
       << (out.extraction_history.empty() ? 0.0 : out.extraction_history.back()) << ")";
    out.message = os.str();
  }

  out.eigen_residuals.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const Operator u = build_trotter_U(n, i, out.sigmas, basis);
    const Operator hb = u.transpose() * h * u;
    const State x = unitary_exp(out.sigmas[i], basis, 1.0 / n) * ci_vector(basis, out.c_int[i]);
    const double lambda = x.dot(hb * x) / x.squaredNorm();
    out.eigen_residuals[i] = (hb * x - lambda * x).norm() / x.norm();
  }
  return out;
}

WeightedResult weighted_minimize(const Operator& h, const DeterminantBasis& basis, Occupation active,
                                 std::span<const double> weights, const AntiHermitianCluster& init,
                                 std::span<const State> c_init, std::span<const Amplitudes> directions,
                                 const WeightedOptions& options) {
  const std::size_t k = weights.size();
  if (k == 0) throw ValidationError("at least one weight is required");
  for (double w : weights)
    if (!(w > 0.0)) throw ValidationError("weights must be positive");
  if (c_init.size() != k) throw ValidationError("one initial CAS vector per weight is required");
  const auto cas = cas_indices(basis, active);
  if (k > cas.size()) throw ValidationError("K exceeds the CAS dimension");

  const std::vector<Amplitudes> support =
      directions.empty() ? std::vector<Amplitudes>{} : resolve_directions(basis, active, {directions.begin(), directions.end()});
  const auto n = static_cast<Eigen::Index>(support.size());

  std::vector<Eigen::VectorXd> refs;
  for (const auto& c : c_init) {
    Eigen::VectorXd r = gather(c, cas);
    if (!(r.norm() > 0.0)) throw ValidationError("initial CAS vector vanishes inside the CAS");
    refs.push_back(r.normalized());
  }

  WeightedResult out;
  struct Eval {
    double r = 0.0;
    std::vector<double> energies;
    std::vector<Eigen::VectorXd> vectors;
    bool ambiguous = false;
  };
  auto evaluate = [&](const Eigen::VectorXd& theta, const std::vector<Eigen::VectorXd>& follow) {
    const auto heff = hermitian_heff(from_theta(theta, support), h, basis, active);
    Eigen::SelfAdjointEigenSolver<Operator> es(heff.matrix);
    Eval e;
    // the K eigenvectors with most weight on the followed subspace, then
    // matched state by state inside that set
    Operator frame(heff.dimension(), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) frame.col(static_cast<Eigen::Index>(i)) = follow[i];
    const Operator q = Eigen::HouseholderQR<Operator>(frame).householderQ() * Operator::Identity(frame.rows(), frame.cols());
    const Eigen::VectorXd weight = (q.transpose() * es.eigenvectors()).colwise().squaredNorm();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(weight.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return weight(x) > weight(y); });
    if (order.size() > k && weight(order[k - 1]) - weight(order[k]) < 1e-3) e.ambiguous = true;
    std::vector<Eigen::Index> pool(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t i = 0; i < k; ++i) {
      auto best = pool.begin();
      for (auto it = pool.begin(); it != pool.end(); ++it)
        if (std::abs(es.eigenvectors().col(*it).dot(follow[i])) > std::abs(es.eigenvectors().col(*best).dot(follow[i])))
          best = it;
      const Eigen::Index at = *best;
      pool.erase(best);
      Eigen::VectorXd vec = es.eigenvectors().col(at);
      if (vec.dot(follow[i]) < 0) vec = -vec;
      e.energies.push_back(es.eigenvalues()(at));
      e.vectors.push_back(vec);
      e.r += weights[i] * es.eigenvalues()(at);
    }
    return e;
  };
  auto gradient = [&](const Eigen::VectorXd& theta, const std::vector<Eigen::VectorXd>& follow) {
    Eigen::VectorXd g(n);
    for (Eigen::Index q = 0; q < n; ++q) {
      const double step = options.fd_step * std::max(1.0, std::abs(theta(q)));
      Eigen::VectorXd plus = theta;
      Eigen::VectorXd minus = theta;
      plus(q) += step;
      minus(q) -= step;
      g(q) = (evaluate(plus, follow).r - evaluate(minus, follow).r) / (2.0 * step);
    }
    return g;
  };

  Eigen::VectorXd x = to_theta(init, support);
  Eval cur = evaluate(x, refs);
  std::vector<Eigen::VectorXd> follow = cur.vectors;
  out.tracking_ambiguous = cur.ambiguous;
  out.trace.push_back({0, cur.r, cur.energies, x.norm()});
  if (n == 0) {
    out.converged = true;
  } else {
    Eigen::VectorXd g = gradient(x, follow);
    Operator hinv = Operator::Identity(n, n);
    int flat = 0;
    for (int it = 1; it <= options.max_iterations; ++it) {
      if (g.cwiseAbs().maxCoeff() < options.gradient_tolerance) {
        out.converged = true;
        break;
      }
      Eigen::VectorXd p = -hinv * g;
      if (g.dot(p) >= 0) {
        hinv.setIdentity();
        p = -g;
      }
      double alpha = 1.0;
      Eval trial;
      Eigen::VectorXd xt;
      bool ok = false;
      for (int ls = 0; ls < 40; ++ls) {
        xt = x + alpha * p;
        trial = evaluate(xt, follow);
        if (trial.r <= cur.r + 1e-4 * alpha * g.dot(p)) {
          ok = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!ok) {
        if (hinv.isIdentity(0)) {
          out.converged = g.cwiseAbs().maxCoeff() < 1e-6;
          out.message = "line search stalled";
          break;
        }
        hinv.setIdentity();
        continue;
      }
      const double drop = cur.r - trial.r;
      const Eigen::VectorXd s = xt - x;
      x = xt;
      cur = trial;
      follow = cur.vectors;
      out.tracking_ambiguous = out.tracking_ambiguous || cur.ambiguous;
      const Eigen::VectorXd gn = gradient(x, follow);
      const Eigen::VectorXd y = gn - g;
      g = gn;
      const double sy = s.dot(y);
      if (sy > 1e-14) {
        const double rho = 1.0 / sy;
        const Operator id = Operator::Identity(n, n);
        hinv = (id - rho * s * y.transpose()) * hinv * (id - rho * y * s.transpose()) + rho * s * s.transpose();
      }
      out.trace.push_back({it, cur.r, cur.energies, x.norm()});
      flat = drop < 1e-14 * (1.0 + std::abs(cur.r)) ? flat + 1 : 0;
      if (flat >= 3) {
        out.converged = g.cwiseAbs().maxCoeff() < 1e-6;
        out.message = "objective stagnated";
        break;
      }
    }
    if (!out.converged && out.message.empty()) out.message = "iteration limit reached";
  }

  out.gamma = from_theta(x, support);
  out.r = cur.r;
  out.energies = cur.energies;
  for (const auto& vec : cur.vectors) {
    State full = State::Zero(basis.size());
    for (std::size_t q = 0; q < cas.size(); ++q) full(cas[q]) = vec(static_cast<Eigen::Index>(q));
    out.c_int.push_back(ci_operator_from_vector(basis, full));
  }
  return out;
}

}  // namespace mpcc
