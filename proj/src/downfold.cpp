#include "mpcc/downfold.hpp"

#include "mpcc/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace mpcc {

Eigen::VectorXd EffectiveHamiltonian::restrict(const State& v) const {
  Eigen::VectorXd c(static_cast<Eigen::Index>(cas_indices.size()));
  for (std::size_t k = 0; k < cas_indices.size(); ++k) c(static_cast<Eigen::Index>(k)) = v(cas_indices[k]);
  return c;
}

State EffectiveHamiltonian::embed(const Eigen::VectorXd& c, Eigen::Index full_size) const {
  State v = State::Zero(full_size);
  for (std::size_t k = 0; k < cas_indices.size(); ++k) v(cas_indices[k]) = c(static_cast<Eigen::Index>(k));
  return v;
}

EffectiveHamiltonian project_to_cas(const Operator& transformed, const DeterminantBasis& basis, Occupation active,
                                    bool hermitian, Provenance provenance) {
  EffectiveHamiltonian out;
  out.cas_indices = cas_indices(basis, active);
  const auto m = static_cast<Eigen::Index>(out.cas_indices.size());
  out.matrix.resize(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto i = out.cas_indices[static_cast<std::size_t>(a)];
    out.cas_basis.push_back(basis[i]);
    if (i == basis.reference_index()) out.reference_position = a;
    for (Eigen::Index b = 0; b < m; ++b) out.matrix(a, b) = transformed(i, out.cas_indices[static_cast<std::size_t>(b)]);
  }
  out.hermitian = hermitian;
  out.provenance = std::move(provenance);
  return out;
}

namespace {

void require_external(const ClusterOperator& t, Occupation active, const char* what) {
  for (const auto& [x, v] : t.amplitudes) {
    if (x.is_internal(active)) {
      throw ValidationError(std::string(what) + " holds the internal amplitude " + x.to_string());
    }
  }
}

}  // namespace

EffectiveHamiltonian build_heff(const Operator& h, const ClusterOperator& t_ext, const DeterminantBasis& basis,
                                Occupation active) {
  require_external(t_ext, active, "T_ext");
  return project_to_cas(similarity_transform(h, t_ext, basis), basis, active, false,
                        {"ses", {t_ext.amplitudes}, t_ext.amplitudes, 0});
}

double verify_ses(const EffectiveHamiltonian& heff, const ClusterOperator& t_int, const DeterminantBasis& basis,
                  double energy) {
  const Eigen::VectorXd c = heff.restrict(exp_apply(t_int, basis.reference_vector(), basis));
  return (heff.matrix * c - energy * c).norm();
}

ClusterOperator cumulative_sigma(std::span<const ClusterOperator> t_list, Occupation active) {
  ClusterOperator sigma;
  for (const auto& t : t_list) {
    require_external(t, active, "external cluster operator");
    sigma += t;
  }
  return sigma;
}

MultistateHeff build_multistate_heff(const Operator& h, const StateSet& states, const DeterminantBasis& basis,
                                     Occupation active) {
  const auto m = cas_indices(basis, active).size();
  if (states.size() == 0) throw ValidationError("no target states");
  if (states.size() > m) {
    std::ostringstream os;
    os << "K = " << states.size() << " exceeds the CAS dimension M = " << m;
    throw ValidationError(os.str());
  }
  MultistateHeff out;
  std::vector<ClusterOperator> t_list;
  Provenance prov{"state-universal", {}, {}, 0};
  for (const auto& s : states.states) {
    auto d = casscc_decompose(s.vector, basis, active);
    t_list.push_back(d.t_ext);
    prov.generators.push_back(d.t_ext.amplitudes);
    out.states.push_back({s.energy, s.vector, std::move(d.t_ext), std::move(d.t_int), std::move(d.c_int)});
  }
  out.sigma = cumulative_sigma(t_list, active);
  prov.cumulative = out.sigma.amplitudes;
  out.heff = project_to_cas(similarity_transform(h, out.sigma, basis), basis, active, false, std::move(prov));
  return out;
}

Operator build_hbar_i(const Operator& h, std::size_t i, std::span<const ClusterOperator> t_list,
                      const DeterminantBasis& basis) {
  if (i >= t_list.size()) throw ValidationError("state index out of range");
  ClusterOperator others;
  for (std::size_t m = 0; m < t_list.size(); ++m)
    if (m != i) others += t_list[m];
  return similarity_transform(h, others, basis);
}

State gst_residual(const Operator& gst, const CIOperator& c_tilde, const Projector& q_ext,
                   const DeterminantBasis& basis) {
  return q_ext.matrix * (gst * ci_vector(basis, c_tilde));
}

Eigen::VectorXcd heff_eigenvalues(const EffectiveHamiltonian& heff) {
  Eigen::EigenSolver<Operator> es(heff.matrix, false);
  return es.eigenvalues();
}

EigenMatch match_eigenpair(const EffectiveHamiltonian& heff, double energy, const State& target) {
  Eigen::EigenSolver<Operator> es(heff.matrix);
  const Eigen::VectorXcd ev = es.eigenvalues();
  Eigen::Index best = 0;
  (ev.array() - energy).abs().minCoeff(&best);
  EigenMatch out;
  out.eigenvalue = ev(best);
  out.energy_error = std::abs(ev(best) - energy);
  const Eigen::VectorXcd v = es.eigenvectors().col(best);
  const Eigen::VectorXd t = heff.restrict(target);
  const auto r = heff.reference_position;
  if (std::abs(v(r)) < 1e-12 || std::abs(t(r)) < 1e-12) {
    out.vector_error = std::numeric_limits<double>::infinity();
  } else {
    const Eigen::VectorXcd a = v / v(r);
    const Eigen::VectorXcd b = (t / t(r)).cast<std::complex<double>>();
    out.vector_error = (a - b).cwiseAbs().maxCoeff();
  }
  return out;
}

void SolverConfig::validate() const {
  if (!(tolerance > 0.0)) throw ValidationError("solver tolerance must be positive");
  if (!(damping > 0.0 && damping <= 1.0)) throw ValidationError("damping must lie in (0, 1]");
  if (max_iterations < 1) throw ValidationError("max_iterations must be positive");
  for (double w : weights)
    if (!(w > 0.0)) throw ValidationError("state weights must be positive");
}

std::vector<Excitation> external_excitations(const DeterminantBasis& basis, Occupation active,
                                             std::span<const int> ranks) {
  std::vector<Excitation> out;
  for (Eigen::Index i = 0; i < basis.size(); ++i) {
    if (i == basis.reference_index()) continue;
    const Excitation x = excitation_between(basis.reference(), basis[i]);
    if (x.is_internal(active)) continue;
    if (!ranks.empty() && std::find(ranks.begin(), ranks.end(), x.rank()) == ranks.end()) continue;
    out.push_back(x);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

struct SupportEntry {
  Excitation x;
  Eigen::Index target;
  int sign;
  double denominator;
};

/// Eigenvectors of H^eff matched to the previous C~ vectors by overlap.
void track_states(const EffectiveHamiltonian& heff, const DeterminantBasis& basis, std::vector<CIOperator>& c,
                  std::vector<double>& energies) {
  Eigen::EigenSolver<Operator> es(heff.matrix);
  const Eigen::VectorXcd ev = es.eigenvalues();
  const Eigen::MatrixXcd vecs = es.eigenvectors();
  const auto r = heff.reference_position;
  std::vector<bool> taken(static_cast<std::size_t>(ev.size()), false);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Eigen::VectorXd prev = heff.restrict(ci_vector(basis, c[i]));
    double best = -1.0;
    Eigen::Index at = -1;
    for (Eigen::Index k = 0; k < ev.size(); ++k) {
      if (taken[static_cast<std::size_t>(k)] || std::abs(vecs(r, k)) < 1e-10) continue;
      const double o = std::abs(vecs.col(k).dot(prev.cast<std::complex<double>>())) / prev.norm();
      if (o > best) {
        best = o;
        at = k;
      }
    }
    if (at < 0) continue;
    taken[static_cast<std::size_t>(at)] = true;
    const Eigen::VectorXd v = (vecs.col(at) / vecs(r, at)).real();
    c[i] = intermediate_normalize(heff.embed(v, basis.size()), basis, 0.0);
    energies[i] = ev(at).real();
  }
}

}  // namespace

NewtonResult newton_raphson_solve(const Operator& h, const DeterminantBasis& basis, Occupation active,
                                  std::span<const std::vector<Excitation>> support,
                                  std::span<const StateGuess> guesses, const SolverConfig& cfg) {
  cfg.validate();
  const std::size_t k = guesses.size();
  if (k == 0) throw ValidationError("no initial states supplied");
  if (support.size() != k) throw ValidationError("one excitation support per state is required");
  if (!cfg.weights.empty() && cfg.weights.size() != k) throw ValidationError("weights length must equal K");
  if (k > cas_indices(basis, active).size()) throw ValidationError("K exceeds the CAS dimension");

  const Occupation ref = basis.reference().bits();
  const double e_ref = h(basis.reference_index(), basis.reference_index());
  std::vector<std::vector<SupportEntry>> entries(k);
  NewtonResult out;
  for (std::size_t i = 0; i < k; ++i) {
    for (const auto& x : support[i]) {
      if (x.is_internal(active)) throw ValidationError("support holds the internal excitation " + x.to_string());
      const auto r = apply_excitation(ref, x);
      if (!r) throw ValidationError("support excitation " + x.to_string() + " is not well formed");
      const auto at = basis.find(r->bits);
      if (!at) throw ValidationError("support excitation " + x.to_string() + " leaves the basis");
      double d = h(*at, *at) - e_ref;
      if (std::abs(d) < 1e-6) d = d < 0 ? -1e-6 : 1e-6;
      entries[i].push_back({x, *at, r->sign, d});
    }
    ClusterOperator t;
    for (const auto& e : entries[i]) {
      auto it = guesses[i].t_ext.amplitudes.find(e.x);
      t.amplitudes[e.x] = it == guesses[i].t_ext.amplitudes.end() ? 0.0 : it->second;
    }
    for (const auto& [x, v] : guesses[i].t_ext.amplitudes) {
      if (!t.amplitudes.count(x) && v != 0.0) {
        throw ValidationError("initial amplitude " + x.to_string() + " lies outside the declared support");
      }
    }
    out.t_ext.push_back(std::move(t));
    if (guesses[i].c_int.c0 == 0.0) throw ValidationError("initial C_int has no reference component");
    out.c_int.push_back(guesses[i].c_int.c0 == 1.0
                            ? guesses[i].c_int
                            : intermediate_normalize(ci_vector(basis, guesses[i].c_int), basis, 0.0));
  }
  out.energies.assign(k, 0.0);

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    out.iterations = it;
    const ClusterOperator sigma = cumulative_sigma(out.t_ext, active);
    const Operator gst = gst_hamiltonian(h, sigma, basis);
    double worst = 0.0;
    std::vector<Eigen::VectorXd> f(k);
    for (std::size_t i = 0; i < k; ++i) {
      const State w = gst * ci_vector(basis, out.c_int[i]);
      f[i].resize(static_cast<Eigen::Index>(entries[i].size()));
      for (std::size_t n = 0; n < entries[i].size(); ++n) {
        f[i](static_cast<Eigen::Index>(n)) = entries[i][n].sign * w(entries[i][n].target);
      }
      out.energies[i] = w(basis.reference_index());
      const double norm = f[i].norm();
      worst = std::max(worst, std::isfinite(norm) ? norm : std::numeric_limits<double>::infinity());
      out.log.push_back({it, static_cast<int>(i), norm, out.energies[i]});
    }
    if (worst < cfg.tolerance) {
      out.converged = true;
      break;
    }
    if (!std::isfinite(worst)) {
      out.message = "residual became non-finite";
      break;
    }
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t n = 0; n < entries[i].size(); ++n) {
        const auto& e = entries[i][n];
        const double scale = cfg.preconditioner == Preconditioner::Diagonal ? e.denominator : 1.0;
        out.t_ext[i].amplitudes[e.x] -= cfg.damping * f[i](static_cast<Eigen::Index>(n)) / scale;
      }
    }
    // macro step: refresh C~_int from the current effective Hamiltonian
    const ClusterOperator next = cumulative_sigma(out.t_ext, active);
    const auto heff = project_to_cas(gst_hamiltonian(h, next, basis), basis, active, false, {});
    track_states(heff, basis, out.c_int, out.energies);
  }

  const ClusterOperator sigma = cumulative_sigma(out.t_ext, active);
  Provenance prov{"newton-raphson", {}, sigma.amplitudes, 0};
  for (const auto& t : out.t_ext) prov.generators.push_back(t.amplitudes);
  out.heff = project_to_cas(gst_hamiltonian(h, sigma, basis), basis, active, false, std::move(prov));
  if (out.converged) {
    track_states(out.heff, basis, out.c_int, out.energies);
  } else if (out.message.empty()) {
    std::ostringstream os;
    os << "no convergence within " << cfg.max_iterations << " iterations";
    out.message = os.str();
  }
  return out;
}

}  // namespace mpcc
