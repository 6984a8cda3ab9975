#include "mpcc/cluster.hpp"

#include "mpcc/errors.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

namespace mpcc {

namespace {

Amplitudes rank_filter(const Amplitudes& a, int k) {
  Amplitudes out;
  for (const auto& [x, v] : a)
    if (x.rank() == k) out.emplace(x, v);
  return out;
}

}  // namespace

CIOperator CIOperator::rank(int k) const {
  return {k == 0 ? c0 : 0.0, k == 0 ? Amplitudes{} : rank_filter(coefficients, k)};
}

ClusterOperator ClusterOperator::rank(int k) const { return {rank_filter(amplitudes, k)}; }

int ClusterOperator::max_rank() const noexcept {
  int r = 0;
  for (const auto& [x, v] : amplitudes) r = std::max(r, x.rank());
  return r;
}

ClusterOperator& ClusterOperator::operator+=(const ClusterOperator& other) {
  for (const auto& [x, v] : other.amplitudes) amplitudes[x] += v;
  return *this;
}

Operator excitation_matrix(const DeterminantBasis& basis, const Amplitudes& amplitudes) {
  Operator m = Operator::Zero(basis.size(), basis.size());
  for (Eigen::Index j = 0; j < basis.size(); ++j) {
    const Occupation d = basis[j].bits();
    for (const auto& [x, a] : amplitudes) {
      const auto r = apply_excitation(d, x);
      if (!r) continue;
      const auto i = basis.find(r->bits);
      if (!i) throw ValidationError("excitation " + x.to_string() + " leaves the determinant basis");
      m(*i, j) += a * r->sign;
    }
  }
  return m;
}

State reference_action(const DeterminantBasis& basis, const Amplitudes& amplitudes) {
  State v = State::Zero(basis.size());
  const Occupation ref = basis.reference().bits();
  for (const auto& [x, a] : amplitudes) {
    const auto r = apply_excitation(ref, x);
    if (!r) throw ValidationError("excitation " + x.to_string() + " is not well formed against the reference");
    const auto i = basis.find(r->bits);
    if (!i) throw ValidationError("excitation " + x.to_string() + " leaves the determinant basis");
    v(*i) += a * r->sign;
  }
  return v;
}

Amplitudes amplitudes_from_reference_action(const DeterminantBasis& basis, const State& v) {
  Amplitudes out;
  const Determinant& ref = basis.reference();
  for (Eigen::Index i = 0; i < basis.size(); ++i) {
    if (i == basis.reference_index() || v(i) == 0.0) continue;
    const Excitation x = excitation_between(ref, basis[i]);
    out.emplace(x, v(i) * apply_excitation(ref.bits(), x)->sign);
  }
  return out;
}

State ci_vector(const DeterminantBasis& basis, const CIOperator& c) {
  State v = reference_action(basis, c.coefficients);
  v(basis.reference_index()) += c.c0;
  return v;
}

CIOperator intermediate_normalize(const State& v, const DeterminantBasis& basis, double tol) {
  if (v.size() != basis.size()) throw ValidationError("state does not match the basis");
  const double overlap = v(basis.reference_index());
  if (!(std::abs(overlap) > tol)) {
    std::ostringstream os;
    os << "reference overlap " << overlap << " is below the normalization tolerance " << tol;
    throw ValidationError(os.str());
  }
  State w = v / overlap;
  w(basis.reference_index()) = 0.0;
  return {1.0, amplitudes_from_reference_action(basis, w)};
}

ClusterOperator cluster_analyze(const CIOperator& c, const DeterminantBasis& basis) {
  if (std::abs(c.c0 - 1.0) > 1e-12) throw ValidationError("cluster analysis needs c0 == 1");
  ClusterOperator t;
  const State phi = basis.reference_vector();
  const int top = basis.max_excitation_level();
  for (int k = 1; k <= top; ++k) {
    Amplitudes ck = rank_filter(c.coefficients, k);
    if (k > 1 && !t.empty()) {
      const State w = exp_apply(t, phi, basis);
      for (const auto& [x, v] : rank_filter(amplitudes_from_reference_action(basis, w), k)) ck[x] -= v;
    }
    for (const auto& [x, v] : ck)
      if (v != 0.0) t.amplitudes.emplace(x, v);
  }
  return t;
}

ClusterSplit split_cluster(const ClusterOperator& t, Occupation active) {
  ClusterSplit out;
  for (const auto& [x, v] : t.amplitudes) (x.is_internal(active) ? out.t_int : out.t_ext).amplitudes.emplace(x, v);
  return out;
}

State exp_apply(const ClusterOperator& t, const State& v, const DeterminantBasis& basis) {
  if (t.empty()) return v;
  return nilpotent_exp_apply(excitation_matrix(basis, t), v, nilpotency_order(basis));
}

Operator cluster_exp(const ClusterOperator& t, const DeterminantBasis& basis, double scale) {
  return nilpotent_exp(excitation_matrix(basis, t), scale, nilpotency_order(basis));
}

Operator similarity_transform(const Operator& h, const ClusterOperator& t, const DeterminantBasis& basis) {
  if (t.empty()) return h;
  const Operator m = excitation_matrix(basis, t);
  const int order = nilpotency_order(basis);
  return nilpotent_exp(m, -1.0, order) * h * nilpotent_exp(m, 1.0, order);
}

namespace {

State transformed_reference(const Operator& h, const ClusterOperator& t, const DeterminantBasis& basis) {
  const Operator m = excitation_matrix(basis, t);
  const int order = nilpotency_order(basis);
  const State psi = nilpotent_exp_apply(m, basis.reference_vector(), order);
  const State hpsi = h * psi;
  return nilpotent_exp_apply((-m).eval(), hpsi, order);
}

}  // namespace

State cc_residual(const Operator& h, const ClusterOperator& t, const Projector& q, const DeterminantBasis& basis) {
  return q.matrix * transformed_reference(h, t, basis);
}

double cc_energy(const Operator& h, const ClusterOperator& t, const DeterminantBasis& basis) {
  return transformed_reference(h, t, basis)(basis.reference_index());
}

CasccDecomposition casscc_decompose(const State& v, const DeterminantBasis& basis, Occupation active, double tol) {
  const CIOperator c = intermediate_normalize(v, basis, tol);
  const ClusterOperator t = cluster_analyze(c, basis);
  auto [t_int, t_ext] = split_cluster(t, active);
  const State inner = exp_apply(t_int, basis.reference_vector(), basis);
  CIOperator c_int = intermediate_normalize(inner, basis, 0.0);
  return {std::move(t_ext), std::move(c_int), std::move(t_int)};
}

void write_amplitudes(std::ostream& out, const Amplitudes& amplitudes) {
  const auto precision = out.precision(17);
  for (const auto& [x, v] : amplitudes) {
    out << x.rank();
    for (int h : x.hole_list()) out << ' ' << h;
    for (int p : x.particle_list()) out << ' ' << p;
    out << ' ' << v << '\n';
  }
  out.precision(precision);
}

Amplitudes read_amplitudes(std::istream& in) {
  Amplitudes out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::istringstream is(line);
    int rank = 0;
    if (!(is >> rank) || rank < 1 || rank > kMaxSpinOrbitals / 2) throw ParseError(number, "bad excitation rank");
    std::vector<int> holes(static_cast<std::size_t>(rank));
    std::vector<int> particles(static_cast<std::size_t>(rank));
    for (auto& h : holes)
      if (!(is >> h)) throw ParseError(number, "missing hole index");
    for (auto& p : particles)
      if (!(is >> p)) throw ParseError(number, "missing particle index");
    double v = 0.0;
    if (!(is >> v)) throw ParseError(number, "missing amplitude");
    std::string rest;
    if (is >> rest) throw ParseError(number, "trailing text '" + rest + "'");
    try {
      out[Excitation::from_lists(holes, particles)] += v;
    } catch (const ValidationError& e) {
      throw ParseError(number, e.what());
    }
  }
  return out;
}

void write_amplitudes_file(const std::filesystem::path& path, const Amplitudes& amplitudes) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  write_amplitudes(out, amplitudes);
}

}  // namespace mpcc
