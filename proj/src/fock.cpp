#include "mpcc/fock.hpp"

#include "mpcc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mpcc {

namespace {

void check_orbital(int p) {
  if (p < 0 || p >= kMaxSpinOrbitals) {
    throw ValidationError("spin-orbital index " + std::to_string(p) + " out of range");
  }
}

bool strictly_ascending(std::span<const int> v) {
  return std::adjacent_find(v.begin(), v.end(), [](int a, int b) { return a >= b; }) == v.end();
}

}  // namespace

Occupation orbital_mask(std::span<const int> orbitals) {
  Occupation m = 0;
  for (int p : orbitals) {
    check_orbital(p);
    m |= Occupation{1} << p;
  }
  return m;
}

Occupation spatial_orbital_mask(std::span<const int> spatial) {
  Occupation m = 0;
  for (int s : spatial) {
    check_orbital(2 * s + 1);
    m |= Occupation{3} << (2 * s);
  }
  return m;
}

std::vector<int> mask_orbitals(Occupation mask) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(std::popcount(mask)));
  for (; mask != 0; mask &= mask - 1) out.push_back(std::countr_zero(mask));
  return out;
}

Determinant::Determinant(Occupation bits, int n_spinorbitals)
    : bits_(bits), n_spinorbitals_(n_spinorbitals) {
  if (n_spinorbitals < 0 || n_spinorbitals > kMaxSpinOrbitals) {
    throw ValidationError("spin-orbital count must lie in [0, 64]");
  }
  if (n_spinorbitals < kMaxSpinOrbitals && (bits >> n_spinorbitals) != 0) {
    throw ValidationError("occupation uses orbitals beyond the spin-orbital count");
  }
}

Determinant Determinant::from_orbitals(std::span<const int> occupied, int n_spinorbitals) {
  const Occupation m = orbital_mask(occupied);
  if (std::popcount(m) != static_cast<int>(occupied.size())) {
    throw ValidationError("repeated orbital in occupation list");
  }
  return {m, n_spinorbitals};
}

double Determinant::sz() const noexcept {
  constexpr Occupation kAlpha = 0x5555555555555555ULL;
  return 0.5 * (std::popcount(bits_ & kAlpha) - std::popcount(bits_ & ~kAlpha));
}

std::string Determinant::to_string() const {
  std::string s = "0b";
  for (int p = n_spinorbitals_ - 1; p >= 0; --p) s.push_back(occupied(p) ? '1' : '0');
  return s;
}

Excitation Excitation::from_lists(std::span<const int> holes, std::span<const int> particles) {
  if (holes.size() != particles.size()) {
    throw ValidationError("excitation needs equally many holes and particles");
  }
  if (!strictly_ascending(holes) || !strictly_ascending(particles)) {
    throw ValidationError("excitation index lists must be sorted and distinct");
  }
  Excitation x{orbital_mask(holes), orbital_mask(particles)};
  if ((x.holes & x.particles) != 0) throw ValidationError("orbital is both hole and particle");
  return x;
}

std::string Excitation::to_string() const {
  std::ostringstream os;
  os << "(";
  const auto h = hole_list();
  const auto p = particle_list();
  for (std::size_t i = 0; i < h.size(); ++i) os << (i ? " " : "") << h[i];
  os << " -> ";
  for (std::size_t i = 0; i < p.size(); ++i) os << (i ? " " : "") << p[i];
  os << ")";
  return os.str();
}

bool is_well_formed(const Excitation& x, const Determinant& reference) noexcept {
  const Occupation ref = reference.bits();
  return x.rank() >= 1 && std::popcount(x.particles) == x.rank() && (x.holes & ~ref) == 0 &&
         (x.particles & ref) == 0 && (x.holes & x.particles) == 0 &&
         (reference.n_spinorbitals() == kMaxSpinOrbitals ||
          (x.particles >> reference.n_spinorbitals()) == 0);
}

std::optional<SignedDeterminant> apply_excitation(const Determinant& d, const Excitation& x) {
  const auto r = apply_excitation(d.bits(), x);
  if (!r) return std::nullopt;
  return SignedDeterminant{Determinant(r->bits, d.n_spinorbitals()), r->sign};
}

Excitation excitation_between(const Determinant& ref, const Determinant& d) {
  if (ref.n_electrons() != d.n_electrons()) {
    throw ValidationError("determinants differ in particle number");
  }
  if (ref.bits() == d.bits()) {
    throw ValidationError("identical determinants: the rank-0 component is not an excitation");
  }
  return {ref.bits() & ~d.bits(), d.bits() & ~ref.bits()};
}

DeterminantBasis::DeterminantBasis(std::vector<Determinant> determinants, Determinant reference)
    : determinants_(std::move(determinants)) {
  if (determinants_.empty()) throw ValidationError("empty determinant basis");
  n_spinorbitals_ = determinants_.front().n_spinorbitals();
  n_electrons_ = determinants_.front().n_electrons();
  index_.reserve(determinants_.size());
  for (std::size_t i = 0; i < determinants_.size(); ++i) {
    const auto& d = determinants_[i];
    if (d.n_spinorbitals() != n_spinorbitals_ || d.n_electrons() != n_electrons_) {
      throw ValidationError("basis determinants must share spin-orbital and electron counts");
    }
    if (!index_.emplace(d.bits(), static_cast<Eigen::Index>(i)).second) {
      throw ValidationError("duplicate determinant " + d.to_string());
    }
  }
  const auto it = index_.find(reference.bits());
  if (it == index_.end() || reference.n_spinorbitals() != n_spinorbitals_) {
    throw ValidationError("reference " + reference.to_string() + " is not in the basis");
  }
  reference_index_ = it->second;
  for (const auto& d : determinants_) {
    max_level_ = std::max(max_level_, excitation_level(reference.bits(), d.bits()));
  }
}

std::optional<Eigen::Index> DeterminantBasis::find(Occupation bits) const {
  const auto it = index_.find(bits);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Eigen::Index DeterminantBasis::index_of(const Determinant& d) const {
  const auto i = find(d.bits());
  if (!i) throw ValidationError("determinant " + d.to_string() + " is not in the basis");
  return *i;
}

DeterminantBasis DeterminantBasis::with_reference(const Determinant& reference) const {
  return {determinants_, reference};
}

State DeterminantBasis::reference_vector() const {
  State v = State::Zero(size());
  v(reference_index_) = 1.0;
  return v;
}

DeterminantBasis enumerate_basis(int n_spinorbitals, int n_electrons, std::optional<double> sz) {
  if (n_spinorbitals < 1 || n_spinorbitals > kMaxSpinOrbitals - 1) {
    throw ValidationError("spin-orbital count must lie in [1, 63]");
  }
  if (n_electrons < 0 || n_electrons > n_spinorbitals) {
    throw ValidationError("electron count must lie in [0, n_spinorbitals]");
  }
  std::vector<Determinant> dets;
  const Occupation limit = Occupation{1} << n_spinorbitals;
  auto accept = [&](Occupation bits) {
    Determinant d(bits, n_spinorbitals);
    if (!sz || std::abs(d.sz() - *sz) < 1e-9) dets.push_back(d);
  };
  if (n_electrons == 0) {
    accept(0);
  } else {
    // Gosper's hack walks the combinations in ascending numeric order.
    Occupation v = (Occupation{1} << n_electrons) - 1;
    while (v < limit) {
      accept(v);
      const Occupation t = v | (v - 1);
      v = (t + 1) | (((~t & (t + 1)) - 1) >> (std::countr_zero(v) + 1));
    }
  }
  if (dets.empty()) {
    std::ostringstream os;
    os << "no determinant with " << n_electrons << " electrons in " << n_spinorbitals
       << " spin-orbitals satisfies Sz = " << (sz ? *sz : 0.0);
    throw ValidationError(os.str());
  }
  const Determinant reference = dets.front();
  return {std::move(dets), reference};
}

std::vector<Eigen::Index> cas_indices(const DeterminantBasis& basis, Occupation active) {
  std::vector<Eigen::Index> out;
  const Occupation ref = basis.reference().bits();
  for (Eigen::Index i = 0; i < basis.size(); ++i) {
    const Occupation d = basis[i].bits();
    const Excitation x{ref & ~d, d & ~ref};
    if (x.is_internal(active)) out.push_back(i);
  }
  return out;
}

ReferenceProjectors build_reference_projectors(const DeterminantBasis& basis, Occupation active) {
  const int n = basis.n_spinorbitals();
  if (active == 0) throw ValidationError("active space is empty");
  if (n < kMaxSpinOrbitals && (active >> n) != 0) {
    throw ValidationError("active space names spin-orbitals outside the basis");
  }
  const Eigen::Index dim = basis.size();
  ReferenceProjectors out;
  out.p = {Operator::Zero(dim, dim), "P"};
  out.q = {Operator::Identity(dim, dim), "Q"};
  out.q_int = {Operator::Zero(dim, dim), "Q_int"};
  out.q_ext = {Operator::Zero(dim, dim), "Q_ext"};
  const Eigen::Index r = basis.reference_index();
  out.p.matrix(r, r) = 1.0;
  out.q.matrix(r, r) = 0.0;
  out.cas_indices = cas_indices(basis, active);
  for (Eigen::Index i : out.cas_indices) {
    if (i != r) out.q_int.matrix(i, i) = 1.0;
  }
  out.q_ext.matrix = out.q.matrix - out.q_int.matrix;

  const Occupation ref = basis.reference().bits();
  const Occupation all = n == kMaxSpinOrbitals ? ~Occupation{0} : (Occupation{1} << n) - 1;
  if ((active & all) == all) {
    out.kind = ActiveSpaceKind::Full;
  } else if ((active & ref) == 0 || (active & ~ref) == 0) {
    out.kind = ActiveSpaceKind::NoExcitations;
  }
  return out;
}

SignedPermutation SignedPermutation::identity(int n_spinorbitals) {
  SignedPermutation g;
  g.image.resize(static_cast<std::size_t>(n_spinorbitals));
  for (int p = 0; p < n_spinorbitals; ++p) g.image[static_cast<std::size_t>(p)] = p;
  g.phase.assign(static_cast<std::size_t>(n_spinorbitals), 1);
  return g;
}

SignedPermutation SignedPermutation::from_spatial(std::span<const int> image,
                                                  std::span<const int> phase) {
  if (image.size() != phase.size()) throw ValidationError("image and phase sizes differ");
  SignedPermutation g;
  for (std::size_t s = 0; s < image.size(); ++s) {
    for (int spin = 0; spin < 2; ++spin) {
      g.image.push_back(2 * image[s] + spin);
      g.phase.push_back(phase[s]);
    }
  }
  return g;
}

SignedPermutation SignedPermutation::compose(const SignedPermutation& other) const {
  if (other.size() != size()) throw ValidationError("composing permutations of different size");
  SignedPermutation out;
  out.image.resize(image.size());
  out.phase.resize(image.size());
  for (std::size_t p = 0; p < image.size(); ++p) {
    const auto q = static_cast<std::size_t>(other.image[p]);
    out.image[p] = image[q];
    out.phase[p] = other.phase[p] * phase[q];
  }
  return out;
}

std::optional<SignedOccupation> SignedPermutation::apply(Occupation d) const {
  // a+_{p1} ... a+_{pn}|0> -> prod phase * a+_{g(p1)} ... a+_{g(pn)}|0>, then
  // reorder the creators ascending; the sign is the inversion parity.
  std::vector<int> mapped;
  int sign = 1;
  for (Occupation m = d; m != 0; m &= m - 1) {
    const auto p = static_cast<std::size_t>(std::countr_zero(m));
    if (p >= image.size()) return std::nullopt;
    mapped.push_back(image[p]);
    sign *= phase[p];
  }
  int inversions = 0;
  for (std::size_t i = 0; i < mapped.size(); ++i) {
    for (std::size_t j = i + 1; j < mapped.size(); ++j) {
      if (mapped[i] > mapped[j]) ++inversions;
    }
  }
  if (inversions & 1) sign = -sign;
  Occupation out = 0;
  for (int q : mapped) out |= Occupation{1} << q;
  return SignedOccupation{out, sign};
}

SymmetryGroup::SymmetryGroup(std::vector<SignedPermutation> elements,
                             std::vector<std::vector<double>> characters,
                             std::vector<std::string> labels)
    : elements_(std::move(elements)), characters_(std::move(characters)), labels_(std::move(labels)) {
  const std::size_t order = elements_.size();
  if (order == 0) throw ValidationError("symmetry group has no elements");
  const int n = elements_.front().size();
  for (const auto& g : elements_) {
    if (g.size() != n || static_cast<int>(g.phase.size()) != n) {
      throw ValidationError("group elements act on different orbital counts");
    }
    std::vector<int> sorted = g.image;
    std::sort(sorted.begin(), sorted.end());
    for (int p = 0; p < n; ++p) {
      if (sorted[static_cast<std::size_t>(p)] != p) throw ValidationError("group element is not a permutation");
    }
    for (int s : g.phase) {
      if (s != 1 && s != -1) throw ValidationError("orbital phases must be +1 or -1");
    }
  }
  for (const auto& a : elements_) {
    for (const auto& b : elements_) {
      const auto ab = a.compose(b);
      if (ab != b.compose(a)) throw ValidationError("symmetry group is not abelian");
      if (std::find(elements_.begin(), elements_.end(), ab) == elements_.end()) {
        throw ValidationError("symmetry group is not closed under composition");
      }
    }
  }
  if (characters_.size() != order) {
    throw ValidationError("an abelian group needs one character row per element");
  }
  if (labels_.size() != characters_.size()) throw ValidationError("one label per sector required");
  for (std::size_t a = 0; a < characters_.size(); ++a) {
    if (characters_[a].size() != order) throw ValidationError("character row has wrong length");
    for (std::size_t b = 0; b < characters_.size(); ++b) {
      double dot = 0.0;
      for (std::size_t g = 0; g < order; ++g) dot += characters_[a][g] * characters_[b][g];
      const double expect = a == b ? static_cast<double>(order) : 0.0;
      if (std::abs(dot - expect) > 1e-12) {
        throw ValidationError("character rows are not orthogonal");
      }
    }
  }
}

SymmetryGroup SymmetryGroup::trivial(int n_spinorbitals) {
  return {{SignedPermutation::identity(n_spinorbitals)}, {{1.0}}, {"A"}};
}

SymmetryGroup SymmetryGroup::z2(const SignedPermutation& generator) {
  const auto e = SignedPermutation::identity(generator.size());
  if (generator == e) throw ValidationError("Z2 generator must differ from the identity");
  return {{e, generator}, {{1.0, 1.0}, {1.0, -1.0}}, {"even", "odd"}};
}

SymmetryGroup SymmetryGroup::z2_product(std::span<const SignedPermutation> generators,
                                        std::span<const std::string> names) {
  if (generators.empty()) throw ValidationError("Z2 product needs at least one generator");
  if (names.size() != generators.size()) throw ValidationError("one name per generator expected");
  if (generators.size() > 12) throw ValidationError("too many Z2 generators");
  const int n = generators.front().size();
  const auto e = SignedPermutation::identity(n);
  for (const auto& g : generators) {
    if (g.size() != n) throw ValidationError("generators act on different orbital counts");
    if (g == e || g.compose(g) != e) throw ValidationError("Z2 generators must be involutions other than the identity");
  }
  const std::size_t m = generators.size();
  const std::size_t order = std::size_t{1} << m;
  std::vector<SignedPermutation> elements;
  for (std::size_t a = 0; a < order; ++a) {
    SignedPermutation g = e;
    for (std::size_t j = 0; j < m; ++j)
      if ((a >> j) & 1U) g = generators[j].compose(g);
    if (std::find(elements.begin(), elements.end(), g) != elements.end()) {
      throw ValidationError("Z2 generators are not independent");
    }
    elements.push_back(std::move(g));
  }
  std::vector<std::vector<double>> characters(order, std::vector<double>(order));
  std::vector<std::string> labels;
  for (std::size_t s = 0; s < order; ++s) {
    for (std::size_t a = 0; a < order; ++a) characters[s][a] = (std::popcount(s & a) & 1U) ? -1.0 : 1.0;
    std::string label;
    for (std::size_t j = 0; j < m; ++j) {
      if (j > 0) label += ',';
      label += names[j] + (((s >> j) & 1U) ? '-' : '+');
    }
    labels.push_back(std::move(label));
  }
  return {std::move(elements), std::move(characters), std::move(labels)};
}

SignedPermutation spin_flip(int n_spinorbitals) {
  if (n_spinorbitals % 2 != 0) throw ValidationError("spin flip needs an even spin-orbital count");
  auto g = SignedPermutation::identity(n_spinorbitals);
  for (int p = 0; p < n_spinorbitals; ++p) g.image[static_cast<std::size_t>(p)] = p ^ 1;
  return g;
}

std::vector<SignedPermutation> group_closure(std::span<const SignedPermutation> generators) {
  if (generators.empty()) throw ValidationError("group closure needs at least one generator");
  std::vector<SignedPermutation> out{SignedPermutation::identity(generators.front().size())};
  for (std::size_t k = 0; k < out.size(); ++k) {
    for (const auto& g : generators) {
      auto next = g.compose(out[k]);
      if (std::find(out.begin(), out.end(), next) == out.end()) out.push_back(std::move(next));
    }
    if (out.size() > 4096) throw ValidationError("generated group is too large");
  }
  return out;
}

Operator group_action(const SignedPermutation& g, const DeterminantBasis& basis) {
  const Eigen::Index dim = basis.size();
  Operator d = Operator::Zero(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    const auto img = g.apply(basis[j].bits());
    const auto i = img ? basis.find(img->bits) : std::nullopt;
    if (!i) {
      throw ValidationError("group action maps " + basis[j].to_string() + " outside the basis");
    }
    d(*i, j) = img->sign;
  }
  return d;
}

std::vector<Projector> build_sector_projectors(const SymmetryGroup& group,
                                               const DeterminantBasis& basis) {
  const auto elements = group.elements();
  if (elements.front().size() != basis.n_spinorbitals()) {
    throw ValidationError("symmetry group and basis disagree on the spin-orbital count");
  }
  std::vector<Operator> actions;
  actions.reserve(elements.size());
  for (const auto& g : elements) actions.push_back(group_action(g, basis));

  std::vector<Projector> out;
  const double inv_order = 1.0 / static_cast<double>(group.order());
  for (int k = 0; k < group.n_sectors(); ++k) {
    Operator p = Operator::Zero(basis.size(), basis.size());
    for (std::size_t e = 0; e < actions.size(); ++e) {
      p += group.characters()[static_cast<std::size_t>(k)][e] * actions[e];
    }
    out.push_back({inv_order * p, group.labels()[static_cast<std::size_t>(k)]});
  }
  return out;
}

}  // namespace mpcc
