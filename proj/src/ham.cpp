#include "mpcc/ham.hpp"

#include "mpcc/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace mpcc {

IntegralSet IntegralSet::zeros(int n_spatial) {
  if (n_spatial < 1) throw ValidationError("integral set needs at least one orbital");
  IntegralSet ints;
  ints.n_spatial = n_spatial;
  ints.h1 = Operator::Zero(n_spatial, n_spatial);
  const auto n = static_cast<std::size_t>(n_spatial);
  ints.h2.assign(n * n * n * n, 0.0);
  return ints;
}

void IntegralSet::set_eri(int p, int q, int r, int s, double value) {
  const int n = n_spatial;
  auto at = [&](int a, int b, int c, int d) -> double& {
    return h2[static_cast<std::size_t>(((a * n + b) * n + c) * n + d)];
  };
  at(p, q, r, s) = value;
  at(q, p, r, s) = value;
  at(p, q, s, r) = value;
  at(q, p, s, r) = value;
  at(r, s, p, q) = value;
  at(s, r, p, q) = value;
  at(r, s, q, p) = value;
  at(s, r, q, p) = value;
}

void validate_integrals(const IntegralSet& ints, double tol) {
  const int n = ints.n_spatial;
  if (ints.h1.rows() != n || ints.h1.cols() != n ||
      ints.h2.size() != static_cast<std::size_t>(n) * n * n * n) {
    throw ValidationError("integral arrays do not match the orbital count");
  }
  if (symmetry_defect(ints.h1) > tol) throw ValidationError("one-electron integrals are not symmetric");
  for (int p = 0; p < n; ++p)
    for (int q = 0; q < n; ++q)
      for (int r = 0; r < n; ++r)
        for (int s = 0; s < n; ++s) {
          const double v = ints.eri(p, q, r, s);
          if (std::abs(v - ints.eri(q, p, r, s)) > tol || std::abs(v - ints.eri(p, q, s, r)) > tol ||
              std::abs(v - ints.eri(r, s, p, q)) > tol) {
            throw ValidationError("two-electron integrals lack 8-fold permutational symmetry");
          }
        }
}

namespace {

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

double parse_number(std::string token, int line) {
  std::replace_if(token.begin(), token.end(), [](char c) { return c == 'D' || c == 'd'; }, 'E');
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    throw ParseError(line, "non-numeric value '" + token + "'");
  }
  if (used != token.size()) throw ParseError(line, "non-numeric value '" + token + "'");
  return v;
}

int parse_int(const std::string& token, int line) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(token, &used);
  } catch (const std::exception&) {
    throw ParseError(line, "expected an integer, got '" + token + "'");
  }
  if (used != token.size()) throw ParseError(line, "expected an integer, got '" + token + "'");
  return v;
}

struct Header {
  int norb = -1;
  int nelec = 0;
  int ms2 = 0;
  std::vector<int> orbsym;
};

Header parse_header(const std::string& text, int line) {
  std::string flat = text;
  std::replace(flat.begin(), flat.end(), ',', ' ');
  std::istringstream is(flat);
  Header h;
  std::string key;
  std::string tok;
  auto assign = [&](const std::string& k, const std::string& v) {
    if (v.empty()) return;
    if (k == "NORB") {
      h.norb = parse_int(v, line);
    } else if (k == "NELEC") {
      h.nelec = parse_int(v, line);
    } else if (k == "MS2") {
      h.ms2 = parse_int(v, line);
    } else if (k == "ORBSYM") {
      h.orbsym.push_back(parse_int(v, line));
    }
    // ISYM, UHF, IUHF and friends carry nothing this reader needs.
  };
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos) {
      key = upper(tok.substr(0, eq));
      assign(key, tok.substr(eq + 1));
    } else if (!key.empty()) {
      assign(key, tok);
    } else {
      throw ParseError(line, "unexpected header token '" + tok + "'");
    }
  }
  if (h.norb < 1) throw ParseError(line, "header lacks a positive NORB");
  return h;
}

}  // namespace

IntegralSet parse_fcidump(std::istream& in) {
  std::string line;
  int line_no = 0;
  std::string header;
  bool started = false;
  bool closed = false;
  while (!closed && std::getline(in, line)) {
    ++line_no;
    std::string u = upper(line);
    if (!started) {
      const auto at = u.find("&FCI");
      if (at == std::string::npos) {
        if (u.find_first_not_of(" \t\r") == std::string::npos) continue;
        throw ParseError(line_no, "missing &FCI namelist header");
      }
      started = true;
      u = u.substr(at + 4);
    }
    for (const char* end : {"&END", "/"}) {
      const auto e = u.find(end);
      if (e != std::string::npos) {
        u = u.substr(0, e);
        closed = true;
        break;
      }
    }
    header += u + " ";
  }
  if (!started) throw ParseError(line_no, "empty input");
  if (!closed) throw ParseError(line_no, "unterminated namelist header");
  const Header h = parse_header(header, line_no);

  IntegralSet ints = IntegralSet::zeros(h.norb);
  ints.n_electrons = h.nelec;
  ints.ms2 = h.ms2;
  ints.orbital_symmetry = h.orbsym;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream is(line);
    std::vector<std::string> tok;
    for (std::string t; is >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    if (tok.size() != 5) throw ParseError(line_no, "expected 'value i j k l'");
    const double v = parse_number(tok[0], line_no);
    int idx[4];
    for (int k = 0; k < 4; ++k) {
      idx[k] = parse_int(tok[static_cast<std::size_t>(k) + 1], line_no);
      if (idx[k] < 0 || idx[k] > h.norb) throw ParseError(line_no, "orbital index out of range");
    }
    const auto [i, j, k, l] = idx;
    if (i && j && k && l) {
      ints.set_eri(i - 1, j - 1, k - 1, l - 1, v);
    } else if (i && j && !k && !l) {
      ints.h1(i - 1, j - 1) = v;
      ints.h1(j - 1, i - 1) = v;
    } else if (!i && !j && !k && !l) {
      ints.e_core = v;
    } else if (i && !j && !k && !l) {
      // orbital energy record; not part of the Hamiltonian
    } else {
      throw ParseError(line_no, "unsupported index pattern");
    }
  }
  return ints;
}

IntegralSet parse_fcidump_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open FCIDUMP file '" + path.string() + "'");
  return parse_fcidump(in);
}

void write_fcidump(std::ostream& out, const IntegralSet& ints, double drop_below) {
  const int n = ints.n_spatial;
  out << "&FCI NORB=" << n << ",NELEC=" << ints.n_electrons << ",MS2=" << ints.ms2 << ",\n";
  out << "  ORBSYM=";
  for (int p = 0; p < n; ++p) {
    const auto sym = p < static_cast<int>(ints.orbital_symmetry.size())
                         ? ints.orbital_symmetry[static_cast<std::size_t>(p)]
                         : 1;
    out << sym << ",";
  }
  out << "\n  ISYM=1,\n&END\n";
  out << std::setprecision(17);
  auto emit = [&](double v, int i, int j, int k, int l) {
    if (v != 0.0 && std::abs(v) >= drop_below) {
      out << v << " " << i << " " << j << " " << k << " " << l << "\n";
    }
  };
  for (int p = 0; p < n; ++p)
    for (int q = 0; q <= p; ++q)
      for (int r = 0; r < n; ++r)
        for (int s = 0; s <= r; ++s) {
          if (p * (p + 1) / 2 + q < r * (r + 1) / 2 + s) continue;
          emit(ints.eri(p, q, r, s), p + 1, q + 1, r + 1, s + 1);
        }
  for (int p = 0; p < n; ++p)
    for (int q = 0; q <= p; ++q) emit(ints.h1(p, q), p + 1, q + 1, 0, 0);
  out << ints.e_core << " 0 0 0 0\n";
}

void validate(const ModelSpec& spec) {
  if (spec.sites < 2) throw ValidationError("a lattice model needs at least 2 sites");
  if (spec.kind == ModelSpec::Kind::HubbardRing && spec.sites < 3) {
    throw ValidationError("a ring needs at least 3 sites");
  }
  if (!std::isfinite(spec.t) || !std::isfinite(spec.u)) {
    throw ValidationError("model parameters must be finite");
  }
}

IntegralSet build_model(const ModelSpec& spec) {
  validate(spec);
  const int n = spec.sites;
  IntegralSet ints = IntegralSet::zeros(n);
  for (int i = 0; i + 1 < n; ++i) {
    ints.h1(i, i + 1) = -spec.t;
    ints.h1(i + 1, i) = -spec.t;
  }
  if (spec.kind == ModelSpec::Kind::HubbardRing) {
    ints.h1(0, n - 1) = -spec.t;
    ints.h1(n - 1, 0) = -spec.t;
  }
  for (int i = 0; i < n; ++i) ints.set_eri(i, i, i, i, spec.u);
  ints.n_electrons = n;
  return ints;
}

IntegralSet rotate_orbitals(const IntegralSet& ints, const Operator& c) {
  const int n = ints.n_spatial;
  if (c.rows() != n || c.cols() != n) throw ValidationError("rotation has the wrong shape");
  IntegralSet out = ints;
  out.h1 = c.transpose() * ints.h1 * c;
  // Four quarter transformations, one index at a time.
  const auto nn = static_cast<std::size_t>(n);
  std::vector<double> a = ints.h2;
  std::vector<double> b(a.size(), 0.0);
  auto idx = [nn](std::size_t p, std::size_t q, std::size_t r, std::size_t s) {
    return ((p * nn + q) * nn + r) * nn + s;
  };
  for (int slot = 0; slot < 4; ++slot) {
    std::fill(b.begin(), b.end(), 0.0);
    for (std::size_t p = 0; p < nn; ++p)
      for (std::size_t q = 0; q < nn; ++q)
        for (std::size_t r = 0; r < nn; ++r)
          for (std::size_t s = 0; s < nn; ++s) {
            std::size_t pos[4] = {p, q, r, s};
            const std::size_t old = pos[slot];
            double acc = 0.0;
            for (std::size_t m = 0; m < nn; ++m) {
              pos[slot] = m;
              acc += c(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(old)) *
                     a[idx(pos[0], pos[1], pos[2], pos[3])];
            }
            b[idx(p, q, r, s)] = acc;
          }
    std::swap(a, b);
  }
  out.h2 = std::move(a);
  return out;
}

OrbitalBasis one_body_eigenbasis(const IntegralSet& ints) {
  Eigen::SelfAdjointEigenSolver<Operator> es(ints.h1);
  if (es.info() != Eigen::Success) throw InvariantError("one-body diagonalization failed");
  Operator c = es.eigenvectors();
  for (Eigen::Index k = 0; k < c.cols(); ++k) {
    Eigen::Index at = 0;
    c.col(k).cwiseAbs().maxCoeff(&at);
    if (c(at, k) < 0) c.col(k) *= -1.0;
  }
  return {rotate_orbitals(ints, c), c, es.eigenvalues()};
}

SignedPermutation reflection_in_orbitals(const ModelSpec& spec, const Operator& c) {
  validate(spec);
  const int n = spec.sites;
  if (c.rows() != n || c.cols() != n) throw ValidationError("orbital coefficients have the wrong shape");
  Operator r = Operator::Zero(n, n);
  for (int j = 0; j < n; ++j) r(j, n - 1 - j) = 1.0;
  const Operator rr = c.transpose() * r * c;
  std::vector<int> image(static_cast<std::size_t>(n));
  std::vector<int> phase(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    Eigen::Index at = 0;
    const double big = rr.col(k).cwiseAbs().maxCoeff(&at);
    if (std::abs(big - 1.0) > 1e-8 || rr.col(k).squaredNorm() - big * big > 1e-12) {
      throw ValidationError("reflection is not a signed permutation of these orbitals");
    }
    image[static_cast<std::size_t>(k)] = static_cast<int>(at);
    phase[static_cast<std::size_t>(k)] = rr(at, k) > 0 ? 1 : -1;
  }
  return SignedPermutation::from_spatial(image, phase);
}

namespace {

/// <pq|rs> over spin-orbitals (physicists' order).
struct SpinIntegrals {
  const IntegralSet& ints;
  double one(int p, int q) const {
    return ((p ^ q) & 1) ? 0.0 : ints.h1(p >> 1, q >> 1);
  }
  double coulomb(int p, int q, int r, int s) const {
    if (((p ^ r) & 1) || ((q ^ s) & 1)) return 0.0;
    return ints.eri(p >> 1, r >> 1, q >> 1, s >> 1);
  }
  double anti(int p, int q, int r, int s) const { return coulomb(p, q, r, s) - coulomb(p, q, s, r); }
};

}  // namespace

Operator assemble_hamiltonian(const IntegralSet& ints, const DeterminantBasis& basis) {
  if (basis.n_spinorbitals() != 2 * ints.n_spatial) {
    throw ValidationError("basis has " + std::to_string(basis.n_spinorbitals()) +
                          " spin-orbitals but the integrals describe " +
                          std::to_string(2 * ints.n_spatial));
  }
  const SpinIntegrals g{ints};
  const int n = basis.n_spinorbitals();
  const Occupation all = (Occupation{1} << n) - 1;
  const Eigen::Index dim = basis.size();
  Operator h = Operator::Zero(dim, dim);

  for (Eigen::Index col = 0; col < dim; ++col) {
    const Occupation d = basis[col].bits();
    const auto occ = mask_orbitals(d);
    const auto vir = mask_orbitals(all & ~d);

    double diag = ints.e_core;
    for (int i : occ) {
      diag += g.one(i, i);
      for (int j : occ) diag += 0.5 * g.anti(i, j, i, j);
    }
    h(col, col) = diag;

    for (int i : occ) {
      for (int a : vir) {
        const auto x = apply_excitation(d, Excitation{Occupation{1} << i, Occupation{1} << a});
        const auto row = basis.find(x->bits);
        if (!row) continue;
        double v = g.one(a, i);
        for (int j : occ) v += g.anti(a, j, i, j);
        h(*row, col) += x->sign * v;
      }
    }

    for (std::size_t ii = 0; ii < occ.size(); ++ii) {
      for (std::size_t jj = ii + 1; jj < occ.size(); ++jj) {
        const int i = occ[ii];
        const int j = occ[jj];
        for (std::size_t aa = 0; aa < vir.size(); ++aa) {
          for (std::size_t bb = aa + 1; bb < vir.size(); ++bb) {
            const int a = vir[aa];
            const int b = vir[bb];
            const Occupation target =
                (d & ~(Occupation{1} << i) & ~(Occupation{1} << j)) | (Occupation{1} << a) | (Occupation{1} << b);
            const auto row = basis.find(target);
            if (!row) continue;
            // sign of a+_a a+_b a_j a_i |d>
            Occupation w = d;
            int sign = ordering_phase(w, i);
            w &= ~(Occupation{1} << i);
            sign *= ordering_phase(w, j);
            w &= ~(Occupation{1} << j);
            sign *= ordering_phase(w, b);
            w |= Occupation{1} << b;
            sign *= ordering_phase(w, a);
            h(*row, col) += sign * g.anti(a, b, i, j);
          }
        }
      }
    }
  }
  return h;
}

}  // namespace mpcc
