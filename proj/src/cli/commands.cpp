#include "mpcc/cli.hpp"

#include "mpcc/errors.hpp"
#include "mpcc/symbreak.hpp"
#include "mpcc/unitary.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>

namespace mpcc::cli {

using nlohmann::json;

namespace {

constexpr double kMatchTolerance = 1e-9;
constexpr double kBoundSlack = 1e-9;
constexpr Eigen::Index kMaxDimension = 4000;
constexpr Eigen::Index kListedStates = 64;

class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) {
    os_ << std::setprecision(17) << std::boolalpha;
    for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
    os_ << '\n';
  }

  template <typename... Cells>
  void row(const Cells&... cells) {
    std::size_t i = 0;
    ((os_ << (i++ ? "," : "") << cells), ...);
    os_ << '\n';
  }

  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
};

struct Workspace {
  std::string source;
  IntegralSet integrals;
  DeterminantBasis basis;
  Operator h;
  EigenSet eig;
  Eigen::VectorXd residuals;
  Occupation active;
  SymmetryGroup group;
  std::vector<std::string> generators;
  std::vector<Projector> projectors;
  std::vector<int> sector_of;
  int ms2 = 0;
};

Occupation default_active(const DeterminantBasis& basis) {
  const Occupation ref = basis.reference().bits();
  const int n = basis.n_spinorbitals();
  std::vector<int> spatial;
  if (ref != 0) spatial.push_back((63 - std::countl_zero(ref)) / 2);
  for (int p = 0; p < n; ++p) {
    if (!((ref >> p) & 1U)) {
      if (spatial.empty() || spatial.front() != p / 2) spatial.push_back(p / 2);
      break;
    }
  }
  return spatial_orbital_mask(spatial);
}

struct GroupChoice {
  SymmetryGroup group;
  std::vector<std::string> generators;
};

GroupChoice choose_group(const RunConfig& cfg, const Operator& coefficients, int n_spinorbitals, int ms2) {
  const std::string& sym = cfg.symmetry;
  const bool automatic = sym == "auto";
  std::vector<SignedPermutation> gens;
  std::vector<std::string> names;
  if (automatic || sym == "reflection" || sym == "reflection+spin") {
    if (!cfg.model) {
      if (!automatic) throw ValidationError("reflection symmetry needs a lattice model");
    } else {
      try {
        auto g = reflection_in_orbitals(*cfg.model, coefficients);
        if (g != SignedPermutation::identity(n_spinorbitals)) {
          gens.push_back(std::move(g));
          names.push_back("reflection");
        } else if (!automatic) {
          throw ValidationError("the reflection acts trivially on this model");
        }
      } catch (const ValidationError&) {
        if (!automatic) throw;
      }
    }
  }
  if (automatic || sym == "spin" || sym == "reflection+spin") {
    if (ms2 != 0) {
      if (!automatic) throw ValidationError("spin-flip symmetry needs MS2 = 0");
    } else {
      gens.push_back(spin_flip(n_spinorbitals));
      names.push_back("spin");
    }
  }
  if (gens.empty()) return {SymmetryGroup::trivial(n_spinorbitals), {}};
  return {SymmetryGroup::z2_product(gens, names), names};
}

Workspace make_workspace(const RunConfig& cfg) {
  IntegralSet ints;
  Operator coefficients;
  std::string source;
  int electrons = 0;
  int ms2 = 0;
  if (cfg.model) {
    auto orb = one_body_eigenbasis(build_model(*cfg.model));
    ints = std::move(orb.integrals);
    coefficients = std::move(orb.coefficients);
    source = std::string("hubbard ") + (cfg.model->kind == ModelSpec::Kind::HubbardRing ? "ring" : "chain");
    electrons = cfg.electrons.value_or(cfg.model->sites);
    ms2 = cfg.ms2.value_or(electrons % 2);
  } else {
    ints = parse_fcidump_file(*cfg.fcidump);
    coefficients = Operator::Identity(ints.n_spatial, ints.n_spatial);
    source = "fcidump " + cfg.fcidump->generic_string();
    electrons = cfg.electrons.value_or(ints.n_electrons);
    ms2 = cfg.ms2.value_or(ints.ms2);
  }
  const int nso = 2 * ints.n_spatial;
  if (nso > kMaxSpinOrbitals) throw ValidationError("too many orbitals for 64-bit determinants");
  if (electrons <= 0 || electrons > nso) throw ValidationError("electron count " + std::to_string(electrons) + " does not fit the orbitals");
  if ((electrons + ms2) % 2 != 0 || std::abs(ms2) > electrons) {
    throw ValidationError("MS2 = " + std::to_string(ms2) + " is incompatible with " + std::to_string(electrons) + " electrons");
  }
  auto basis = enumerate_basis(nso, electrons, ms2 / 2.0);
  if (basis.size() > kMaxDimension) {
    throw ValidationError("determinant space of dimension " + std::to_string(basis.size()) + " exceeds the dense limit");
  }
  Occupation active = 0;
  if (cfg.active.empty()) {
    active = default_active(basis);
  } else {
    for (int p : cfg.active) {
      if (p >= nso) throw ValidationError("active orbital " + std::to_string(p) + " exceeds the spin-orbital count");
    }
    active = orbital_mask(cfg.active);
  }
  Operator h = assemble_hamiltonian(ints, basis);
  DiagonalizeOptions dopt;
  dopt.lowest = std::max<Eigen::Index>(8, cfg.states + 4);
  EigenSet eig = diagonalize(h, dopt);
  Eigen::VectorXd residuals(eig.size());
  for (Eigen::Index k = 0; k < eig.size(); ++k)
    residuals(k) = (h * eig.vectors.col(k) - eig.energies(k) * eig.vectors.col(k)).norm();
  auto choice = choose_group(cfg, coefficients, nso, ms2);
  auto projectors = build_sector_projectors(choice.group, basis);
  auto sector_of = label_sectors(eig, projectors, h);
  return {std::move(source), std::move(ints), std::move(basis), std::move(h), std::move(eig), std::move(residuals),
          active, std::move(choice.group), std::move(choice.generators), std::move(projectors), std::move(sector_of),
          ms2};
}

std::string sector_name(const Workspace& ws, int sector) {
  return sector == kMixedSector ? "mixed" : ws.projectors[static_cast<std::size_t>(sector)].label;
}

json system_json(const Workspace& ws) {
  return {{"source", ws.source},
          {"n_spatial", ws.integrals.n_spatial},
          {"n_spinorbitals", ws.basis.n_spinorbitals()},
          {"n_electrons", ws.basis.n_electrons()},
          {"ms2", ws.ms2},
          {"dimension", ws.basis.size()},
          {"reference", ws.basis.reference().to_string()},
          {"active", mask_orbitals(ws.active)},
          {"cas_dimension", cas_indices(ws.basis, ws.active).size()},
          {"symmetry", {{"generators", ws.generators}, {"order", ws.group.order()},
                        {"sectors", std::vector<std::string>(ws.group.labels().begin(), ws.group.labels().end())}}}};
}

json oracle_json(const Workspace& ws) {
  json rows = json::array();
  const auto ref = ws.basis.reference_index();
  for (Eigen::Index k = 0; k < std::min(ws.eig.size(), kListedStates); ++k) {
    rows.push_back({{"index", k},
                    {"energy", ws.eig.energies(k)},
                    {"residual", ws.residuals(k)},
                    {"reference_overlap", ws.eig.vectors(ref, k)},
                    {"sector", sector_name(ws, ws.sector_of[static_cast<std::size_t>(k)])}});
  }
  return {{"solver", ws.basis.size() <= DiagonalizeOptions{}.dense_limit ? "dense" : "davidson"},
          {"computed", ws.eig.size()},
          {"states", rows}};
}

json heff_json(const EffectiveHamiltonian& heff) {
  json labels = json::array();
  for (const auto& d : heff.cas_basis) labels.push_back(d.to_string());
  json rows = json::array();
  for (Eigen::Index i = 0; i < heff.matrix.rows(); ++i) {
    std::vector<double> r;
    for (Eigen::Index j = 0; j < heff.matrix.cols(); ++j) r.push_back(heff.matrix(i, j));
    rows.push_back(r);
  }
  json spectrum = json::array();
  const Eigen::VectorXcd ev = heff_eigenvalues(heff);
  std::vector<std::complex<double>> sorted(ev.data(), ev.data() + ev.size());
  std::sort(sorted.begin(), sorted.end(), [](auto a, auto b) {
    return a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag());
  });
  for (const auto& z : sorted) spectrum.push_back({{"re", z.real()}, {"im", z.imag()}});
  return {{"method", heff.provenance.method},
          {"hermitian", heff.hermitian},
          {"symmetry_defect", symmetry_defect(heff.matrix)},
          {"labels", labels},
          {"matrix", rows},
          {"spectrum", spectrum}};
}

std::string amplitudes_text(const Amplitudes& a) {
  std::ostringstream os;
  write_amplitudes(os, a);
  return os.str();
}

void note_nonconvergence(RunReport& rep, const std::string& what) {
  if (rep.exit_code == kExitOk) rep.exit_code = kExitConvergence;
  rep.document["status"]["notes"].push_back(what);
}

StateSet selected(const Workspace& ws, const RunConfig& cfg) {
  return select_states(ws.eig, ws.basis, cfg.states, cfg.overlap_tol);
}

json selection_json(const StateSet& st) {
  json out = json::array();
  for (std::size_t i = 0; i < st.size(); ++i) {
    out.push_back({{"state", i},
                   {"eigen_index", st[i].eigen_index},
                   {"energy", st[i].energy},
                   {"reference_overlap", st[i].overlap},
                   {"degenerate", st[i].degenerate}});
  }
  return out;
}

/// Closest eigenvalue of heff to e.
std::complex<double> closest(const EffectiveHamiltonian& heff, double e) {
  const Eigen::VectorXcd ev = heff_eigenvalues(heff);
  Eigen::Index at = 0;
  (ev.array() - e).abs().minCoeff(&at);
  return ev(at);
}

// ---------------------------------------------------------------------------

void run_fci(const RunConfig& cfg, const Workspace& ws, RunReport& rep) {
  json& res = rep.document["results"];
  Csv csv({"index", "energy", "residual", "reference_overlap", "sector"});
  const auto ref = ws.basis.reference_index();
  for (Eigen::Index k = 0; k < ws.eig.size(); ++k) {
    csv.row(k, ws.eig.energies(k), ws.residuals(k), ws.eig.vectors(ref, k),
            sector_name(ws, ws.sector_of[static_cast<std::size_t>(k)]));
  }
  rep.tables["spectrum.csv"] = csv.str();
  res["ground_energy"] = ws.eig.energies(0);
  res["ground_residual"] = ws.residuals(0);
  try {
    res["selection"] = {{"requested", cfg.states}, {"states", selection_json(selected(ws, cfg))}};
  } catch (const ValidationError& e) {
    int available = cfg.states - 1;
    while (available > 0) {
      try {
        select_states(ws.eig, ws.basis, available, cfg.overlap_tol);
        break;
      } catch (const ValidationError&) {
        --available;
      }
    }
    res["selection"] = {{"requested", cfg.states},
                        {"available", available},
                        {"shortfall", cfg.states - available},
                        {"message", e.what()}};
    throw;
  }
}

json newton_json(const RunConfig& cfg, const Workspace& ws, const StateSet& st, RunReport& rep) {
  const auto cas = cas_indices(ws.basis, ws.active);
  std::vector<std::vector<Excitation>> support;
  std::vector<StateGuess> guesses;
  for (std::size_t i = 0; i < st.size(); ++i) {
    support.push_back(external_excitations(ws.basis, ws.active, cfg.newton_ranks));
    State v = State::Zero(ws.basis.size());
    for (auto k : cas) v(k) = st[i].vector(k);
    guesses.push_back({ClusterOperator{}, intermediate_normalize(v, ws.basis)});
  }
  SolverConfig sc = cfg.solver;
  const auto r = newton_raphson_solve(ws.h, ws.basis, ws.active, support, guesses, sc);
  Csv log({"iteration", "state", "residual_norm", "energy"});
  for (const auto& rec : r.log) log.row(rec.iteration, rec.state, rec.residual_norm, rec.energy);
  rep.tables["newton_log.csv"] = log.str();
  json rows = json::array();
  for (std::size_t i = 0; i < st.size(); ++i) {
    const double e = i < r.energies.size() ? r.energies[i] : std::nan("");
    const double heff_err = r.heff.dimension() > 0 ? std::abs(closest(r.heff, st[i].energy) - st[i].energy) : std::nan("");
    rows.push_back({{"state", i},
                    {"e_oracle", st[i].energy},
                    {"e_newton", e},
                    {"delta", std::abs(e - st[i].energy)},
                    {"heff_eigenvalue_error", heff_err},
                    {"final_residual", r.log.empty() ? 0.0 : r.log.back().residual_norm}});
  }
  if (!r.converged) note_nonconvergence(rep, "newton: " + r.message);
  return {{"converged", r.converged},
          {"iterations", r.iterations},
          {"ranks", cfg.newton_ranks},
          {"support_size", support.empty() ? 0 : support.front().size()},
          {"message", r.message},
          {"table", rows}};
}

void run_ses(const RunConfig& cfg, const Workspace& ws, RunReport& rep) {
  json& res = rep.document["results"];
  RunConfig one = cfg;
  one.states = 1;
  const StateSet st = selected(ws, one);
  res["selection"] = selection_json(st);
  const auto& s = st[0];
  const auto d = casscc_decompose(s.vector, ws.basis, ws.active);
  const auto heff = build_heff(ws.h, d.t_ext, ws.basis, ws.active);
  const auto m = match_eigenpair(heff, s.energy, s.vector);
  const double residual = verify_ses(heff, d.t_int, ws.basis, s.energy);
  res["table"] = json::array({{{"state", 0},
                               {"e_oracle", s.energy},
                               {"e_heff", m.eigenvalue.real()},
                               {"e_heff_imag", m.eigenvalue.imag()},
                               {"delta", m.energy_error},
                               {"vector_error", m.vector_error},
                               {"verification_residual", residual},
                               {"matched", m.energy_error < kMatchTolerance}}});
  res["match_tolerance"] = kMatchTolerance;
  res["amplitudes"] = {{"t_ext", d.t_ext.size()}, {"t_int", d.t_int.size()}};
  res["heff"] = heff_json(heff);
  Csv csv({"state", "e_oracle", "e_heff", "delta", "vector_error", "verification_residual"});
  csv.row(0, s.energy, m.eigenvalue.real(), m.energy_error, m.vector_error, residual);
  rep.tables["ses.csv"] = csv.str();
  rep.files["t_ext.amp"] = amplitudes_text(d.t_ext.amplitudes);
  rep.files["t_int.amp"] = amplitudes_text(d.t_int.amplitudes);
  if (cfg.newton) res["newton"] = newton_json(one, ws, st, rep);
}

void run_multistate(const RunConfig& cfg, const Workspace& ws, RunReport& rep) {
  json& res = rep.document["results"];
  const StateSet st = selected(ws, cfg);
  res["selection"] = selection_json(st);
  const auto ms = build_multistate_heff(ws.h, st, ws.basis, ws.active);
  json rows = json::array();
  Csv csv({"state", "e_oracle", "e_heff", "delta", "vector_error", "verification_residual"});
  bool all = true;
  for (std::size_t i = 0; i < st.size(); ++i) {
    const auto m = match_eigenpair(ms.heff, st[i].energy, st[i].vector);
    const Eigen::VectorXd c = ms.heff.restrict(ci_vector(ws.basis, ms.states[i].c_int));
    const double residual = (ms.heff.matrix * c - st[i].energy * c).norm();
    const bool matched = m.energy_error < kMatchTolerance;
    all = all && matched;
    rows.push_back({{"state", i},
                    {"e_oracle", st[i].energy},
                    {"e_heff", m.eigenvalue.real()},
                    {"e_heff_imag", m.eigenvalue.imag()},
                    {"delta", m.energy_error},
                    {"vector_error", m.vector_error},
                    {"verification_residual", residual},
                    {"matched", matched}});
    csv.row(i, st[i].energy, m.eigenvalue.real(), m.energy_error, m.vector_error, residual);
  }
  res["table"] = rows;
  res["all_matched"] = all;
  res["match_tolerance"] = kMatchTolerance;
  res["heff"] = heff_json(ms.heff);
  if (st.size() == 1) {
    const auto ses = build_heff(ws.h, ms.states[0].t_ext, ws.basis, ws.active);
    res["ses_max_difference"] = max_abs(ses.matrix - ms.heff.matrix);
  }
  rep.tables["multistate.csv"] = csv.str();
  rep.files["sigma.amp"] = amplitudes_text(ms.sigma.amplitudes);
  if (cfg.newton) res["newton"] = newton_json(cfg, ws, st, rep);
}

// Hermitian pipelines ---------------------------------------------------------

struct Generators {
  std::vector<Amplitudes> directions;
  std::string kind;
  std::vector<SigmaExtraction> extractions;
  std::vector<AntiHermitianCluster> sigmas;
  ExtractionOptions options;
};

Generators extract_generators(const RunConfig& cfg, const Workspace& ws, const StateSet& st, RunReport& rep) {
  Generators g;
  if (ws.group.order() > 1) {
    try {
      g.directions = symmetry_adapted_directions(ws.basis, ws.active, ws.group.elements());
      g.kind = "symmetry-adapted";
    } catch (const ValidationError& e) {
      if (cfg.symmetry != "auto") throw;
      rep.document["status"]["notes"].push_back(std::string("singleton directions: ") + e.what());
    }
  }
  if (g.kind.empty()) {
    g.directions = singleton_directions(external_excitations(ws.basis, ws.active));
    g.kind = "singleton";
  }
  g.options.directions = g.directions;
  g.options.seed = cfg.seed;
  json rows = json::array();
  for (std::size_t i = 0; i < st.size(); ++i) {
    g.extractions.push_back(extract_sigma(st[i].vector, ws.basis, ws.active, g.options));
    const auto& x = g.extractions.back();
    g.sigmas.push_back(x.sigma);
    rows.push_back({{"state", i}, {"converged", x.converged}, {"residual", x.residual},
                    {"iterations", x.iterations}, {"start", x.start}, {"parameters", x.sigma.size()}});
  }
  rep.document["results"]["extraction"] = {{"directions", g.kind}, {"count", g.directions.size()}, {"states", rows}};
  for (std::size_t i = 0; i < st.size(); ++i) {
    if (!g.extractions[i].converged) {
      std::ostringstream os;
      os << "sigma extraction failed for state " << i << " (residual " << g.extractions[i].residual << ")";
      throw ConvergenceError(os.str());
    }
  }
  return g;
}

AntiHermitianCluster sum_of(std::span<const AntiHermitianCluster> sigmas) {
  AntiHermitianCluster g;
  for (const auto& s : sigmas) g += s;
  return g;
}

struct ScanRow {
  int n = 0;
  FixedPointResult fixed_point;
  std::vector<double> errors;
  std::vector<double> heff_energies;
  double hermiticity = 0.0;
};

std::vector<ScanRow> fixed_point_scan(const RunConfig& cfg, const Workspace& ws, const StateSet& st,
                                      const Generators& g, RunReport& rep) {
  std::vector<ScanRow> rows;
  FixedPointOptions fo;
  fo.tolerance = cfg.solver.tolerance;
  fo.max_sweeps = cfg.max_sweeps;
  fo.extraction = g.options;
  for (int n : cfg.trotter_n) {
    fo.trotter_rank = n;
    ScanRow row;
    row.n = n;
    row.fixed_point = fixed_point_iterate(ws.h, st, ws.basis, ws.active, fo, g.sigmas);
    const auto heff = hermitian_heff(sum_of(row.fixed_point.sigmas), ws.h, ws.basis, ws.active);
    row.hermiticity = symmetry_defect(heff.matrix);
    for (std::size_t i = 0; i < st.size(); ++i) {
      const auto z = closest(heff, st[i].energy);
      row.heff_energies.push_back(z.real());
      row.errors.push_back(std::abs(z - st[i].energy));
    }
    if (!row.fixed_point.converged) {
      note_nonconvergence(rep, "fixed point N=" + std::to_string(n) + ": " + row.fixed_point.message);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

json scan_json(const std::vector<ScanRow>& rows, const StateSet& st) {
  json out = json::array();
  for (const auto& r : rows) {
    json states = json::array();
    for (std::size_t i = 0; i < st.size(); ++i) {
      states.push_back({{"state", i},
                        {"e_oracle", st[i].energy},
                        {"e_heff", r.heff_energies[i]},
                        {"delta", r.errors[i]},
                        {"eigen_residual", i < r.fixed_point.eigen_residuals.size() ? r.fixed_point.eigen_residuals[i]
                                                                                  : std::nan("")}});
    }
    out.push_back({{"n", r.n},
                   {"converged", r.fixed_point.converged},
                   {"sweeps", r.fixed_point.sweeps},
                   {"final_step", r.fixed_point.step_history.empty() ? 0.0 : r.fixed_point.step_history.back()},
                   {"hermiticity_defect", r.hermiticity},
                   {"max_error", *std::max_element(r.errors.begin(), r.errors.end())},
                   {"states", states},
                   {"message", r.fixed_point.message}});
  }
  return out;
}

json rank1_json(const Workspace& ws, const StateSet& st, const Generators& g, std::vector<double>* errors) {
  const auto heff = rank1_heff(g.sigmas, ws.h, ws.basis, ws.active);
  json rows = json::array();
  for (std::size_t i = 0; i < st.size(); ++i) {
    const auto z = closest(heff, st[i].energy);
    errors->push_back(std::abs(z - st[i].energy));
    rows.push_back({{"state", i}, {"e_oracle", st[i].energy}, {"e_heff", z.real()}, {"delta", errors->back()}});
  }
  return {{"table", rows}, {"heff", heff_json(heff)}};
}

void run_hermitian(const RunConfig& cfg, const Workspace& ws, RunReport& rep) {
  json& res = rep.document["results"];
  const StateSet st = selected(ws, cfg);
  res["selection"] = selection_json(st);
  const Generators g = extract_generators(cfg, ws, st, rep);
  std::vector<double> rank1_errors;
  res["rank1"] = rank1_json(ws, st, g, &rank1_errors);

  const auto scan = fixed_point_scan(cfg, ws, st, g, rep);
  res["trotter"] = scan_json(scan, st);
  bool monotone = true;
  for (std::size_t k = 1; k < scan.size(); ++k) {
    const double prev = *std::max_element(scan[k - 1].errors.begin(), scan[k - 1].errors.end());
    const double now = *std::max_element(scan[k].errors.begin(), scan[k].errors.end());
    monotone = monotone && now <= prev + 1e-12;
  }
  res["monotone_trend"] = monotone;
  Csv csv({"n", "state", "e_oracle", "e_heff", "delta", "converged", "sweeps"});
  for (const auto& r : scan)
    for (std::size_t i = 0; i < st.size(); ++i)
      csv.row(r.n, i, st[i].energy, r.heff_energies[i], r.errors[i], r.fixed_point.converged, r.fixed_point.sweeps);
  rep.tables["hermitian.csv"] = csv.str();

  std::vector<double> weights = cfg.weights;
  if (weights.empty()) weights.assign(st.size(), 1.0);
  std::vector<State> c_init;
  for (const auto& x : g.extractions) c_init.push_back(ci_vector(ws.basis, x.c_int));
  const auto w = weighted_minimize(ws.h, ws.basis, ws.active, weights, sum_of(g.sigmas), c_init, g.directions);
  double target = 0.0;
  for (std::size_t i = 0; i < st.size(); ++i) target += weights[i] * st[i].energy;
  res["weighted"] = {{"weights", weights},
                     {"r", w.r},
                     {"target", target},
                     {"gap", w.r - target},
                     {"bound_satisfied", w.r >= target - kBoundSlack},
                     {"energies", w.energies},
                     {"iterations", w.trace.empty() ? 0 : w.trace.back().iteration},
                     {"converged", w.converged},
                     {"tracking_ambiguous", w.tracking_ambiguous},
                     {"message", w.message}};
  Csv trace([&] {
    std::vector<std::string> h{"iteration", "r", "theta_norm"};
    for (std::size_t i = 0; i < st.size(); ++i) h.push_back("e" + std::to_string(i));
    return h;
  }());
  for (const auto& t : w.trace) {
    std::ostringstream line;
    line << std::setprecision(17) << t.iteration << ',' << t.r << ',' << t.theta_norm;
    for (double e : t.energies) line << ',' << e;
    trace.row(line.str());
  }
  rep.tables["weighted_trace.csv"] = trace.str();
  rep.files["gamma.amp"] = amplitudes_text(w.gamma.thetas);
  if (!w.converged) note_nonconvergence(rep, "weighted minimization: " + w.message);
}

void run_trotter_sweep(const RunConfig& cfg, const Workspace& ws, RunReport& rep) {
  json& res = rep.document["results"];
  const StateSet st = selected(ws, cfg);
  res["selection"] = selection_json(st);
  const Generators g = extract_generators(cfg, ws, st, rep);
  std::vector<double> rank1_errors;
  res["rank1"] = rank1_json(ws, st, g, &rank1_errors);
  const auto scan = fixed_point_scan(cfg, ws, st, g, rep);

  Csv csv({"n", "state", "deviation", "ratio", "heff_error", "fixed_point_converged"});
  json rows = json::array();
  std::vector<double> previous(st.size(), std::nan(""));
  for (const auto& r : scan) {
    for (std::size_t i = 0; i < st.size(); ++i) {
      const double dev = trotter_deviation(r.n, i, g.sigmas, ws.basis);
      const double ratio = dev > 0.0 ? previous[i] / dev : std::nan("");
      previous[i] = dev;
      rows.push_back({{"n", r.n},
                      {"state", i},
                      {"deviation", dev},
                      {"ratio", std::isfinite(ratio) ? json(ratio) : json(nullptr)},
                      {"heff_error", r.errors[i]},
                      {"fixed_point_converged", r.fixed_point.converged}});
      csv.row(r.n, i, dev, std::isfinite(ratio) ? ratio : 0.0, r.errors[i], r.fixed_point.converged);
    }
  }
  res["sweep"] = rows;
  res["trotter"] = scan_json(scan, st);
  rep.tables["trotter_sweep.csv"] = csv.str();
}

// Symmetry breaking ------------------------------------------------------------

void run_symbreak(const RunConfig& cfg, const Workspace& ws, RunReport& rep) {
  json& res = rep.document["results"];
  const auto sectors = build_symmetry_sectors(ws.group, ws.basis);
  if (sectors.size() < 2) {
    throw ValidationError("symbreak needs a symmetry group with at least two sectors (symmetry = " + cfg.symmetry + ")");
  }
  // lowest state of every non-reference sector, diagonalized inside the sector
  double e_s2 = 0.0;
  State target;
  int target_sector = -1;
  for (int k = 0; k < sectors.size(); ++k) {
    if (k == sectors.reference_sector) continue;
    const Operator& p = sectors.projectors[static_cast<std::size_t>(k)].matrix;
    Eigen::SelfAdjointEigenSolver<Operator> pe(p);
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < pe.eigenvalues().size(); ++j)
      if (pe.eigenvalues()(j) > 0.5) cols.push_back(j);
    if (cols.empty()) continue;
    Operator b(p.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) b.col(static_cast<Eigen::Index>(c)) = pe.eigenvectors().col(cols[c]);
    Eigen::SelfAdjointEigenSolver<Operator> he(b.transpose() * ws.h * b);
    if (target_sector < 0 || he.eigenvalues()(0) < e_s2) {
      e_s2 = he.eigenvalues()(0);
      target = b * he.eigenvectors().col(0);
      target_sector = k;
    }
  }
  if (target_sector < 0) throw ValidationError("no state outside the reference sector");
  const Eigen::Index big = [&] {
    Eigen::Index at = 0;
    target.cwiseAbs().maxCoeff(&at);
    return at;
  }();
  if (target(big) < 0.0) target = -target;
  res["target"] = {{"sector", sectors.projectors[static_cast<std::size_t>(target_sector)].label},
                   {"reference_sector", sectors.projectors[static_cast<std::size_t>(sectors.reference_sector)].label},
                   {"e_s2", e_s2},
                   {"residual", (ws.h * target - e_s2 * target).norm()}};

  const auto r = solve_broken_symmetry(ws.h, target, e_s2, sectors, ws.basis, cfg.solver);
  const auto cross = cross_symmetry_downfold(ws.h, r.t_s1 + r.t_s2, ws.active, e_s2, sectors, ws.basis);
  res["converged"] = r.converged;
  res["macro_iterations"] = r.macro_iterations;
  res["residuals"] = {{"q_s1", r.messenger.residual_norm},
                      {"reference_row", r.messenger.reference_residual},
                      {"projected_converged", r.messenger.projected_converged},
                      {"iterations", r.messenger.iterations}};
  // energies derived from an unconverged T are diagnostics, not results
  res["energy_check"] = {{"energy", r.converged ? json(r.energy) : json(nullptr)},
                         {"error", r.converged ? json(std::abs(r.energy - e_s2)) : json(nullptr)},
                         {"unverified_energy", r.energy}};
  res["downfold"] = {{"s1_only", cross.s1_only},
                     {"matched", r.converged && cross.matched},
                     {"error", cross.error},
                     {"heff", heff_json(cross.heff)},
                     {"message", cross.message}};
  res["message"] = r.message;
  Csv csv({"iteration", "residual_norm"});
  for (std::size_t k = 0; k < r.messenger.history.size(); ++k) csv.row(k + 1, r.messenger.history[k]);
  rep.tables["symbreak_history.csv"] = csv.str();
  if (!r.converged) note_nonconvergence(rep, "symbreak: " + r.message);
}

const std::map<std::string, std::function<void(const RunConfig&, const Workspace&, RunReport&)>>& commands() {
  static const std::map<std::string, std::function<void(const RunConfig&, const Workspace&, RunReport&)>> table{
      {"fci", run_fci},           {"ses", run_ses},           {"multistate", run_multistate},
      {"hermitian", run_hermitian}, {"symbreak", run_symbreak}, {"trotter-sweep", run_trotter_sweep}};
  return table;
}

void set_error(RunReport& rep, int code, const std::string& kind, const std::string& message) {
  rep.exit_code = code;
  rep.document["status"]["error"] = {{"kind", kind}, {"message", message}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

RunReport run_command(const std::string& command, const RunConfig& cfg) {
  RunReport rep;
  rep.document = {{"schema", kReportSchema}, {"command", command}, {"config", cfg.to_json()}};
  rep.document["status"] = {{"notes", json::array()}, {"error", nullptr}};
  rep.timing = {{"schema", kTimingSchema}, {"command", command}};
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto it = commands().find(command);
    if (it == commands().end()) throw ValidationError("unknown command '" + command + "'");
    cfg.validate();
    const Workspace ws = make_workspace(cfg);
    rep.timing["setup_seconds"] = seconds_since(t0);
    rep.document["system"] = system_json(ws);
    rep.document["oracle"] = oracle_json(ws);
    rep.document["results"] = json::object();
    it->second(cfg, ws, rep);
  } catch (const ValidationError& e) {
    set_error(rep, kExitValidation, "validation", e.what());
  } catch (const ConvergenceError& e) {
    set_error(rep, kExitConvergence, "convergence", e.what());
  } catch (const InvariantError& e) {
    set_error(rep, kExitInvariant, "invariant", e.what());
  } catch (const std::exception& e) {
    set_error(rep, kExitInvariant, "internal", e.what());
  }
  rep.timing["total_seconds"] = seconds_since(t0);
  rep.document["status"]["exit_code"] = rep.exit_code;
  rep.document["status"]["ok"] = rep.exit_code == kExitOk;
  return rep;
}

void write_report(const RunReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + (dir / name).string());
    out << text;
    if (!out) throw ValidationError("failed writing " + (dir / name).string());
  };
  put("report.json", report.document.dump(2) + "\n");
  put("timing.json", report.timing.dump(2) + "\n");
  for (const auto& [name, text] : report.tables) put(name, text);
  for (const auto& [name, text] : report.files) put(name, text);
}

}  // namespace mpcc::cli
