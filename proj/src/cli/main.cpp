#include "mpcc/cli.hpp"

#include "mpcc/errors.hpp"

#include <CLI11.hpp>

#include <ostream>

namespace mpcc::cli {

namespace {

struct Flags {
  std::string config;
  std::string fcidump;
  std::string model;
  int sites = 0;
  double t = 0.0;
  double u = 0.0;
  bool ring = false;
  std::string active;
  int states = 0;
  std::string weights;
  double overlap_tol = 0.0;
  std::string trotter_n;
  std::string out;
  std::uint32_t seed = 0;
  std::string symmetry;
  bool newton = false;
  std::string newton_ranks;
  int max_iterations = 0;
  double tolerance = 0.0;
  int max_sweeps = 0;
};

struct Options {
  CLI::Option* config;
  CLI::Option* fcidump;
  CLI::Option* model;
  CLI::Option* sites;
  CLI::Option* t;
  CLI::Option* u;
  CLI::Option* ring;
  CLI::Option* active;
  CLI::Option* states;
  CLI::Option* weights;
  CLI::Option* overlap_tol;
  CLI::Option* trotter_n;
  CLI::Option* out;
  CLI::Option* seed;
  CLI::Option* symmetry;
  CLI::Option* newton;
  CLI::Option* newton_ranks;
  CLI::Option* max_iterations;
  CLI::Option* tolerance;
  CLI::Option* max_sweeps;
};

Options add_flags(CLI::App& app, Flags& f) {
  Options o{};
  o.config = app.add_option("--config", f.config, "structured-text run configuration");
  o.fcidump = app.add_option("--fcidump", f.fcidump, "FCIDUMP integral file");
  o.model = app.add_option("--model", f.model, "lattice model (hubbard)");
  o.sites = app.add_option("--sites", f.sites, "number of lattice sites");
  o.t = app.add_option("--t", f.t, "hopping");
  o.u = app.add_option("--u", f.u, "on-site repulsion");
  o.ring = app.add_flag("--ring", f.ring, "periodic boundary");
  o.active = app.add_option("--active", f.active, "active spin-orbitals, e.g. \"0,1,4,5\"");
  o.states = app.add_option("--states", f.states, "number of target states K");
  o.weights = app.add_option("--weights", f.weights, "weights for the weighted minimization");
  o.overlap_tol = app.add_option("--overlap-tol", f.overlap_tol, "minimum |<Phi|Psi>| of a target state");
  o.trotter_n = app.add_option("--trotter-n", f.trotter_n, "Trotter numbers, e.g. \"1,2,4,8\"");
  o.out = app.add_option("--out", f.out, "output directory");
  o.seed = app.add_option("--seed", f.seed, "random seed");
  o.symmetry = app.add_option("--symmetry", f.symmetry, "none | reflection | spin | reflection+spin | auto");
  o.newton = app.add_flag("--newton", f.newton, "also run the Newton-Raphson solver (ses, multistate)");
  o.newton_ranks = app.add_option("--newton-ranks", f.newton_ranks, "external ranks of the Newton ansatz");
  o.max_iterations = app.add_option("--max-iterations", f.max_iterations, "solver iteration limit");
  o.tolerance = app.add_option("--tolerance", f.tolerance, "solver residual tolerance");
  o.max_sweeps = app.add_option("--max-sweeps", f.max_sweeps, "fixed-point sweep limit");
  return o;
}

RunConfig build_config(const Flags& f, const Options& o) {
  RunConfig cfg = o.config->count() ? load_config_file(f.config) : RunConfig{};
  if (o.fcidump->count() && o.model->count()) throw ValidationError("--fcidump and --model are mutually exclusive");
  if (o.fcidump->count()) {
    cfg.fcidump = f.fcidump;
    cfg.model.reset();
  }
  if (o.model->count()) {
    if (f.model != "hubbard") throw ValidationError("--model must be hubbard, got '" + f.model + "'");
    if (!cfg.model) cfg.model = ModelSpec{};
    cfg.fcidump.reset();
  }
  if (o.sites->count() || o.t->count() || o.u->count() || o.ring->count()) {
    if (!cfg.model) throw ValidationError("--sites, --t, --u and --ring need a model system source");
    if (o.sites->count()) cfg.model->sites = f.sites;
    if (o.t->count()) cfg.model->t = f.t;
    if (o.u->count()) cfg.model->u = f.u;
    if (o.ring->count()) cfg.model->kind = f.ring ? ModelSpec::Kind::HubbardRing : ModelSpec::Kind::HubbardChain;
  }
  if (o.active->count()) cfg.active = parse_int_list(f.active);
  if (o.states->count()) cfg.states = f.states;
  if (o.weights->count()) cfg.weights = parse_double_list(f.weights);
  if (o.overlap_tol->count()) cfg.overlap_tol = f.overlap_tol;
  if (o.trotter_n->count()) cfg.trotter_n = parse_int_list(f.trotter_n);
  if (o.out->count()) cfg.out = f.out;
  if (o.seed->count()) cfg.seed = f.seed;
  if (o.symmetry->count()) cfg.symmetry = f.symmetry;
  if (o.newton->count()) cfg.newton = f.newton;
  if (o.newton_ranks->count()) cfg.newton_ranks = parse_int_list(f.newton_ranks);
  if (o.max_iterations->count()) cfg.solver.max_iterations = f.max_iterations;
  if (o.tolerance->count()) cfg.solver.tolerance = f.tolerance;
  if (o.max_sweeps->count()) cfg.max_sweeps = f.max_sweeps;
  return cfg;
}

}  // namespace

int run_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Coupled-cluster downfolding workbench with an exact-diagonalization oracle", "mpcc"};
  app.require_subcommand(1, 1);
  Flags flags;
  const Options options = add_flags(app, flags);
  for (const char* name : {"fci", "ses", "multistate", "hermitian", "symbreak", "trotter-sweep"})
    app.add_subcommand(name)->fallthrough();
  app.get_subcommand("fci")->description("oracle spectrum, reference overlaps and sector labels");
  app.get_subcommand("ses")->description("single-state effective Hamiltonian");
  app.get_subcommand("multistate")->description("state-universal effective Hamiltonian for K states");
  app.get_subcommand("hermitian")->description("Hermitian downfolding: rank-1, Trotter fixed points, weighted minimum");
  app.get_subcommand("symbreak")->description("symmetry-broken solution for the lowest state outside the reference sector");
  app.get_subcommand("trotter-sweep")->description("Trotter deviation and H^eff error scan over N");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  RunConfig cfg;
  try {
    cfg = build_config(flags, options);
  } catch (const ValidationError& e) {
    err << "mpcc: validation error: " << e.what() << '\n';
    return kExitValidation;
  }

  const RunReport report = run_command(command, cfg);
  try {
    write_report(report, cfg.out);
  } catch (const std::exception& e) {
    err << "mpcc: cannot write the report: " << e.what() << '\n';
    return report.exit_code == kExitOk ? kExitValidation : report.exit_code;
  }
  const auto& status = report.document["status"];
  if (!status["error"].is_null()) {
    err << "mpcc: " << status["error"]["kind"].get<std::string>() << " error: "
        << status["error"]["message"].get<std::string>() << '\n';
  }
  for (const auto& note : status["notes"]) err << "mpcc: " << note.get<std::string>() << '\n';
  out << "mpcc " << command << ": exit " << report.exit_code << ", report in " << (cfg.out / "report.json").string()
      << '\n';
  return report.exit_code;
}

}  // namespace mpcc::cli
