#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fixtures.hpp"

#include "mpcc/cli.hpp"
#include "mpcc/errors.hpp"

#include <fstream>
#include <random>
#include <sstream>

using namespace mpcc;
using namespace mpcc::cli;
using nlohmann::json;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("mpcc_cli_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "mpcc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config_text(in);
}

RunConfig dimer_config(double u = 4.0) {
  RunConfig cfg;
  cfg.model = ModelSpec{ModelSpec::Kind::HubbardChain, 2, 1.0, u};
  return cfg;
}

}  // namespace

TEST_CASE("config text parsing") {
  const json doc = parse(R"(
# experiment record
[system]
model = "hubbard"   # inline comment
sites = 4
u = 4.0
ring = false

[run]
active = [2, 3, 4, 5]
weights = [0.5, 0.5]
overlap_tol = 1e-6
out = "dir # not a comment"
)");
  CHECK(doc["system"]["sites"] == 4);
  CHECK(doc["system"]["u"].get<double>() == 4.0);
  CHECK(doc["system"]["ring"] == false);
  CHECK(doc["run"]["active"] == json({2, 3, 4, 5}));
  CHECK(doc["run"]["overlap_tol"].get<double>() == 1e-6);
  CHECK(doc["run"]["out"] == "dir # not a comment");
  CHECK(parse("[a.b]\nx = -3\n")["a"]["b"]["x"] == -3);

  auto line_of = [](const std::string& text) {
    try {
      parse(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("[run]\nstates = \n") == 2);
  CHECK(line_of("[run]\nstates = 1\nstates = 2\n") == 3);
  CHECK(line_of("x = \"open\n") == 1);
  CHECK(line_of("[run\n") == 1);
  CHECK(line_of("[run]\nactive = [1, [2]]\n") == 2);
  CHECK(line_of("[run]\nseed = 12abc\n") == 2);
  CHECK(line_of("just words\n") == 1);
}

TEST_CASE("apply_config and validation") {
  RunConfig cfg;
  apply_config(cfg, parse("[system]\nfcidump = \"h2.fcidump\"\n[run]\nstates = 2\ntrotter_n = \"1,2\"\n"), "/data");
  REQUIRE(cfg.fcidump);
  CHECK(*cfg.fcidump == std::filesystem::path("/data/h2.fcidump"));
  CHECK(cfg.states == 2);
  CHECK(cfg.trotter_n == std::vector<int>{1, 2});
  CHECK_NOTHROW(cfg.validate());

  // a model in a later document replaces the file source
  apply_config(cfg, parse("[system]\nmodel = \"hubbard\"\nsites = 4\n"), "/data");
  CHECK_FALSE(cfg.fcidump);
  REQUIRE(cfg.model);
  CHECK(cfg.model->sites == 4);

  RunConfig bad;
  CHECK_THROWS_AS(apply_config(bad, parse("[system]\nsites = 4\n"), "."), ValidationError);
  CHECK_THROWS_AS(apply_config(bad, parse("[run]\nstatez = 4\n"), "."), ValidationError);
  CHECK_THROWS_AS(apply_config(bad, parse("[extra]\nx = 1\n"), "."), ValidationError);
  CHECK_THROWS_AS(apply_config(bad, parse("[run]\nstates = 1.5\n"), "."), ValidationError);
  CHECK_THROWS_AS(apply_config(bad, parse("[system]\nmodel = \"heisenberg\"\n"), "."), ValidationError);
  CHECK_THROWS_AS(apply_config(bad, parse("[system]\nmodel = \"hubbard\"\nfcidump = \"x\"\n"), "."), ValidationError);

  CHECK_THROWS_AS(RunConfig{}.validate(), ValidationError);
  RunConfig both = dimer_config();
  both.fcidump = "x";
  CHECK_THROWS_AS(both.validate(), ValidationError);
  RunConfig w = dimer_config();
  w.states = 2;
  w.weights = {1.0};
  CHECK_THROWS_AS(w.validate(), ValidationError);
  w.weights = {1.0, 1.0};
  CHECK_NOTHROW(w.validate());
  RunConfig a = dimer_config();
  a.active = {0, 0};
  CHECK_THROWS_AS(a.validate(), ValidationError);
  RunConfig s = dimer_config();
  s.symmetry = "rotation";
  CHECK_THROWS_AS(s.validate(), ValidationError);

  CHECK(parse_int_list(" 0, 1,4 ,5") == std::vector<int>{0, 1, 4, 5});
  CHECK(parse_int_list("").empty());
  CHECK(parse_double_list("0.25,0.75") == std::vector<double>{0.25, 0.75});
  CHECK_THROWS_AS(parse_int_list("1,,2"), ValidationError);
  CHECK_THROWS_AS(parse_int_list("1,x"), ValidationError);
}

TEST_CASE("fci on the dimer") {
  const auto rep = cmd_fci(dimer_config());
  CHECK(rep.exit_code == kExitOk);
  const auto& doc = rep.document;
  CHECK(doc["schema"] == kReportSchema);
  CHECK(doc["results"]["ground_energy"].get<double>() == doctest::Approx(2.0 - 2.0 * std::sqrt(2.0)).epsilon(1e-13));
  CHECK(doc["system"]["dimension"] == 4);
  for (const auto& s : doc["oracle"]["states"]) {
    CHECK(s["residual"].get<double>() < 1e-12);
    CHECK(s["sector"] != "mixed");
  }
  CHECK(rep.tables.count("spectrum.csv"));

  RunConfig many = dimer_config();
  many.states = 3;
  const auto short_rep = cmd_fci(many);
  CHECK(short_rep.exit_code == kExitValidation);
  CHECK(short_rep.document["results"]["selection"]["available"] == 2);
  CHECK(short_rep.document["results"]["selection"]["shortfall"] == 1);
  CHECK(short_rep.document["status"]["error"]["kind"] == "validation");
}

TEST_CASE("command line: files, overrides and exit codes") {
  TempDir tmp;
  const auto cfg_path = tmp.path / "run.toml";
  {
    std::ofstream f(cfg_path);
    f << "[system]\nmodel = \"hubbard\"\nsites = 2\nu = 8.0\n[run]\nout = \"" << (tmp.path / "a").generic_string()
      << "\"\n";
  }
  auto r = run({"fci", "--config", cfg_path.string(), "--u", "4"});
  CHECK(r.code == 0);
  auto doc = read_json(tmp.path / "a" / "report.json");
  CHECK(doc["config"]["system"]["u"].get<double>() == 4.0);
  CHECK(doc["results"]["ground_energy"].get<double>() == doctest::Approx(fixture::dimer_ground(1.0, 4.0)).epsilon(1e-13));
  CHECK(std::filesystem::exists(tmp.path / "a" / "timing.json"));
  CHECK(std::filesystem::exists(tmp.path / "a" / "spectrum.csv"));

  // flags before or after the subcommand
  r = run({"--model", "hubbard", "--sites", "2", "fci", "--out", (tmp.path / "b").string()});
  CHECK(r.code == 0);

  r = run({"fci", "--fcidump", (tmp.path / "missing.fcidump").string(), "--out", (tmp.path / "c").string()});
  CHECK(r.code == kExitValidation);
  CHECK(r.err.find("missing.fcidump") != std::string::npos);

  r = run({"fci", "--model", "hubbard", "--fcidump", "x", "--out", (tmp.path / "d").string()});
  CHECK(r.code == kExitValidation);
  r = run({"fci", "--sites", "2"});
  CHECK(r.code == kExitValidation);
  r = run({"fci", "--model", "hubbard", "--states", "two"});
  CHECK(r.code == kExitValidation);
  r = run({"bogus"});
  CHECK(r.code == kExitValidation);
  r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("trotter-sweep") != std::string::npos);

  r = run({"symbreak", "--model", "hubbard", "--sites", "2", "--symmetry", "none", "--out", (tmp.path / "e").string()});
  CHECK(r.code == kExitValidation);
  CHECK(read_json(tmp.path / "e" / "report.json")["status"]["exit_code"] == 1);
}

TEST_CASE("fcidump source") {
  TempDir tmp;
  const auto sys = fixture::hubbard(2, 1.0, 4.0);
  auto ints = sys.orbitals.integrals;
  ints.n_electrons = 2;
  ints.ms2 = 0;
  {
    std::ofstream f(tmp.path / "dimer.fcidump");
    write_fcidump(f, ints);
  }
  RunConfig cfg;
  cfg.fcidump = tmp.path / "dimer.fcidump";
  const auto rep = cmd_fci(cfg);
  CHECK(rep.exit_code == kExitOk);
  CHECK(rep.document["results"]["ground_energy"].get<double>() == doctest::Approx(fixture::dimer_ground(1.0, 4.0)).epsilon(1e-12));
  // no lattice, so only the spin flip is available
  CHECK(rep.document["system"]["symmetry"]["generators"] == json({"spin"}));
  cfg.symmetry = "reflection";
  CHECK(cmd_fci(cfg).exit_code == kExitValidation);
}

TEST_CASE("determinism: identical config gives identical reports") {
  TempDir tmp;
  const std::vector<std::string> common{"--model", "hubbard", "--sites", "4", "--u", "4", "--active", "2,3,4,5",
                                        "--states", "2", "--trotter-n", "1,2", "--max-sweeps", "2", "--seed", "11"};
  for (const char* dir : {"x", "y"}) {
    auto args = common;
    args.insert(args.begin(), "trotter-sweep");
    args.push_back("--out");
    args.push_back((tmp.path / dir).string());
    run(args);
  }
  const std::string a = read_text(tmp.path / "x" / "report.json");
  std::string b = read_text(tmp.path / "y" / "report.json");
  // the output directory is echoed in the config
  const std::string from = (tmp.path / "y").generic_string();
  const std::string to = (tmp.path / "x").generic_string();
  for (auto p = b.find(from); p != std::string::npos; p = b.find(from, p + to.size())) b.replace(p, from.size(), to);
  CHECK(!a.empty());
  CHECK(a == b);
  CHECK(read_text(tmp.path / "x" / "trotter_sweep.csv") == read_text(tmp.path / "y" / "trotter_sweep.csv"));
}

TEST_CASE("ses and multistate tables") {
  RunConfig cfg;
  cfg.model = ModelSpec{ModelSpec::Kind::HubbardChain, 4, 1.0, 4.0};
  cfg.active = {2, 3, 4, 5};
  const auto ses = cmd_ses(cfg);
  CHECK(ses.exit_code == kExitOk);
  const auto& row = ses.document["results"]["table"][0];
  CHECK(row["delta"].get<double>() < 1e-9);
  CHECK(row["verification_residual"].get<double>() < 1e-9);
  CHECK(ses.files.count("t_ext.amp"));
  const auto& heff = ses.document["results"]["heff"];
  CHECK(heff["labels"].size() == 4);
  CHECK(heff["matrix"].size() == 4);

  const auto one = cmd_multistate(cfg);
  CHECK(one.exit_code == kExitOk);
  CHECK(one.document["results"]["ses_max_difference"].get<double>() < 1e-12);

  cfg.states = 2;
  const auto two = cmd_multistate(cfg);
  CHECK(two.exit_code == kExitOk);
  const auto& rows = two.document["results"]["table"];
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.contains("e_oracle"));
    CHECK(r.contains("e_heff"));
    CHECK(r.contains("delta"));
    CHECK(r.contains("verification_residual"));
  }
  CHECK(two.tables.at("multistate.csv").find("state,e_oracle,e_heff,delta") == 0);

  cfg.states = 5;
  CHECK(cmd_multistate(cfg).exit_code == kExitValidation);
}

TEST_CASE("newton option") {
  RunConfig cfg = dimer_config();
  cfg.active = {0, 1};
  cfg.newton = true;
  cfg.newton_ranks = {2};
  const auto rep = cmd_ses(cfg);
  CHECK(rep.exit_code == kExitOk);
  const auto& nr = rep.document["results"]["newton"];
  CHECK(nr["converged"] == true);
  CHECK(nr["support_size"] == 1);
  CHECK(rep.tables.count("newton_log.csv"));

  cfg.solver.max_iterations = 1;
  cfg.model->u = 8.0;
  const auto stalled = cmd_ses(cfg);
  CHECK(stalled.exit_code == kExitConvergence);
  CHECK(stalled.document["results"]["newton"]["converged"] == false);
  CHECK_FALSE(stalled.document["status"]["notes"].empty());
}

TEST_CASE("hermitian and trotter-sweep for a single state") {
  RunConfig cfg;
  cfg.model = ModelSpec{ModelSpec::Kind::HubbardChain, 4, 1.0, 4.0};
  cfg.active = {2, 3, 4, 5};
  cfg.trotter_n = {1, 2, 4, 8};
  const auto h = cmd_hermitian(cfg);
  CHECK(h.exit_code == kExitOk);
  const auto& res = h.document["results"];
  CHECK(res["extraction"]["directions"] == "symmetry-adapted");
  REQUIRE(res["trotter"].size() == 4);
  for (const auto& row : res["trotter"]) {
    CHECK(row["converged"] == true);
    CHECK(row["max_error"].get<double>() < 1e-9);
    CHECK(row["hermiticity_defect"].get<double>() < 1e-10);
  }
  CHECK(res["monotone_trend"].is_boolean());
  CHECK(res["weighted"]["r"].get<double>() == doctest::Approx(res["weighted"]["target"].get<double>()).epsilon(1e-8));
  CHECK(h.files.count("gamma.amp"));
  CHECK(h.tables.count("weighted_trace.csv"));

  const auto t = cmd_trotter_sweep(cfg);
  CHECK(t.exit_code == kExitOk);
  for (const auto& row : t.document["results"]["sweep"]) CHECK(row["deviation"].get<double>() < 1e-13);
}

TEST_CASE("symbreak reports non-convergence with exit code 2 and no energy") {
  RunConfig cfg = dimer_config();
  cfg.symmetry = "reflection";
  const auto rep = cmd_symbreak(cfg);
  CHECK(rep.exit_code == kExitConvergence);
  const auto& res = rep.document["results"];
  CHECK(res["target"]["sector"] == "reflection-");
  CHECK(res["energy_check"]["energy"].is_null());
  CHECK(res["downfold"]["matched"] == false);
  CHECK(res["residuals"]["projected_converged"] == true);
}
