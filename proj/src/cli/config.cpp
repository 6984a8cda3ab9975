#include "mpcc/cli.hpp"

#include "mpcc/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace mpcc::cli {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool is_key(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-';
  });
}

/// Cuts a '#' comment that is not inside a string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && quoted) {
      ++i;
    } else if (line[i] == '"') {
      quoted = !quoted;
    } else if (line[i] == '#' && !quoted) {
      return line.substr(0, i);
    }
  }
  return line;
}

class ValueParser {
 public:
  ValueParser(const std::string& text, int line) : s_(text), line_(line) {}

  json parse() {
    json v = value(true);
    skip_space();
    if (pos_ != s_.size()) fail("trailing characters after value");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_, what); }

  void skip_space() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  json value(bool allow_array) {
    skip_space();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return string();
    if (c == '[') {
      if (!allow_array) fail("nested arrays are not supported");
      return array();
    }
    return scalar();
  }

  json string() {
    std::string out;
    for (++pos_; pos_ < s_.size(); ++pos_) {
      const char c = s_[pos_];
      if (c == '"') {
        ++pos_;
        return out;
      }
      if (c == '\\') {
        if (++pos_ >= s_.size()) break;
        switch (s_[pos_]) {
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          default: fail(std::string("unknown escape \\") + s_[pos_]);
        }
      } else {
        out += c;
      }
    }
    fail("unterminated string");
  }

  json array() {
    json out = json::array();
    ++pos_;
    skip_space();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return out;
    }
    for (;;) {
      out.push_back(value(false));
      skip_space();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ']') {
        ++pos_;
        return out;
      }
      if (s_[pos_] != ',') fail("expected ',' or ']' in array");
      ++pos_;
    }
  }

  json scalar() {
    const auto end = s_.find_first_of(",] \t", pos_);
    const std::string tok = s_.substr(pos_, end == std::string::npos ? std::string::npos : end - pos_);
    pos_ += tok.size();
    if (tok == "true") return true;
    if (tok == "false") return false;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (!tok.empty() && tok.front() == '+') ++first;
    const bool integral = std::all_of(first, last, [](char c) { return std::isdigit(static_cast<unsigned char>(c)) || c == '-'; });
    if (integral) {
      long long i = 0;
      const auto r = std::from_chars(first, last, i);
      if (r.ec == std::errc() && r.ptr == last) return i;
    }
    double d = 0.0;
    const auto r = std::from_chars(first, last, d);
    if (r.ec != std::errc() || r.ptr != last || tok.empty()) fail("cannot parse value '" + tok + "'");
    return d;
  }

  const std::string& s_;
  int line_;
  std::size_t pos_ = 0;
};

// Typed access to a table entry, naming the key in every error.

std::string where(const std::string& table, const std::string& key) { return "[" + table + "] " + key; }

int as_int(const json& v, const std::string& table, const std::string& key) {
  if (!v.is_number_integer()) throw ValidationError(where(table, key) + " must be an integer");
  const auto i = v.get<long long>();
  if (i < -(1LL << 31) || i >= (1LL << 31)) throw ValidationError(where(table, key) + " is out of range");
  return static_cast<int>(i);
}

double as_double(const json& v, const std::string& table, const std::string& key) {
  if (!v.is_number()) throw ValidationError(where(table, key) + " must be a number");
  return v.get<double>();
}

bool as_bool(const json& v, const std::string& table, const std::string& key) {
  if (!v.is_boolean()) throw ValidationError(where(table, key) + " must be true or false");
  return v.get<bool>();
}

std::string as_string(const json& v, const std::string& table, const std::string& key) {
  if (!v.is_string()) throw ValidationError(where(table, key) + " must be a string");
  return v.get<std::string>();
}

std::vector<int> as_int_list(const json& v, const std::string& table, const std::string& key) {
  if (v.is_string()) return parse_int_list(v.get<std::string>());
  if (!v.is_array()) throw ValidationError(where(table, key) + " must be an array of integers");
  std::vector<int> out;
  for (const auto& x : v) out.push_back(as_int(x, table, key));
  return out;
}

std::vector<double> as_double_list(const json& v, const std::string& table, const std::string& key) {
  if (v.is_string()) return parse_double_list(v.get<std::string>());
  if (!v.is_array()) throw ValidationError(where(table, key) + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(as_double(x, table, key));
  return out;
}

void apply_system(RunConfig& cfg, const json& t, const std::filesystem::path& base_dir) {
  const std::string name = "system";
  if (t.contains("fcidump") && t.contains("model")) {
    throw ValidationError("[system] gives both fcidump and model; exactly one system source is allowed");
  }
  if (t.contains("fcidump")) {
    std::filesystem::path p = as_string(t["fcidump"], name, "fcidump");
    cfg.fcidump = p.is_relative() ? base_dir / p : p;
    cfg.model.reset();
  }
  if (t.contains("model")) {
    const std::string kind = as_string(t["model"], name, "model");
    if (kind != "hubbard") throw ValidationError("[system] model must be \"hubbard\", got \"" + kind + "\"");
    cfg.model = ModelSpec{};
    cfg.fcidump.reset();
  }
  for (const auto& [key, v] : t.items()) {
    if (key == "fcidump" || key == "model") continue;
    if (key == "electrons") {
      cfg.electrons = as_int(v, name, key);
    } else if (key == "ms2") {
      cfg.ms2 = as_int(v, name, key);
    } else if (key == "sites" || key == "t" || key == "u" || key == "ring") {
      if (!cfg.model) throw ValidationError(where(name, key) + " needs a model system source");
      if (key == "sites") cfg.model->sites = as_int(v, name, key);
      if (key == "t") cfg.model->t = as_double(v, name, key);
      if (key == "u") cfg.model->u = as_double(v, name, key);
      if (key == "ring") {
        cfg.model->kind = as_bool(v, name, key) ? ModelSpec::Kind::HubbardRing : ModelSpec::Kind::HubbardChain;
      }
    } else {
      throw ValidationError("unknown key " + where(name, key));
    }
  }
}

void apply_run(RunConfig& cfg, const json& t) {
  const std::string name = "run";
  for (const auto& [key, v] : t.items()) {
    if (key == "active") {
      cfg.active = as_int_list(v, name, key);
    } else if (key == "states") {
      cfg.states = as_int(v, name, key);
    } else if (key == "weights") {
      cfg.weights = as_double_list(v, name, key);
    } else if (key == "overlap_tol") {
      cfg.overlap_tol = as_double(v, name, key);
    } else if (key == "trotter_n") {
      cfg.trotter_n = as_int_list(v, name, key);
    } else if (key == "out") {
      cfg.out = as_string(v, name, key);
    } else if (key == "seed") {
      const int s = as_int(v, name, key);
      if (s < 0) throw ValidationError("[run] seed must be non-negative");
      cfg.seed = static_cast<std::uint32_t>(s);
    } else if (key == "symmetry") {
      cfg.symmetry = as_string(v, name, key);
    } else if (key == "newton") {
      cfg.newton = as_bool(v, name, key);
    } else if (key == "newton_ranks") {
      cfg.newton_ranks = as_int_list(v, name, key);
    } else {
      throw ValidationError("unknown key " + where(name, key));
    }
  }
}

void apply_solver(RunConfig& cfg, const json& t) {
  const std::string name = "solver";
  for (const auto& [key, v] : t.items()) {
    if (key == "max_iterations") {
      cfg.solver.max_iterations = as_int(v, name, key);
    } else if (key == "tolerance") {
      cfg.solver.tolerance = as_double(v, name, key);
    } else if (key == "damping") {
      cfg.solver.damping = as_double(v, name, key);
    } else if (key == "preconditioner") {
      const std::string p = as_string(v, name, key);
      if (p == "diagonal") {
        cfg.solver.preconditioner = Preconditioner::Diagonal;
      } else if (p == "identity") {
        cfg.solver.preconditioner = Preconditioner::Identity;
      } else {
        throw ValidationError("[solver] preconditioner must be \"diagonal\" or \"identity\"");
      }
    } else if (key == "max_sweeps") {
      cfg.max_sweeps = as_int(v, name, key);
    } else {
      throw ValidationError("unknown key " + where(name, key));
    }
  }
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& text, Parse parse) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string tok = trim(item);
    T v{};
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (!tok.empty() && tok.front() == '+') ++first;
    const auto r = parse(first, last, v);
    if (tok.empty() || r.ec != std::errc() || r.ptr != last) {
      throw ValidationError("cannot parse list item '" + tok + "' in \"" + text + "\"");
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace

std::vector<int> parse_int_list(const std::string& text) {
  if (trim(text).empty()) return {};
  return parse_list<int>(text, [](const char* f, const char* l, int& v) { return std::from_chars(f, l, v); });
}

std::vector<double> parse_double_list(const std::string& text) {
  if (trim(text).empty()) return {};
  return parse_list<double>(text, [](const char* f, const char* l, double& v) { return std::from_chars(f, l, v); });
}

json parse_config_text(std::istream& in) {
  json doc = json::object();
  json* table = &doc;
  std::set<std::string> seen_tables;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ParseError(line, "unterminated table header");
      const std::string name = trim(s.substr(1, s.size() - 2));
      if (!seen_tables.insert(name).second) throw ParseError(line, "table [" + name + "] defined twice");
      table = &doc;
      std::stringstream parts(name);
      std::string part;
      while (std::getline(parts, part, '.')) {
        part = trim(part);
        if (!is_key(part)) throw ParseError(line, "bad table name '" + name + "'");
        json& next = (*table)[part];
        if (next.is_null()) next = json::object();
        if (!next.is_object()) throw ParseError(line, "'" + part + "' is already a value");
        table = &next;
      }
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError(line, "expected 'key = value'");
    const std::string key = trim(s.substr(0, eq));
    if (!is_key(key)) throw ParseError(line, "bad key '" + key + "'");
    if (table->contains(key)) throw ParseError(line, "key '" + key + "' defined twice");
    (*table)[key] = ValueParser(trim(s.substr(eq + 1)), line).parse();
  }
  return doc;
}

void apply_config(RunConfig& cfg, const json& doc, const std::filesystem::path& base_dir) {
  for (const auto& [name, t] : doc.items()) {
    if (!t.is_object()) throw ValidationError("top-level key '" + name + "' must sit inside a table");
    if (name == "system") {
      apply_system(cfg, t, base_dir);
    } else if (name == "run") {
      apply_run(cfg, t);
    } else if (name == "solver") {
      apply_solver(cfg, t);
    } else {
      throw ValidationError("unknown table [" + name + "]");
    }
  }
}

RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  RunConfig cfg;
  apply_config(cfg, parse_config_text(in), path.parent_path());
  return cfg;
}

void RunConfig::validate() const {
  if (fcidump.has_value() == model.has_value()) {
    throw ValidationError("exactly one system source (fcidump or model) is required");
  }
  if (model) mpcc::validate(*model);
  if (electrons && *electrons < 0) throw ValidationError("electron count must be non-negative");
  if (states < 1) throw ValidationError("states must be at least 1");
  if (!weights.empty()) {
    if (static_cast<int>(weights.size()) != states) {
      throw ValidationError("weights has " + std::to_string(weights.size()) + " entries for " +
                            std::to_string(states) + " states");
    }
    for (double w : weights)
      if (!(w > 0.0)) throw ValidationError("weights must be positive");
  }
  if (!(overlap_tol > 0.0 && overlap_tol < 1.0)) throw ValidationError("overlap_tol must lie in (0, 1)");
  solver.validate();
  if (max_sweeps < 1) throw ValidationError("max_sweeps must be positive");
  if (trotter_n.empty()) throw ValidationError("trotter_n must list at least one N");
  for (int n : trotter_n)
    if (n < 1) throw ValidationError("Trotter numbers must be positive");
  std::set<int> seen;
  for (int p : active) {
    if (p < 0 || p >= kMaxSpinOrbitals) throw ValidationError("active orbital " + std::to_string(p) + " is out of range");
    if (!seen.insert(p).second) throw ValidationError("active orbital " + std::to_string(p) + " listed twice");
  }
  for (int r : newton_ranks)
    if (r < 1) throw ValidationError("newton_ranks entries must be positive");
  static const std::set<std::string> kSymmetries{"none", "reflection", "spin", "reflection+spin", "auto"};
  if (!kSymmetries.count(symmetry)) throw ValidationError("unknown symmetry '" + symmetry + "'");
}

json RunConfig::to_json() const {
  json j;
  if (fcidump) j["system"]["fcidump"] = fcidump->generic_string();
  if (model) {
    j["system"]["model"] = "hubbard";
    j["system"]["sites"] = model->sites;
    j["system"]["t"] = model->t;
    j["system"]["u"] = model->u;
    j["system"]["ring"] = model->kind == ModelSpec::Kind::HubbardRing;
  }
  if (electrons) j["system"]["electrons"] = *electrons;
  if (ms2) j["system"]["ms2"] = *ms2;
  j["run"] = {{"active", active},     {"states", states},         {"weights", weights},
              {"overlap_tol", overlap_tol}, {"trotter_n", trotter_n}, {"out", out.generic_string()},
              {"seed", seed},         {"symmetry", symmetry},     {"newton", newton},
              {"newton_ranks", newton_ranks}};
  j["solver"] = {{"max_iterations", solver.max_iterations},
                 {"tolerance", solver.tolerance},
                 {"damping", solver.damping},
                 {"preconditioner", solver.preconditioner == Preconditioner::Diagonal ? "diagonal" : "identity"},
                 {"max_sweeps", max_sweeps}};
  return j;
}

}  // namespace mpcc::cli
