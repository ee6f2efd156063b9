#pragma once

// Sectioned key = value configuration files.
//
//   # comment
//   [section]
//   key = value   # trailing comment
//
// Parsing is fail-closed: unknown sections or keys, duplicates, and values
// outside their documented range abort with "<file>:<line>: ..." before any
// computation happens.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "goco/engine.hpp"
#include "goco/error.hpp"
#include "goco/problem.hpp"
#include "goco/text_io.hpp"
#include "goco/theory.hpp"

namespace goco::config {

using Schema = std::map<std::string, std::set<std::string>>;

struct Entry {
  std::string value;
  std::size_t line = 0;
};

class Document {
 public:
  Document(std::string_view contents, std::string source, const Schema& schema)
      : source_(std::move(source)) {
    std::string section;
    std::size_t line_no = 0;
    for (auto raw : text::split(contents, '\n')) {
      ++line_no;
      auto line = raw;
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = text::trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') fail(line_no, "malformed section header");
        section = std::string(text::trim(line.substr(1, line.size() - 2)));
        if (!schema.contains(section)) fail(line_no, "unknown section [" + section + "]");
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) fail(line_no, "expected 'key = value'");
      const std::string key(text::trim(line.substr(0, eq)));
      const std::string value(text::trim(line.substr(eq + 1)));
      if (section.empty()) fail(line_no, "key '" + key + "' outside any section");
      if (!schema.at(section).contains(key))
        fail(line_no, "unknown key '" + key + "' in [" + section + "]");
      const auto full = section + "." + key;
      if (entries_.contains(full)) fail(line_no, "duplicate key '" + full + "'");
      if (value.empty()) fail(line_no, "empty value for '" + full + "'");
      entries_[full] = {value, line_no};
      order_.push_back(full);
    }
  }

  const std::string& source() const noexcept { return source_; }
  bool has(const std::string& key) const { return entries_.contains(key); }

  std::optional<std::string> str(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second.value;
  }

  std::string str_or(const std::string& key, std::string dflt) const {
    return str(key).value_or(std::move(dflt));
  }

  double real(const std::string& key, double dflt, double lo, double hi, bool lo_open = false) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return dflt;
    auto v = text::parse_double(it->second.value);
    if (!v) fail(it->second.line, "key '" + key + "' is not a number: '" + it->second.value + "'");
    if (*v < lo || *v > hi || (lo_open && *v == lo))
      fail(it->second.line, "key '" + key + "' = " + it->second.value + " out of range " +
                                (lo_open ? "(" : "[") + text::format_double(lo) + ", " +
                                text::format_double(hi) + "]");
    return *v;
  }

  std::uint64_t integer(const std::string& key, std::uint64_t dflt, std::uint64_t lo,
                        std::uint64_t hi) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return dflt;
    auto v = text::parse_int<std::uint64_t>(it->second.value);
    if (!v) fail(it->second.line, "key '" + key + "' is not a nonnegative integer: '" + it->second.value + "'");
    if (*v < lo || *v > hi)
      fail(it->second.line, "key '" + key + "' = " + it->second.value + " out of range [" +
                                std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return *v;
  }

  long long signed_integer(const std::string& key, long long dflt) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return dflt;
    auto v = text::parse_int<long long>(it->second.value);
    if (!v) fail(it->second.line, "key '" + key + "' is not an integer: '" + it->second.value + "'");
    return *v;
  }

  bool boolean(const std::string& key, bool dflt) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return dflt;
    const auto& v = it->second.value;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(it->second.line, "key '" + key + "' must be true or false");
  }

  std::vector<std::uint64_t> integer_list(const std::string& key, std::vector<std::uint64_t> dflt,
                                          std::uint64_t lo, std::uint64_t hi) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return dflt;
    std::vector<std::uint64_t> out;
    for (auto tok : text::split_ws(it->second.value, " \t,")) {
      auto v = text::parse_int<std::uint64_t>(tok);
      if (!v || *v < lo || *v > hi)
        fail(it->second.line, "key '" + key + "' has invalid element '" + std::string(tok) + "'");
      out.push_back(*v);
    }
    if (out.empty()) fail(it->second.line, "key '" + key + "' is an empty list");
    return out;
  }

  std::vector<double> real_list(const std::string& key, std::vector<double> dflt, double lo) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) return dflt;
    std::vector<double> out;
    for (auto tok : text::split_ws(it->second.value, " \t,")) {
      auto v = text::parse_double(tok);
      if (!v || *v < lo)
        fail(it->second.line, "key '" + key + "' has invalid element '" + std::string(tok) + "'");
      out.push_back(*v);
    }
    if (out.empty()) fail(it->second.line, "key '" + key + "' is an empty list");
    return out;
  }

  std::size_t line_of(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
  }

  [[noreturn]] void fail(std::size_t line, const std::string& why) const {
    throw ConfigError(source_ + ":" + std::to_string(line) + ": " + why);
  }

  // Canonical "section.key = value" echo in file order.
  std::string echo() const {
    std::string out;
    for (const auto& k : order_) out += k + " = " + entries_.at(k).value + "\n";
    return out;
  }

 private:
  std::string source_;
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

// ---------------------------------------------------------------------------
// Experiment configs (run / sweep / compare)

enum class TopologyKind { kRing, kComplete, kFile };
enum class AssignmentKind { kUniformRandom, kNoRedundancy, kFullReplication, kFile };

struct ExperimentConfig {
  std::string name = "goco";
  TopologyKind topology = TopologyKind::kRing;
  std::size_t n = 16;
  std::filesystem::path topology_file;
  AssignmentKind assignment = AssignmentKind::kUniformRandom;
  std::vector<std::size_t> d;  // empty means 3 for every subset
  bool allow_idle = false;
  std::filesystem::path assignment_file;
  ProblemSpec problem;
  std::optional<std::uint64_t> problem_seed;
  std::filesystem::path problem_file;
  RunConfig run;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::filesystem::path output_dir = "out";
  std::string echo;  // canonical text of the parsed file
};

inline const Schema& experiment_schema() {
  static const Schema s = {
      {"experiment", {"name"}},
      {"topology", {"kind", "n", "path"}},
      {"assignment", {"kind", "d", "allow_idle", "path"}},
      {"problem",
       {"m", "dim", "feature_std", "label_noise_std", "planted_lo", "planted_hi", "sigma0", "seed",
        "path"}},
      {"run", {"eta", "gamma", "p", "T", "loss_every", "bits_per_element", "check_buffers"}},
      {"seeds", {"list"}},
      {"output", {"dir"}},
  };
  return s;
}

inline ExperimentConfig parse_experiment(std::string_view contents, const std::string& source,
                                         const std::filesystem::path& base_dir = {}) {
  Document doc(contents, source, experiment_schema());
  ExperimentConfig cfg;
  cfg.echo = doc.echo();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() ? base_dir / path : path;
  };
  auto require_file = [&](const std::string& key) {
    auto path = resolve(*doc.str(key));
    if (!std::filesystem::exists(path))
      doc.fail(doc.line_of(key), "file '" + path.string() + "' for '" + key + "' does not exist");
    return path;
  };

  cfg.name = doc.str_or("experiment.name", std::filesystem::path(source).stem().string());
  if (cfg.name.empty()) cfg.name = "goco";

  const auto topo = doc.str_or("topology.kind", "ring");
  if (topo == "ring") {
    cfg.topology = TopologyKind::kRing;
    cfg.n = doc.integer("topology.n", 16, 3, 100000);
  } else if (topo == "complete") {
    cfg.topology = TopologyKind::kComplete;
    cfg.n = doc.integer("topology.n", 16, 2, 100000);
  } else if (topo == "file") {
    cfg.topology = TopologyKind::kFile;
    if (!doc.has("topology.path")) doc.fail(doc.line_of("topology.kind"), "topology 'file' needs 'path'");
    cfg.topology_file = require_file("topology.path");
    cfg.n = 0;
  } else {
    doc.fail(doc.line_of("topology.kind"), "unknown topology kind '" + topo + "'");
  }
  if (topo != "file" && doc.has("topology.path"))
    doc.fail(doc.line_of("topology.path"), "'path' only applies to topology kind 'file'");

  cfg.problem.m = doc.integer("problem.m", 16, 1, 1000000);
  cfg.problem.dim = doc.integer("problem.dim", 100, 1, 10000000);
  cfg.problem.feature_std = doc.real("problem.feature_std", 10.0, 0.0, 1e300, true);
  cfg.problem.label_noise_std = doc.real("problem.label_noise_std", 1.0, 0.0, 1e300);
  cfg.problem.planted_lo = static_cast<int>(doc.signed_integer("problem.planted_lo", 1));
  cfg.problem.planted_hi = static_cast<int>(doc.signed_integer("problem.planted_hi", 10));
  if (cfg.problem.planted_lo > cfg.problem.planted_hi)
    doc.fail(doc.line_of("problem.planted_hi"), "planted_hi must be >= planted_lo");
  cfg.problem.noise_sigma = doc.real("problem.sigma0", 1.0, 0.0, 1e300);
  if (doc.has("problem.seed")) cfg.problem_seed = doc.integer("problem.seed", 0, 0, UINT64_MAX);
  if (doc.has("problem.path")) cfg.problem_file = require_file("problem.path");

  const auto assign = doc.str_or("assignment.kind", "uniform_random");
  cfg.allow_idle = doc.boolean("assignment.allow_idle", false);
  if (assign == "uniform_random") {
    cfg.assignment = AssignmentKind::kUniformRandom;
    auto d = doc.integer_list("assignment.d", {3}, 1, 1000000);
    if (d.size() == 1) d.assign(cfg.problem.m, d.front());
    if (d.size() != cfg.problem.m)
      doc.fail(doc.line_of("assignment.d"), "'d' needs 1 or m = " + std::to_string(cfg.problem.m) + " entries");
    if (cfg.topology != TopologyKind::kFile) {
      for (auto dk : d)
        if (dk > cfg.n)
          doc.fail(doc.line_of("assignment.d"), "replication degree " + std::to_string(dk) +
                                                    " exceeds device count " + std::to_string(cfg.n));
    }
    cfg.d.assign(d.begin(), d.end());
  } else if (assign == "no_redundancy") {
    cfg.assignment = AssignmentKind::kNoRedundancy;
  } else if (assign == "full_replication") {
    cfg.assignment = AssignmentKind::kFullReplication;
  } else if (assign == "file") {
    cfg.assignment = AssignmentKind::kFile;
    if (!doc.has("assignment.path")) doc.fail(doc.line_of("assignment.kind"), "assignment 'file' needs 'path'");
    cfg.assignment_file = require_file("assignment.path");
  } else {
    doc.fail(doc.line_of("assignment.kind"), "unknown assignment kind '" + assign + "'");
  }
  if (assign != "uniform_random" && doc.has("assignment.d"))
    doc.fail(doc.line_of("assignment.d"), "'d' only applies to assignment kind 'uniform_random'");
  if (assign != "file" && doc.has("assignment.path"))
    doc.fail(doc.line_of("assignment.path"), "'path' only applies to assignment kind 'file'");

  cfg.run.eta = doc.real("run.eta", 1e-4, 0.0, 1e300, true);
  cfg.run.gamma = doc.real("run.gamma", 0.05, 0.0, 1e300, true);
  cfg.run.p = doc.real("run.p", 0.2, 0.0, 1.0);
  cfg.run.iterations = doc.integer("run.T", 10000, 1, 1000000000ULL);
  cfg.run.loss_every = doc.integer("run.loss_every", 1, 1, 1000000000ULL);
  cfg.run.bits_per_element = doc.integer("run.bits_per_element", 64, 1, 4096);
  cfg.run.check_buffers = doc.boolean("run.check_buffers", true);
  cfg.run.allow_idle = cfg.allow_idle;

  cfg.seeds = doc.integer_list("seeds.list", cfg.seeds, 0, UINT64_MAX);
  cfg.output_dir = doc.str_or("output.dir", "out");
  return cfg;
}

inline ExperimentConfig read_experiment(const std::filesystem::path& path) {
  return parse_experiment(text::read_file(path), path.string(), path.parent_path());
}

// ---------------------------------------------------------------------------
// Bound configs

struct BoundConfig {
  theory::RegularityParams reg;
  theory::StructuralInputs structure;
  std::vector<double> T_values;
  double margin_factor = 10.0;
  std::filesystem::path output_dir = "out";
};

inline const Schema& bound_schema() {
  static const Schema s = {
      {"regularity", {"mu", "L", "C", "G", "sigma", "lambda0", "initial_distance"}},
      {"structure", {"sidecar", "n", "m", "p", "d", "a_min", "a_max", "gamma", "rho", "beta"}},
      {"bound", {"T", "T_lo_exp", "T_hi_exp", "per_decade", "margin_factor"}},
      {"output", {"dir"}},
  };
  return s;
}

// Reads key = value lines (the run sidecar format).
inline std::map<std::string, std::string> read_key_values(std::string_view contents) {
  std::map<std::string, std::string> kv;
  for (auto line : text::split(contents, '\n')) {
    line = text::trim(line);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) continue;
    kv[std::string(text::trim(line.substr(0, eq)))] = std::string(text::trim(line.substr(eq + 1)));
  }
  return kv;
}

inline BoundConfig parse_bound(std::string_view contents, const std::string& source,
                               const std::filesystem::path& base_dir = {}) {
  Document doc(contents, source, bound_schema());
  BoundConfig cfg;

  // Structural values: sidecar first, explicit keys override.
  std::map<std::string, std::string> side;
  if (doc.has("structure.sidecar")) {
    std::filesystem::path path(*doc.str("structure.sidecar"));
    if (path.is_relative()) path = base_dir / path;
    if (!std::filesystem::exists(path))
      doc.fail(doc.line_of("structure.sidecar"), "sidecar '" + path.string() + "' does not exist");
    side = read_key_values(text::read_file(path));
  }
  auto side_or_fail = [&](const std::string& key) -> std::string {
    auto it = side.find("structure." + key);
    if (it == side.end())
      doc.fail(doc.line_of("structure.sidecar"), "structural input '" + key +
                                                     "' missing (set it in [structure] or via sidecar)");
    return it->second;
  };
  auto real_in = [&](const std::string& key, double lo, double hi) {
    const auto full = "structure." + key;
    if (doc.has(full)) return doc.real(full, 0.0, lo, hi);
    auto v = text::parse_double(side_or_fail(key));
    if (!v) doc.fail(doc.line_of("structure.sidecar"), "sidecar value for '" + key + "' is not a number");
    return *v;
  };
  auto int_in = [&](const std::string& key) -> std::size_t {
    const auto full = "structure." + key;
    if (doc.has(full)) return doc.integer(full, 0, 1, 100000000);
    auto v = text::parse_int<std::size_t>(side_or_fail(key));
    if (!v || *v == 0) doc.fail(doc.line_of("structure.sidecar"), "sidecar value for '" + key + "' is invalid");
    return *v;
  };

  auto& st = cfg.structure;
  st.n = int_in("n");
  st.m = int_in("m");
  st.p = real_in("p", 0.0, 1.0);
  st.a_min = real_in("a_min", 0.0, 1e300);
  st.a_max = real_in("a_max", 0.0, 1e300);
  st.gamma = real_in("gamma", 0.0, 1e300);
  st.rho = real_in("rho", 0.0, 1.0);
  st.beta = real_in("beta", 0.0, 1e300);
  std::vector<std::uint64_t> d;
  if (doc.has("structure.d")) {
    d = doc.integer_list("structure.d", {}, 1, st.n);
  } else {
    const std::string listed = side_or_fail("d");
    for (auto tok : text::split_ws(listed, " \t,")) {
      auto v = text::parse_int<std::uint64_t>(tok);
      if (!v) doc.fail(doc.line_of("structure.sidecar"), "sidecar 'd' malformed");
      d.push_back(*v);
    }
  }
  if (d.size() == 1) d.assign(st.m, d.front());
  if (d.size() != st.m)
    doc.fail(doc.line_of("structure.d"), "'d' needs 1 or m = " + std::to_string(st.m) + " entries");
  st.d.assign(d.begin(), d.end());

  auto& reg = cfg.reg;
  reg.mu = doc.real("regularity.mu", 1.0, 0.0, 1e300, true);
  reg.L = doc.real("regularity.L", 10.0, 0.0, 1e300, true);
  if (reg.mu > reg.L) doc.fail(doc.line_of("regularity.mu"), "mu must not exceed L");
  reg.C = doc.real("regularity.C", 1.0, 0.0, 1e300);
  reg.G = doc.real("regularity.G", 10.0, 0.0, 1e300);
  reg.lambda0 = doc.real("regularity.lambda0", 0.01, 0.0, 1e300, true);
  reg.initial_distance = doc.real("regularity.initial_distance", 0.0, 0.0, 1e300);
  reg.sigma = doc.real_list("regularity.sigma", {1.0}, 0.0);
  if (reg.sigma.size() == 1) reg.sigma.assign(st.m, reg.sigma.front());
  if (reg.sigma.size() != st.m)
    doc.fail(doc.line_of("regularity.sigma"), "'sigma' needs 1 or m = " + std::to_string(st.m) + " entries");

  if (doc.has("bound.T")) {
    cfg.T_values = doc.real_list("bound.T", {}, 0.0);
    for (double T : cfg.T_values)
      if (!(T > 0.0)) doc.fail(doc.line_of("bound.T"), "T values must be positive");
  } else {
    const auto lo = doc.signed_integer("bound.T_lo_exp", 2);
    const auto hi = doc.signed_integer("bound.T_hi_exp", 6);
    const auto per = doc.integer("bound.per_decade", 4, 1, 1000);
    if (hi < lo) doc.fail(doc.line_of("bound.T_hi_exp"), "T_hi_exp must be >= T_lo_exp");
    cfg.T_values = theory::log_grid(static_cast<int>(lo), static_cast<int>(hi), static_cast<int>(per));
  }
  cfg.margin_factor = doc.real("bound.margin_factor", 10.0, 0.0, 1e300, true);
  cfg.output_dir = doc.str_or("output.dir", "out");
  return cfg;
}

inline BoundConfig read_bound(const std::filesystem::path& path) {
  return parse_bound(text::read_file(path), path.string(), path.parent_path());
}

}  // namespace goco::config
